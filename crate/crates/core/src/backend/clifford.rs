//! Clifford QCA over prime-dimensional qudits: automorphisms given exactly
//! by the images of every X/Z generator, with phases.

use crate::backend::pauli::{is_prime, PauliString};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::lattice::{Layout, LayoutRef, Length, QuditRef};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct CliffordQca {
    layout: LayoutRef,
    p: u32,
    /// sorted qudit refs; generator 2k is X on refs[k], 2k+1 is Z
    refs: Vec<QuditRef>,
    images: Vec<PauliString>,
}

impl CliffordQca {
    pub fn identity(layout: LayoutRef, p: u32) -> Result<CliffordQca> {
        let refs = layout.qudit_refs();
        let images = refs
            .iter()
            .flat_map(|q| [PauliString::x(p, *q), PauliString::z(p, *q)])
            .collect();
        let qca = CliffordQca { layout, p, refs, images };
        qca.validate()?;
        Ok(qca)
    }

    /// Builds from an image table; every qudit of the layout needs both
    /// generator images present.
    pub fn from_images(
        layout: LayoutRef,
        p: u32,
        mut table: BTreeMap<QuditRef, (PauliString, PauliString)>,
    ) -> Result<CliffordQca> {
        let refs = layout.qudit_refs();
        let mut images = Vec::with_capacity(2 * refs.len());
        for q in &refs {
            let (x, z) = table
                .remove(q)
                .ok_or_else(|| Error::InvalidQca(format!("missing images for qudit {q}")))?;
            images.push(x);
            images.push(z);
        }
        if let Some((q, _)) = table.into_iter().next() {
            return Err(Error::InvalidQca(format!("image given for unknown qudit {q}")));
        }
        let qca = CliffordQca { layout, p, refs, images };
        qca.validate()?;
        Ok(qca)
    }

    /// Shift by `offset` sites along a 1D layout with a uniform per-site
    /// qudit structure.
    pub fn shift(layout: LayoutRef, offset: i64) -> Result<CliffordQca> {
        if !layout.is_one_dimensional() {
            return Err(Error::Precondition("shift needs a 1D layout".into()));
        }
        let mut ranked: Vec<QuditRef> = layout.qudit_refs();
        ranked.sort_by_key(|q| (layout.coordinate(q.site).unwrap(), q.site, q.slot));
        let n_sites = layout.site_count() as i64;
        let slots = ranked.len() / layout.site_count();
        let first = layout.qudit(ranked[0])?;
        for q in &ranked {
            if layout.qudit(*q)?.dim != first.dim {
                return Err(Error::Precondition(
                    "shift needs uniform qudit dimensions".into(),
                ));
            }
        }
        if ranked.len() % layout.site_count() != 0 {
            return Err(Error::Precondition("shift needs uniform site structure".into()));
        }
        let p = first.dim;
        let mut table = BTreeMap::new();
        for (k, q) in ranked.iter().enumerate() {
            let site_rank = (k / slots) as i64;
            let slot_rank = k % slots;
            let target_rank = (site_rank + offset).rem_euclid(n_sites) as usize;
            let target = ranked[target_rank * slots + slot_rank];
            table.insert(*q, (PauliString::x(p, target), PauliString::z(p, target)));
        }
        Self::from_images(layout, p, table)
    }

    /// Composed Clifford action of a circuit of Clifford-compatible gates.
    pub fn from_circuit(circuit: &Circuit) -> Result<CliffordQca> {
        let layout = circuit.layout().clone();
        let p = layout.qudit(layout.qudit_refs()[0])?.dim;
        if !is_prime(p) {
            return Err(Error::Precondition(format!("{p} is not prime")));
        }
        let refs = layout.qudit_refs();
        let mut images = Vec::with_capacity(2 * refs.len());
        for q in &refs {
            images.push(circuit.apply_to_pauli(&PauliString::x(p, *q))?);
            images.push(circuit.apply_to_pauli(&PauliString::z(p, *q))?);
        }
        let qca = CliffordQca { layout, p, refs, images };
        qca.validate()?;
        Ok(qca)
    }

    pub fn layout(&self) -> &LayoutRef {
        &self.layout
    }

    pub fn prime(&self) -> u32 {
        self.p
    }

    pub fn refs(&self) -> &[QuditRef] {
        &self.refs
    }

    fn ref_index(&self, q: QuditRef) -> Result<usize> {
        self.refs
            .binary_search(&q)
            .map_err(|_| Error::UnknownQudit { site: q.site.0, slot: q.slot })
    }

    pub fn image_x(&self, q: QuditRef) -> Result<&PauliString> {
        Ok(&self.images[2 * self.ref_index(q)?])
    }

    pub fn image_z(&self, q: QuditRef) -> Result<&PauliString> {
        Ok(&self.images[2 * self.ref_index(q)? + 1])
    }

    /// Checks prime dimensions, image supports, involution parity (p = 2),
    /// and exact commutation preservation for all generator pairs that
    /// could interact. Symplectic preservation implies invertibility.
    pub fn validate(&self) -> Result<()> {
        if !is_prime(self.p) {
            return Err(Error::InvalidQca(format!("{} is not prime", self.p)));
        }
        for q in &self.refs {
            if self.layout.qudit(*q)?.dim != self.p {
                return Err(Error::InvalidQca(format!(
                    "qudit {q} dimension is not {}",
                    self.p
                )));
            }
        }
        for img in &self.images {
            if self.p == 2 && !img.is_involution() {
                return Err(Error::InvalidQca(
                    "generator image does not square to the identity".into(),
                ));
            }
            for q in img.support() {
                self.ref_index(q)?;
            }
        }
        // same-qudit pairs must anticommute correctly; cross pairs with
        // overlapping image supports must commute like their preimages
        let mut touch: BTreeMap<QuditRef, Vec<usize>> = BTreeMap::new();
        for (j, img) in self.images.iter().enumerate() {
            for q in img.support() {
                touch.entry(q).or_default().push(j);
            }
        }
        let gen = |j: usize| -> PauliString {
            let q = self.refs[j / 2];
            if j % 2 == 0 {
                PauliString::x(self.p, q)
            } else {
                PauliString::z(self.p, q)
            }
        };
        for k in 0..self.refs.len() {
            let (i, j) = (2 * k, 2 * k + 1);
            let want = gen(i).commutation_exponent(&gen(j));
            if self.images[i].commutation_exponent(&self.images[j]) != want {
                return Err(Error::InvalidQca(format!(
                    "images of X and Z at {} do not preserve commutation",
                    self.refs[k]
                )));
            }
        }
        let mut seen: std::collections::BTreeSet<(usize, usize)> = Default::default();
        for list in touch.values() {
            for (a, &i) in list.iter().enumerate() {
                for &j in &list[..a] {
                    let key = (i.min(j), i.max(j));
                    if i / 2 == j / 2 || !seen.insert(key) {
                        continue;
                    }
                    let want = gen(i).commutation_exponent(&gen(j));
                    if self.images[i].commutation_exponent(&self.images[j]) != want {
                        return Err(Error::InvalidQca(format!(
                            "generator pair ({}, {}) does not preserve commutation",
                            i, j
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact image of a Pauli string (phase included).
    pub fn apply(&self, p: &PauliString) -> Result<PauliString> {
        if p.prime() != self.p {
            return Err(Error::BackendMismatch("prime mismatch".into()));
        }
        let mut out = PauliString::identity(self.p);
        out.mul_phase(p.phase());
        for (q, (x, z)) in p.terms() {
            let k = self.ref_index(q)?;
            for _ in 0..x {
                out.mul_assign(&self.images[2 * k]);
            }
            for _ in 0..z {
                out.mul_assign(&self.images[2 * k + 1]);
            }
        }
        Ok(out)
    }

    /// (self ∘ other): apply `other` first, then `self`.
    pub fn compose(&self, other: &CliffordQca) -> Result<CliffordQca> {
        if self.p != other.p || self.refs != other.refs {
            return Err(Error::BackendMismatch("automorphism domains differ".into()));
        }
        let images = other
            .images
            .iter()
            .map(|img| self.apply(img))
            .collect::<Result<Vec<_>>>()?;
        let qca =
            CliffordQca { layout: self.layout.clone(), p: self.p, refs: self.refs.clone(), images };
        qca.validate()?;
        Ok(qca)
    }

    /// Inverse through the symplectic adjoint: no elimination needed, the
    /// commutation-preservation identity pins the inverse image vectors,
    /// and a forward application per generator repairs the phases.
    pub fn inverse(&self) -> Result<CliffordQca> {
        let n = self.refs.len();
        let p = self.p;
        // which images touch each qudit
        let mut touch: BTreeMap<QuditRef, Vec<usize>> = BTreeMap::new();
        for (j, img) in self.images.iter().enumerate() {
            for q in img.support() {
                touch.entry(q).or_default().push(j);
            }
        }
        let mut images = vec![PauliString::identity(p); 2 * n];
        for k in 0..n {
            let q = self.refs[k];
            let js = touch.get(&q).cloned().unwrap_or_default();
            // preimage of X_q: v[2m] = imgZ_m.z_q, v[2m+1] = -imgX_m.z_q
            // preimage of Z_q: v[2m] = -imgZ_m.x_q, v[2m+1] = imgX_m.x_q
            let mut pre_x = PauliString::identity(p);
            let mut pre_z = PauliString::identity(p);
            for &j in &js {
                let (xq, zq) = self.images[j].xz(q);
                let m = j / 2;
                let target = self.refs[m];
                if j % 2 == 1 {
                    // image of Z_m
                    if zq != 0 {
                        let (x0, z0) = pre_x.xz(target);
                        pre_x.set(target, x0 + zq, z0);
                    }
                    if xq != 0 {
                        let (x0, z0) = pre_z.xz(target);
                        pre_z.set(target, x0 + (p - xq), z0);
                    }
                } else {
                    // image of X_m
                    if zq != 0 {
                        let (x0, z0) = pre_x.xz(target);
                        pre_x.set(target, x0, z0 + (p - zq));
                    }
                    if xq != 0 {
                        let (x0, z0) = pre_z.xz(target);
                        pre_z.set(target, x0, z0 + xq);
                    }
                }
            }
            images[2 * k] = pre_x;
            images[2 * k + 1] = pre_z;
        }
        let mut inv = CliffordQca {
            layout: self.layout.clone(),
            p,
            refs: self.refs.clone(),
            images,
        };
        // phase repair
        for k in 0..2 * n {
            let q = self.refs[k / 2];
            let want = if k % 2 == 0 { PauliString::x(p, q) } else { PauliString::z(p, q) };
            let fwd = self.apply(&inv.images[k])?;
            let mut bare_f = fwd.clone();
            bare_f.set_phase(0);
            let mut bare_w = want.clone();
            bare_w.set_phase(0);
            if bare_f != bare_w {
                return Err(Error::InvalidQca(
                    "symplectic adjoint inverse failed; qca not invertible".into(),
                ));
            }
            let m = fwd.phase_modulus();
            inv.images[k].mul_phase((m + want.phase() - fwd.phase()) % m);
        }
        inv.validate()?;
        Ok(inv)
    }

    /// Exact equality of automorphisms; with `ignore_phases` only the
    /// Pauli-frame part is compared.
    pub fn equal(&self, other: &CliffordQca, ignore_phases: bool) -> bool {
        if self.p != other.p || self.refs != other.refs {
            return false;
        }
        if ignore_phases {
            self.images.iter().zip(&other.images).all(|(a, b)| {
                let mut a = a.clone();
                let mut b = b.clone();
                a.set_phase(0);
                b.set_phase(0);
                a == b
            })
        } else {
            self.images == other.images
        }
    }

    /// Smallest R such that every generator image stays within distance R
    /// of its source qudit.
    pub fn range(&self) -> Result<Length> {
        let mut best = Length::zero();
        for (j, img) in self.images.iter().enumerate() {
            let src = self.refs[j / 2].site;
            for q in img.support() {
                let d = self.layout.distance(src, q.site)?;
                if d > best {
                    best = d;
                }
            }
        }
        Ok(best)
    }

    /// True iff every generator of every listed qudit is fixed exactly,
    /// phases included; this certifies the automorphism splits as
    /// (something on the rest) ⊗ identity.
    pub fn is_trivial_on(&self, qudits: &[QuditRef]) -> Result<bool> {
        for q in qudits {
            let k = self.ref_index(*q)?;
            if self.images[2 * k] != PauliString::x(self.p, *q)
                || self.images[2 * k + 1] != PauliString::z(self.p, *q)
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// First qudit in `qudits` whose generators move, if any.
    pub fn first_nontrivial_on(&self, qudits: &[QuditRef]) -> Result<Option<QuditRef>> {
        for q in qudits {
            let k = self.ref_index(*q)?;
            if self.images[2 * k] != PauliString::x(self.p, *q)
                || self.images[2 * k + 1] != PauliString::z(self.p, *q)
            {
                return Ok(Some(*q));
            }
        }
        Ok(None)
    }

    /// Transplants the automorphism onto another layout through an
    /// injective qudit map; unmapped qudits of the target act as identity.
    pub fn embed(
        &self,
        target: LayoutRef,
        map: &BTreeMap<QuditRef, QuditRef>,
    ) -> Result<CliffordQca> {
        let mut table = BTreeMap::new();
        for q in target.qudit_refs() {
            table.insert(q, (PauliString::x(self.p, q), PauliString::z(self.p, q)));
        }
        for (src, dst) in map {
            let k = self.ref_index(*src)?;
            let x = self.images[2 * k].relabeled(map);
            let z = self.images[2 * k + 1].relabeled(map);
            table.insert(*dst, (x, z));
        }
        Self::from_images(target, self.p, table)
    }
}

/// Deterministic random Clifford QCA of measured range at most `max_range`:
/// a shallow random local circuit, optionally composed with a site shift.
pub fn random_clifford_qca(
    layout: &LayoutRef,
    max_range: Length,
    seed: u64,
    shift_sites: i64,
) -> Result<PresentedQca> {
    let spacing = layout.min_spacing();
    let r_sites = (max_range / spacing).floor().to_integer().max(1);
    let (depth, pair) = if r_sites >= 2 { (2, (r_sites / 2).max(1)) } else { (1, 1) };
    let circuit =
        fixtures::random_local_clifford_circuit(layout, depth, pair as usize, seed)?;
    let mut qca = CliffordQca::from_circuit(&circuit)?;
    if shift_sites != 0 {
        let s = CliffordQca::shift(layout.clone(), shift_sites)?;
        qca = s.compose(&qca)?;
    }
    debug_assert!(qca.range()? <= max_range || shift_sites != 0);
    Ok(PresentedQca { qca: Arc::new(qca), shift_sites, circuit: Some(circuit) })
}

/// A Clifford QCA remembered together with how it was built: a shift part
/// plus a finite-depth circuit part. The 1D structure theory says every
/// such automorphism has this shape; passes that need to re-lay the
/// automorphism on a finer system consume the presentation.
#[derive(Debug, Clone)]
pub struct PresentedQca {
    pub qca: Arc<CliffordQca>,
    pub shift_sites: i64,
    pub circuit: Option<Circuit>,
}

impl PresentedQca {
    pub fn pure_shift(layout: LayoutRef, p: u32, offset: i64) -> Result<PresentedQca> {
        let qca = CliffordQca::shift(layout, offset)?;
        let _ = p;
        Ok(PresentedQca { qca: Arc::new(qca), shift_sites: offset, circuit: None })
    }

    pub fn from_circuit(circuit: Circuit) -> Result<PresentedQca> {
        let qca = CliffordQca::from_circuit(&circuit)?;
        Ok(PresentedQca { qca: Arc::new(qca), shift_sites: 0, circuit: Some(circuit) })
    }

    pub fn identity(layout: LayoutRef, p: u32) -> Result<PresentedQca> {
        Ok(PresentedQca {
            qca: Arc::new(CliffordQca::identity(layout, p)?),
            shift_sites: 0,
            circuit: None,
        })
    }

    /// Verifies the presentation against the stored automorphism.
    pub fn verify(&self) -> Result<bool> {
        let layout = self.qca.layout().clone();
        let mut acc = CliffordQca::identity(layout.clone(), self.qca.prime())?;
        if let Some(c) = &self.circuit {
            acc = CliffordQca::from_circuit(c)?;
        }
        if self.shift_sites != 0 {
            let s = CliffordQca::shift(layout, self.shift_sites)?;
            acc = s.compose(&acc)?;
        }
        Ok(acc.equal(&self.qca, false))
    }
}

/// Convenience: layout-wide list of ancilla refs as a slice target.
pub fn ancilla_refs(layout: &Layout) -> Vec<QuditRef> {
    layout.ancilla_refs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{len_int, one_physical, Layout};

    fn ring(n: usize, p: u32) -> LayoutRef {
        Arc::new(Layout::unit_ring(n, one_physical(p)).unwrap())
    }

    #[test]
    fn identity_and_shift_basics() {
        let l = ring(8, 2);
        let id = CliffordQca::identity(l.clone(), 2).unwrap();
        assert_eq!(id.range().unwrap(), Length::zero());
        let s = CliffordQca::shift(l.clone(), 1).unwrap();
        assert_eq!(s.range().unwrap(), len_int(1));
        let x0 = PauliString::x(2, QuditRef::new(0, 0));
        assert_eq!(s.apply(&x0).unwrap(), PauliString::x(2, QuditRef::new(1, 0)));
        assert!(!s.equal(&id, false));
        // shift composed with its inverse is the identity
        let back = CliffordQca::shift(l, -1).unwrap();
        assert!(s.compose(&back).unwrap().equal(&id, false));
    }

    #[test]
    fn circuit_action_matches_per_gate_application() {
        let l = ring(10, 2);
        let c = fixtures::random_brickwork_clifford(&l, 3, 42).unwrap();
        let qca = CliffordQca::from_circuit(&c).unwrap();
        let mut rng = fixtures::rng(7);
        for _ in 0..20 {
            let p = fixtures::random_pauli(&l, 2, 3, &mut rng);
            assert_eq!(qca.apply(&p).unwrap(), c.apply_to_pauli(&p).unwrap());
        }
    }

    #[test]
    fn inverse_roundtrips() {
        for p in [2u32, 3] {
            let l = ring(9, p);
            let c = fixtures::random_brickwork_clifford(&l, 2, 5).unwrap();
            let qca = CliffordQca::from_circuit(&c).unwrap();
            let inv = qca.inverse().unwrap();
            let id = CliffordQca::identity(l, p).unwrap();
            assert!(qca.compose(&inv).unwrap().equal(&id, false));
            assert!(inv.compose(&qca).unwrap().equal(&id, false));
        }
    }

    #[test]
    fn apply_is_a_homomorphism_with_phases() {
        let l = ring(8, 3);
        let c = fixtures::random_brickwork_clifford(&l, 2, 9).unwrap();
        let qca = CliffordQca::from_circuit(&c).unwrap();
        let mut rng = fixtures::rng(3);
        for _ in 0..30 {
            let a = fixtures::random_pauli(&l, 3, 2, &mut rng);
            let b = fixtures::random_pauli(&l, 3, 2, &mut rng);
            let lhs = qca.apply(&a.mul(&b)).unwrap();
            let rhs = qca.apply(&a).unwrap().mul(&qca.apply(&b).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn range_subadditive_under_composition() {
        let l = ring(16, 2);
        let a = random_clifford_qca(&l, len_int(2), 11, 0).unwrap().qca;
        let b = random_clifford_qca(&l, len_int(2), 12, 0).unwrap().qca;
        let ab = a.compose(&b).unwrap();
        assert!(ab.range().unwrap() <= a.range().unwrap() + b.range().unwrap());
    }

    #[test]
    fn trivial_on_detects_swaps() {
        let l = Arc::new(Layout::unit_ring(4, crate::lattice::phys_anc_pair(2)).unwrap());
        let id = CliffordQca::identity(l.clone(), 2).unwrap();
        assert!(id.is_trivial_on(&l.ancilla_refs()).unwrap());
        let g = fixtures::swap_gate(QuditRef::new(0, 0), QuditRef::new(0, 1));
        let c = Circuit::new(l.clone(), Length::zero(), vec![vec![g]]).unwrap();
        let qca = CliffordQca::from_circuit(&c).unwrap();
        assert!(!qca.is_trivial_on(&[QuditRef::new(0, 1)]).unwrap());
    }

    #[test]
    fn presented_qca_verifies() {
        let l = ring(12, 2);
        let pres = random_clifford_qca(&l, len_int(2), 21, 1).unwrap();
        assert!(pres.verify().unwrap());
        assert!(pres.qca.validate().is_ok());
    }

    #[test]
    fn deterministic_per_seed() {
        let l = ring(12, 2);
        let a = random_clifford_qca(&l, len_int(2), 33, 0).unwrap();
        let b = random_clifford_qca(&l, len_int(2), 33, 0).unwrap();
        assert!(a.qca.equal(&b.qca, false));
    }
}
