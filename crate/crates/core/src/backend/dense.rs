//! Dense unitary backend for small systems: the independent oracle used to
//! cross-check the Clifford backend and to verify circuits with arbitrary
//! gate matrices. Capped (default 2^12 total dimension).

use crate::backend::cmat::{apply_local_left, CMat, Factors};
use crate::backend::pauli::PauliString;
use crate::circuit::{Circuit, Gate, GateAction};
use crate::error::{Error, Result};
use crate::lattice::{LayoutRef, Length, QuditRef};
use num_complex::Complex64;
use num_traits::Zero;
use std::collections::BTreeMap;
use std::f64::consts::TAU;

pub const DEFAULT_DENSE_CAP: u128 = 1 << 12;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DenseQca {
    layout: LayoutRef,
    refs: Vec<QuditRef>,
    dims: Vec<usize>,
    u: CMat,
    pub tolerance: f64,
}

fn omega(p: u32, k: u32) -> Complex64 {
    let angle = TAU * (k % p) as f64 / p as f64;
    Complex64::new(angle.cos(), angle.sin())
}

/// Matrix of X^x Z^z on one dim-p qudit: X|j> = |j+1>, Z|j> = ω^j |j>.
fn xz_matrix(p: u32, x: u32, z: u32) -> CMat {
    let d = p as usize;
    let mut m = CMat::zeros(d);
    for j in 0..d {
        let row = (j + x as usize) % d;
        m.set(row, j, omega(p, (z * j as u32) % p));
    }
    m
}

/// Phase factor of a Pauli string: i^φ for p = 2, ω^φ otherwise.
fn phase_factor(ps: &PauliString) -> Complex64 {
    if ps.prime() == 2 {
        match ps.phase() % 4 {
            0 => Complex64::ONE,
            1 => Complex64::I,
            2 => -Complex64::ONE,
            _ => -Complex64::I,
        }
    } else {
        omega(ps.prime(), ps.phase())
    }
}

/// Dense matrix of a Pauli string over an ordered factor list.
pub fn pauli_matrix(ps: &PauliString, refs: &[QuditRef], dims: &[usize]) -> CMat {
    let mut m = CMat::identity(1);
    for (q, d) in refs.iter().zip(dims) {
        let (x, z) = ps.xz(*q);
        let f = if (x, z) == (0, 0) {
            CMat::identity(*d)
        } else {
            xz_matrix(ps.prime(), x, z)
        };
        m = m.kron(&f);
    }
    m.scale(phase_factor(ps));
    m
}

/// Unitary with prescribed conjugation action on Pauli generators, built
/// column by column: |φ_0⟩ is the joint +1 eigenvector of the Z-generator
/// images, and X-generator images ladder the remaining columns.
pub fn clifford_images_to_unitary(
    p: u32,
    refs: &[QuditRef],
    dims: &[usize],
    image_x: impl Fn(QuditRef) -> PauliString,
    image_z: impl Fn(QuditRef) -> PauliString,
) -> Result<CMat> {
    let m = refs.len();
    let d: usize = dims.iter().product();
    let zimgs: Vec<CMat> =
        refs.iter().map(|q| pauli_matrix(&image_z(*q), refs, dims)).collect();
    let ximgs: Vec<CMat> =
        refs.iter().map(|q| pauli_matrix(&image_x(*q), refs, dims)).collect();
    // project a seed vector onto the joint eigenvalue-1 subspace of zimgs
    let mut seed = vec![Complex64::ZERO; d];
    let mut phi0 = None;
    for attempt in 0..d {
        for (i, v) in seed.iter_mut().enumerate() {
            // deterministic varying seed
            let t = ((i * 2654435761 + attempt * 40503 + 1) % 1000) as f64 / 1000.0;
            *v = Complex64::new(t, 1.0 - t * 0.5);
        }
        let mut v = seed.clone();
        for zi in &zimgs {
            // (1/p) Σ_j zi^j v
            let mut acc = v.clone();
            let mut pow = v.clone();
            for _ in 1..p {
                pow = mat_vec(zi, &pow);
                for (a, b) in acc.iter_mut().zip(&pow) {
                    *a += b;
                }
            }
            for a in acc.iter_mut() {
                *a /= p as f64;
            }
            v = acc;
        }
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            phi0 = Some(v);
            break;
        }
    }
    let phi0 = phi0.ok_or_else(|| {
        Error::InvalidQca("no joint eigenvector; images are inconsistent".into())
    })?;
    // column for digit string b: ∏_k ximg_k^{b_k} |φ_0⟩
    let mut u = CMat::zeros(d);
    for b in 0..d {
        let mut v = phi0.clone();
        let mut rem = b;
        for k in (0..m).rev() {
            let digit = rem % dims[k];
            rem /= dims[k];
            for _ in 0..digit {
                v = mat_vec(&ximgs[k], &v);
            }
        }
        for (i, val) in v.iter().enumerate() {
            u.set(i, b, *val);
        }
    }
    if !u.is_unitary(1e-7) {
        return Err(Error::InvalidQca("image table did not produce a unitary".into()));
    }
    Ok(u)
}

fn mat_vec(m: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let n = m.dim();
    let mut out = vec![Complex64::ZERO; n];
    for i in 0..n {
        let mut acc = Complex64::ZERO;
        for j in 0..n {
            let a = m.get(i, j);
            if a != Complex64::ZERO {
                acc += a * v[j];
            }
        }
        out[i] = acc;
    }
    out
}

/// Dense matrix of one gate over its own (sorted) support.
pub fn gate_matrix(gate: &Gate, layout: &LayoutRef) -> Result<CMat> {
    let dims: Vec<usize> =
        gate.support.iter().map(|q| layout.qudit(*q).unwrap().dim as usize).collect();
    let d: usize = dims.iter().product();
    match &gate.action {
        GateAction::Dense(m) => Ok(m.clone()),
        GateAction::Clifford(act) => {
            let refs = gate.support.clone();
            clifford_images_to_unitary(
                act.p,
                &refs,
                &dims,
                |q| act.images[2 * refs.binary_search(&q).unwrap()].clone(),
                |q| act.images[2 * refs.binary_search(&q).unwrap() + 1].clone(),
            )
        }
        GateAction::Permutation(_) | GateAction::SwapPairs(_) => {
            // conjugation moves content of position k to target[k]
            let target: Vec<usize> = match &gate.action {
                GateAction::Permutation(p) => p.clone(),
                GateAction::SwapPairs(pairs) => {
                    let mut t: Vec<usize> = (0..gate.support.len()).collect();
                    for (a, b) in pairs {
                        let ia = gate.support.binary_search(a).unwrap();
                        let ib = gate.support.binary_search(b).unwrap();
                        t.swap(ia, ib);
                    }
                    t
                }
                _ => unreachable!(),
            };
            let factors = Factors::new(dims.clone());
            let mut u = CMat::zeros(d);
            for col in 0..d {
                // extract digits, route digit k to position target[k]
                let mut digits = vec![0usize; dims.len()];
                let mut rem = col;
                for k in (0..dims.len()).rev() {
                    digits[k] = rem % dims[k];
                    rem /= dims[k];
                }
                let mut row = 0usize;
                for k in 0..dims.len() {
                    row += digits[k] * factors.stride(target[k]);
                }
                u.set(row, col, Complex64::ONE);
            }
            Ok(u)
        }
        GateAction::Composite(subs) => {
            let factors = Factors::new(dims.clone());
            let mut u = CMat::identity(d);
            for sub in subs {
                let sm = gate_matrix(sub, layout)?;
                let positions: Vec<usize> = sub
                    .support
                    .iter()
                    .map(|q| gate.support.binary_search(q).unwrap())
                    .collect();
                apply_local_left(&mut u, &sm, &factors, &positions);
            }
            Ok(u)
        }
    }
}

impl DenseQca {
    pub fn layout(&self) -> &LayoutRef {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn unitary(&self) -> &CMat {
        &self.u
    }

    pub fn refs(&self) -> &[QuditRef] {
        &self.refs
    }

    fn check_cap(layout: &LayoutRef, cap: u128) -> Result<(Vec<QuditRef>, Vec<usize>)> {
        let refs = layout.qudit_refs();
        let mut total: u128 = 1;
        let mut dims = Vec::with_capacity(refs.len());
        for q in &refs {
            let d = layout.qudit(*q)?.dim as u128;
            total = total.saturating_mul(d);
            dims.push(d as usize);
        }
        if total > cap {
            return Err(Error::DenseCap { dim: total, cap });
        }
        Ok((refs, dims))
    }

    pub fn identity(layout: LayoutRef, cap: u128) -> Result<DenseQca> {
        let (refs, dims) = Self::check_cap(&layout, cap)?;
        let d = dims.iter().product();
        Ok(DenseQca {
            layout,
            refs,
            dims,
            u: CMat::identity(d),
            tolerance: DEFAULT_TOLERANCE,
        })
    }

    pub fn from_unitary(layout: LayoutRef, u: CMat, cap: u128) -> Result<DenseQca> {
        let (refs, dims) = Self::check_cap(&layout, cap)?;
        let d: usize = dims.iter().product();
        if u.dim() != d {
            return Err(Error::InvalidQca(format!(
                "unitary dim {} does not match layout dim {d}",
                u.dim()
            )));
        }
        if !u.is_unitary(1e-7) {
            return Err(Error::InvalidQca("matrix is not unitary".into()));
        }
        Ok(DenseQca { layout, refs, dims, u, tolerance: DEFAULT_TOLERANCE })
    }

    pub fn from_circuit(circuit: &Circuit, cap: u128) -> Result<DenseQca> {
        let mut qca = Self::identity(circuit.layout().clone(), cap)?;
        let factors = Factors::new(qca.dims.clone());
        for round in circuit.rounds() {
            for gate in round {
                let gm = gate_matrix(gate, circuit.layout())?;
                let positions: Vec<usize> = gate
                    .support
                    .iter()
                    .map(|q| qca.refs.binary_search(q).unwrap())
                    .collect();
                apply_local_left(&mut qca.u, &gm, &factors, &positions);
            }
        }
        Ok(qca)
    }

    pub fn from_clifford(
        clifford: &crate::backend::clifford::CliffordQca,
        cap: u128,
    ) -> Result<DenseQca> {
        let layout = clifford.layout().clone();
        let (refs, dims) = Self::check_cap(&layout, cap)?;
        let u = clifford_images_to_unitary(
            clifford.prime(),
            &refs,
            &dims,
            |q| clifford.image_x(q).unwrap().clone(),
            |q| clifford.image_z(q).unwrap().clone(),
        )?;
        Ok(DenseQca { layout, refs, dims, u, tolerance: DEFAULT_TOLERANCE })
    }

    /// Site-permutation unitary: content of qudit q moves to map[q].
    pub fn from_qudit_permutation(
        layout: LayoutRef,
        map: &BTreeMap<QuditRef, QuditRef>,
        cap: u128,
    ) -> Result<DenseQca> {
        let (refs, dims) = Self::check_cap(&layout, cap)?;
        let factors = Factors::new(dims.clone());
        let d: usize = dims.iter().product();
        let target: Vec<usize> = refs
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let t = map.get(q).copied().unwrap_or(*q);
                refs.binary_search(&t).map_err(|_| Error::UnknownQudit {
                    site: t.site.0,
                    slot: t.slot,
                }).map(|i| {
                    let _ = k;
                    i
                })
            })
            .collect::<Result<_>>()?;
        let mut u = CMat::zeros(d);
        for col in 0..d {
            let mut digits = vec![0usize; dims.len()];
            let mut rem = col;
            for k in (0..dims.len()).rev() {
                digits[k] = rem % dims[k];
                rem /= dims[k];
            }
            let mut row = 0usize;
            for k in 0..dims.len() {
                row += digits[k] * factors.stride(target[k]);
            }
            u.set(row, col, Complex64::ONE);
        }
        Ok(DenseQca { layout, refs, dims, u, tolerance: DEFAULT_TOLERANCE })
    }

    /// Conjugation U O U†.
    pub fn apply_matrix(&self, op: &CMat) -> CMat {
        self.u.matmul(op).matmul(&self.u.adjoint())
    }

    pub fn apply_pauli_as_matrix(&self, ps: &PauliString) -> CMat {
        let op = pauli_matrix(ps, &self.refs, &self.dims);
        self.apply_matrix(&op)
    }

    /// Equality of automorphisms = equality of unitaries up to global phase.
    pub fn equal(&self, other: &DenseQca, tol: f64) -> bool {
        self.refs == other.refs && self.u.phase_aligned_distance(&other.u) <= tol
    }

    /// True iff conjugation leaves every generator of the listed qudits
    /// fixed within tolerance.
    pub fn is_trivial_on(&self, qudits: &[QuditRef], tol: f64) -> Result<bool> {
        for q in qudits {
            let k = self
                .refs
                .binary_search(q)
                .map_err(|_| Error::UnknownQudit { site: q.site.0, slot: q.slot })?;
            let p = self.dims[k] as u32;
            for gen in [PauliString::x(p, *q), PauliString::z(p, *q)] {
                let img = self.apply_pauli_as_matrix(&gen);
                let orig = pauli_matrix(&gen, &self.refs, &self.dims);
                if img.max_abs_diff(&orig) > tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Support of an operator: qudits whose generators fail to commute with
    /// it within tolerance.
    pub fn support_of(&self, op: &CMat, tol: f64) -> Vec<QuditRef> {
        let mut out = Vec::new();
        for (k, q) in self.refs.iter().enumerate() {
            let p = self.dims[k] as u32;
            let mut nontrivial = false;
            for gen in [PauliString::x(p, *q), PauliString::z(p, *q)] {
                let g = pauli_matrix(&gen, &self.refs, &self.dims);
                let ab = op.matmul(&g);
                let ba = g.matmul(op);
                if ab.max_abs_diff(&ba) > tol {
                    nontrivial = true;
                    break;
                }
            }
            if nontrivial {
                out.push(*q);
            }
        }
        out
    }

    /// Smallest R such that images of single-qudit generators stay within
    /// distance R of their source.
    pub fn range(&self, tol: f64) -> Result<Length> {
        let mut best = Length::zero();
        for (k, q) in self.refs.iter().enumerate() {
            let p = self.dims[k] as u32;
            for gen in [PauliString::x(p, *q), PauliString::z(p, *q)] {
                let img = self.apply_pauli_as_matrix(&gen);
                for s in self.support_of(&img, tol) {
                    let d = self.layout.distance(q.site, s.site)?;
                    if d > best {
                        best = d;
                    }
                }
            }
        }
        Ok(best)
    }

    /// Compose: (self ∘ other) acts as conjugation by U_self · U_other.
    pub fn compose(&self, other: &DenseQca) -> Result<DenseQca> {
        if self.refs != other.refs {
            return Err(Error::BackendMismatch("automorphism domains differ".into()));
        }
        Ok(DenseQca {
            layout: self.layout.clone(),
            refs: self.refs.clone(),
            dims: self.dims.clone(),
            u: self.u.matmul(&other.u),
            tolerance: self.tolerance,
        })
    }

    pub fn inverse(&self) -> DenseQca {
        DenseQca {
            layout: self.layout.clone(),
            refs: self.refs.clone(),
            dims: self.dims.clone(),
            u: self.u.adjoint(),
            tolerance: self.tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::clifford::CliffordQca;
    use crate::fixtures;
    use crate::lattice::{one_physical, Layout};
    use std::sync::Arc;

    fn ring(n: usize, p: u32) -> LayoutRef {
        Arc::new(Layout::unit_ring(n, one_physical(p)).unwrap())
    }

    #[test]
    fn pauli_matrices_multiply_like_strings() {
        let l = ring(2, 2);
        let refs = l.qudit_refs();
        let dims = vec![2usize, 2];
        let mut rng = fixtures::rng(5);
        for _ in 0..20 {
            let a = fixtures::random_pauli(&l, 2, 2, &mut rng);
            let b = fixtures::random_pauli(&l, 2, 2, &mut rng);
            let am = pauli_matrix(&a, &refs, &dims);
            let bm = pauli_matrix(&b, &refs, &dims);
            let prod = pauli_matrix(&a.mul(&b), &refs, &dims);
            assert!(am.matmul(&bm).max_abs_diff(&prod) < 1e-10);
        }
    }

    #[test]
    fn qutrit_pauli_matrices_multiply_like_strings() {
        let l = ring(2, 3);
        let refs = l.qudit_refs();
        let dims = vec![3usize, 3];
        let mut rng = fixtures::rng(6);
        for _ in 0..20 {
            let a = fixtures::random_pauli(&l, 3, 2, &mut rng);
            let b = fixtures::random_pauli(&l, 3, 2, &mut rng);
            let am = pauli_matrix(&a, &refs, &dims);
            let bm = pauli_matrix(&b, &refs, &dims);
            let prod = pauli_matrix(&a.mul(&b), &refs, &dims);
            assert!(am.matmul(&bm).max_abs_diff(&prod) < 1e-10);
        }
    }

    #[test]
    fn clifford_and_dense_circuit_actions_agree() {
        let l = ring(5, 2);
        let c = fixtures::random_brickwork_clifford(&l, 2, 77).unwrap();
        let cliff = CliffordQca::from_circuit(&c).unwrap();
        let dense = DenseQca::from_circuit(&c, DEFAULT_DENSE_CAP).unwrap();
        let dense2 = DenseQca::from_clifford(&cliff, DEFAULT_DENSE_CAP).unwrap();
        assert!(dense.equal(&dense2, 1e-7));
        let mut rng = fixtures::rng(8);
        for _ in 0..5 {
            let p = fixtures::random_pauli(&l, 2, 2, &mut rng);
            let via_cliff = cliff.apply(&p).unwrap();
            let want = pauli_matrix(&via_cliff, dense.refs(), &dense.dims);
            let got = dense.apply_pauli_as_matrix(&p);
            assert!(want.max_abs_diff(&got) < 1e-8);
        }
    }

    #[test]
    fn dense_range_of_shift() {
        let l = ring(4, 2);
        let s = CliffordQca::shift(l.clone(), 1).unwrap();
        let d = DenseQca::from_clifford(&s, DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(d.range(1e-9).unwrap(), crate::lattice::len_int(1));
        assert!(d.is_trivial_on(&[], 1e-9).unwrap());
        let id = DenseQca::identity(l, DEFAULT_DENSE_CAP).unwrap();
        assert!(!d.equal(&id, 1e-9));
    }

    #[test]
    fn cap_is_enforced() {
        let l = ring(13, 2);
        assert!(matches!(
            DenseQca::identity(l, DEFAULT_DENSE_CAP),
            Err(Error::DenseCap { .. })
        ));
    }
}
