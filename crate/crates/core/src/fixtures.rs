//! Deterministic fixture generators: random Clifford gates and circuits,
//! brickworks, and random dense unitaries. Everything is seeded so runs are
//! reproducible byte for byte.

use crate::backend::cmat::CMat;
use crate::backend::pauli::PauliString;
use crate::circuit::{Circuit, CliffordAction, Gate, GateAction};
use crate::error::{Error, Result};
use crate::lattice::{Layout, LayoutRef, Length, QuditRef, SiteId};
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Swap of two equal-dimension qudits as a gate.
pub fn swap_gate(a: QuditRef, b: QuditRef) -> Gate {
    Gate::new(vec![a, b], GateAction::SwapPairs(vec![(a, b)]))
}

/// Uniformly random Clifford gate on the given qudits (prime p), sampled by
/// drawing symplectically consistent generator images with rejection.
pub fn random_clifford_gate(
    layout: &Layout,
    support: Vec<QuditRef>,
    p: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Gate> {
    let mut support = support;
    support.sort();
    support.dedup();
    let m = support.len();
    for q in &support {
        if layout.qudit(*q)?.dim != p {
            return Err(Error::Precondition("qudit dimension mismatch".into()));
        }
    }
    let random_string = |rng: &mut ChaCha8Rng| -> PauliString {
        let mut s = PauliString::identity(p);
        for q in &support {
            s.set(*q, rng.random_range(0..p), rng.random_range(0..p));
        }
        s
    };
    let mut images: Vec<PauliString> = Vec::with_capacity(2 * m);
    for k in 0..m {
        // image of X_k: commutes with everything placed so far
        let ximg = loop {
            let cand = random_string(rng);
            if cand.is_identity_op() {
                continue;
            }
            if images.iter().all(|fixed| cand.commutes_with(fixed)) {
                break cand;
            }
        };
        // image of Z_k: commutes with earlier images, anticommutes with ximg
        // with the same exponent as Z_k and X_k
        let want = PauliString::z(p, support[k])
            .commutation_exponent(&PauliString::x(p, support[k]));
        let zimg = loop {
            let cand = random_string(rng);
            if cand.commutation_exponent(&ximg) == want
                && images.iter().all(|fixed| cand.commutes_with(fixed))
            {
                break cand;
            }
        };
        images.push(ximg);
        images.push(zimg);
    }
    for img in &mut images {
        if p == 2 {
            let overlap: u32 =
                img.terms().map(|(_, (x, z))| x * z).sum::<u32>() % 2;
            img.set_phase(overlap + 2 * rng.random_range(0..2u32));
        } else {
            img.set_phase(rng.random_range(0..p));
        }
    }
    Ok(Gate::new(support, GateAction::Clifford(CliffordAction { p, images })))
}

fn sorted_site_ids(layout: &Layout) -> Vec<SiteId> {
    let mut ids: Vec<SiteId> = layout.sites().iter().map(|s| s.id).collect();
    if layout.is_one_dimensional() {
        ids.sort_by_key(|id| layout.coordinate(*id).unwrap());
    } else {
        ids.sort();
    }
    ids
}

/// Depth-D brickwork of random two-site Clifford gates on a ring, bricks
/// shifted by one site between rounds.
pub fn random_brickwork_clifford(
    layout: &LayoutRef,
    depth: usize,
    seed: u64,
) -> Result<Circuit> {
    let p = layout.qudit(QuditRef { site: layout.sites()[0].id, slot: 0 })?.dim;
    let ids = sorted_site_ids(layout);
    let n = ids.len();
    let mut r = rng(seed);
    let mut rounds = Vec::with_capacity(depth);
    for a in 0..depth {
        let offset = a % 2;
        let mut round = Vec::new();
        let mut k = offset;
        while k + 1 < n + offset {
            let s1 = ids[k % n];
            let s2 = ids[(k + 1) % n];
            if k + 1 >= n && offset == 0 {
                break;
            }
            let g = random_clifford_gate(
                layout,
                vec![QuditRef { site: s1, slot: 0 }, QuditRef { site: s2, slot: 0 }],
                p,
                &mut r,
            )?;
            round.push(g);
            k += 2;
        }
        rounds.push(round);
    }
    let spacing = layout.min_spacing();
    Circuit::new(layout.clone(), spacing, rounds)
}

/// Random circuit of two-site Clifford gates where each gate joins sites at
/// most `max_pair_sites` apart; used to make range-bounded QCA fixtures.
pub fn random_local_clifford_circuit(
    layout: &LayoutRef,
    depth: usize,
    max_pair_sites: usize,
    seed: u64,
) -> Result<Circuit> {
    let p = layout.qudit(QuditRef { site: layout.sites()[0].id, slot: 0 })?.dim;
    let ids = sorted_site_ids(layout);
    let n = ids.len();
    let mut r = rng(seed);
    let mut rounds = Vec::with_capacity(depth);
    let mut max_diam = Length::zero();
    for _ in 0..depth {
        let mut used = vec![false; n];
        let mut round = Vec::new();
        let start = r.random_range(0..n);
        for off in 0..n {
            let i = (start + off) % n;
            if used[i] {
                continue;
            }
            let d = 1 + r.random_range(0..max_pair_sites);
            let j = (i + d) % n;
            if j != i && !used[j] {
                used[i] = true;
                used[j] = true;
                let g = random_clifford_gate(
                    layout,
                    vec![QuditRef { site: ids[i], slot: 0 }, QuditRef { site: ids[j], slot: 0 }],
                    p,
                    &mut r,
                )?;
                let diam = g.diameter(layout)?;
                if diam > max_diam {
                    max_diam = diam;
                }
                round.push(g);
            }
        }
        rounds.push(round);
    }
    Circuit::new(layout.clone(), max_diam, rounds)
}

/// Haar-ish random unitary via Gram-Schmidt on a random complex matrix.
pub fn random_unitary(dim: usize, rng: &mut ChaCha8Rng) -> CMat {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        loop {
            let mut v: Vec<Complex64> = (0..dim)
                .map(|_| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
                .collect();
            // orthogonalize against previous columns (twice, for stability)
            for _ in 0..2 {
                for c in &cols {
                    let inner: Complex64 =
                        c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi -= inner * ci;
                    }
                }
            }
            let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for vi in &mut v {
                    *vi /= norm;
                }
                cols.push(v);
                break;
            }
        }
    }
    let mut m = CMat::zeros(dim);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    m
}

/// Depth-D brickwork of random dense two-qubit gates.
pub fn random_brickwork_dense(
    layout: &LayoutRef,
    depth: usize,
    seed: u64,
) -> Result<Circuit> {
    let ids = sorted_site_ids(layout);
    let n = ids.len();
    let mut r = rng(seed);
    let mut rounds = Vec::with_capacity(depth);
    for a in 0..depth {
        let offset = a % 2;
        let mut round = Vec::new();
        let mut k = offset;
        while k + 1 < n + offset {
            if k + 1 >= n && offset == 0 {
                break;
            }
            let q1 = QuditRef { site: ids[k % n], slot: 0 };
            let q2 = QuditRef { site: ids[(k + 1) % n], slot: 0 };
            let d1 = layout.qudit(q1)?.dim as usize;
            let d2 = layout.qudit(q2)?.dim as usize;
            round.push(Gate::new(vec![q1, q2], GateAction::Dense(random_unitary(d1 * d2, &mut r))));
            k += 2;
        }
        rounds.push(round);
    }
    let spacing = layout.min_spacing();
    Circuit::new(layout.clone(), spacing, rounds)
}

/// Fig.-1-style fixture: depth-3, range-1 brickwork on a 12-site unit ring
/// together with the triangle time function that regroups it to depth 2
/// with diameter-5 block gates.
pub fn triangle_regroup_fixture(
    layout: &LayoutRef,
    seed: u64,
) -> Result<(Circuit, crate::circuit::TimeFunction)> {
    let n = layout.site_count();
    if n % 12 != 0 {
        return Err(Error::Precondition("triangle fixture wants a 12k-site ring".into()));
    }
    let circuit = random_brickwork_clifford(layout, 3, seed)?;
    // height = distance to the block anchors {2,3}, {8,9}, ... in site units;
    // a gate at round a with height h joins the first phase iff a + h <= 3.
    let anchors: Vec<SiteId> = layout
        .sites()
        .iter()
        .map(|s| s.id)
        .filter(|id| matches!(id.0 as usize % 6, 2 | 3))
        .collect();
    let h = crate::lattice::height_from_set(layout, &anchors)?;
    let spacing = layout.min_spacing();
    let mut times = Vec::with_capacity(circuit.gate_count());
    let mut groups = Vec::with_capacity(circuit.gate_count());
    for round in circuit.rounds() {
        let a = circuit.round_of(round[0].id).unwrap() as i64 + 1;
        for g in round {
            let hs = g
                .support_sites()
                .into_iter()
                .map(|s| (h.value(s).unwrap() / spacing).floor().to_integer())
                .min()
                .unwrap();
            let t = if a + hs <= 3 { 1 } else { 2 };
            times.push(t);
            // group by nearest triangle anchor pair: triangles sit at site
            // windows of width 6 starting at 0, 6, 12, ...
            let lead = g.support_sites().into_iter().min().unwrap();
            let anchor = if t == 1 {
                (lead.0 as usize) / 6
            } else {
                // late clusters straddle the triangle boundary near 5-6, 11-0
                let c = g.support_sites().into_iter().map(|s| s.0 as usize).min().unwrap();
                ((c + 2) / 6) % (n / 6)
            };
            groups.push(anchor);
        }
    }
    // times were built round-major in gate-id order already
    let tf = crate::circuit::TimeFunction::from_times(&circuit, times)?.with_groups(groups);
    Ok((circuit, tf))
}

/// Shifts every gate of a circuit by `sites` positions around a uniform
/// ring (supports relabeled, actions carried along).
pub fn translate_circuit(circuit: &Circuit, sites: i64) -> Result<Circuit> {
    let layout = circuit.layout();
    let ids = sorted_site_ids(layout);
    let n = ids.len() as i64;
    let index_of = |s: SiteId| ids.iter().position(|&t| t == s).unwrap() as i64;
    let map_ref = |q: QuditRef| -> QuditRef {
        let k = (index_of(q.site) + sites).rem_euclid(n) as usize;
        QuditRef { site: ids[k], slot: q.slot }
    };
    let mut rounds = Vec::with_capacity(circuit.depth());
    for round in circuit.rounds() {
        let mut new_round = Vec::with_capacity(round.len());
        for g in round {
            new_round.push(relabel_gate(g, &map_ref));
        }
        rounds.push(new_round);
    }
    Circuit::new(layout.clone(), circuit.gate_range(), rounds)
}

/// Rebuilds a gate with every qudit reference pushed through `f`.
///
/// Actions index their support in sorted order; when the relabeling
/// changes the relative order of the support, image tables, permutations,
/// and dense matrix factors are reordered to match.
pub fn relabel_gate(g: &Gate, f: &impl Fn(QuditRef) -> QuditRef) -> Gate {
    let relabeled: Vec<QuditRef> = g.support.iter().map(|q| f(*q)).collect();
    // π[k] = old position that lands at new (sorted) position k
    let mut order: Vec<usize> = (0..relabeled.len()).collect();
    order.sort_by_key(|&i| relabeled[i]);
    let mut inv_order = vec![0usize; order.len()];
    for (new_pos, &old_pos) in order.iter().enumerate() {
        inv_order[old_pos] = new_pos;
    }
    let map: std::collections::BTreeMap<QuditRef, QuditRef> =
        g.support.iter().map(|q| (*q, f(*q))).collect();
    let action = match &g.action {
        GateAction::Clifford(act) => {
            let mut images = Vec::with_capacity(act.images.len());
            for &old_pos in &order {
                images.push(act.images[2 * old_pos].relabeled(&map));
                images.push(act.images[2 * old_pos + 1].relabeled(&map));
            }
            GateAction::Clifford(CliffordAction { p: act.p, images })
        }
        GateAction::Dense(m) => {
            if order.iter().enumerate().all(|(k, &o)| k == o) {
                GateAction::Dense(m.clone())
            } else {
                GateAction::Dense(permute_factors(m, g, &order))
            }
        }
        GateAction::Permutation(perm) => {
            let new_perm: Vec<usize> =
                order.iter().map(|&old| inv_order[perm[old]]).collect();
            GateAction::Permutation(new_perm)
        }
        GateAction::SwapPairs(pairs) => {
            GateAction::SwapPairs(pairs.iter().map(|(a, b)| (f(*a), f(*b))).collect())
        }
        GateAction::Composite(subs) => {
            GateAction::Composite(subs.iter().map(|s| relabel_gate(s, f)).collect())
        }
    };
    Gate::new(relabeled, action)
}

/// Conjugates a dense gate matrix by the digit permutation that moves old
/// factor position k to new position inv_order[k].
fn permute_factors(m: &CMat, g: &Gate, order: &[usize]) -> CMat {
    // factor dims are equal along any reordering we produce (same qudits)
    let mdim = m.dim();
    let nfac = g.support.len();
    // all dims from the matrix shape: infer per-factor dims is impossible in
    // general, so restrict to uniform dims
    let per = (mdim as f64).powf(1.0 / nfac as f64).round() as usize;
    assert_eq!(per.pow(nfac as u32), mdim, "factor permutation needs uniform dims");
    let idx_map = |i: usize| -> usize {
        let mut digits = vec![0usize; nfac];
        let mut rem = i;
        for k in (0..nfac).rev() {
            digits[k] = rem % per;
            rem /= per;
        }
        let mut out = 0usize;
        for k in 0..nfac {
            out = out * per + digits[order[k]];
        }
        out
    };
    let mut out = CMat::zeros(mdim);
    for i in 0..mdim {
        for j in 0..mdim {
            out.set(idx_map(i), idx_map(j), m.get(i, j));
        }
    }
    out
}

/// A circuit on a one-physical-plus-one-ancilla ring that touches ancillas
/// but acts trivially on them: even sites run a random pair gate and later
/// its inverse, odd sites run a genuine physical-only brick in between.
pub fn ancilla_trivial_circuit(layout: &LayoutRef, seed: u64) -> Result<Circuit> {
    let p = layout.qudit(QuditRef { site: layout.sites()[0].id, slot: 0 })?.dim;
    let ids = sorted_site_ids(layout);
    let n = ids.len();
    let mut r = rng(seed);
    let mut round1 = Vec::new();
    let mut round3 = Vec::new();
    for k in (0..n).step_by(2) {
        let pair = vec![QuditRef { site: ids[k], slot: 0 }, QuditRef { site: ids[k], slot: 1 }];
        let g = random_clifford_gate(layout, pair, p, &mut r)?;
        round3.push(g.inverse(layout)?);
        round1.push(g);
    }
    let mut round2 = Vec::new();
    let mut k = 1;
    while k + 2 < n {
        let g = random_clifford_gate(
            layout,
            vec![QuditRef { site: ids[k], slot: 0 }, QuditRef { site: ids[k + 2], slot: 0 }],
            p,
            &mut r,
        )?;
        round2.push(g);
        k += 4;
    }
    let spacing = layout.min_spacing();
    Circuit::new(
        layout.clone(),
        spacing * Rational64::from_integer(2),
        vec![round1, round2, round3],
    )
}

/// Random Pauli string over the whole layout.
pub fn random_pauli(layout: &Layout, p: u32, weight: usize, rng: &mut ChaCha8Rng) -> PauliString {
    let refs = layout.qudit_refs();
    let mut s = PauliString::identity(p);
    for _ in 0..weight {
        let q = refs[rng.random_range(0..refs.len())];
        s.set(q, rng.random_range(0..p), rng.random_range(0..p));
    }
    if p == 2 {
        let overlap: u32 = s.terms().map(|(_, (x, z))| x * z).sum::<u32>() % 2;
        s.set_phase(overlap + 2 * rng.random_range(0..2u32));
    } else {
        s.set_phase(rng.random_range(0..p));
    }
    s
}

pub fn ratio_ceil(x: Rational64) -> i64 {
    x.ceil().to_integer()
}
