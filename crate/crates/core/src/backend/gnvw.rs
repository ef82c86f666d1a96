//! GNVW index of 1D QCA via support-algebra overlap dimensions on a
//! coarse-grained chain: exact symplectic rank counting on the Clifford
//! backend, operator-basis projection on the dense backend (the
//! independent oracle).

use crate::backend::clifford::CliffordQca;
use crate::backend::cmat::CMat;
use crate::backend::dense::{pauli_matrix, DenseQca};
use crate::backend::pauli::PauliString;
use crate::error::{Error, Result};
use crate::lattice::{Layout, Length, QuditRef, SiteId};
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::One;

/// Consecutive coarse blocks of a 1D layout, each wide enough that images
/// of one block stay within its neighbors.
fn coarse_blocks(layout: &Layout, range: Length) -> Result<Vec<Vec<SiteId>>> {
    if !layout.is_one_dimensional() {
        return Err(Error::Precondition("the index needs a Ring or Interval layout".into()));
    }
    let spacing = layout.min_spacing();
    let mut ranked: Vec<SiteId> = layout.sites().iter().map(|s| s.id).collect();
    ranked.sort_by_key(|id| (layout.coordinate(*id).unwrap(), *id));
    let n = ranked.len();
    let r_sites = {
        let r = range / spacing;
        let mut k = r.floor().to_integer();
        if Rational64::from_integer(k) < r {
            k += 1;
        }
        k.max(1) as usize
    };
    for width in [2 * r_sites, r_sites] {
        let m = n / width;
        if m >= 4 {
            let mut blocks: Vec<Vec<SiteId>> = (0..m)
                .map(|k| ranked[k * width..(k + 1) * width].to_vec())
                .collect();
            // last block absorbs the remainder
            for extra in &ranked[m * width..] {
                blocks.last_mut().unwrap().push(*extra);
            }
            return Ok(blocks);
        }
    }
    Err(Error::Precondition(
        "range too large for coarse blocks: need at least 4 blocks on the ring".into(),
    ))
}

fn block_refs(layout: &Layout, block: &[SiteId]) -> Vec<QuditRef> {
    let mut out = Vec::new();
    for s in block {
        let site = layout.site(*s).unwrap();
        for slot in 0..site.qudits.len() as u32 {
            out.push(QuditRef { site: *s, slot });
        }
    }
    out
}

/// Exact index of a Clifford QCA: p^k for integer k (negative k gives the
/// reciprocal).
pub fn gnvw_index_clifford(qca: &CliffordQca) -> Result<Rational64> {
    let layout = qca.layout();
    let p = qca.prime();
    let blocks = coarse_blocks(layout, qca.range()?)?;
    let m = blocks.len();
    let p_refs: Vec<QuditRef> = [&blocks[0], &blocks[1]]
        .iter()
        .flat_map(|b| block_refs(layout, b))
        .collect();
    let q_refs: Vec<QuditRef> = [&blocks[1], &blocks[2]]
        .iter()
        .flat_map(|b| block_refs(layout, b))
        .collect();
    // allowed support for images of blocks 0..1: blocks m-1, 0, 1, 2
    let allowed: std::collections::BTreeSet<SiteId> = [3usize, 0, 1, 2]
        .iter()
        .flat_map(|&k| blocks[if k == 3 { m - 1 } else { k }].iter().copied())
        .collect();
    let mut q_index: std::collections::BTreeMap<QuditRef, usize> = Default::default();
    for (i, q) in q_refs.iter().enumerate() {
        q_index.insert(*q, i);
    }
    // project every generator image of P onto the Q window
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let width = 2 * q_refs.len();
    for q in &p_refs {
        for img in [qca.image_x(*q)?, qca.image_z(*q)?] {
            let mut row = vec![0u32; width];
            for (t, (x, z)) in img.terms() {
                if !allowed.contains(&t.site) {
                    return Err(Error::Precondition(
                        "images leak beyond neighboring blocks; range too large".into(),
                    ));
                }
                if let Some(&i) = q_index.get(&t) {
                    row[2 * i] = x;
                    row[2 * i + 1] = z;
                }
            }
            rows.push(row);
        }
    }
    let rank = rank_mod_p(rows, p);
    let w1 = block_refs(layout, &blocks[1]).len();
    if rank % 2 != 0 {
        return Err(Error::InvalidQca("odd support-algebra rank; input is not a QCA".into()));
    }
    let exp = rank as i64 / 2 - w1 as i64;
    Ok(power_of_p(p, exp))
}

pub fn power_of_p(p: u32, exp: i64) -> Rational64 {
    let mut num = Rational64::one();
    let pr = Rational64::from_integer(p as i64);
    for _ in 0..exp.abs() {
        num *= pr;
    }
    if exp >= 0 {
        num
    } else {
        num.recip()
    }
}

fn rank_mod_p(mut rows: Vec<Vec<u32>>, p: u32) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let width = rows[0].len();
    let p64 = p as u64;
    let inv = |v: u64| -> u64 {
        let mut acc = 1u64;
        let mut base = v % p64;
        let mut e = p64 - 2;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % p64;
            }
            base = base * base % p64;
            e >>= 1;
        }
        acc
    };
    let mut rank = 0;
    let mut row_at = 0;
    for col in 0..width {
        let piv = (row_at..rows.len()).find(|&r| rows[r][col] % p != 0);
        let Some(piv) = piv else { continue };
        rows.swap(row_at, piv);
        let f = inv(rows[row_at][col] as u64);
        for j in col..width {
            rows[row_at][j] = ((rows[row_at][j] as u64 * f) % p64) as u32;
        }
        for r in 0..rows.len() {
            if r != row_at && rows[r][col] % p != 0 {
                let c = rows[r][col] as u64 % p64;
                for j in col..width {
                    let sub = (c * rows[row_at][j] as u64) % p64;
                    rows[r][j] = ((rows[r][j] as u64 + p64 - sub) % p64) as u32;
                }
            }
        }
        rank += 1;
        row_at += 1;
        if row_at == rows.len() {
            break;
        }
    }
    rank
}

/// Brute-force dense oracle for the index (qubits only): builds the support
/// algebra of α(A(B0∪B1)) on A(B1∪B2) by operator-basis projection and
/// counts its dimension.
pub fn gnvw_index_dense(qca: &DenseQca) -> Result<Rational64> {
    let layout = qca.layout().clone();
    for q in qca.refs() {
        if layout.qudit(*q)?.dim != 2 {
            return Err(Error::Unsupported("dense index oracle handles qubits only".into()));
        }
    }
    let tol = 1e-7;
    let blocks = coarse_blocks(&layout, qca.range(tol)?)?;
    let p_refs: Vec<QuditRef> = [&blocks[0], &blocks[1]]
        .iter()
        .flat_map(|b| block_refs(&layout, b))
        .collect();
    let q_refs: Vec<QuditRef> = [&blocks[1], &blocks[2]]
        .iter()
        .flat_map(|b| block_refs(&layout, b))
        .collect();
    let refs = qca.refs().to_vec();
    let q_positions: Vec<usize> =
        q_refs.iter().map(|q| refs.binary_search(q).unwrap()).collect();
    let rest_positions: Vec<usize> =
        (0..refs.len()).filter(|k| !q_positions.contains(k)).collect();
    let d = qca.dim();
    let dq = 1usize << q_positions.len();
    let dr = 1usize << rest_positions.len();
    // index decomposition tables
    let mut full_of = vec![0usize; dr * dq];
    for idx in 0..d {
        let mut ir = 0usize;
        for (b, &pos) in rest_positions.iter().enumerate() {
            let digit = idx >> (refs.len() - 1 - pos) & 1;
            ir |= digit << (rest_positions.len() - 1 - b);
        }
        let mut iq = 0usize;
        for (b, &pos) in q_positions.iter().enumerate() {
            let digit = idx >> (refs.len() - 1 - pos) & 1;
            iq |= digit << (q_positions.len() - 1 - b);
        }
        full_of[ir * dq + iq] = idx;
    }
    // span of Q-side components over all generator images of P
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let add_to_basis = |vec: Vec<Complex64>, basis: &mut Vec<Vec<Complex64>>| {
        let mut v = vec;
        let norm0: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm0 < tol {
            return false;
        }
        for b in basis.iter() {
            let inner: Complex64 = b.iter().zip(&v).map(|(a, c)| a.conj() * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= inner * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 * norm0.max(1.0) {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
            true
        } else {
            false
        }
    };
    for q in &p_refs {
        for gen in [PauliString::x(2, *q), PauliString::z(2, *q)] {
            let img = qca.apply_pauli_as_matrix(&gen);
            // project against every Pauli on the rest factor
            for xm in 0..dr {
                for zm in 0..dr {
                    let mut h = vec![Complex64::ZERO; dq * dq];
                    for s in 0..dr {
                        let sign = if (s & zm).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        let r = s ^ xm;
                        for u in 0..dq {
                            let row = full_of[r * dq + u];
                            for v in 0..dq {
                                let col = full_of[s * dq + v];
                                h[u * dq + v] += sign * img.get(row, col);
                            }
                        }
                    }
                    add_to_basis(h, &mut basis);
                }
            }
        }
    }
    // close under multiplication
    loop {
        let snapshot = basis.clone();
        let mut grew = false;
        for a in &snapshot {
            for b in &snapshot {
                let mut prod = vec![Complex64::ZERO; dq * dq];
                for i in 0..dq {
                    for k in 0..dq {
                        let av = a[i * dq + k];
                        if av.norm_sqr() < 1e-24 {
                            continue;
                        }
                        for j in 0..dq {
                            prod[i * dq + j] += av * b[k * dq + j];
                        }
                    }
                }
                if add_to_basis(prod, &mut basis) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let rank = basis.len();
    let w1 = block_refs(&layout, &blocks[1]).len();
    let ind = (rank as f64).sqrt() / (1u64 << w1) as f64;
    // snap to the nearest power of 2
    let exp = ind.log2().round() as i64;
    let snapped = 2f64.powi(exp as i32);
    if (ind - snapped).abs() > 1e-6 {
        return Err(Error::Verification(format!(
            "dense index {ind} is not a power of the qudit dimension"
        )));
    }
    Ok(power_of_p(2, exp))
}

/// Dense Pauli helper matrix reused by tests.
pub fn dense_pauli(qca: &DenseQca, ps: &PauliString) -> CMat {
    let dims: Vec<usize> = qca
        .refs()
        .iter()
        .map(|q| qca.layout().qudit(*q).unwrap().dim as usize)
        .collect();
    pauli_matrix(ps, qca.refs(), &dims)
}
