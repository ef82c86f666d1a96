//! Small dense complex matrices for the exact-verification fallback backend.
//!
//! Sizes are capped (default 2^12) so a simple row-major representation with
//! straightforward loops is plenty; the expensive operation is conjugation,
//! which is organized as per-gate strided updates rather than full products
//! wherever possible.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, data: vec![Complex64::ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::ONE;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix must be square");
            data.extend(r);
        }
        CMat { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn adjoint(&self) -> CMat {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::ZERO {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    dst[j] += a * row[j];
                }
            }
        }
        out
    }

    pub fn kron(&self, rhs: &CMat) -> CMat {
        let (a, b) = (self.n, rhs.n);
        let n = a * b;
        let mut out = Self::zeros(n);
        for i in 0..a {
            for j in 0..a {
                let v = self.data[i * a + j];
                if v == Complex64::ZERO {
                    continue;
                }
                for k in 0..b {
                    for l in 0..b {
                        out.data[(i * b + k) * n + (j * b + l)] = v * rhs.data[k * b + l];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn max_abs_diff(&self, rhs: &CMat) -> f64 {
        assert_eq!(self.n, rhs.n);
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max-norm distance after aligning the global phase of `rhs` to `self`.
    pub fn phase_aligned_distance(&self, rhs: &CMat) -> f64 {
        let overlap: Complex64 = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a.conj() * b)
            .sum();
        let phase = if overlap.norm() > 1e-300 { overlap / overlap.norm() } else { Complex64::ONE };
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (b - a * phase).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.adjoint().matmul(self);
        prod.max_abs_diff(&Self::identity(self.n)) <= tol
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Frobenius inner product ⟨self, rhs⟩ = tr(self† rhs).
    pub fn frobenius_inner(&self, rhs: &CMat) -> Complex64 {
        self.data.iter().zip(&rhs.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Multi-qudit index helper: factor dimensions in row-major order
/// (first factor is the most significant digit).
#[derive(Debug, Clone)]
pub struct Factors {
    pub dims: Vec<usize>,
    pub total: usize,
}

impl Factors {
    pub fn new(dims: Vec<usize>) -> Self {
        let total = dims.iter().product();
        Factors { dims, total }
    }

    /// Stride of factor `k`: the index step that increments digit `k` by 1.
    pub fn stride(&self, k: usize) -> usize {
        self.dims[k + 1..].iter().product()
    }
}

/// U ← (G acting on the given factor positions) · U.
///
/// `positions` index into `factors`; `g` has dimension = product of those
/// factor dims (digit order = order of `positions`).
pub fn apply_local_left(u: &mut CMat, g: &CMat, factors: &Factors, positions: &[usize]) {
    let n = factors.total;
    assert_eq!(u.dim(), n);
    let local_dims: Vec<usize> = positions.iter().map(|&p| factors.dims[p]).collect();
    let d: usize = local_dims.iter().product();
    assert_eq!(g.dim(), d);
    let strides: Vec<usize> = positions.iter().map(|&p| factors.stride(p)).collect();

    // offsets of each local basis state within the full index
    let mut offsets = vec![0usize; d];
    for li in 0..d {
        let mut rem = li;
        let mut off = 0;
        for (k, &ld) in local_dims.iter().enumerate().rev() {
            off += (rem % ld) * strides[k];
            rem /= ld;
        }
        offsets[li] = off;
    }

    // enumerate "rest" indices: full indices with all local digits zero
    let mut rest: Vec<usize> = Vec::with_capacity(n / d);
    for idx in 0..n {
        let ok = positions
            .iter()
            .all(|&p| idx / factors.stride(p) % factors.dims[p] == 0);
        if ok {
            rest.push(idx);
        }
    }

    let mut col_in = vec![Complex64::ZERO; d];
    for col in 0..n {
        for &base in &rest {
            for li in 0..d {
                col_in[li] = u.get(base + offsets[li], col);
            }
            for li in 0..d {
                let mut acc = Complex64::ZERO;
                for lj in 0..d {
                    let gv = g.get(li, lj);
                    if gv != Complex64::ZERO {
                        acc += gv * col_in[lj];
                    }
                }
                u.set(base + offsets[li], col, acc);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn pauli_x() -> CMat {
        CMat::from_rows(vec![vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]])
    }

    #[test]
    fn kron_and_local_apply_agree() {
        let x = pauli_x();
        let i2 = CMat::identity(2);
        let full = x.kron(&i2); // X on factor 0 of two qubits
        let factors = Factors::new(vec![2, 2]);
        let mut u = CMat::identity(4);
        apply_local_left(&mut u, &x, &factors, &[0]);
        assert!(full.max_abs_diff(&u) < 1e-12);

        let full = i2.kron(&x);
        let mut u = CMat::identity(4);
        apply_local_left(&mut u, &x, &factors, &[1]);
        assert!(full.max_abs_diff(&u) < 1e-12);
    }

    #[test]
    fn local_apply_respects_position_order() {
        // applying a CNOT with control=factor1, target=factor0
        let cnot = CMat::from_rows(vec![
            vec![c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)],
            vec![c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)],
            vec![c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)],
            vec![c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)],
        ]);
        let factors = Factors::new(vec![2, 2]);
        let mut u = CMat::identity(4);
        apply_local_left(&mut u, &cnot, &factors, &[1, 0]);
        // |01> (factor0=0, factor1=1) -> control set -> flips factor0 -> |11>
        // full index of |01> = 0*2+1 = 1; |11> = 3
        assert!((u.get(3, 1) - C::ONE).norm() < 1e-12);
        assert!((u.get(1, 1)).norm() < 1e-12);
    }

    #[test]
    fn phase_alignment() {
        let mut a = CMat::identity(3);
        let mut b = CMat::identity(3);
        b.scale(c(0., 1.)); // i * I
        assert!(a.phase_aligned_distance(&b) < 1e-12);
        a.set(0, 0, c(0.5, 0.0));
        assert!(a.phase_aligned_distance(&b) > 0.1);
    }
}
