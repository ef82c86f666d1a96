//! Sparse Pauli strings over prime-dimensional qudits with exact phase
//! tracking.
//!
//! For odd prime p a string is ω^φ · ∏_q X_q^{x_q} Z_q^{z_q} with
//! ω = e^{2πi/p} and φ tracked mod p. For p = 2 phases are powers of i
//! tracked mod 4 (so Y = i·XZ is representable exactly).

use crate::error::{Error, Result};
use crate::lattice::QuditRef;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent pair of one qudit factor X^x Z^z.
pub type XZ = (u32, u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    p: u32,
    /// phase exponent mod `phase_modulus()`
    phase: u32,
    /// canonical: no (0,0) entries
    terms: BTreeMap<QuditRef, XZ>,
}

pub fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= p {
        if p % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

impl PauliString {
    pub fn identity(p: u32) -> Self {
        PauliString { p, phase: 0, terms: BTreeMap::new() }
    }

    pub fn single(p: u32, q: QuditRef, x: u32, z: u32) -> Self {
        let mut s = Self::identity(p);
        s.set(q, x, z);
        s
    }

    pub fn x(p: u32, q: QuditRef) -> Self {
        Self::single(p, q, 1, 0)
    }

    pub fn z(p: u32, q: QuditRef) -> Self {
        Self::single(p, q, 0, 1)
    }

    pub fn prime(&self) -> u32 {
        self.p
    }

    /// Modulus of the stored phase exponent: 4 for qubits, p for odd p.
    pub fn phase_modulus(&self) -> u32 {
        if self.p == 2 {
            4
        } else {
            self.p
        }
    }

    /// Factor converting an ω-exponent into stored phase units.
    fn omega_unit(&self) -> u32 {
        if self.p == 2 {
            2
        } else {
            1
        }
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn set_phase(&mut self, phase: u32) {
        self.phase = phase % self.phase_modulus();
    }

    pub fn mul_phase(&mut self, phase_exponent: u32) {
        self.phase = (self.phase + phase_exponent) % self.phase_modulus();
    }

    /// Multiplies by ω^e.
    pub fn mul_omega(&mut self, e: u32) {
        let m = self.phase_modulus();
        self.phase = (self.phase + (e % self.p) * self.omega_unit()) % m;
    }

    pub fn xz(&self, q: QuditRef) -> XZ {
        self.terms.get(&q).copied().unwrap_or((0, 0))
    }

    pub fn set(&mut self, q: QuditRef, x: u32, z: u32) {
        let x = x % self.p;
        let z = z % self.p;
        if x == 0 && z == 0 {
            self.terms.remove(&q);
        } else {
            self.terms.insert(q, (x, z));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (QuditRef, XZ)> + '_ {
        self.terms.iter().map(|(q, xz)| (*q, *xz))
    }

    pub fn support(&self) -> impl Iterator<Item = QuditRef> + '_ {
        self.terms.keys().copied()
    }

    pub fn weight(&self) -> usize {
        self.terms.len()
    }

    pub fn is_identity_op(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.terms.is_empty() && self.phase == 0
    }

    /// self ← self · rhs, tracking the phase exactly.
    pub fn mul_assign(&mut self, rhs: &PauliString) {
        debug_assert_eq!(self.p, rhs.p);
        let m = self.phase_modulus();
        self.phase = (self.phase + rhs.phase) % m;
        let mut omega = 0u64;
        for (q, (x2, z2)) in rhs.terms.iter() {
            let (x1, z1) = self.xz(*q);
            // X^{x1} Z^{z1} X^{x2} Z^{z2} = ω^{z1·x2} X^{x1+x2} Z^{z1+z2}
            omega += (z1 as u64) * (*x2 as u64);
            self.set(*q, x1 + x2, z1 + z2);
        }
        let omega = (omega % self.p as u64) as u32;
        self.mul_omega(omega);
    }

    pub fn mul(&self, rhs: &PauliString) -> PauliString {
        let mut out = self.clone();
        out.mul_assign(rhs);
        out
    }

    pub fn pow(&self, e: u32) -> PauliString {
        let mut out = PauliString::identity(self.p);
        for _ in 0..(e % self.p) {
            out.mul_assign(self);
        }
        out
    }

    /// Hermitian adjoint (= inverse, since Pauli strings are unitary).
    pub fn adjoint(&self) -> PauliString {
        let mut out = PauliString::identity(self.p);
        let m = self.phase_modulus();
        out.phase = (m - self.phase) % m;
        let mut omega = 0u64;
        for (q, (x, z)) in self.terms.iter() {
            // (X^x Z^z)† = Z^{-z} X^{-x} = ω^{z·x} X^{-x} Z^{-z}
            omega += (*x as u64) * (*z as u64);
            out.set(*q, self.p - *x, self.p - *z);
        }
        out.mul_omega((omega % self.p as u64) as u32);
        out
    }

    /// ω-exponent of the commutation relation: self·rhs = ω^e rhs·self.
    pub fn commutation_exponent(&self, rhs: &PauliString) -> u32 {
        debug_assert_eq!(self.p, rhs.p);
        let p = self.p as u64;
        let mut e = 0u64;
        for (q, (x1, z1)) in self.terms.iter() {
            let (x2, z2) = rhs.xz(*q);
            e += (*z1 as u64) * (x2 as u64);
            e += p - ((*x1 as u64) * (z2 as u64)) % p;
        }
        (e % p) as u32
    }

    pub fn commutes_with(&self, rhs: &PauliString) -> bool {
        self.commutation_exponent(rhs) == 0
    }

    /// For p = 2: a string squares to the identity iff its i-exponent parity
    /// matches the XZ overlap parity. Such strings are Hermitian.
    pub fn is_involution(&self) -> bool {
        if self.p != 2 {
            return false;
        }
        let overlap: u32 = self.terms.values().map(|(x, z)| x * z).sum::<u32>() % 2;
        self.phase % 2 == overlap
    }

    /// Relabels qudit refs through `map`; refs not in the map stay put.
    pub fn relabeled(&self, map: &BTreeMap<QuditRef, QuditRef>) -> PauliString {
        let mut out = PauliString::identity(self.p);
        out.phase = self.phase;
        for (q, (x, z)) in self.terms.iter() {
            let target = map.get(q).copied().unwrap_or(*q);
            debug_assert_eq!(out.xz(target), (0, 0), "relabel map must be injective");
            out.set(target, *x, *z);
        }
        out
    }

    /// Restriction to a qudit subset (drops the phase).
    pub fn restricted_to(&self, keep: impl Fn(QuditRef) -> bool) -> PauliString {
        let mut out = PauliString::identity(self.p);
        for (q, (x, z)) in self.terms.iter() {
            if keep(*q) {
                out.set(*q, *x, *z);
            }
        }
        out
    }

    pub fn validate_prime(&self) -> Result<()> {
        if !is_prime(self.p) {
            return Err(Error::InvalidQca(format!("{} is not prime", self.p)));
        }
        Ok(())
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p == 2 {
            match self.phase {
                0 => {}
                1 => write!(f, "i·")?,
                2 => write!(f, "-")?,
                _ => write!(f, "-i·")?,
            }
        } else if self.phase != 0 {
            write!(f, "w^{}·", self.phase)?;
        }
        if self.terms.is_empty() {
            return write!(f, "I");
        }
        for (q, (x, z)) in self.terms.iter() {
            if self.p == 2 {
                let c = match (x, z) {
                    (1, 0) => "X",
                    (0, 1) => "Z",
                    (1, 1) => "XZ",
                    _ => "?",
                };
                write!(f, "{c}[{q}]")?;
            } else {
                write!(f, "X^{x}Z^{z}[{q}]")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(site: u32) -> QuditRef {
        QuditRef::new(site, 0)
    }

    #[test]
    fn qubit_multiplication_phases() {
        // X·Z = -Z·X on the same qubit
        let x = PauliString::x(2, q(0));
        let z = PauliString::z(2, q(0));
        let xz = x.mul(&z);
        let zx = z.mul(&x);
        assert_eq!(xz.xz(q(0)), (1, 1));
        assert_eq!(zx.xz(q(0)), (1, 1));
        assert_eq!((zx.phase() + 2) % 4, xz.phase());
        assert_eq!(x.commutation_exponent(&z), 1); // ω = -1 exponent 1
        assert!(x.commutes_with(&PauliString::x(2, q(1))));
    }

    #[test]
    fn squares_and_adjoints() {
        let x = PauliString::x(2, q(3));
        assert!(x.mul(&x).is_identity());
        // y = i·XZ squares to I and is self-adjoint
        let mut y = PauliString::single(2, q(1), 1, 1);
        y.mul_phase(1);
        assert!(y.mul(&y).is_identity());
        assert_eq!(y.adjoint(), y);
        assert!(y.is_involution());

        let p = 5;
        let a = PauliString::single(p, q(0), 2, 3);
        assert!(a.mul(&a.adjoint()).is_identity());
        assert!(a.pow(5).is_identity());
    }

    #[test]
    fn qutrit_commutation() {
        let p = 3;
        let x = PauliString::x(p, q(0));
        let z = PauliString::z(p, q(0));
        // Z X = ω X Z so X Z = ω^{-1} Z X: commutation_exponent(X,Z) = -1 mod 3
        assert_eq!(x.commutation_exponent(&z), p - 1);
        assert_eq!(z.commutation_exponent(&x), 1);
        let x2 = x.pow(2);
        assert_eq!(z.commutation_exponent(&x2), 2);
    }

    #[test]
    fn adjoint_is_inverse_for_random_strings() {
        for p in [2u32, 3, 5] {
            let mut s = PauliString::identity(p);
            for k in 0..6u32 {
                s.set(q(k), k % p, (k + 1) % p);
            }
            s.mul_phase(3 % s.phase_modulus());
            assert!(s.mul(&s.adjoint()).is_identity());
            assert!(s.adjoint().mul(&s).is_identity());
        }
    }
}
