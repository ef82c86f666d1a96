//! Exact automorphism backends and the uniform handle over them: Clifford
//! image tables over prime fields for scale, dense unitaries as the
//! small-system oracle, plus the 1D GNVW index.

pub mod clifford;
pub mod cmat;
pub mod dense;
pub mod gnvw;
pub mod pauli;

use crate::circuit::{Circuit, GateAction};
use crate::error::{Error, Result};
use crate::lattice::{LayoutRef, Length, QuditRef};
use clifford::CliffordQca;
use dense::{DenseQca, DEFAULT_DENSE_CAP, DEFAULT_TOLERANCE};
use num_rational::Rational64;
use pauli::PauliString;
use std::sync::Arc;

/// A QCA in whichever representation is available; everything converts to a
/// common applicable form on demand.
#[derive(Debug, Clone)]
pub enum QcaHandle {
    Clifford(Arc<CliffordQca>),
    Dense(Arc<DenseQca>),
    FromCircuit(Arc<Circuit>),
    Shift { layout: LayoutRef, offset: i64 },
}

/// Knobs for equality and verification.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// compare Clifford images only up to Pauli phases
    pub ignore_phases: bool,
    /// dense max-norm tolerance after global-phase alignment
    pub tolerance: f64,
    pub dense_cap: u128,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            ignore_phases: false,
            tolerance: DEFAULT_TOLERANCE,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

fn circuit_is_cliffordable(circuit: &Circuit) -> bool {
    fn action_ok(action: &GateAction) -> bool {
        match action {
            GateAction::Clifford(_) | GateAction::Permutation(_) | GateAction::SwapPairs(_) => {
                true
            }
            GateAction::Dense(_) => false,
            GateAction::Composite(subs) => subs.iter().all(|g| action_ok(&g.action)),
        }
    }
    circuit.gates().all(|g| action_ok(&g.action))
        && circuit
            .layout()
            .qudit_refs()
            .iter()
            .all(|q| {
                let d = circuit.layout().qudit(*q).unwrap().dim;
                pauli::is_prime(d)
            })
}

impl QcaHandle {
    pub fn layout(&self) -> &LayoutRef {
        match self {
            QcaHandle::Clifford(c) => c.layout(),
            QcaHandle::Dense(d) => d.layout(),
            QcaHandle::FromCircuit(c) => c.layout(),
            QcaHandle::Shift { layout, .. } => layout,
        }
    }

    pub fn identity(layout: LayoutRef) -> QcaHandle {
        QcaHandle::Shift { layout, offset: 0 }
    }

    pub fn to_clifford(&self) -> Result<Arc<CliffordQca>> {
        match self {
            QcaHandle::Clifford(c) => Ok(c.clone()),
            QcaHandle::FromCircuit(c) => {
                if !circuit_is_cliffordable(c) {
                    return Err(Error::BackendMismatch(
                        "circuit contains dense gates; no Clifford form".into(),
                    ));
                }
                Ok(Arc::new(CliffordQca::from_circuit(c)?))
            }
            QcaHandle::Shift { layout, offset } => {
                Ok(Arc::new(CliffordQca::shift(layout.clone(), *offset)?))
            }
            QcaHandle::Dense(_) => Err(Error::BackendMismatch(
                "dense automorphism has no exact Clifford form".into(),
            )),
        }
    }

    pub fn to_dense(&self, cap: u128) -> Result<Arc<DenseQca>> {
        match self {
            QcaHandle::Dense(d) => Ok(d.clone()),
            QcaHandle::Clifford(c) => Ok(Arc::new(DenseQca::from_clifford(c, cap)?)),
            QcaHandle::FromCircuit(c) => Ok(Arc::new(DenseQca::from_circuit(c, cap)?)),
            QcaHandle::Shift { layout, offset } => {
                let c = CliffordQca::shift(layout.clone(), *offset);
                match c {
                    Ok(c) => Ok(Arc::new(DenseQca::from_clifford(&c, cap)?)),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Exact image of a Pauli string (Clifford-compatible handles).
    pub fn apply(&self, p: &PauliString) -> Result<PauliString> {
        self.to_clifford()?.apply(p)
    }

    /// Smallest R moving every generator at most distance R.
    pub fn range(&self, opts: &VerifyOptions) -> Result<Length> {
        match self {
            QcaHandle::Dense(d) => d.range(opts.tolerance),
            other => other.to_clifford()?.range(),
        }
    }

    /// True iff conjugation fixes every generator of the listed qudits.
    pub fn is_trivial_on(&self, qudits: &[QuditRef], opts: &VerifyOptions) -> Result<bool> {
        match self {
            QcaHandle::Dense(d) => d.is_trivial_on(qudits, opts.tolerance),
            other => other.to_clifford()?.is_trivial_on(qudits),
        }
    }

    pub fn compose(&self, other: &QcaHandle, opts: &VerifyOptions) -> Result<QcaHandle> {
        match (self.to_clifford(), other.to_clifford()) {
            (Ok(a), Ok(b)) => Ok(QcaHandle::Clifford(Arc::new(a.compose(&b)?))),
            _ => {
                let a = self.to_dense(opts.dense_cap)?;
                let b = other.to_dense(opts.dense_cap)?;
                Ok(QcaHandle::Dense(Arc::new(a.compose(&b)?)))
            }
        }
    }

    pub fn inverse(&self, opts: &VerifyOptions) -> Result<QcaHandle> {
        match self {
            QcaHandle::Shift { layout, offset } => {
                Ok(QcaHandle::Shift { layout: layout.clone(), offset: -offset })
            }
            QcaHandle::Dense(d) => Ok(QcaHandle::Dense(Arc::new(d.inverse()))),
            other => {
                let c = other.to_clifford()?;
                let _ = opts;
                Ok(QcaHandle::Clifford(Arc::new(c.inverse()?)))
            }
        }
    }

    /// GNVW index via the Clifford computation when possible, dense support
    /// algebras otherwise.
    pub fn gnvw_index(&self, opts: &VerifyOptions) -> Result<Rational64> {
        match self {
            QcaHandle::Dense(d) => gnvw::gnvw_index_dense(d),
            other => {
                let _ = opts;
                gnvw::gnvw_index_clifford(other.to_clifford()?.as_ref())
            }
        }
    }
}

/// Equality of automorphisms: exact generator-image comparison when both
/// sides have Clifford forms, dense comparison up to global phase
/// otherwise (both sides are converted down to the weaker backend).
pub fn equal(a: &QcaHandle, b: &QcaHandle, opts: &VerifyOptions) -> Result<bool> {
    if a.layout() != b.layout() {
        return Err(Error::BackendMismatch("handles live on different layouts".into()));
    }
    match (a.to_clifford(), b.to_clifford()) {
        (Ok(x), Ok(y)) => Ok(x.equal(&y, opts.ignore_phases)),
        _ => {
            let x = a.to_dense(opts.dense_cap)?;
            let y = b.to_dense(opts.dense_cap)?;
            Ok(x.equal(&y, opts.tolerance))
        }
    }
}

/// The automorphism a circuit implements by conjugation: Clifford backend
/// when every gate admits one, dense under the cap otherwise.
pub fn circuit_to_qca(circuit: &Circuit, opts: &VerifyOptions) -> Result<QcaHandle> {
    if circuit_is_cliffordable(circuit) {
        Ok(QcaHandle::Clifford(Arc::new(CliffordQca::from_circuit(circuit)?)))
    } else {
        Ok(QcaHandle::Dense(Arc::new(DenseQca::from_circuit(circuit, opts.dense_cap)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lattice::{len_int, one_physical, Layout};

    fn ring(n: usize, p: u32) -> LayoutRef {
        Arc::new(Layout::unit_ring(n, one_physical(p)).unwrap())
    }

    #[test]
    fn handle_equalities() {
        let l = ring(8, 2);
        let opts = VerifyOptions::default();
        let id = QcaHandle::identity(l.clone());
        let s = QcaHandle::Shift { layout: l.clone(), offset: 1 };
        assert!(equal(&id, &id, &opts).unwrap());
        assert!(!equal(&s, &id, &opts).unwrap());
        let c = fixtures::random_brickwork_clifford(&l, 2, 4).unwrap();
        let h = circuit_to_qca(&c, &opts).unwrap();
        assert!(equal(&h, &h, &opts).unwrap());
    }

    #[test]
    fn empty_circuit_is_identity() {
        let l = ring(6, 2);
        let opts = VerifyOptions::default();
        let empty = Circuit::empty(l.clone());
        let h = circuit_to_qca(&empty, &opts).unwrap();
        assert!(equal(&h, &QcaHandle::identity(l), &opts).unwrap());
    }

    #[test]
    fn range_bounded_by_lightcone() {
        let l = ring(12, 2);
        let opts = VerifyOptions::default();
        for seed in [3u64, 5, 8] {
            let c = fixtures::random_brickwork_clifford(&l, 3, seed).unwrap();
            let h = circuit_to_qca(&c, &opts).unwrap();
            assert!(h.range(&opts).unwrap() <= c.lightcone_range().unwrap());
        }
    }

    #[test]
    fn gnvw_shift_is_p_and_circuit_is_one() {
        let opts = VerifyOptions::default();
        let l = ring(12, 2);
        let s = QcaHandle::Shift { layout: l.clone(), offset: 1 };
        assert_eq!(s.gnvw_index(&opts).unwrap(), Rational64::from_integer(2));
        let back = QcaHandle::Shift { layout: l.clone(), offset: -1 };
        assert_eq!(back.gnvw_index(&opts).unwrap(), Rational64::new(1, 2));
        let c = fixtures::random_brickwork_clifford(&l, 3, 9).unwrap();
        let h = circuit_to_qca(&c, &opts).unwrap();
        assert_eq!(h.gnvw_index(&opts).unwrap(), Rational64::from_integer(1));
        // qutrit shift
        let l3 = ring(12, 3);
        let s3 = QcaHandle::Shift { layout: l3, offset: 1 };
        assert_eq!(s3.gnvw_index(&opts).unwrap(), Rational64::from_integer(3));
    }

    #[test]
    fn gnvw_multiplicative_under_composition() {
        let opts = VerifyOptions::default();
        let l = ring(16, 2);
        let s = CliffordQca::shift(l.clone(), 1).unwrap();
        let s2 = s.compose(&s).unwrap();
        assert_eq!(
            gnvw::gnvw_index_clifford(&s2).unwrap(),
            Rational64::from_integer(4)
        );
        let c = crate::backend::clifford::random_clifford_qca(&l, len_int(2), 17, 1)
            .unwrap()
            .qca;
        let prod = c.compose(&s).unwrap();
        let lhs = gnvw::gnvw_index_clifford(&prod).unwrap();
        let rhs = gnvw::gnvw_index_clifford(&c).unwrap()
            * gnvw::gnvw_index_clifford(&s).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn gnvw_dense_oracle_matches_clifford_on_shift() {
        let l = ring(8, 2);
        let s = CliffordQca::shift(l.clone(), 1).unwrap();
        let dense = DenseQca::from_clifford(&s, DEFAULT_DENSE_CAP).unwrap();
        let via_dense = gnvw::gnvw_index_dense(&dense).unwrap();
        let via_cliff = gnvw::gnvw_index_clifford(&s).unwrap();
        assert_eq!(via_dense, via_cliff);
        assert_eq!(via_dense, Rational64::from_integer(2));
    }

    #[test]
    fn dense_and_clifford_agree_on_small_systems() {
        let opts = VerifyOptions::default();
        let l = ring(6, 2);
        for seed in [1u64, 2] {
            let c = fixtures::random_brickwork_clifford(&l, 2, seed).unwrap();
            let h = QcaHandle::Clifford(Arc::new(CliffordQca::from_circuit(&c).unwrap()));
            let d = QcaHandle::Dense(Arc::new(DenseQca::from_circuit(&c, 1 << 12).unwrap()));
            // equal falls back to the dense backend for the mixed pair
            assert!(equal(&h, &d, &opts).unwrap());
            assert_eq!(h.range(&opts).unwrap(), d.range(&opts).unwrap());
        }
    }
}
