//! Quantum-cellular-automaton circuit transformations with exact
//! verification: causal rescheduling, depth compression, borrowing-based
//! ancilla removal, swindle and commutator circuit synthesis, 1D coherent
//! families, and translation-invariant constructions — every pass checked
//! against an exact automorphism backend.

pub mod backend;
pub mod circuit;
pub mod error;
pub mod fixtures;
pub mod lattice;
pub mod swindle;
pub mod unravel;

pub use backend::clifford::{CliffordQca, PresentedQca};
pub use backend::dense::DenseQca;
pub use backend::pauli::PauliString;
pub use backend::{circuit_to_qca, equal, QcaHandle, VerifyOptions};
pub use circuit::{
    compress_depth, is_causal, make_time_function, regroup, staircase_decompose, Circuit,
    CliffordAction, Gate, GateAction, GateId, HandlePartition, TimeFunction,
};
pub use error::{Error, Result};
pub use swindle::{
    commutator_circuit, commutator_circuit_ancilla_free, compress_circuit,
    compress_path_depth, coherent_family, pleat_1d, product_family_witness,
    tensor_inverse_circuit, DoubledLayout, WitnessBundle,
};
pub use unravel::{
    build_borrowing_blocks_1d, build_borrowing_involution, build_borrowing_net,
    iterated_removal, remove_ancillas, validate_borrowing, BorrowingFunction, DensityParams,
    TimedCircuit,
};
pub use lattice::{
    check_density_assumption, epsilon_net, height_from_set, ControlSpace, HeightFunction,
    Layout, LayoutRef, Length, Position, Qudit, QuditKind, QuditRef, Site, SiteId,
};
