//! Frequency-comb inversion: principal domains, design matrices and their
//! least-squares solution.

pub mod design;
pub mod solve;
pub mod symmetry;

pub use design::{
    assemble_classical, assemble_gaussian, assemble_spinboson, Branch, DesignMatrix, Observable, RowLabel, Unknown,
    UnknownKind, COMB_VALIDITY_REPETITIONS,
};
pub use solve::{
    forward, rank_analysis, sample_columns, solve, Estimate, RankAnalysis, ReconstructionResult, SolveOptions,
};
pub use symmetry::{
    canonical_point, enumerate_principal, group_order, symmetry_orbit, HarmonicPoint, PrincipalDomainSet,
    SymmetryGroup, Truncation,
};
