//! Decentralized solvers for network-structured linear systems
//! `(Σᵢ Sᵢ) λ = Σᵢ sᵢ` with positive semidefinite, sparsely supported `Sᵢ`.
//!
//! The crate contains the dense kernels ([`linalg`]), the support and
//! multiplicity bookkeeping ([`sparsity`]), a synchronous message-passing
//! simulator ([`simnet`]), centralized CG ([`cg`]), decentralized CG
//! ([`dcg`]), decentralized ADMM ([`dadmm`]), problem generators including a
//! sensor-fusion reduction ([`problems`]) and file formats ([`format`]).
//!
//! ```
//! use dcg_core::problems::{make_topology, sensor_problem, TopologyKind};
//! use dcg_core::dcg::{dcg_solve, DcgOptions};
//!
//! let topology = make_topology(TopologyKind::StrongMesh, 10, 0, 0).unwrap();
//! let (_, problem) = sensor_problem(topology, 2, 2, 1e-3, 1).unwrap();
//! let out = dcg_solve(&problem, &vec![0.0; problem.m()], DcgOptions::default(), None).unwrap();
//! assert!(problem.residual_norm(&out.lambda_bar) < 1e-8);
//! ```

// `!(x > tol)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cg;
pub mod dadmm;
pub mod dcg;
pub mod format;
pub mod linalg;
pub mod problems;
pub mod simnet;
pub mod sparsity;
pub mod trace;

pub use cg::{cg_solve, CgError, CgOptions, CgOutcome};
pub use dadmm::{dadmm_solve, rho_sweep, AdmmError, AdmmOptions, AdmmOutcome, SweepPoint};
pub use dcg::{dcg_solve, DcgError, DcgOptions, DcgOutcome};
pub use format::{FormatError, ProblemFile};
pub use linalg::{DenseMatrix, LinalgError, SpectralStats};
pub use problems::{NetworkProblem, ProblemError, SensorNetwork, SparseBlock, TopologyKind};
pub use simnet::{CommStats, NetError, Network, Topology};
pub use sparsity::{Multiplicity, OverlapTable, SparsityError, SupportSet};
pub use trace::{ConvergenceTrace, ErrorReference, Method, TraceRecord};

/// Union of the module errors, for callers that do not need to tell them apart.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sparsity(#[from] SparsityError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Cg(#[from] CgError),
    #[error(transparent)]
    Dcg(#[from] DcgError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Format(#[from] FormatError),
}
