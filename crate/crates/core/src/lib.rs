//! Nonnegative tensor decomposition by information-geometric e-projection.
//!
//! An order-N nonnegative tensor is normalized into a probability mass
//! function over a sample space Ω of index vectors. Index vectors carry the
//! componentwise partial order, which turns Ω into a poset with least element
//! (1,…,1). A decomposition basis B ⊆ Ω⁺ selects which poset elements carry
//! free natural parameters θ; the reconstructable tensors form the e-flat
//! family
//!
//! ```text
//! log q_v = Σ_{u ∈ B, u ≤ v} θ_u − ψ(θ)
//! ```
//!
//! and the decomposition is the unique member of that family minimizing the
//! KL divergence from the input. Because the objective is convex in θ, both
//! plain gradient descent and the natural-gradient (Newton) method converge
//! to the global optimum; the gradient is η − η̂ where η are the dual
//! expectation parameters (up-set cumulative probabilities) and η̂ their
//! empirical counterparts.
//!
//! Module map:
//!
//! - [`tensor`] — dense/sparse tensor input, sample-space construction,
//!   normalization and de-normalization,
//! - [`poset`] — the partial order, ζ incidence bitmap, and the stock basis
//!   families,
//! - [`model`] — ψ, reconstruction, η, KL divergence, and the Fisher
//!   information matrix,
//! - [`optimizer`] — the gradient-descent and natural-gradient solvers,
//! - [`boltzmann`] — fully visible Boltzmann machines as a special case,
//! - [`eval`] — an independent iterative-scaling oracle, RMSE, and synthetic
//!   data.

pub mod boltzmann;
pub mod error;
pub mod eval;
pub mod model;
pub mod optimizer;
pub mod poset;
pub mod tensor;

mod reader;
mod sum;

pub use error::{Error, Result};
pub use model::{
    compute_eta, compute_eta_hat, compute_psi, fisher_matrix, kl_divergence, reconstruct_q,
    EtaVector, ModelState, ThetaVector,
};
pub use optimizer::{
    decompose, gradient, solve_gd, solve_ng, Algorithm, DecompositionResult, SolverConfig,
    TracePoint,
};
pub use poset::{Basis, BasisSpec, ZetaIncidence};
pub use tensor::{IndexVector, NormalizedTensor, RawTensor, SampleSpace, Shape, TensorFormat};
