//! Multivariate regression with random coefficients that are correlated
//! across responses, fitted by EM with a sparse error precision matrix.
//!
//! The model is `Y = Z Γ + E` with rows of `E` i.i.d. `N_q(0, Ω⁻¹)` and rows of
//! `Γ` i.i.d. `N_q(0, σ² C_ρ)`, `C_ρ` the equicorrelation matrix. [`em::fit`]
//! estimates `Θ = {Ω, σ², ρ}` and returns the E-BLUP of `Γ`.

mod error;

pub mod baselines;
pub mod em;
pub mod evaluation;
pub mod glasso;
pub mod model;
pub mod numerics;
pub mod simgen;
pub mod study;

pub use error::{Error, Result};
pub use em::{fit, fit_cv, select_lambda, FitConfig, FitResult, StoppingRule};
pub use glasso::{glasso_fit, GlassoOptions, GlassoProblem, GlassoSolution};
pub use model::{Dataset, EquicorrStructure, ParameterSet, TransformedProblem};
pub use numerics::{Matrix, SimRng, SpdMatrix};
pub use simgen::{simulate, ErrorStructure, SimConfig, SimInstance};
