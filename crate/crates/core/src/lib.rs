//! Nonlinear generative compressed sensing.
//!
//! Signals live in the range of a Lipschitz ReLU generator `G: B₂ᵏ(r) → ℝⁿ` and
//! are observed through `y = f(Ax) (+ η)` with a possibly discontinuous, possibly
//! dithered link `f`. Recovery solves the generalized Lasso `min ‖y − Ax‖₂` over
//! `x ∈ T·G(B₂ᵏ(r))` by latent-space gradient descent. The [`theory`] module holds
//! Monte-Carlo and closed-form oracles for the quantities that govern recovery,
//! and [`harness`] drives uniform-recovery sweeps from a config file.
//!
//! Modules:
//! * [`linkmodels`]: links `f`, jump structure, Lipschitz approximation `f_β`.
//! * [`genmodel`]: MLP generator, backpropagation, spectral Lipschitz bound.
//! * [`sensing`]: frozen ensembles `(A, τ, f)` and observations.
//! * [`recovery`]: the generalized Lasso solver and error metrics.
//! * [`theory`]: target mismatch, bias probability, entropy bounds, S-REC,
//!   Gaussian norm concentration, product-process suprema.
//! * [`harness`]: configs, presets, sweeps, lemma checks, reports.

pub mod error;
pub mod genmodel;
pub mod harness;
pub mod linalg;
pub mod linkmodels;
pub mod mc;
pub mod par;
pub mod recovery;
pub mod rng;
pub mod sensing;
pub mod theory;

pub use error::{Error, Result};
pub use genmodel::{project_latent, random_generator, DenseLayer, LatentVector, MlpGenerator};
pub use linkmodels::{
    approx_error_eval, discontinuities_near, link_eval, link_params, lipschitz_approx_eval,
    xi_eval, DitherRealization, LinkKind, LinkSpec, LipschitzParams, SimLink,
};
pub use mc::McEstimate;
pub use recovery::{
    cosine_similarity, generalized_lasso, relative_l2, scaling_factor, ConstraintMode,
    RecoveryResult, SolverOptions,
};
pub use sensing::{sample_ensemble, ObservationVector, SensingEnsemble};
