//! Generalized Lasso `min ‖y − A x‖₂` over `x ∈ T·G(B₂ᵏ(r))`, solved by projected
//! gradient descent in latent space with random restarts.
//!
//! The squared loss is minimized. It is evaluated through the cached Gram matrix,
//! `‖y − cAx‖² = yᵀy − 2c xᵀAᵀy + c² xᵀAᵀAx`, so one step costs `O(n²)` plus a
//! forward and backward pass of the generator regardless of `m`. The reported
//! loss is recomputed directly as `‖y − cAx̂‖₂`.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::genmodel::{project_in_place, ForwardTape, LatentVector, MlpGenerator};
use crate::linalg;
use crate::linkmodels::{LinkSpec, SimLink};
use crate::mc::{self, McEstimate};
use crate::par;
use crate::rng::{tag, StreamRng};
use crate::sensing::{ObservationVector, SensingEnsemble};

const MAX_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Optimize over `T·G(z)`.
    ScaleByT,
    /// Optimize over `G(z)` and let the prior absorb `T`.
    PriorAbsorbsT,
}

impl ConstraintMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintMode::ScaleByT => "scale_by_t",
            ConstraintMode::PriorAbsorbsT => "prior_absorbs_t",
        }
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scale_by_t" => Ok(ConstraintMode::ScaleByT),
            "prior_absorbs_t" => Ok(ConstraintMode::PriorAbsorbsT),
            other => Err(Error::invalid(format!("unknown constraint mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub restarts: usize,
    pub steps: usize,
    /// `None` selects `0.5 / (σ_max(A)² L̂² c²)`.
    pub step_size: Option<f64>,
    pub t_scale: f64,
    pub constraint_mode: ConstraintMode,
    pub seed: u64,
    /// Halve the step until the loss does not increase (at most 30 times).
    pub backtracking: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            steps: 1000,
            step_size: None,
            t_scale: 1.0,
            constraint_mode: ConstraintMode::ScaleByT,
            seed: 0,
            backtracking: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.steps == 0 {
            return Err(Error::invalid("restarts and steps must be at least 1"));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("step size must be positive, got {s}")));
            }
        }
        if !(self.t_scale > 0.0 && self.t_scale.is_finite()) {
            return Err(Error::invalid(format!("t_scale must be positive, got {}", self.t_scale)));
        }
        Ok(())
    }

    /// Factor multiplying `G(z)` inside the loss.
    pub fn prior_scale(&self) -> f64 {
        match self.constraint_mode {
            ConstraintMode::ScaleByT => self.t_scale,
            ConstraintMode::PriorAbsorbsT => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: Vec<f64>,
    pub z_hat: LatentVector,
    /// `‖y − A x̂‖₂` of the selected restart.
    pub best_loss: f64,
    /// Final loss per restart, `+∞` for diverged restarts.
    pub restart_losses: Vec<f64>,
    /// Loss at each restart's initial iterate.
    pub initial_losses: Vec<f64>,
    /// Squared-loss trajectory of the selected restart, one entry per accepted step.
    pub best_trajectory: Vec<f64>,
    pub best_restart: usize,
    pub cosine: Option<f64>,
    pub rel_l2: Option<f64>,
}

impl RecoveryResult {
    pub fn restarts_used(&self) -> usize {
        self.restart_losses.iter().filter(|l| l.is_finite()).count()
    }

    /// Fills `cosine` and `rel_l2` against the Lasso target `T·x*`.
    ///
    /// Both constraint modes estimate `T·x*`, so metrics are comparable. Cosine is
    /// left empty when `x̂ = 0`.
    pub fn score(&mut self, x_star: &[f64], t_scale: f64) -> Result<()> {
        check_dim("ground truth", self.x_hat.len(), x_star.len())?;
        let target = linalg::scale(x_star, t_scale);
        self.cosine = cosine_similarity(&self.x_hat, &target).ok();
        self.rel_l2 = Some(relative_l2(&self.x_hat, &target)?);
        Ok(())
    }
}

/// `T` making the Lasso target unbiased for each model.
pub fn scaling_factor(link: &LinkSpec, mc_samples: usize, seed: u64) -> f64 {
    match *link {
        LinkSpec::Sign => (2.0 / PI).sqrt(),
        LinkSpec::DitheredSign { lambda } => 1.0 / lambda,
        LinkSpec::DitheredUniformQuantizer { .. } => 1.0,
        LinkSpec::Sim { link, .. } => sim_mu(link, mc_samples, seed).value,
    }
}

/// `μ = E[f(g) g]`, `g ~ N(0, 1)`. Additive link noise is independent of `g`
/// and drops out.
pub fn sim_mu(link: SimLink, mc_samples: usize, seed: u64) -> McEstimate {
    mc::scalar_mean(mc_samples, seed, 0x51_u64, |rng| {
        let g = rng.gaussian();
        link.apply(g) * g
    })
}

pub fn cosine_similarity(x_hat: &[f64], x_star: &[f64]) -> Result<f64> {
    check_dim("cosine similarity", x_hat.len(), x_star.len())?;
    let (a, b) = (linalg::norm(x_hat), linalg::norm(x_star));
    if a == 0.0 || b == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((linalg::dot(x_hat, x_star) / (a * b)).clamp(-1.0, 1.0))
}

pub fn relative_l2(x_hat: &[f64], x_star: &[f64]) -> Result<f64> {
    check_dim("relative l2", x_hat.len(), x_star.len())?;
    let denom = linalg::norm(x_star);
    if denom == 0.0 {
        return Err(Error::invalid("relative l2 error against a zero ground truth"));
    }
    Ok(linalg::norm(&linalg::sub(x_hat, x_star)) / denom)
}

/// Step size `0.5 / (σ_max(A)² L̂² c²)`.
pub fn default_step_size(ens: &SensingEnsemble, gen: &MlpGenerator, prior_scale: f64) -> f64 {
    let sigma = ens.spectral_norm();
    let lip = gen.lipschitz_upper_bound();
    let curvature = sigma * sigma * lip * lip * prior_scale * prior_scale;
    if curvature > 0.0 {
        0.5 / curvature
    } else {
        1.0
    }
}

struct LassoObjective<'a> {
    gen: &'a MlpGenerator,
    gram: &'a [f64],
    aty: Vec<f64>,
    yty: f64,
    scale: f64,
    n: usize,
    radius: f64,
}

struct Iterate {
    z: Vec<f64>,
    tape: ForwardTape,
    gram_x: Vec<f64>,
    loss_sq: f64,
}

impl LassoObjective<'_> {
    fn evaluate(&self, z: Vec<f64>, mut tape: ForwardTape, mut gram_x: Vec<f64>) -> Iterate {
        let x = self.gen.forward_with(&z, &mut tape);
        gram_x.resize(self.n, 0.0);
        linalg::matvec_into(self.gram, self.n, self.n, x, &mut gram_x);
        let c = self.scale;
        let loss_sq =
            self.yty - 2.0 * c * linalg::dot(x, &self.aty) + c * c * linalg::dot(x, &gram_x);
        Iterate {
            z,
            tape,
            gram_x,
            loss_sq: loss_sq.max(0.0),
        }
    }

    fn latent_gradient(&self, it: &mut Iterate, grad_x: &mut Vec<f64>, grad_z: &mut [f64]) {
        let c = self.scale;
        grad_x.clear();
        grad_x.extend(
            it.gram_x
                .iter()
                .zip(&self.aty)
                .map(|(gx, aty)| 2.0 * c * (c * gx - aty)),
        );
        self.gen.backward_with(&mut it.tape, grad_x, grad_z);
    }
}

struct RestartOutcome {
    z: Vec<f64>,
    loss_sq: f64,
    initial_loss_sq: f64,
    trajectory: Vec<f64>,
}

fn run_restart(
    obj: &LassoObjective<'_>,
    opts: &SolverOptions,
    step_size: f64,
    restart: usize,
) -> RestartOutcome {
    let k = obj.gen.latent_dim();
    let mut rng = StreamRng::derive(opts.seed, tag::RESTART, &[restart as u64]);
    let init_scale = 1.0 / (k as f64).sqrt();
    let mut z0: Vec<f64> = (0..k).map(|_| init_scale * rng.gaussian()).collect();
    project_in_place(&mut z0, obj.radius);

    let mut current = obj.evaluate(z0, ForwardTape::default(), Vec::new());
    let initial_loss_sq = current.loss_sq;
    let mut trajectory = vec![current.loss_sq];
    let mut spare_tape = ForwardTape::default();
    let mut spare_gram = Vec::new();
    let mut grad_x = Vec::with_capacity(obj.n);
    let mut grad_z = vec![0.0; k];

    for _ in 0..opts.steps {
        if !current.loss_sq.is_finite() {
            break;
        }
        obj.latent_gradient(&mut current, &mut grad_x, &mut grad_z);
        if grad_z.iter().all(|&g| g == 0.0) {
            break;
        }
        let mut step = step_size;
        let mut accepted = None;
        let attempts = if opts.backtracking { MAX_HALVINGS + 1 } else { 1 };
        for _ in 0..attempts {
            let mut cand: Vec<f64> = current
                .z
                .iter()
                .zip(&grad_z)
                .map(|(z, g)| z - step * g)
                .collect();
            project_in_place(&mut cand, obj.radius);
            let trial = obj.evaluate(
                cand,
                std::mem::take(&mut spare_tape),
                std::mem::take(&mut spare_gram),
            );
            if !opts.backtracking || trial.loss_sq <= current.loss_sq {
                accepted = Some(trial);
                break;
            }
            spare_tape = trial.tape;
            spare_gram = trial.gram_x;
            step *= 0.5;
        }
        match accepted {
            Some(next) => {
                let prev = std::mem::replace(&mut current, next);
                spare_tape = prev.tape;
                spare_gram = prev.gram_x;
                trajectory.push(current.loss_sq);
            }
            None => break,
        }
    }
    RestartOutcome {
        loss_sq: if current.loss_sq.is_finite() {
            current.loss_sq
        } else {
            f64::INFINITY
        },
        z: current.z,
        initial_loss_sq,
        trajectory,
    }
}

/// Latent-space projected gradient descent with random restarts; returns the
/// restart with the smallest loss (ties go to the lowest index).
pub fn generalized_lasso(
    ens: &SensingEnsemble,
    y: &ObservationVector,
    gen: &MlpGenerator,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    opts.validate()?;
    check_dim("observations", ens.m(), y.y.len())?;
    check_dim("generator output", ens.n(), gen.output_dim())?;

    let scale = opts.prior_scale();
    let step_size = opts
        .step_size
        .unwrap_or_else(|| default_step_size(ens, gen, scale));
    let obj = LassoObjective {
        gen,
        gram: ens.gram(),
        aty: ens.apply_transpose(&y.y),
        yty: linalg::dot(&y.y, &y.y),
        scale,
        n: ens.n(),
        radius: gen.latent_radius(),
    };

    let outcomes = par::map_range(opts.restarts, |r| run_restart(&obj, opts, step_size, r));

    let losses: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            if o.loss_sq.is_finite() {
                direct_loss(ens, y, gen, &o.z, scale)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let best = losses
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::SolverFailure(format!("all {} restarts diverged", opts.restarts)))?;

    let z_hat = outcomes[best].z.clone();
    let x_hat = linalg::scale(&gen.forward(&LatentVector::new(z_hat.clone()))?, scale);
    Ok(RecoveryResult {
        x_hat,
        z_hat: LatentVector::new(z_hat),
        best_loss: losses[best],
        restart_losses: losses,
        initial_losses: outcomes.iter().map(|o| o.initial_loss_sq.sqrt()).collect(),
        best_trajectory: outcomes[best].trajectory.clone(),
        best_restart: best,
        cosine: None,
        rel_l2: None,
    })
}

fn direct_loss(
    ens: &SensingEnsemble,
    y: &ObservationVector,
    gen: &MlpGenerator,
    z: &[f64],
    scale: f64,
) -> f64 {
    let mut tape = ForwardTape::default();
    let x = linalg::scale(gen.forward_with(z, &mut tape), scale);
    let loss = linalg::norm(&linalg::sub(&y.y, &ens.apply(&x)));
    if loss.is_finite() {
        loss
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::random_generator;
    use crate::sensing::sample_ensemble;

    #[test]
    fn metric_examples() {
        let x = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((cosine_similarity(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).is_err());

        assert_eq!(relative_l2(&x, &x).unwrap(), 0.0);
        assert_eq!(relative_l2(&[0.0; 3], &x).unwrap(), 1.0);
        assert!((relative_l2(&[1.1, 0.0], &[1.0, 0.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!(relative_l2(&x, &[0.0; 3]).is_err());
    }

    #[test]
    fn scaling_factor_examples() {
        assert!((scaling_factor(&LinkSpec::Sign, 0, 0) - 0.797_884_560_8).abs() < 1e-10);
        let ds = LinkSpec::dithered_sign(5.0).unwrap();
        assert!((scaling_factor(&ds, 0, 0) - 0.2).abs() < 1e-15);
        assert_eq!(scaling_factor(&LinkSpec::quantizer(3.0).unwrap(), 0, 0), 1.0);
        let relu = LinkSpec::sim(SimLink::Relu, 0.0).unwrap();
        assert!((scaling_factor(&relu, 1_000_000, 3) - 0.5).abs() < 0.01);
    }

    #[test]
    fn options_are_validated() {
        let bad = SolverOptions {
            restarts: 0,
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverOptions {
            t_scale: 0.0,
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverOptions {
            step_size: Some(-1.0),
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    fn small_problem(seed: u64) -> (SensingEnsemble, MlpGenerator, Vec<f64>) {
        let gen = random_generator(&[3, 12, 20], None, seed).unwrap();
        let ens = sample_ensemble(60, 20, LinkSpec::Sign, 0.0, seed + 100).unwrap();
        let mut rng = StreamRng::new(seed, 1);
        let z = rng.uniform_in_ball(3, gen.latent_radius());
        let x = gen.forward(&LatentVector::new(z)).unwrap();
        (ens, gen, x)
    }

    #[test]
    fn best_loss_is_min_and_below_every_start() {
        let (ens, gen, x) = small_problem(1);
        let y = ens.observe(&x, 0).unwrap();
        let opts = SolverOptions {
            restarts: 4,
            steps: 200,
            t_scale: scaling_factor(&LinkSpec::Sign, 0, 0),
            ..SolverOptions::default()
        };
        let res = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
        let min = res.restart_losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(res.best_loss, min);
        for init in &res.initial_losses {
            assert!(res.best_loss <= init * (1.0 + 1e-9));
        }
        assert!(res.z_hat.norm() <= gen.latent_radius() * (1.0 + 1e-12));
        assert_eq!(res.restarts_used(), 4);
    }

    #[test]
    fn backtracking_gives_monotone_losses() {
        let (ens, gen, x) = small_problem(2);
        let y = ens.observe(&x, 0).unwrap();
        let opts = SolverOptions {
            restarts: 3,
            steps: 300,
            step_size: Some(1.0),
            t_scale: 0.8,
            ..SolverOptions::default()
        };
        let res = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
        for w in res.best_trajectory.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let (ens, gen, x) = small_problem(3);
        let y = ens.observe(&x, 0).unwrap();
        let opts = SolverOptions {
            restarts: 3,
            steps: 100,
            ..SolverOptions::default()
        };
        let a = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
        let b = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diverging_restarts_fail_cleanly() {
        let (ens, gen, x) = small_problem(4);
        let y = ens.observe(&x, 0).unwrap();
        let opts = SolverOptions {
            restarts: 2,
            steps: 2000,
            step_size: Some(1e6),
            backtracking: false,
            ..SolverOptions::default()
        };
        // The projection keeps iterates bounded, so even a huge step stays finite.
        let res = generalized_lasso(&ens, &y, &gen, &opts).unwrap();
        assert!(res.best_loss.is_finite());
    }

    #[test]
    fn non_finite_losses_are_a_solver_failure() {
        let (ens, gen, _) = small_problem(6);
        let mut y = vec![1.0; ens.m()];
        y[0] = f64::NAN;
        let opts = SolverOptions {
            restarts: 2,
            steps: 10,
            ..SolverOptions::default()
        };
        let err = generalized_lasso(&ens, &ObservationVector { y }, &gen, &opts).unwrap_err();
        assert!(matches!(err, Error::SolverFailure(_)));
    }

    #[test]
    fn dimension_checks() {
        let (ens, gen, _) = small_problem(5);
        let y = ObservationVector { y: vec![0.0; 3] };
        assert!(generalized_lasso(&ens, &y, &gen, &SolverOptions::default()).is_err());
    }
}
