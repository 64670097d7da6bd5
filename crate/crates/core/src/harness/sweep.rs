//! Uniform-recovery sweeps: one frozen ensemble per `(m, trial)` shared by all
//! signals of that trial.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genmodel::{LatentVector, MlpGenerator};
use crate::harness::config::{ExperimentConfig, Metric};
use crate::harness::report::{self, median, SlopeFit};
use crate::linalg;
use crate::linkmodels::{LinkSpec, LinkKind};
use crate::par;
use crate::recovery::{cosine_similarity, generalized_lasso, relative_l2, scaling_factor};
use crate::rng::{derive_seed, tag, StreamRng};
use crate::sensing::{sample_ensemble, SensingEnsemble};

const SIM_MU_SAMPLES: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignalRecord {
    pub m: usize,
    pub trial: usize,
    pub signal_id: usize,
    pub cosine: f64,
    pub rel_l2: f64,
    pub best_loss: f64,
    pub restarts_used: usize,
    pub failed: bool,
}

impl SignalRecord {
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Cosine => self.cosine,
            Metric::RelL2 => self.rel_l2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub m: usize,
    pub trial: usize,
    pub worst_case: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MSummary {
    pub m: usize,
    pub lambda: Option<f64>,
    pub t_scale: f64,
    pub beta: Option<f64>,
    pub worst_case_mean: f64,
    pub worst_case_std: f64,
    pub worst_case_median: f64,
    /// Median over trials of the worst-case error (`1 − cos` or `rel_l2`).
    pub median_worst_error: f64,
    pub mean_metric: f64,
    pub slope_contribution: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeSummary {
    #[serde(flatten)]
    pub fit: SlopeFit,
    pub band_95: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub experiment_id: String,
    pub link: &'static str,
    pub metric: Metric,
    pub error: &'static str,
    pub master_seed: u64,
    pub max_signal_norm: f64,
    pub per_m: Vec<MSummary>,
    pub trials: Vec<TrialSummary>,
    pub fit: Option<SlopeSummary>,
    #[serde(skip)]
    pub records: Vec<SignalRecord>,
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl SweepReport {
    pub fn records_at(&self, m: usize) -> impl Iterator<Item = &SignalRecord> {
        self.records.iter().filter(move |r| r.m == m)
    }
}

/// Ground-truth signals `G(zⱼ)`, `zⱼ` uniform in the latent ball, for one trial.
pub fn trial_signals(gen: &MlpGenerator, n_signals: usize, master_seed: u64, trial: usize) -> Result<Vec<Vec<f64>>> {
    (0..n_signals)
        .map(|j| {
            let mut rng = StreamRng::derive(master_seed, tag::SIGNALS, &[trial as u64, j as u64]);
            let z = rng.uniform_in_ball(gen.latent_dim(), gen.latent_radius());
            gen.forward(&LatentVector::new(z))
        })
        .collect()
}

pub fn ensemble_seed(master_seed: u64, m: usize, trial: usize) -> u64 {
    derive_seed(master_seed, tag::ENSEMBLE_SEED, &[m as u64, trial as u64])
}

/// Everything a sweep derives from the config before solving.
pub struct SweepPlan {
    pub gen: MlpGenerator,
    pub signals: Vec<Vec<Vec<f64>>>,
    pub max_norm: f64,
    pub links: Vec<LinkSpec>,
    pub t_scales: Vec<f64>,
}

impl SweepPlan {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = cfg.generator.build()?;
        let signals = (0..cfg.n_trials)
            .map(|t| trial_signals(&gen, cfg.n_signals, cfg.master_seed, t))
            .collect::<Result<Vec<_>>>()?;
        let max_norm = signals
            .iter()
            .flatten()
            .map(|x| linalg::norm(x))
            .fold(0.0, f64::max);
        if max_norm == 0.0 && cfg.link.kind() == LinkKind::DitheredSign {
            return Err(Error::invalid("all ground-truth signals are zero"));
        }
        let links = cfg
            .m_grid
            .iter()
            .map(|&m| cfg.link_at(m, max_norm))
            .collect::<Result<Vec<_>>>()?;
        let t_scales = links
            .iter()
            .map(|l| {
                cfg.t_scale.unwrap_or_else(|| {
                    scaling_factor(l, SIM_MU_SAMPLES, derive_seed(cfg.master_seed, tag::MONTE_CARLO, &[0x51]))
                })
            })
            .collect();
        Ok(Self {
            gen,
            signals,
            max_norm,
            links,
            t_scales,
        })
    }

    pub fn ensemble(&self, cfg: &ExperimentConfig, m_index: usize, trial: usize) -> Result<SensingEnsemble> {
        let m = cfg.m_grid[m_index];
        sample_ensemble(
            m,
            self.gen.output_dim(),
            self.links[m_index],
            cfg.noise_sigma,
            ensemble_seed(cfg.master_seed, m, trial),
        )
    }
}

fn recover_one(
    cfg: &ExperimentConfig,
    plan: &SweepPlan,
    ens: &SensingEnsemble,
    m_index: usize,
    trial: usize,
    j: usize,
) -> SignalRecord {
    let m = cfg.m_grid[m_index];
    let x_star = &plan.signals[trial][j];
    let t = plan.t_scales[m_index];
    let mut opts = cfg.solver.clone();
    opts.t_scale = t;
    opts.seed = derive_seed(cfg.master_seed, tag::SOLVER_SEED, &[m as u64, trial as u64, j as u64]);
    let failed = SignalRecord {
        m,
        trial,
        signal_id: j,
        cosine: Metric::Cosine.failure_value(),
        rel_l2: Metric::RelL2.failure_value(),
        best_loss: f64::INFINITY,
        restarts_used: 0,
        failed: true,
    };
    let outcome = ens.observe(x_star, j as u64).and_then(|y| generalized_lasso(ens, &y, &plan.gen, &opts));
    let Ok(res) = outcome else {
        return failed;
    };
    let target = linalg::scale(x_star, t);
    let cosine = cosine_similarity(&res.x_hat, &target).unwrap_or(Metric::Cosine.failure_value());
    let rel_l2 = relative_l2(&res.x_hat, &target).unwrap_or(Metric::RelL2.failure_value());
    SignalRecord {
        m,
        trial,
        signal_id: j,
        cosine,
        rel_l2,
        best_loss: res.best_loss,
        restarts_used: res.restarts_used(),
        failed: false,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mu = mean(v);
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn run_uniform_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let plan = SweepPlan::new(cfg)?;
    let cells: Vec<(usize, usize)> = (0..cfg.m_grid.len())
        .flat_map(|mi| (0..cfg.n_trials).map(move |t| (mi, t)))
        .collect();
    let ensembles = par::map_slice(&cells, |&(mi, t)| {
        plan.ensemble(cfg, mi, t).inspect(|e| {
            e.gram();
            e.spectral_norm();
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.n_signals).map(move |j| (c, j)))
        .collect();
    let records = par::map_slice(&tasks, |&(c, j)| {
        let (mi, t) = cells[c];
        recover_one(cfg, &plan, &ensembles[c], mi, t, j)
    });

    let metric = cfg.metric;
    let mut trials = Vec::with_capacity(cells.len());
    for (c, &(mi, t)) in cells.iter().enumerate() {
        let values: Vec<f64> = records[c * cfg.n_signals..(c + 1) * cfg.n_signals]
            .iter()
            .map(|r| r.value(metric))
            .collect();
        let worst_case = values.iter().copied().reduce(|a, b| metric.worse(a, b)).unwrap_or(f64::NAN);
        debug_assert!(values.iter().all(|&v| metric.worse(v, worst_case) == worst_case));
        trials.push(TrialSummary {
            m: cfg.m_grid[mi],
            trial: t,
            worst_case,
            mean: mean(&values),
        });
    }

    let mut per_m: Vec<MSummary> = cfg
        .m_grid
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let worst: Vec<f64> = trials.iter().filter(|s| s.m == m).map(|s| s.worst_case).collect();
            let means: Vec<f64> = trials.iter().filter(|s| s.m == m).map(|s| s.mean).collect();
            let link = plan.links[mi];
            MSummary {
                m,
                lambda: match link {
                    LinkSpec::DitheredSign { lambda } => Some(lambda),
                    _ => None,
                },
                t_scale: plan.t_scales[mi],
                beta: cfg.beta_rule.beta(plan.gen.latent_dim(), m, &link),
                worst_case_mean: mean(&worst),
                worst_case_std: sample_std(&worst),
                worst_case_median: median(worst.clone()),
                median_worst_error: median(worst.iter().map(|&w| metric.error(w)).collect()),
                mean_metric: mean(&means),
                slope_contribution: None,
                failures: records.iter().filter(|r| r.m == m && r.failed).count(),
            }
        })
        .collect();

    let pairs: Vec<(f64, f64)> = per_m.iter().map(|p| (p.m as f64, p.median_worst_error)).collect();
    let fit = report::fit_slope(&pairs).ok().map(|fit| {
        for (p, c) in per_m.iter_mut().zip(report::slope_contributions(&pairs)) {
            p.slope_contribution = Some(c);
        }
        SlopeSummary {
            fit,
            band_95: fit.slope_band(0.95),
        }
    });

    Ok(SweepReport {
        experiment_id: cfg.experiment_id.clone(),
        link: cfg.link.kind().as_str(),
        metric,
        error: match metric {
            Metric::Cosine => "1 - cosine",
            Metric::RelL2 => "rel_l2",
        },
        master_seed: cfg.master_seed,
        max_signal_norm: plan.max_norm,
        per_m,
        trials,
        fit,
        records,
    })
}

/// Runs a sweep and writes its reports into `cfg.output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let report = run_uniform_sweep(cfg)?;
    report::write_sweep_outputs(&report, &cfg.output_dir)?;
    Ok(report)
}

/// The ensemble a sweep would use at `(m_grid[0], trial 0)`.
pub fn first_ensemble(cfg: &ExperimentConfig) -> Result<SensingEnsemble> {
    SweepPlan::new(cfg)?.ensemble(cfg, 0, 0)
}
