//! Desk-scale experiment presets: `k = 10`, `n = 200`, a two-hidden-layer ReLU
//! generator `10 → 50 → 100 → 200`, `m ∈ {100, …, 1600}`, 10 signals, 5 trials,
//! 10 restarts of 1000 steps.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::config::{BetaRule, ExperimentConfig, LambdaRule, Metric};
use crate::linkmodels::{LinkSpec, SimLink};

pub const PRESETS: &[&str] = &["onebit", "onebit-dither", "sim-relu", "uqd"];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig {
        experiment_id: name.to_string(),
        master_seed: 2023,
        output_dir: PathBuf::from(format!("out/{name}")),
        ..ExperimentConfig::default()
    };
    let cfg = match name {
        "onebit" => ExperimentConfig {
            link: LinkSpec::Sign,
            metric: Metric::Cosine,
            beta_rule: BetaRule::KOverM,
            ..base
        },
        "onebit-dither" => ExperimentConfig {
            link: LinkSpec::DitheredSign { lambda: 1.0 },
            lambda_rule: LambdaRule::LogM { c: 3.0 },
            metric: Metric::RelL2,
            beta_rule: BetaRule::LambdaKOverM,
            ..base
        },
        "sim-relu" => ExperimentConfig {
            link: LinkSpec::Sim {
                link: SimLink::Relu,
                noise_sigma: 0.0,
            },
            metric: Metric::RelL2,
            beta_rule: BetaRule::None,
            ..base
        },
        "uqd" => ExperimentConfig {
            link: LinkSpec::DitheredUniformQuantizer { delta: 3.0 },
            metric: Metric::RelL2,
            beta_rule: BetaRule::KDeltaOverM,
            ..base
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
