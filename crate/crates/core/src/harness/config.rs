//! Flat `key = value` experiment configs with dotted section keys.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Unknown keys are rejected. See `docs/config.md` for the schema.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::genmodel::{random_generator, MlpGenerator};
use crate::linkmodels::{LinkKind, LinkSpec, SimLink};
use crate::recovery::{ConstraintMode, SolverOptions};

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSource {
    Random {
        dims: Vec<usize>,
        seed: u64,
        radius: Option<f64>,
    },
    Weights {
        path: PathBuf,
        radius: Option<f64>,
    },
}

impl GeneratorSource {
    pub fn build(&self) -> Result<MlpGenerator> {
        match self {
            GeneratorSource::Random { dims, seed, radius } => random_generator(dims, *radius, *seed),
            GeneratorSource::Weights { path, radius } => {
                let gen = MlpGenerator::load_weights(path)?;
                match radius {
                    Some(r) => gen.with_latent_radius(*r),
                    None => Ok(gen),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Cosine,
    RelL2,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::RelL2 => "rel_l2",
        }
    }

    /// Worst of two metric values.
    pub fn worse(self, a: f64, b: f64) -> f64 {
        match self {
            Metric::Cosine => a.min(b),
            Metric::RelL2 => a.max(b),
        }
    }

    /// Error on a scale where smaller is better: `1 − cos` or `rel_l2`.
    pub fn error(self, value: f64) -> f64 {
        match self {
            Metric::Cosine => 1.0 - value,
            Metric::RelL2 => value,
        }
    }

    /// Value recorded for a signal whose recovery failed.
    pub fn failure_value(self) -> f64 {
        match self {
            Metric::Cosine => 0.0,
            Metric::RelL2 => f64::INFINITY,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "rel_l2" => Ok(Metric::RelL2),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// How the dither range `λ` of the dithered 1-bit model is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    Fixed,
    /// `λ = C R √(ln m)` with `R` the largest ground-truth norm.
    LogM { c: f64 },
}

/// Reported bias-band width `β` per `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaRule {
    None,
    /// `β = k/m`.
    KOverM,
    /// `β = λk/m`.
    LambdaKOverM,
    /// `β = kδ/m`.
    KDeltaOverM,
}

impl BetaRule {
    pub fn as_str(self) -> &'static str {
        match self {
            BetaRule::None => "none",
            BetaRule::KOverM => "k_over_m",
            BetaRule::LambdaKOverM => "lambda_k_over_m",
            BetaRule::KDeltaOverM => "k_delta_over_m",
        }
    }

    pub fn beta(self, k: usize, m: usize, link: &LinkSpec) -> Option<f64> {
        let ratio = k as f64 / m as f64;
        match (self, link) {
            (BetaRule::None, _) => None,
            (BetaRule::KOverM, _) => Some(ratio),
            (BetaRule::LambdaKOverM, LinkSpec::DitheredSign { lambda }) => Some(lambda * ratio),
            (BetaRule::KDeltaOverM, LinkSpec::DitheredUniformQuantizer { delta }) => Some(delta * ratio),
            _ => None,
        }
    }
}

impl FromStr for BetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BetaRule::None),
            "k_over_m" => Ok(BetaRule::KOverM),
            "lambda_k_over_m" => Ok(BetaRule::LambdaKOverM),
            "k_delta_over_m" => Ok(BetaRule::KDeltaOverM),
            other => Err(Error::Config(format!("unknown beta rule `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub master_seed: u64,
    pub generator: GeneratorSource,
    /// For `LambdaRule::LogM` the `λ` stored here is a placeholder.
    pub link: LinkSpec,
    pub lambda_rule: LambdaRule,
    /// `None` picks `T` from the link.
    pub t_scale: Option<f64>,
    pub m_grid: Vec<usize>,
    pub n_signals: usize,
    pub n_trials: usize,
    pub noise_sigma: f64,
    pub metric: Metric,
    /// `t_scale` and `seed` are filled per run.
    pub solver: SolverOptions,
    pub beta_rule: BetaRule,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment_id: "experiment".into(),
            master_seed: 0,
            generator: GeneratorSource::Random {
                dims: vec![10, 50, 100, 200],
                seed: 1,
                radius: None,
            },
            link: LinkSpec::Sign,
            lambda_rule: LambdaRule::Fixed,
            t_scale: None,
            m_grid: vec![100, 200, 400, 800, 1600],
            n_signals: 10,
            n_trials: 5,
            noise_sigma: 0.0,
            metric: Metric::Cosine,
            solver: SolverOptions::default(),
            beta_rule: BetaRule::None,
            output_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "experiment_id",
    "master_seed",
    "generator.kind",
    "generator.dims",
    "generator.seed",
    "generator.path",
    "generator.radius",
    "link.kind",
    "link.lambda",
    "link.lambda_rule",
    "link.lambda_c",
    "link.delta",
    "link.sim_link",
    "link.sim_noise_sigma",
    "link.t_scale",
    "m_grid",
    "n_signals",
    "n_trials",
    "noise_sigma",
    "metric",
    "solver.restarts",
    "solver.steps",
    "solver.step_size",
    "solver.constraint_mode",
    "solver.backtracking",
    "analysis.beta_rule",
    "output.dir",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_auto(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` must be true or false, got `{v}`"))),
    }
}

fn fmt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".into(), |x| x.to_string())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Parses a config; relative `generator.path` and `output.dir` resolve
    /// against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Parse { line: i + 1, msg: format!("unknown key `{k}`") });
            }
            if kv.insert(k, (i + 1, v.trim())).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{k}`") });
            }
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| *v);
        let resolve = |p: &str| match base {
            Some(b) if Path::new(p).is_relative() => b.join(p),
            _ => PathBuf::from(p),
        };

        let mut cfg = ExperimentConfig::default();
        if let Some(v) = get("experiment_id") {
            cfg.experiment_id = v.to_string();
        }
        if let Some(v) = get("master_seed") {
            cfg.master_seed = parse_num("master_seed", v)?;
        }

        let radius = get("generator.radius").map(|v| parse_auto("generator.radius", v)).transpose()?.flatten();
        cfg.generator = match get("generator.kind").unwrap_or("random") {
            "random" => GeneratorSource::Random {
                dims: match get("generator.dims") {
                    Some(v) => parse_list("generator.dims", v)?,
                    None => vec![10, 50, 100, 200],
                },
                seed: get("generator.seed").map(|v| parse_num("generator.seed", v)).transpose()?.unwrap_or(1),
                radius,
            },
            "weights" => GeneratorSource::Weights {
                path: resolve(
                    get("generator.path").ok_or_else(|| Error::Config("`generator.path` is required for weights".into()))?,
                ),
                radius,
            },
            other => return Err(Error::Config(format!("unknown generator kind `{other}`"))),
        };

        let num = |k: &str, default: f64| -> Result<f64> {
            get(k).map(|v| parse_num(k, v)).transpose().map(|o| o.unwrap_or(default))
        };
        let kind: LinkKind = get("link.kind").unwrap_or("sign").parse()?;
        cfg.lambda_rule = match get("link.lambda_rule").unwrap_or("fixed") {
            "fixed" => LambdaRule::Fixed,
            "log_m" => LambdaRule::LogM { c: num("link.lambda_c", 3.0)? },
            other => return Err(Error::Config(format!("unknown lambda rule `{other}`"))),
        };
        cfg.link = match kind {
            LinkKind::Sign => LinkSpec::Sign,
            LinkKind::DitheredSign => LinkSpec::dithered_sign(num("link.lambda", 1.0)?)?,
            LinkKind::DitheredUniformQuantizer => LinkSpec::quantizer(num("link.delta", 1.0)?)?,
            LinkKind::Sim => LinkSpec::sim(
                get("link.sim_link").unwrap_or("identity").parse::<SimLink>()?,
                num("link.sim_noise_sigma", 0.0)?,
            )?,
        };
        if let Some(v) = get("link.t_scale") {
            cfg.t_scale = parse_auto("link.t_scale", v)?;
        }

        if let Some(v) = get("m_grid") {
            cfg.m_grid = parse_list("m_grid", v)?;
        }
        if let Some(v) = get("n_signals") {
            cfg.n_signals = parse_num("n_signals", v)?;
        }
        if let Some(v) = get("n_trials") {
            cfg.n_trials = parse_num("n_trials", v)?;
        }
        cfg.noise_sigma = num("noise_sigma", 0.0)?;
        if let Some(v) = get("metric") {
            cfg.metric = v.parse()?;
        }

        if let Some(v) = get("solver.restarts") {
            cfg.solver.restarts = parse_num("solver.restarts", v)?;
        }
        if let Some(v) = get("solver.steps") {
            cfg.solver.steps = parse_num("solver.steps", v)?;
        }
        if let Some(v) = get("solver.step_size") {
            cfg.solver.step_size = parse_auto("solver.step_size", v)?;
        }
        if let Some(v) = get("solver.constraint_mode") {
            cfg.solver.constraint_mode = v.parse::<ConstraintMode>()?;
        }
        if let Some(v) = get("solver.backtracking") {
            cfg.solver.backtracking = parse_bool("solver.backtracking", v)?;
        }
        if let Some(v) = get("analysis.beta_rule") {
            cfg.beta_rule = v.parse()?;
        }
        if let Some(v) = get("output.dir") {
            cfg.output_dir = resolve(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.m_grid[0] == 0 {
            return Err(Error::Config("m_grid must be non-empty and positive".into()));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("m_grid must be strictly increasing".into()));
        }
        if self.n_signals == 0 || self.n_trials == 0 {
            return Err(Error::Config("n_signals and n_trials must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma)));
        }
        if let Some(t) = self.t_scale {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("link.t_scale must be positive, got {t}")));
            }
        }
        if let LambdaRule::LogM { c } = self.lambda_rule {
            if !matches!(self.link, LinkSpec::DitheredSign { .. }) {
                return Err(Error::Config("link.lambda_rule = log_m needs link.kind = dithered_sign".into()));
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("link.lambda_c must be positive, got {c}")));
            }
        }
        self.link.validate()?;
        let mut probe = self.solver.clone();
        probe.t_scale = 1.0;
        probe.validate()
    }

    /// The link used at `m` given the largest ground-truth norm `r_max`.
    pub fn link_at(&self, m: usize, r_max: f64) -> Result<LinkSpec> {
        match (self.lambda_rule, self.link) {
            (LambdaRule::LogM { c }, LinkSpec::DitheredSign { .. }) => {
                LinkSpec::dithered_sign(c * r_max * (m as f64).ln().max(f64::MIN_POSITIVE).sqrt())
            }
            (_, link) => Ok(link),
        }
    }

    /// Serializes every key; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("experiment_id", self.experiment_id.clone());
        put("master_seed", self.master_seed.to_string());
        match &self.generator {
            GeneratorSource::Random { dims, seed, radius } => {
                put("generator.kind", "random".into());
                put("generator.dims", join(dims));
                put("generator.seed", seed.to_string());
                put("generator.radius", fmt_auto(*radius));
            }
            GeneratorSource::Weights { path, radius } => {
                put("generator.kind", "weights".into());
                put("generator.path", path.display().to_string());
                put("generator.radius", fmt_auto(*radius));
            }
        }
        put("link.kind", self.link.kind().as_str().into());
        match self.link {
            LinkSpec::Sign => {}
            LinkSpec::DitheredSign { lambda } => {
                match self.lambda_rule {
                    LambdaRule::Fixed => put("link.lambda_rule", "fixed".into()),
                    LambdaRule::LogM { c } => {
                        put("link.lambda_rule", "log_m".into());
                        put("link.lambda_c", c.to_string());
                    }
                }
                put("link.lambda", lambda.to_string());
            }
            LinkSpec::DitheredUniformQuantizer { delta } => put("link.delta", delta.to_string()),
            LinkSpec::Sim { link, noise_sigma } => {
                put("link.sim_link", link.as_str().into());
                put("link.sim_noise_sigma", noise_sigma.to_string());
            }
        }
        put("link.t_scale", fmt_auto(self.t_scale));
        put("m_grid", join(&self.m_grid));
        put("n_signals", self.n_signals.to_string());
        put("n_trials", self.n_trials.to_string());
        put("noise_sigma", self.noise_sigma.to_string());
        put("metric", self.metric.as_str().into());
        put("solver.restarts", self.solver.restarts.to_string());
        put("solver.steps", self.solver.steps.to_string());
        put("solver.step_size", fmt_auto(self.solver.step_size));
        put("solver.constraint_mode", self.solver.constraint_mode.as_str().into());
        put("solver.backtracking", self.solver.backtracking.to_string());
        put("analysis.beta_rule", self.beta_rule.as_str().into());
        put("output.dir", self.output_dir.display().to_string());
        s
    }
}
