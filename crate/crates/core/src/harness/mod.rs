//! Experiment configuration, presets, uniform-recovery sweeps, lemma suites,
//! slope fits and report writers behind the `nlgcs` command line tool.

pub mod config;
pub mod lemmas;
pub mod presets;
pub mod report;
pub mod sweep;

pub use config::{BetaRule, ExperimentConfig, GeneratorSource, LambdaRule, Metric};
pub use lemmas::{verify_lemmas, LemmaRow};
pub use presets::preset;
pub use report::{fit_slope, SlopeFit};
pub use sweep::{run_uniform_sweep, SweepReport};
