//! Lemma verification suites built on the oracles in [`crate::theory`].

use std::f64::consts::PI;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::genmodel::{random_generator, LatentVector};
use crate::harness::report::{fit_slope, median};
use crate::linalg;
use crate::linkmodels::{LinkSpec, SimLink};
use crate::recovery::{scaling_factor, sim_mu};
use crate::rng::{derive_seed, StreamRng};
use crate::sensing::sample_ensemble;
use crate::theory::{
    dithered_quantizer_mean, entropy_bound, gaussian_norm_concentration, mu_beta_mc, scaling_identity_mc,
    srec_empirical, target_mismatch_mc, EntropySet, ProcessFactor, ProductProcess, SrecParams,
};

pub const SUITES: &[&str] = &[
    "all", "link", "scaling", "mismatch", "bias", "entropy", "srec", "norms", "process",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub lemma_id: String,
    pub statistic: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl LemmaRow {
    fn at_most(id: impl Into<String>, statistic: &str, value: f64, threshold: f64) -> Self {
        Self {
            lemma_id: id.into(),
            statistic: statistic.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(id: impl Into<String>, statistic: &str, value: f64, threshold: f64) -> Self {
        Self {
            pass: value >= threshold,
            ..Self::at_most(id, statistic, value, threshold)
        }
    }

    fn in_range(id: impl Into<String>, statistic: &str, value: f64, lo: f64, hi: f64) -> Vec<Self> {
        let id = id.into();
        vec![
            Self::at_least(id.clone(), &format!("{statistic}_lower"), value, lo),
            Self::at_most(id, &format!("{statistic}_upper"), value, hi),
        ]
    }
}

pub fn verify_lemmas(suite: &str, seed: u64) -> Result<Vec<LemmaRow>> {
    let s = |i: u64| derive_seed(seed, crate::rng::tag::MONTE_CARLO, &[0x1e, i]);
    Ok(match suite {
        "all" => {
            let mut rows = Vec::new();
            for name in &SUITES[1..] {
                rows.extend(verify_lemmas(name, seed)?);
            }
            rows
        }
        "link" => link_suite(),
        "scaling" => scaling_suite(s(1)),
        "mismatch" => mismatch_suite(s(2))?,
        "bias" => bias_suite(s(3))?,
        "entropy" => entropy_suite()?,
        "srec" => srec_suite(s(4))?,
        "norms" => norms_suite(s(5))?,
        "process" => process_suite(s(6))?,
        other => {
            return Err(Error::Config(format!(
                "unknown lemma suite `{other}` (expected one of {})",
                SUITES.join(", ")
            )))
        }
    })
}

const GRID_POINTS: usize = 10_000;

/// Realized links with fixed dithers, each over a window covering several jumps.
fn link_cases() -> Vec<(&'static str, LinkSpec, f64, (f64, f64))> {
    vec![
        ("sign", LinkSpec::Sign, 0.0, (-2.0, 2.0)),
        ("dithered_sign", LinkSpec::DitheredSign { lambda: 1.5 }, 0.37, (-2.0, 2.0)),
        ("uqd", LinkSpec::DitheredUniformQuantizer { delta: 1.0 }, 0.21, (-3.0, 3.0)),
        ("uqd_delta3", LinkSpec::DitheredUniformQuantizer { delta: 3.0 }, -0.4, (-7.0, 7.0)),
        ("sim_relu", LinkSpec::Sim { link: SimLink::Relu, noise_sigma: 0.0 }, 0.0, (-2.0, 2.0)),
        ("sim_tanh", LinkSpec::Sim { link: SimLink::Tanh, noise_sigma: 0.0 }, 0.0, (-2.0, 2.0)),
    ]
}

/// `β ∈ {0.01, 0.1, 0.4 β₀}`; for `β₀ = ∞` the last entry is 0.4.
pub fn beta_grid(link: &LinkSpec) -> [f64; 3] {
    let b0 = link.params().beta0;
    [0.01, 0.1, if b0.is_finite() { 0.4 * b0 } else { 0.4 }]
}

fn link_suite() -> Vec<LemmaRow> {
    let mut rows = Vec::new();
    for (name, spec, tau, (lo, hi)) in link_cases() {
        let f = spec.realize(tau, 0.0);
        let p = spec.params();
        // An irrational offset keeps grid points off band edges.
        let h = (hi - lo) / GRID_POINTS as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + (i as f64 + 0.5 / 2f64.sqrt()) * h).collect();
        for beta in beta_grid(&spec) {
            let id = |what: &str| format!("link.{what}.{name}.beta={beta}");
            let fb: Vec<f64> = grid.iter().map(|&u| f.approx(beta, u)).collect();
            let eb: Vec<f64> = grid.iter().map(|&u| f.approx_error(beta, u).abs()).collect();
            let slope = |v: &[f64]| {
                v.windows(2)
                    .zip(grid.windows(2))
                    .map(|(a, u)| (a[1] - a[0]).abs() / (u[1] - u[0]))
                    .fold(0.0, f64::max)
            };
            let tol = 1.0 + 1e-9;
            let lip_f = p.l0 + p.b0 / beta;
            rows.push(LemmaRow::at_most(id("fbeta_lipschitz"), "max_slope", slope(&fb), lip_f * tol));
            let lip_e = 2.0 * p.l0 + p.b0 / beta;
            rows.push(LemmaRow::at_most(id("abs_error_lipschitz"), "max_slope", slope(&eb), lip_e * tol));
            let cap = 1.5 * p.l0 * beta + p.b0;
            let excess = grid
                .iter()
                .zip(&eb)
                .map(|(&u, &e)| if f.in_band(beta, u) { e - cap } else { e })
                .fold(f64::NEG_INFINITY, f64::max);
            rows.push(LemmaRow::at_most(id("abs_error_support"), "max_excess", excess, 0.0));
            if let LinkSpec::DitheredUniformQuantizer { delta } = spec {
                let max_xi = grid.iter().map(|&u| f.xi(beta, 1.0, u).abs()).fold(0.0, f64::max);
                let max_e = eb.iter().copied().fold(0.0, f64::max);
                rows.push(LemmaRow::at_most(id("quantizer_xi"), "max_abs_xi", max_xi, 2.0 * delta));
                rows.push(LemmaRow::at_most(id("quantizer_error"), "max_abs_error", max_e, delta));
            }
        }
    }
    rows
}

const SCALING_SAMPLES: usize = 1_000_000;

fn scaling_suite(seed: u64) -> Vec<LemmaRow> {
    let mut rows = Vec::new();
    let cases: [(&str, LinkSpec, f64, f64); 3] = [
        ("sign", LinkSpec::Sign, (2.0 / PI).sqrt(), 1.0),
        ("dithered_sign", LinkSpec::DitheredSign { lambda: 5.0 }, 0.2, 1.0),
        ("uqd", LinkSpec::DitheredUniformQuantizer { delta: 1.0 }, 1.0, 1.0),
    ];
    for (i, (name, link, expected, radius)) in cases.into_iter().enumerate() {
        let closed = scaling_factor(&link, 0, 0);
        rows.push(LemmaRow::at_most(format!("scaling.closed_form.{name}"), "abs_diff", (closed - expected).abs(), 1e-15));
        let e = scaling_identity_mc(&link, radius, SCALING_SAMPLES, seed ^ i as u64);
        rows.push(LemmaRow::at_most(
            format!("scaling.identity.{name}"),
            "abs_dev_over_stderr",
            (e.value - expected).abs() / e.stderr,
            4.0,
        ));
    }
    let mu = sim_mu(SimLink::Relu, SCALING_SAMPLES, seed ^ 0x51);
    rows.push(LemmaRow::at_most("scaling.identity.sim_relu", "abs_dev_over_stderr", (mu.value - 0.5).abs() / mu.stderr, 4.0));
    for (i, a) in [0.3, -1.7, 2.25].into_iter().enumerate() {
        let e = dithered_quantizer_mean(1.0, a, SCALING_SAMPLES, seed ^ (0x100 + i as u64)).expect("valid delta");
        rows.push(LemmaRow::at_most(
            format!("scaling.quantizer_unbiased.a={a}"),
            "abs_dev_over_stderr",
            (e.value - a).abs() / e.stderr,
            4.0,
        ));
    }
    rows
}

fn random_x(n: usize, norm: f64, seed: u64, i: u64) -> Vec<f64> {
    let v = StreamRng::derive(seed, crate::rng::tag::SIGNALS, &[i]).gaussian_vec(n);
    linalg::scale(&v, norm / linalg::norm(&v))
}

const MISMATCH_SAMPLES: usize = 1_000_000;
const MISMATCH_DIM: usize = 10;

fn mismatch_suite(seed: u64) -> Result<Vec<LemmaRow>> {
    let mut rows = Vec::new();
    let r = 1.0;
    let lambda = 3.0 * r * 100f64.ln().sqrt();
    let models = [
        ("sign", LinkSpec::Sign, (2.0 / PI).sqrt()),
        ("identity", LinkSpec::sim(SimLink::Identity, 0.0)?, 1.0),
        ("dithered_sign", LinkSpec::dithered_sign(lambda)?, 1.0 / lambda),
        ("uqd", LinkSpec::quantizer(1.0)?, 1.0),
    ];
    for (mi, (name, link, t)) in models.into_iter().enumerate() {
        for i in 0..5u64 {
            let norm = match name {
                "sign" | "dithered_sign" => r,
                _ => 0.5 + i as f64,
            };
            let x = random_x(MISMATCH_DIM, norm, seed, 10 * mi as u64 + i);
            let e = target_mismatch_mc(&link, t, &x, MISMATCH_SAMPLES, seed ^ (mi as u64 * 100 + i))?;
            let id = format!("mismatch.{name}.x{i}");
            rows.push(if name == "sign" {
                LemmaRow::at_most(id, "rho", e.value, 0.03)
            } else {
                LemmaRow::at_most(id, "rho_over_stderr", e.value / e.stderr, 3.0)
            });
        }
    }
    Ok(rows)
}

const BIAS_SAMPLES: usize = 1_000_000;

fn bias_suite(seed: u64) -> Result<Vec<LemmaRow>> {
    let mut rows = Vec::new();
    let phi = Normal::standard();
    let x = random_x(MISMATCH_DIM, 1.0, seed, 0);
    for (i, beta) in [0.05, 0.1, 0.2].into_iter().enumerate() {
        let e = mu_beta_mc(&LinkSpec::Sign, &x, beta, BIAS_SAMPLES, seed ^ i as u64)?;
        let exact = 2.0 * phi.cdf(beta / 2.0) - 1.0;
        rows.push(LemmaRow::at_most(
            format!("bias.sign.beta={beta}"),
            "abs_dev_over_stderr",
            (e.value - exact).abs() / e.stderr,
            3.0,
        ));
    }
    let link = LinkSpec::quantizer(1.0)?;
    for (i, beta) in [0.1, 0.2, 0.4].into_iter().enumerate() {
        let x = random_x(MISMATCH_DIM, 0.5 + 2.0 * i as f64, seed, 1 + i as u64);
        let e = mu_beta_mc(&link, &x, beta, BIAS_SAMPLES, seed ^ (0x10 + i as u64))?;
        rows.push(LemmaRow::at_most(
            format!("bias.uqd.beta={beta}"),
            "abs_dev_over_stderr",
            (e.value - beta).abs() / e.stderr,
            3.0,
        ));
    }
    let e = mu_beta_mc(&LinkSpec::sim(SimLink::Relu, 0.0)?, &x, 0.4, 10_000, seed)?;
    rows.push(LemmaRow::at_most("bias.sim_relu", "mu_beta", e.value, 0.0));
    Ok(rows)
}

fn entropy_suite() -> Result<Vec<LemmaRow>> {
    let cases = [
        ("entropy.K.eta=0.3", EntropySet::K, 0.3, 20.0 * 100f64.ln()),
        ("entropy.K.eta=Lr", EntropySet::K, 10.0, 20.0 * 3f64.ln()),
        ("entropy.Kminus.eta=0.3", EntropySet::Kminus, 0.3, 40.0 * 200f64.ln()),
    ];
    cases
        .into_iter()
        .map(|(id, set, eta, exact)| {
            let v = entropy_bound(set, 20, 10.0, 1.0, 1.0, 0.5, eta)?;
            Ok(LemmaRow::at_most(id, "rel_error", ((v - exact) / exact).abs(), 1e-9))
        })
        .collect()
}

fn srec_suite(seed: u64) -> Result<Vec<LemmaRow>> {
    let gen = random_generator(&[5, 20, 50], None, derive_seed(seed, 1, &[]))?;
    let params = SrecParams::new(0.5, 0.1)?;
    let ens = sample_ensemble(200, 50, LinkSpec::Sign, 0.0, derive_seed(seed, 2, &[]))?;
    let good = srec_empirical(&gen, &ens, 10_000, params, derive_seed(seed, 3, &[]))?;
    let ens = sample_ensemble(1, 50, LinkSpec::Sign, 0.0, derive_seed(seed, 4, &[]))?;
    let bad = srec_empirical(&gen, &ens, 10_000, params, derive_seed(seed, 5, &[]))?;
    Ok(vec![
        LemmaRow::at_most("srec.m=200", "violation_fraction", good, 0.0),
        LemmaRow {
            pass: bad > 0.0,
            ..LemmaRow::at_least("srec.m=1", "violation_fraction", bad, 0.0)
        },
    ])
}

fn norms_suite(seed: u64) -> Result<Vec<LemmaRow>> {
    let f100 = gaussian_norm_concentration(100, 100_000, &[3.0, 5.0], seed)?;
    let f1 = gaussian_norm_concentration(1, 1_000_000, &[3.0, 0.0], seed ^ 1)?;
    Ok(vec![
        LemmaRow::at_most("norms.n=100.t=5", "tail_fraction", f100[1], 1e-3),
        LemmaRow::at_most("norms.n=1.t=3", "tail_fraction", f1[0], 1e-4),
        LemmaRow::at_least("norms.n=1.t=0", "tail_fraction", f1[1], 0.999),
    ])
}

pub const PROCESS_M_GRID: [usize; 5] = [250, 500, 1000, 2000, 4000];
pub const PROCESS_TRIALS: usize = 20;

/// Median per-trial supremum on `PROCESS_M_GRID` for a net of `net_size`
/// latent points and as many directions.
pub fn process_medians(net_size: usize, factor: ProcessFactor, seed: u64) -> Result<Vec<(f64, f64)>> {
    let gen = random_generator(&[2, 10, 20], None, derive_seed(seed, 1, &[]))?;
    let mut rng = StreamRng::new(derive_seed(seed, 2, &[]), 0);
    let net_x: Vec<LatentVector> = (0..net_size)
        .map(|_| LatentVector::new(rng.uniform_in_ball(2, gen.latent_radius())))
        .collect();
    let net_v: Vec<Vec<f64>> = (0..net_size)
        .map(|_| {
            let v = rng.gaussian_vec(gen.output_dim());
            linalg::scale(&v, 1.0 / linalg::norm(&v))
        })
        .collect();
    let process = ProductProcess::new(&net_x, &net_v, &gen, LinkSpec::Sign, (2.0 / PI).sqrt(), 0.1, factor)?
        .with_reference(1_000_000, derive_seed(seed, 3, &[]));
    PROCESS_M_GRID
        .iter()
        .map(|&m| {
            let sups = process.sup_trials(m, PROCESS_TRIALS, derive_seed(seed, 4, &[]))?;
            Ok((m as f64, median(sups)))
        })
        .collect()
}

fn process_suite(seed: u64) -> Result<Vec<LemmaRow>> {
    let mut rows = Vec::new();
    let gen = random_generator(&[2, 10, 20], None, derive_seed(seed, 1, &[]))?;
    let net_x = vec![LatentVector::new(vec![0.3, -0.4]), LatentVector::new(vec![-1.0, 0.2])];
    let net_v = vec![random_x(20, 1.0, seed, 1), random_x(20, 1.0, seed, 2)];
    let identity = LinkSpec::sim(SimLink::Identity, 0.0)?;
    let zero = ProductProcess::new(&net_x, &net_v, &gen, identity, 1.0, 0.0, ProcessFactor::Xi)?
        .with_reference(10_000, seed)
        .sup_trials(500, 5, seed)?;
    rows.push(LemmaRow::at_most("process.zero", "max_sup", zero.iter().copied().fold(0.0, f64::max), 0.0));
    for (name, size) in [("singleton", 1), ("net3", 3)] {
        let fit = fit_slope(&process_medians(size, ProcessFactor::Xi, derive_seed(seed, 10, &[size as u64]))?)?;
        rows.extend(LemmaRow::in_range(format!("process.slope.{name}"), "slope", fit.slope, -0.65, -0.35));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_suites_pass() {
        for suite in ["link", "entropy"] {
            let rows = verify_lemmas(suite, 1).unwrap();
            assert!(!rows.is_empty());
            for r in rows {
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(matches!(verify_lemmas("bogus", 0), Err(Error::Config(_))));
    }

    #[test]
    fn beta_grid_respects_separation() {
        for (_, spec, _, _) in link_cases() {
            for beta in beta_grid(&spec) {
                spec.check_beta(beta).unwrap();
            }
        }
    }
}
