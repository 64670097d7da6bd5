//! Observation links `f`, their jump structure, and the Lipschitz approximation
//! `f_β` that linearly interpolates through each jump midpoint on a band of width `β`.
//!
//! A link realization `f_i` is a [`LinkSpec`] plus its per-measurement randomness:
//! the dither `τ` for the dithered links and a standard-normal draw for a noisy
//! single-index link. At a jump point `f` takes its right limit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimLink {
    Identity,
    Relu,
    Tanh,
}

impl SimLink {
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            SimLink::Identity => u,
            SimLink::Relu => u.max(0.0),
            SimLink::Tanh => u.tanh(),
        }
    }

    /// Lipschitz constant of the link.
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimLink::Identity => "identity",
            SimLink::Relu => "relu",
            SimLink::Tanh => "tanh",
        }
    }
}

impl FromStr for SimLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(SimLink::Identity),
            "relu" => Ok(SimLink::Relu),
            "tanh" => Ok(SimLink::Tanh),
            other => Err(Error::invalid(format!("unknown sim link `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Sign,
    DitheredSign,
    DitheredUniformQuantizer,
    Sim,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Sign => "sign",
            LinkKind::DitheredSign => "dithered_sign",
            LinkKind::DitheredUniformQuantizer => "dithered_uniform_quantizer",
            LinkKind::Sim => "sim",
        }
    }

    /// Numeric tag used by the binary ensemble dump.
    pub fn tag(self) -> u64 {
        match self {
            LinkKind::Sign => 0,
            LinkKind::DitheredSign => 1,
            LinkKind::DitheredUniformQuantizer => 2,
            LinkKind::Sim => 3,
        }
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" => Ok(LinkKind::Sign),
            "dithered_sign" => Ok(LinkKind::DitheredSign),
            "dithered_uniform_quantizer" | "uqd" => Ok(LinkKind::DitheredUniformQuantizer),
            "sim" => Ok(LinkKind::Sim),
            other => Err(Error::invalid(format!("unknown link kind `{other}`"))),
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The nonlinear observation function and its dither/noise parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinkSpec {
    /// `f(u) = sign(u)`.
    Sign,
    /// `f(u) = sign(u + τ)`, `τ ~ U[-λ, λ]`.
    DitheredSign { lambda: f64 },
    /// `f(u) = δ(⌊(u + τ)/δ⌋ + 1/2)`, `τ ~ U[-δ/2, δ/2]`.
    DitheredUniformQuantizer { delta: f64 },
    /// `f(u) = link(u) + σ g`, `g ~ N(0, 1)`.
    Sim { link: SimLink, noise_sigma: f64 },
}

/// Jump structure `(B₀, L₀, β₀)`: largest jump, Lipschitz constant between jumps,
/// and minimum separation between jumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzParams {
    pub b0: f64,
    pub l0: f64,
    pub beta0: f64,
}

/// Per-measurement dithers `τ₁ .. τ_m`; empty for undithered links.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DitherRealization {
    pub values: Vec<f64>,
}

impl DitherRealization {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Dither of measurement `i`, or 0 for an undithered link.
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values.get(i).copied().unwrap_or(0.0)
    }
}

/// A jump of `f` at `x0` with one-sided values `left` and `right`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub x0: f64,
    pub left: f64,
    pub right: f64,
}

impl Jump {
    #[inline]
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

impl LinkSpec {
    pub fn sign() -> Self {
        LinkSpec::Sign
    }

    pub fn dithered_sign(lambda: f64) -> Result<Self> {
        let spec = LinkSpec::DitheredSign { lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn quantizer(delta: f64) -> Result<Self> {
        let spec = LinkSpec::DitheredUniformQuantizer { delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sim(link: SimLink, noise_sigma: f64) -> Result<Self> {
        let spec = LinkSpec::Sim { link, noise_sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> LinkKind {
        match self {
            LinkSpec::Sign => LinkKind::Sign,
            LinkSpec::DitheredSign { .. } => LinkKind::DitheredSign,
            LinkSpec::DitheredUniformQuantizer { .. } => LinkKind::DitheredUniformQuantizer,
            LinkSpec::Sim { .. } => LinkKind::Sim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LinkSpec::Sign => Ok(()),
            LinkSpec::DitheredSign { lambda } if lambda > 0.0 && lambda.is_finite() => Ok(()),
            LinkSpec::DitheredSign { lambda } => {
                Err(Error::invalid(format!("dither range lambda must be positive, got {lambda}")))
            }
            LinkSpec::DitheredUniformQuantizer { delta } if delta > 0.0 && delta.is_finite() => {
                Ok(())
            }
            LinkSpec::DitheredUniformQuantizer { delta } => Err(Error::invalid(format!(
                "quantizer resolution delta must be positive, got {delta}"
            ))),
            LinkSpec::Sim { noise_sigma, .. } if noise_sigma >= 0.0 && noise_sigma.is_finite() => {
                Ok(())
            }
            LinkSpec::Sim { noise_sigma, .. } => Err(Error::invalid(format!(
                "sim noise sigma must be nonnegative, got {noise_sigma}"
            ))),
        }
    }

    pub fn is_dithered(&self) -> bool {
        matches!(
            self,
            LinkSpec::DitheredSign { .. } | LinkSpec::DitheredUniformQuantizer { .. }
        )
    }

    /// Support `[lo, hi]` of the uniform dither.
    pub fn dither_range(&self) -> Option<(f64, f64)> {
        match *self {
            LinkSpec::DitheredSign { lambda } => Some((-lambda, lambda)),
            LinkSpec::DitheredUniformQuantizer { delta } => Some((-0.5 * delta, 0.5 * delta)),
            _ => None,
        }
    }

    pub fn needs_link_draw(&self) -> bool {
        matches!(self, LinkSpec::Sim { noise_sigma, .. } if *noise_sigma > 0.0)
    }

    pub fn params(&self) -> LipschitzParams {
        match *self {
            LinkSpec::Sign | LinkSpec::DitheredSign { .. } => LipschitzParams {
                b0: 2.0,
                l0: 0.0,
                beta0: f64::INFINITY,
            },
            LinkSpec::DitheredUniformQuantizer { delta } => LipschitzParams {
                b0: delta,
                l0: 0.0,
                beta0: delta,
            },
            LinkSpec::Sim { link, .. } => LipschitzParams {
                b0: 0.0,
                l0: link.lipschitz(),
                beta0: f64::INFINITY,
            },
        }
    }

    /// Rejects `β` outside `[0, β₀/2)`.
    pub fn check_beta(&self, beta: f64) -> Result<()> {
        let beta0 = self.params().beta0;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and nonnegative, got {beta}")));
        }
        if beta >= 0.5 * beta0 {
            return Err(Error::invalid(format!(
                "beta = {beta} must be below beta0/2 = {}",
                0.5 * beta0
            )));
        }
        Ok(())
    }

    /// Binds the per-measurement randomness. `tau` is ignored for undithered
    /// links and `draw` for links without internal noise.
    #[inline]
    pub fn realize(&self, tau: f64, draw: f64) -> RealizedLink {
        RealizedLink {
            spec: *self,
            tau,
            draw,
        }
    }
}

/// One realization `f_i` of a link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealizedLink {
    pub spec: LinkSpec,
    pub tau: f64,
    pub draw: f64,
}

#[inline]
fn sign_right_continuous(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl RealizedLink {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.spec {
            LinkSpec::Sign => sign_right_continuous(u),
            LinkSpec::DitheredSign { .. } => sign_right_continuous(u + self.tau),
            LinkSpec::DitheredUniformQuantizer { delta } => {
                delta * (((u + self.tau) / delta).floor() + 0.5)
            }
            LinkSpec::Sim { link, noise_sigma } => link.apply(u) + noise_sigma * self.draw,
        }
    }

    /// The discontinuity closest to `u`, if the link has any.
    #[inline]
    pub fn nearest_jump(&self, u: f64) -> Option<Jump> {
        match self.spec {
            LinkSpec::Sign => Some(Jump {
                x0: 0.0,
                left: -1.0,
                right: 1.0,
            }),
            LinkSpec::DitheredSign { .. } => Some(Jump {
                x0: -self.tau,
                left: -1.0,
                right: 1.0,
            }),
            LinkSpec::DitheredUniformQuantizer { delta } => {
                let j = ((u + self.tau) / delta).round();
                Some(Jump {
                    x0: j * delta - self.tau,
                    left: delta * (j - 0.5),
                    right: delta * (j + 0.5),
                })
            }
            LinkSpec::Sim { .. } => None,
        }
    }

    /// `dist(u, 𝒟_f) ≤ β/2`.
    #[inline]
    pub fn in_band(&self, beta: f64, u: f64) -> bool {
        self.nearest_jump(u)
            .is_some_and(|j| (u - j.x0).abs() <= 0.5 * beta)
    }

    /// `f_β(u)`; `β` must already satisfy [`LinkSpec::check_beta`].
    ///
    /// The discontinuous links are constant between jumps, so `f(x₀ ∓ β/2)` equals
    /// the one-sided limit at `x₀`.
    #[inline]
    pub fn approx(&self, beta: f64, u: f64) -> f64 {
        if beta > 0.0 {
            if let Some(jump) = self.nearest_jump(u) {
                let offset = u - jump.x0;
                if offset.abs() <= 0.5 * beta {
                    let mid = jump.midpoint();
                    return if offset <= 0.0 {
                        mid - 2.0 * (mid - jump.left) * (-offset) / beta
                    } else {
                        mid + 2.0 * (jump.right - mid) * offset / beta
                    };
                }
            }
        }
        self.eval(u)
    }

    /// `ε_β(u) = f_β(u) − f(u)`.
    #[inline]
    pub fn approx_error(&self, beta: f64, u: f64) -> f64 {
        self.approx(beta, u) - self.eval(u)
    }

    /// `ξ_β(u) = f_β(u) − T u`.
    #[inline]
    pub fn xi(&self, beta: f64, t_scale: f64, u: f64) -> f64 {
        self.approx(beta, u) - t_scale * u
    }
}

/// `f(u)` for the given realization.
pub fn link_eval(spec: &LinkSpec, u: f64, tau: Option<f64>, rng_draw: Option<f64>) -> Result<f64> {
    spec.validate()?;
    let tau = match (spec.is_dithered(), tau) {
        (true, Some(t)) => t,
        (true, None) => {
            return Err(Error::invalid(format!("{} link requires a dither value", spec.kind())))
        }
        (false, Some(_)) => {
            return Err(Error::invalid(format!("{} link takes no dither", spec.kind())))
        }
        (false, None) => 0.0,
    };
    let draw = match (spec.needs_link_draw(), rng_draw) {
        (true, Some(g)) => g,
        (true, None) => return Err(Error::invalid("noisy sim link requires a noise draw")),
        (false, _) => 0.0,
    };
    Ok(spec.realize(tau, draw).eval(u))
}

pub fn link_params(spec: &LinkSpec) -> LipschitzParams {
    spec.params()
}

/// Points of `𝒟_f` inside the closed interval, ascending.
pub fn discontinuities_near(spec: &LinkSpec, tau: f64, interval: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Vec::new();
    }
    match *spec {
        LinkSpec::Sign => {
            if (lo..=hi).contains(&0.0) {
                vec![0.0]
            } else {
                vec![]
            }
        }
        LinkSpec::DitheredSign { .. } => {
            if (lo..=hi).contains(&-tau) {
                vec![-tau]
            } else {
                vec![]
            }
        }
        LinkSpec::DitheredUniformQuantizer { delta } => {
            let first = ((lo + tau) / delta).ceil() as i64;
            let last = ((hi + tau) / delta).floor() as i64;
            (first..=last)
                .map(|j| j as f64 * delta - tau)
                .filter(|x| (lo..=hi).contains(x))
                .collect()
        }
        LinkSpec::Sim { .. } => Vec::new(),
    }
}

pub fn lipschitz_approx_eval(spec: &LinkSpec, beta: f64, u: f64, tau: f64) -> Result<f64> {
    spec.validate()?;
    spec.check_beta(beta)?;
    Ok(spec.realize(tau, 0.0).approx(beta, u))
}

pub fn approx_error_eval(spec: &LinkSpec, beta: f64, u: f64, tau: f64) -> Result<f64> {
    spec.validate()?;
    spec.check_beta(beta)?;
    Ok(spec.realize(tau, 0.0).approx_error(beta, u))
}

pub fn xi_eval(spec: &LinkSpec, beta: f64, t_scale: f64, u: f64, tau: f64) -> Result<f64> {
    spec.validate()?;
    spec.check_beta(beta)?;
    if t_scale.is_nan() || t_scale <= 0.0 {
        return Err(Error::invalid(format!("scaling factor T must be positive, got {t_scale}")));
    }
    Ok(spec.realize(tau, 0.0).xi(beta, t_scale, u))
}
