//! Oracles for the quantities that drive recovery guarantees: target mismatch
//! `ρ(x)`, band probability `μ_β(x)`, metric-entropy bounds, the set-restricted
//! eigenvalue condition, Gaussian norm concentration, and suprema of the product
//! process `(1/m) Σ g_x(aᵢ) h_v(aᵢ)`.
//!
//! Every Monte-Carlo routine is a pure function of its seed.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genmodel::{LatentVector, MlpGenerator};
use crate::linalg;
use crate::linkmodels::{LinkSpec, RealizedLink};
use crate::mc::{self, McEstimate, Moments, BATCHES, CHUNKS};
use crate::par;
use crate::rng::{tag, StreamRng};
use crate::sensing::SensingEnsemble;

mod purpose {
    pub const MISMATCH: u64 = 1;
    pub const MU_BETA: u64 = 2;
    pub const SCALING: u64 = 3;
    pub const UNBIASED: u64 = 4;
    pub const NORMS: u64 = 5;
}

/// Draws one link realization with fresh dither and link noise.
#[inline]
fn fresh_link(link: &LinkSpec, rng: &mut StreamRng) -> RealizedLink {
    let tau = match link.dither_range() {
        Some((lo, hi)) => rng.uniform_in(lo, hi),
        None => 0.0,
    };
    let draw = if link.needs_link_draw() { rng.gaussian() } else { 0.0 };
    link.realize(tau, draw)
}

/// `ρ(x) = ‖E[f(aᵀx) a] − T x‖₂`.
///
/// The reported standard error is the jackknife over 10 batches of the mean
/// vector, measured in ℓ₂ norm: `√((B−1)/B Σ_b ‖v̄₍₋b₎ − v̄₍·₎‖²)`. It estimates the
/// size of the Monte-Carlo error of the mean vector, so an exact identity
/// `ρ = 0` shows up as `value ≲ stderr`.
pub fn target_mismatch_mc(
    link: &LinkSpec,
    t_scale: f64,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    link.validate()?;
    if n_samples < CHUNKS {
        return Err(Error::invalid(format!("need at least {CHUNKS} samples")));
    }
    let n = x.len();
    let chunks = mc::run_chunks(n_samples, seed, purpose::MISMATCH, |rng, count| {
        let mut sum = vec![0.0; n];
        let mut a = vec![0.0; n];
        for _ in 0..count {
            rng.fill_gaussian(&mut a);
            let u = linalg::dot(&a, x);
            let fu = fresh_link(link, rng).eval(u);
            for (s, ai) in sum.iter_mut().zip(&a) {
                *s += fu * ai;
            }
        }
        (sum, count)
    });

    let per_batch = CHUNKS / BATCHES;
    let batches: Vec<(Vec<f64>, usize)> = chunks
        .chunks(per_batch)
        .map(|group| {
            group.iter().fold((vec![0.0; n], 0), |(mut s, c), (gs, gc)| {
                s.iter_mut().zip(gs).for_each(|(a, b)| *a += b);
                (s, c + gc)
            })
        })
        .collect();
    let total_count: usize = batches.iter().map(|b| b.1).sum();
    let mut total = vec![0.0; n];
    for (s, _) in &batches {
        total.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let mean: Vec<f64> = total.iter().map(|s| s / total_count as f64).collect();
    let value = linalg::norm(
        &mean
            .iter()
            .zip(x)
            .map(|(m, xi)| m - t_scale * xi)
            .collect::<Vec<_>>(),
    );

    let leave_out: Vec<Vec<f64>> = batches
        .iter()
        .map(|(s, c)| {
            let rest = (total_count - c) as f64;
            total.iter().zip(s).map(|(t, b)| (t - b) / rest).collect()
        })
        .collect();
    let b = leave_out.len() as f64;
    let mut center = vec![0.0; n];
    for v in &leave_out {
        center.iter_mut().zip(v).for_each(|(c, vi)| *c += vi / b);
    }
    let spread: f64 = leave_out
        .iter()
        .map(|v| v.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>())
        .sum();
    Ok(McEstimate {
        value,
        stderr: ((b - 1.0) / b * spread).sqrt(),
        n_samples: total_count,
    })
}

/// `μ_β(x) = P(aᵀx ∈ 𝒟_f + [−β/2, β/2])`, resampling the dither on every draw.
pub fn mu_beta_mc(
    link: &LinkSpec,
    x: &[f64],
    beta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    link.validate()?;
    link.check_beta(beta)?;
    let n = x.len();
    Ok(mc::scalar_mean(n_samples, seed, purpose::MU_BETA, |rng| {
        let mut u = 0.0;
        for xi in x.iter().take(n) {
            u += rng.gaussian() * xi;
        }
        f64::from(u8::from(fresh_link(link, rng).in_band(beta, u)))
    }))
}

/// `E[f(R g) g] / R` for `g ~ N(0, 1)`: the component of `E[f(aᵀx) a]` along a
/// signal of norm `R`, divided by `R`. Equals `T` whenever the mismatch vanishes.
pub fn scaling_identity_mc(link: &LinkSpec, radius: f64, n_samples: usize, seed: u64) -> McEstimate {
    let e = mc::scalar_mean(n_samples, seed, purpose::SCALING, |rng| {
        let g = rng.gaussian();
        fresh_link(link, rng).eval(radius * g) * g
    });
    McEstimate {
        value: e.value / radius,
        stderr: e.stderr / radius,
        n_samples: e.n_samples,
    }
}

/// Mean of `Q_δ(a + τ)` over fresh dithers `τ ~ U[−δ/2, δ/2]` at a fixed `a`.
pub fn dithered_quantizer_mean(delta: f64, a: f64, n_samples: usize, seed: u64) -> Result<McEstimate> {
    let link = LinkSpec::quantizer(delta)?;
    Ok(mc::scalar_mean(n_samples, seed, purpose::UNBIASED, |rng| {
        fresh_link(&link, rng).eval(a)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EntropySet {
    /// `K = G(B₂ᵏ(r))`.
    K,
    /// `K − K`.
    Kminus,
    /// `(T K⁻) ∖ B₂ⁿ(2ε)`.
    KminusEps,
    /// Normalized `(K⁻_ε)*`.
    Normalized,
}

/// Natural-log upper bound on the metric entropy `𝓗(S, η)`:
/// `k log(3Lr/η)`, `2k log(6Lr/η)`, `2k log(12TLr/η)`, `2k log(12TLr/(εη))`.
///
/// `η` must lie in `(0, Lr]`; `ε ∈ (0, 1)` for the ε-variants.
pub fn entropy_bound(
    set: EntropySet,
    k: usize,
    l_lip: f64,
    r: f64,
    t_scale: f64,
    eps: f64,
    eta: f64,
) -> Result<f64> {
    let lr = l_lip * r;
    if !(eta > 0.0 && eta <= lr) {
        return Err(Error::invalid(format!("eta = {eta} must lie in (0, L r = {lr}]")));
    }
    let k = k as f64;
    let needs_eps = matches!(set, EntropySet::KminusEps | EntropySet::Normalized);
    if needs_eps && !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1)")));
    }
    if needs_eps && (t_scale.is_nan() || t_scale <= 0.0) {
        return Err(Error::invalid(format!("T = {t_scale} must be positive")));
    }
    Ok(match set {
        EntropySet::K => k * (3.0 * lr / eta).ln(),
        EntropySet::Kminus => 2.0 * k * (6.0 * lr / eta).ln(),
        EntropySet::KminusEps => 2.0 * k * (12.0 * t_scale * lr / eta).ln(),
        EntropySet::Normalized => 2.0 * k * (12.0 * t_scale * lr / (eps * eta)).ln(),
    })
}

/// Parameters of `S-REC(K, 1 − α, δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrecParams {
    pub alpha: f64,
    pub slack_delta: f64,
}

impl SrecParams {
    pub fn new(alpha: f64, slack_delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || slack_delta.is_nan() || slack_delta < 0.0 {
            return Err(Error::invalid(format!(
                "need alpha in [0, 1) and delta >= 0, got ({alpha}, {slack_delta})"
            )));
        }
        Ok(Self { alpha, slack_delta })
    }
}

/// Fraction of sampled latent pairs violating
/// `‖A(x₁ − x₂)‖₂/√m ≥ (1 − α)‖x₁ − x₂‖₂ − δ` with `xᵢ = G(zᵢ)`, `zᵢ` uniform in the ball.
pub fn srec_empirical(
    gen: &MlpGenerator,
    ens: &SensingEnsemble,
    n_pairs: usize,
    params: SrecParams,
    seed: u64,
) -> Result<f64> {
    crate::error::check_dim("generator output", ens.n(), gen.output_dim())?;
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs must be positive"));
    }
    let k = gen.latent_dim();
    let r = gen.latent_radius();
    let root_m = (ens.m() as f64).sqrt();
    let violated = par::map_range(n_pairs, |p| {
        let mut rng = StreamRng::derive(seed, tag::LATENT_PAIRS, &[p as u64]);
        let z1 = LatentVector::new(rng.uniform_in_ball(k, r));
        let z2 = LatentVector::new(rng.uniform_in_ball(k, r));
        let d = linalg::sub(
            &gen.forward(&z1).expect("checked dims"),
            &gen.forward(&z2).expect("checked dims"),
        );
        let lhs = linalg::norm(&ens.apply(&d)) / root_m;
        let rhs = (1.0 - params.alpha) * linalg::norm(&d) - params.slack_delta;
        lhs < rhs - 1e-12 * rhs.abs().max(1.0)
    });
    Ok(violated.iter().filter(|&&v| v).count() as f64 / n_pairs as f64)
}

/// Fractions of `a ~ N(0, Iₙ)` with `|‖a‖₂ − √n| > t`, one per radius `t`.
pub fn gaussian_norm_concentration(n: usize, n_samples: usize, radii: &[f64], seed: u64) -> Result<Vec<f64>> {
    if n == 0 || n_samples == 0 {
        return Err(Error::invalid("need n >= 1 and n_samples >= 1"));
    }
    let root = (n as f64).sqrt();
    let counts = mc::run_chunks(n_samples, seed, purpose::NORMS, |rng, count| {
        let mut hits = vec![0usize; radii.len()];
        let mut a = vec![0.0; n];
        for _ in 0..count {
            rng.fill_gaussian(&mut a);
            let dev = (linalg::norm(&a) - root).abs();
            for (h, &t) in hits.iter_mut().zip(radii) {
                if dev > t {
                    *h += 1;
                }
            }
        }
        hits
    });
    Ok((0..radii.len())
        .map(|j| counts.iter().map(|c| c[j]).sum::<usize>() as f64 / n_samples as f64)
        .collect())
}

/// Which first factor `g_x` the product process uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProcessFactor {
    /// `g_x(a) = ξ_β(aᵀx)`.
    Xi,
    /// `g_x(a) = |ε_β(aᵀx)|`.
    AbsError,
}

/// The product process `(1/m) Σᵢ g_x(aᵢ) h_v(aᵢ)` with `h_v(a) = aᵀv`, indexed by a
/// finite latent net (mapped through `G`) and a finite net of unit vectors.
pub struct ProductProcess<'a> {
    pub points: Vec<Vec<f64>>,
    pub directions: Vec<Vec<f64>>,
    pub link: LinkSpec,
    pub t_scale: f64,
    pub beta: f64,
    pub factor: ProcessFactor,
    pub reference_samples: usize,
    pub reference_seed: u64,
    _gen: std::marker::PhantomData<&'a MlpGenerator>,
    reference: OnceLock<Vec<Vec<f64>>>,
}

impl<'a> ProductProcess<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net_x: &[LatentVector],
        net_v: &[Vec<f64>],
        gen: &'a MlpGenerator,
        link: LinkSpec,
        t_scale: f64,
        beta: f64,
        factor: ProcessFactor,
    ) -> Result<Self> {
        link.validate()?;
        link.check_beta(beta)?;
        if net_x.is_empty() || net_v.is_empty() {
            return Err(Error::invalid("product process needs non-empty nets"));
        }
        let points = net_x
            .iter()
            .map(|z| gen.forward(z))
            .collect::<Result<Vec<_>>>()?;
        let n = gen.output_dim();
        for v in net_v {
            crate::error::check_dim("net direction", n, v.len())?;
        }
        Ok(Self {
            points,
            directions: net_v.to_vec(),
            link,
            t_scale,
            beta,
            factor,
            reference_samples: 1_000_000,
            reference_seed: 0x7e4e_4e4e,
            _gen: std::marker::PhantomData,
            reference: OnceLock::new(),
        })
    }

    pub fn with_reference(mut self, samples: usize, seed: u64) -> Self {
        self.reference_samples = samples;
        self.reference_seed = seed;
        self.reference = OnceLock::new();
        self
    }

    fn dim(&self) -> usize {
        self.points[0].len()
    }

    #[inline]
    fn g(&self, f: &RealizedLink, u: f64) -> f64 {
        match self.factor {
            ProcessFactor::Xi => f.xi(self.beta, self.t_scale, u),
            ProcessFactor::AbsError => f.approx_error(self.beta, u).abs(),
        }
    }

    /// `Ê[g_x(a) a]` per net point; `Ê[g_x h_v]` is its inner product with `v`.
    ///
    /// The component of `a` orthogonal to `x` is independent of `aᵀx` and of the
    /// link randomness, so `E[g(aᵀx) a] = x E[g(s) s] / ‖x‖²` with `s ~ N(0, ‖x‖²)`.
    /// Only the scalar factor is estimated by Monte Carlo.
    pub fn reference(&self) -> &[Vec<f64>] {
        self.reference.get_or_init(|| {
            par::map_range(self.points.len(), |p| {
                let x = &self.points[p];
                let sq = linalg::dot(x, x);
                if sq == 0.0 {
                    return vec![0.0; x.len()];
                }
                let norm = sq.sqrt();
                let e = mc::scalar_mean(
                    self.reference_samples,
                    self.reference_seed,
                    tag::PROCESS_REFERENCE ^ ((p as u64) << 8),
                    |rng| {
                        let s = norm * rng.gaussian();
                        let f = fresh_link(&self.link, rng);
                        self.g(&f, s) * s
                    },
                );
                linalg::scale(x, e.value / sq)
            })
        })
    }

    /// One supremum per trial, each trial drawing a fresh ensemble of `m` rows.
    pub fn sup_trials(&self, m: usize, n_trials: usize, seed: u64) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::invalid("m must be positive"));
        }
        let reference = self.reference();
        let n = self.dim();
        Ok(par::map_range(n_trials, |trial| {
            let mut rng = StreamRng::derive(seed, tag::PROCESS_TRIAL, &[m as u64, trial as u64]);
            let mut prod = vec![0.0; self.points.len() * self.directions.len()];
            let mut a = vec![0.0; n];
            let mut gs = vec![0.0; self.points.len()];
            for _ in 0..m {
                rng.fill_gaussian(&mut a);
                let f = fresh_link(&self.link, &mut rng);
                for (g, x) in gs.iter_mut().zip(&self.points) {
                    *g = self.g(&f, linalg::dot(&a, x));
                }
                for (j, v) in self.directions.iter().enumerate() {
                    let h = linalg::dot(&a, v);
                    for (p, g) in gs.iter().enumerate() {
                        prod[p * self.directions.len() + j] += g * h;
                    }
                }
            }
            let mut sup: f64 = 0.0;
            for (p, w) in reference.iter().enumerate() {
                for (j, v) in self.directions.iter().enumerate() {
                    let empirical = prod[p * self.directions.len() + j] / m as f64;
                    sup = sup.max((empirical - linalg::dot(w, v)).abs());
                }
            }
            sup
        }))
    }
}

/// Per-trial suprema of the centered product process over the nets.
#[allow(clippy::too_many_arguments)]
pub fn product_process_sup(
    net_x: &[LatentVector],
    net_v: &[Vec<f64>],
    gen: &MlpGenerator,
    link: &LinkSpec,
    t_scale: f64,
    beta: f64,
    factor: ProcessFactor,
    m: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    ProductProcess::new(net_x, net_v, gen, *link, t_scale, beta, factor)?.sup_trials(m, n_trials, seed)
}

/// Sub-Gaussian and boundedness parameters of the two product-process factors.
///
/// Values are orders of magnitude with unit constants; they feed the reported
/// ratio of observed to predicted suprema and are never pass/fail thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryParams {
    pub a_g: f64,
    pub u_g: f64,
    pub m_g: f64,
    pub l_g: f64,
    pub a_h: f64,
    pub u_h: f64,
    pub m_h: f64,
    pub l_h: f64,
    pub p0: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a_g, self.u_g, self.m_g, self.l_g, self.a_h, self.u_h, self.m_h, self.l_h,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::invalid("theory parameters must be finite, nonnegative, p0 in [0,1]"));
        }
        Ok(())
    }

    /// `h_v(a) = aᵀv` over unit vectors: `A_h, M_h ≍ 1`, `U_h, L_h ≍ √n`.
    fn linear_second_factor(n: usize, a_g: f64, u_g: f64, m_g: f64, l_g: f64, p0: f64) -> Self {
        let root_n = (n as f64).sqrt();
        Self {
            a_g,
            u_g,
            m_g,
            l_g,
            a_h: 1.0,
            u_h: root_n,
            m_h: 1.0,
            l_h: root_n,
            p0,
        }
    }

    /// 1-bit model, `ξ` factor: `A_g ≍ 1`, `U_g ≍ √n`, `P₀ ≍ e^{−n}`; the
    /// increments scale with the Lipschitz constant `T + 2/β` of `ξ_β`.
    pub fn one_bit(n: usize, beta: f64, t_scale: f64) -> Self {
        let lip = t_scale + 2.0 / beta;
        let root_n = (n as f64).sqrt();
        Self::linear_second_factor(n, 1.0, root_n, lip, lip * root_n, (-(n as f64)).exp())
    }

    /// Dithered 1-bit model: same orders as [`TheoryParams::one_bit`] with `T = 1/λ`.
    pub fn dithered_one_bit(n: usize, beta: f64, lambda: f64) -> Self {
        Self::one_bit(n, beta, 1.0 / lambda)
    }

    /// Lipschitz single-index model: `A_g ≍ ψ + μ`, `U_g ≍ (L̂ + μ)√n + B̂`.
    pub fn sim(n: usize, psi: f64, mu: f64, l_hat: f64, b_hat: f64) -> Self {
        let root_n = (n as f64).sqrt();
        let lip = l_hat + mu;
        Self::linear_second_factor(n, psi + mu, lip * root_n + b_hat, lip, lip * root_n, (-(n as f64)).exp())
    }

    /// Dithered uniform quantizer: `A_g, U_g ≍ δ`, `P₀ = 0`.
    pub fn uniform_quantizer(n: usize, delta: f64, beta: f64) -> Self {
        let lip = 1.0 + delta / beta;
        Self::linear_second_factor(n, delta, delta, lip, lip * (n as f64).sqrt(), 0.0)
    }

    /// `S_{g,h} = L_g U_h + M_g A_h`.
    pub fn s_gh(&self) -> f64 {
        self.l_g * self.u_h + self.m_g * self.a_h
    }

    /// `T_{g,h} = L_h U_g + M_h A_g`.
    pub fn t_gh(&self) -> f64 {
        self.l_h * self.u_g + self.m_h * self.a_g
    }

    /// Predicted order `A_g A_h √((𝓗_X + 𝓗_V)/m)` of the supremum, unit constant.
    pub fn predicted_sup(&self, m: usize, entropy_x: f64, entropy_v: f64) -> f64 {
        self.a_g * self.a_h * ((entropy_x + entropy_v).max(0.0) / m as f64).sqrt()
    }
}

#[doc(hidden)]
pub fn moments_of(values: &[f64]) -> McEstimate {
    values
        .iter()
        .fold(Moments::default(), |mut m, &v| {
            m.push(v);
            m
        })
        .estimate()
}
