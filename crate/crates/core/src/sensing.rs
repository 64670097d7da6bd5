//! Frozen measurement ensembles `(A, τ, f)` and the observation map `y = f(Ax) + η`.
//!
//! `A` has i.i.d. `N(0, 1)` entries stored row-major. A sampled ensemble never
//! changes; recovering many signals against it is what makes an experiment uniform.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::linkmodels::{DitherRealization, LinkSpec, SimLink};
use crate::rng::{tag, StreamRng};

const DUMP_MAGIC: &[u8; 16] = b"nlgcs-ens v1\0\0\0\0";

#[derive(Debug)]
pub struct SensingEnsemble {
    m: usize,
    n: usize,
    a_matrix: Vec<f64>,
    link: LinkSpec,
    dithers: DitherRealization,
    /// Standard-normal draws of a noisy single-index link, one per row.
    link_draws: Vec<f64>,
    noise_sigma: f64,
    seed: u64,
    gram: OnceLock<Vec<f64>>,
    sigma_max: OnceLock<f64>,
}

impl Clone for SensingEnsemble {
    fn clone(&self) -> Self {
        Self {
            m: self.m,
            n: self.n,
            a_matrix: self.a_matrix.clone(),
            link: self.link,
            dithers: self.dithers.clone(),
            link_draws: self.link_draws.clone(),
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            gram: OnceLock::new(),
            sigma_max: OnceLock::new(),
        }
    }
}

impl PartialEq for SensingEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
            && self.n == other.n
            && self.a_matrix == other.a_matrix
            && self.link == other.link
            && self.dithers == other.dithers
            && self.link_draws == other.link_draws
            && self.noise_sigma == other.noise_sigma
            && self.seed == other.seed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationVector {
    pub y: Vec<f64>,
}

/// Samples `A`, the dithers and any link noise, each from its own stream of `seed`.
pub fn sample_ensemble(
    m: usize,
    n: usize,
    link: LinkSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<SensingEnsemble> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("ensemble needs m, n >= 1, got m={m}, n={n}")));
    }
    link.validate()?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be nonnegative, got {noise_sigma}")));
    }
    let mut rng = StreamRng::derive(seed, tag::SENSING_MATRIX, &[]);
    let a_matrix = rng.gaussian_vec(m * n);
    let dithers = match link.dither_range() {
        Some((lo, hi)) => {
            let mut rng = StreamRng::derive(seed, tag::DITHER, &[]);
            DitherRealization {
                values: (0..m).map(|_| rng.uniform_in(lo, hi)).collect(),
            }
        }
        None => DitherRealization::default(),
    };
    let link_draws = if link.needs_link_draw() {
        StreamRng::derive(seed, tag::LINK_NOISE, &[]).gaussian_vec(m)
    } else {
        Vec::new()
    };
    Ok(SensingEnsemble {
        m,
        n,
        a_matrix,
        link,
        dithers,
        link_draws,
        noise_sigma,
        seed,
        gram: OnceLock::new(),
            sigma_max: OnceLock::new(),
    })
}

impl SensingEnsemble {
    /// Ensemble with an explicit sensing matrix and no dithers, for tests and
    /// externally supplied matrices.
    pub fn from_matrix(m: usize, n: usize, a_matrix: Vec<f64>, link: LinkSpec) -> Result<Self> {
        check_dim("sensing matrix", m * n, a_matrix.len())?;
        if link.is_dithered() || link.needs_link_draw() {
            return Err(Error::invalid("from_matrix supports only deterministic links"));
        }
        Ok(Self {
            m,
            n,
            a_matrix,
            link,
            dithers: DitherRealization::default(),
            link_draws: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
            gram: OnceLock::new(),
            sigma_max: OnceLock::new(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a_matrix(&self) -> &[f64] {
        &self.a_matrix
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a_matrix[i * self.n..(i + 1) * self.n]
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn dithers(&self) -> &DitherRealization {
        &self.dithers
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `AᵀA`, computed once on first use.
    pub fn gram(&self) -> &[f64] {
        self.gram
            .get_or_init(|| linalg::gram(&self.a_matrix, self.m, self.n))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::matvec(&self.a_matrix, self.m, self.n, x)
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        linalg::matvec_t(&self.a_matrix, self.m, self.n, y)
    }

    /// Largest singular value of `A`.
    pub fn spectral_norm(&self) -> f64 {
        *self
            .sigma_max
            .get_or_init(|| linalg::spectral_norm(self.gram(), self.n, self.n, 500, 1e-12).sqrt())
    }

    /// The frozen `f_i` of measurement `i`.
    #[inline]
    pub fn link_realization(&self, i: usize) -> crate::linkmodels::RealizedLink {
        let draw = self.link_draws.get(i).copied().unwrap_or(0.0);
        self.link.realize(self.dithers.get(i), draw)
    }

    /// `yᵢ = fᵢ(⟨aᵢ, x⟩) + ηᵢ`, with `η` drawn from the stream selected by
    /// `noise_seed_offset`.
    pub fn observe(&self, x: &[f64], noise_seed_offset: u64) -> Result<ObservationVector> {
        check_dim("observed signal", self.n, x.len())?;
        let ax = self.apply(x);
        let mut y: Vec<f64> = ax
            .iter()
            .enumerate()
            .map(|(i, &u)| self.link_realization(i).eval(u))
            .collect();
        if self.noise_sigma > 0.0 {
            let mut rng = StreamRng::derive(self.seed, tag::OBS_NOISE, &[noise_seed_offset]);
            for yi in &mut y {
                *yi += self.noise_sigma * rng.gaussian();
            }
        }
        Ok(ObservationVector { y })
    }

    /// Writes the `nlgcs-ens v1` binary dump.
    ///
    /// Layout, all little-endian: 16-byte magic; `u64` m, n, seed, link tag,
    /// sim-link tag; `f64` λ, δ, sim noise σ, observation noise σ; `u64` dither
    /// count `d`; `m·n` doubles of `A` row-major; `d` dither doubles.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(120 + 8 * (self.a_matrix.len() + self.dithers.len()));
        buf.extend_from_slice(DUMP_MAGIC);
        let (lambda, delta, sim_tag, sim_sigma) = match self.link {
            LinkSpec::Sign => (0.0, 0.0, 0, 0.0),
            LinkSpec::DitheredSign { lambda } => (lambda, 0.0, 0, 0.0),
            LinkSpec::DitheredUniformQuantizer { delta } => (0.0, delta, 0, 0.0),
            LinkSpec::Sim { link, noise_sigma } => (0.0, 0.0, sim_link_tag(link), noise_sigma),
        };
        for v in [self.m as u64, self.n as u64, self.seed, self.link.kind().tag(), sim_tag] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in [lambda, delta, sim_sigma, self.noise_sigma] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.dithers.len() as u64).to_le_bytes());
        for v in self.a_matrix.iter().chain(&self.dithers.values) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a dump written by [`SensingEnsemble::write_dump`]. Link-noise draws
    /// are regenerated from the stored seed.
    pub fn read_dump(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cursor = DumpCursor { bytes: &bytes, pos: 0 };
        if cursor.take(16)? != DUMP_MAGIC {
            return Err(Error::Parse { line: 0, msg: "bad ensemble dump magic".into() });
        }
        let m = cursor.u64()? as usize;
        let n = cursor.u64()? as usize;
        let seed = cursor.u64()?;
        let kind = cursor.u64()?;
        let sim_tag = cursor.u64()?;
        let lambda = cursor.f64()?;
        let delta = cursor.f64()?;
        let sim_sigma = cursor.f64()?;
        let noise_sigma = cursor.f64()?;
        let dither_len = cursor.u64()? as usize;
        let link = match kind {
            0 => LinkSpec::Sign,
            1 => LinkSpec::dithered_sign(lambda)?,
            2 => LinkSpec::quantizer(delta)?,
            3 => LinkSpec::sim(sim_link_from_tag(sim_tag)?, sim_sigma)?,
            t => return Err(Error::Parse { line: 0, msg: format!("unknown link tag {t}") }),
        };
        let a_matrix = (0..m * n).map(|_| cursor.f64()).collect::<Result<Vec<_>>>()?;
        let values = (0..dither_len).map(|_| cursor.f64()).collect::<Result<Vec<_>>>()?;
        if cursor.pos != bytes.len() {
            return Err(Error::Parse { line: 0, msg: "trailing bytes in ensemble dump".into() });
        }
        let link_draws = if link.needs_link_draw() {
            StreamRng::derive(seed, tag::LINK_NOISE, &[]).gaussian_vec(m)
        } else {
            Vec::new()
        };
        Ok(Self {
            m,
            n,
            a_matrix,
            link,
            dithers: DitherRealization { values },
            link_draws,
            noise_sigma,
            seed,
            gram: OnceLock::new(),
            sigma_max: OnceLock::new(),
        })
    }
}

fn sim_link_tag(link: SimLink) -> u64 {
    match link {
        SimLink::Identity => 0,
        SimLink::Relu => 1,
        SimLink::Tanh => 2,
    }
}

fn sim_link_from_tag(t: u64) -> Result<SimLink> {
    match t {
        0 => Ok(SimLink::Identity),
        1 => Ok(SimLink::Relu),
        2 => Ok(SimLink::Tanh),
        t => Err(Error::Parse { line: 0, msg: format!("unknown sim link tag {t}") }),
    }
}

struct DumpCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl DumpCursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("ensemble dump truncated at byte {}", self.pos),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
