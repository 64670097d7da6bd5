//! ReLU multilayer perceptron generator `G: B₂ᵏ(r) → ℝⁿ`.
//!
//! Hidden layers apply ReLU, the output layer is affine. Weights are stored
//! row-major per layer (`out x in`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng::{tag, StreamRng};

const WEIGHTS_HEADER: &str = "nlgcs-weights v1";

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        check_dim("layer weights", inputs * outputs, weights.len())?;
        check_dim("layer bias", outputs, bias.len())?;
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    #[inline]
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        linalg::matvec_into(&self.weights, self.outputs, self.inputs, x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm(&self.weights, self.outputs, self.inputs, 100, 1e-8)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGenerator {
    layers: Vec<DenseLayer>,
    latent_radius: f64,
}

/// A point in latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector {
    pub z: Vec<f64>,
}

impl LatentVector {
    pub fn new(z: Vec<f64>) -> Self {
        Self { z }
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.z)
    }
}

impl From<Vec<f64>> for LatentVector {
    fn from(z: Vec<f64>) -> Self {
        Self { z }
    }
}

/// Radial projection onto `B₂ᵏ(r)`.
pub fn project_latent(z: &LatentVector, r: f64) -> LatentVector {
    let mut out = z.clone();
    project_in_place(&mut out.z, r);
    out
}

#[inline]
pub(crate) fn project_in_place(z: &mut [f64], r: f64) {
    let norm = linalg::norm(z);
    if norm > r {
        let s = r / norm;
        z.iter_mut().for_each(|v| *v *= s);
        while linalg::norm(z) > r {
            z.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
        }
    }
}

/// Activations recorded by a forward pass, reused by [`MlpGenerator::backward_with`].
#[derive(Clone, Debug, Default)]
pub struct ForwardTape {
    /// `pre[l]` is the pre-activation of layer `l`.
    pre: Vec<Vec<f64>>,
    /// `act[l]` is the input of layer `l`; `act[0]` is `z`.
    act: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl ForwardTape {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpGenerator {
    pub fn new(layers: Vec<DenseLayer>, latent_radius: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("generator needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim("consecutive layer widths", pair[0].outputs, pair[1].inputs)?;
        }
        if !(latent_radius > 0.0 && latent_radius.is_finite()) {
            return Err(Error::invalid(format!(
                "latent radius must be positive, got {latent_radius}"
            )));
        }
        Ok(Self {
            layers,
            latent_radius,
        })
    }

    /// Square single-layer generator `G(z) = W z`.
    pub fn linear(weights: Vec<f64>, dim: usize, latent_radius: f64) -> Result<Self> {
        let layer = DenseLayer::new(dim, dim, weights, vec![0.0; dim])?;
        Self::new(vec![layer], latent_radius)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn latent_radius(&self) -> f64 {
        self.latent_radius
    }

    pub fn with_latent_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("latent radius must be positive, got {r}")));
        }
        self.latent_radius = r;
        Ok(self)
    }

    pub fn forward(&self, z: &LatentVector) -> Result<Vec<f64>> {
        check_dim("generator input", self.latent_dim(), z.z.len())?;
        let mut tape = ForwardTape::default();
        self.forward_with(&z.z, &mut tape);
        Ok(tape.output().to_vec())
    }

    /// `Jᵀ c` at `z`, with ReLU'(0) = 0.
    pub fn backward(&self, z: &LatentVector, cotangent: &[f64]) -> Result<Vec<f64>> {
        check_dim("generator input", self.latent_dim(), z.z.len())?;
        check_dim("generator cotangent", self.output_dim(), cotangent.len())?;
        let mut tape = ForwardTape::default();
        self.forward_with(&z.z, &mut tape);
        let mut grad = vec![0.0; self.latent_dim()];
        self.backward_with(&mut tape, cotangent, &mut grad);
        Ok(grad)
    }

    /// Forward pass recording activations; dimensions are the caller's responsibility.
    pub fn forward_with<'t>(&self, z: &[f64], tape: &'t mut ForwardTape) -> &'t [f64] {
        let depth = self.layers.len();
        tape.pre.resize_with(depth, Vec::new);
        tape.act.resize_with(depth, Vec::new);
        tape.act[0].clear();
        tape.act[0].extend_from_slice(z);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = std::mem::take(&mut tape.pre[l]);
            pre.resize(layer.outputs, 0.0);
            layer.apply_into(&tape.act[l], &mut pre);
            if l + 1 < depth {
                let next = &mut tape.act[l + 1];
                next.clear();
                next.extend(pre.iter().map(|&p| p.max(0.0)));
            }
            tape.pre[l] = pre;
        }
        tape.output()
    }

    /// Backpropagates `cotangent` through the pass recorded in `tape`.
    pub fn backward_with(&self, tape: &mut ForwardTape, cotangent: &[f64], grad: &mut [f64]) {
        let ForwardTape {
            pre,
            grad_a,
            grad_b,
            ..
        } = tape;
        grad_a.clear();
        grad_a.extend_from_slice(cotangent);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l + 1 < self.layers.len() {
                for (g, &p) in grad_a.iter_mut().zip(&pre[l]) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grad_b.resize(layer.inputs, 0.0);
            linalg::matvec_t_into(&layer.weights, layer.outputs, layer.inputs, grad_a, grad_b);
            std::mem::swap(grad_a, grad_b);
        }
        grad.copy_from_slice(grad_a);
    }

    /// Product of per-layer spectral norms, an upper bound on the Lipschitz constant.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.layers.iter().map(DenseLayer::spectral_norm).product()
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_weights_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load_weights(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_weights_text(&text)
    }

    pub fn to_weights_text(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.layer_dims().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{WEIGHTS_HEADER}");
        let _ = writeln!(out, "dims: {}", dims.join(" "));
        let _ = writeln!(out, "radius: {:.16e}", self.latent_radius);
        for layer in &self.layers {
            out.push_str("W\n");
            for row in layer.weights.chunks_exact(layer.inputs) {
                push_floats(&mut out, row);
            }
            out.push_str("b\n");
            push_floats(&mut out, &layer.bias);
        }
        out
    }

    pub fn from_weights_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: text.lines().count() + 1,
                msg: format!("unexpected end of file, expected {what}"),
            })
        };

        let (line, header) = next("header")?;
        if header != WEIGHTS_HEADER {
            return Err(parse_err(line, format!("expected `{WEIGHTS_HEADER}`, found `{header}`")));
        }
        let (line, dims_line) = next("dims line")?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims:")
            .ok_or_else(|| parse_err(line, "expected `dims:`"))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(line, format!("bad dim `{t}`: {e}"))))
            .collect::<Result<_>>()?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(parse_err(line, "need at least two positive dims"));
        }
        let (line, radius_line) = next("radius line")?;
        let radius: f64 = radius_line
            .strip_prefix("radius:")
            .ok_or_else(|| parse_err(line, "expected `radius:`"))?
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("bad radius: {e}")))?;

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let (line, marker) = next("`W` block")?;
            if marker != "W" {
                return Err(parse_err(line, format!("expected `W`, found `{marker}`")));
            }
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                let (line, row) = next("weight row")?;
                weights.extend(parse_floats(line, row, inputs)?);
            }
            let (line, marker) = next("`b` line")?;
            if marker != "b" {
                return Err(parse_err(line, format!("expected `b`, found `{marker}`")));
            }
            let (line, row) = next("bias values")?;
            let bias = parse_floats(line, row, outputs)?;
            layers.push(
                DenseLayer::new(inputs, outputs, weights, bias)
                    .map_err(|e| parse_err(line, e.to_string()))?,
            );
        }
        if let Ok((line, extra)) = next("") {
            return Err(parse_err(line, format!("trailing content `{extra}`")));
        }
        Self::new(layers, radius).map_err(|e| parse_err(3, e.to_string()))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn push_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn parse_floats(line: usize, row: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = row
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(line, format!("bad float `{t}`: {e}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

/// Random ReLU generator with `N(0, 2/fan_in)` weights and zero biases.
///
/// The latent radius defaults to `√k`.
pub fn random_generator(layer_dims: &[usize], latent_radius: Option<f64>, seed: u64) -> Result<MlpGenerator> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::invalid("random generator needs at least two positive dims"));
    }
    let layers = layer_dims
        .windows(2)
        .enumerate()
        .map(|(l, pair)| {
            let (inputs, outputs) = (pair[0], pair[1]);
            let std = (2.0 / inputs as f64).sqrt();
            let mut rng = StreamRng::derive(seed, tag::GENERATOR, &[l as u64]);
            let weights = (0..inputs * outputs).map(|_| std * rng.gaussian()).collect();
            DenseLayer::new(inputs, outputs, weights, vec![0.0; outputs])
        })
        .collect::<Result<Vec<_>>>()?;
    let radius = latent_radius.unwrap_or((layer_dims[0] as f64).sqrt());
    MlpGenerator::new(layers, radius)
}
