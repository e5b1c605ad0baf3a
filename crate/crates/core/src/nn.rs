//! Minimal feedforward substrate with reverse-mode gradients. Two layer
//! kinds: point-estimate dense layers and diagonal-Gaussian variational
//! layers sampled with the reparameterization trick (W = mu + softplus(rho)
//! * eps). The output head is always a numerically stable softmax, so every
//! network maps features to a long-only fully-invested weight vector by
//! construction.
//!
//! Parameters live in one flat layout shared by the optimizer, the
//! finite-difference tests and the checkpoint format: per layer, a dense
//! layer stores [weight row-major, bias]; a variational layer stores
//! [mu_w row-major, rho_w row-major, mu_b, rho_b].

use std::io::Read as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocators::WeightVector;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

/// Hidden-layer nonlinearity. Bounded activations keep tiny-data training
/// stable, so tanh is the only supported choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's own output.
    fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Layer widths including input and output, e.g. [576, 256, 128, 36].
    pub sizes: Vec<usize>,
    /// One flag per weight map; true marks a variational layer.
    pub variational: Vec<bool>,
    pub activation: Activation,
    /// Prior std sigma_p shared by every variational layer.
    pub prior_sigma: f64,
}

impl NetworkSpec {
    /// Policy network for `n_assets` assets: input 16 features per asset,
    /// output one logit per asset. Bayesian variants make the final two
    /// weight maps variational.
    pub fn policy(n_assets: usize, hidden: &[usize], bayesian: bool) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(n_assets * crate::features::N_FEATURES);
        sizes.extend_from_slice(hidden);
        sizes.push(n_assets);
        let n_maps = sizes.len() - 1;
        let variational: Vec<bool> =
            (0..n_maps).map(|l| bayesian && l >= n_maps.saturating_sub(2)).collect();
        NetworkSpec { sizes, variational, activation: Activation::Tanh, prior_sigma: 1.0 }
    }

    pub fn n_maps(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::Config("network needs at least input and output sizes".into()));
        }
        if self.sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("zero-width layer".into()));
        }
        if self.variational.len() != self.n_maps() {
            return Err(Error::Config(format!(
                "{} variational flags for {} weight maps",
                self.variational.len(),
                self.n_maps()
            )));
        }
        if !(self.prior_sigma > 0.0) {
            return Err(Error::Config(format!("prior sigma {} not positive", self.prior_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalLayer {
    pub mu_w: Mat,
    pub rho_w: Mat,
    pub mu_b: Vec<f64>,
    pub rho_b: Vec<f64>,
    pub prior_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Variational(VariationalLayer),
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Dense(l) => l.weight.rows(),
            Layer::Variational(l) => l.mu_w.rows(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Dense(l) => l.weight.cols(),
            Layer::Variational(l) => l.mu_w.cols(),
        }
    }

    pub fn param_count(&self) -> usize {
        let (o, i) = (self.out_dim(), self.in_dim());
        match self {
            Layer::Dense(_) => o * i + o,
            Layer::Variational(_) => 2 * (o * i) + 2 * o,
        }
    }
}

/// Numerically stable softplus, zero exactly once exp(x) underflows.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 20.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax; the output is on the simplex for any finite
/// logits and cannot overflow.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// How variational layers realize their weights in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Use the posterior means.
    Deterministic,
    /// Reparameterized draw: per-layer noise from the stream keyed by
    /// (seed, draw, layer), so the same pair always reproduces the pass.
    Sampled { seed: u64, draw: u64 },
}

struct VarSample {
    eps_w: Mat,
    eps_b: Vec<f64>,
    w_eff: Mat,
}

struct LayerRecord {
    input: Vec<f64>,
    z: Vec<f64>,
    sample: Option<VarSample>,
}

/// Intermediates of one forward pass. Valid for `backward` only against
/// the same network with unchanged parameters.
pub struct Tape {
    records: Vec<LayerRecord>,
    /// Softmax probabilities (the emitted weights).
    pub output: Vec<f64>,
}

impl Tape {
    /// Pre-softmax logits of the pass.
    pub fn logits(&self) -> &[f64] {
        &self.records.last().expect("tape has at least one layer").z
    }
}

/// Flat-layout position of one layer's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub kind: String,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Index of the layer's first parameter in the flat vector.
    pub offset: usize,
    pub len: usize,
}

pub fn layer_offsets(spec: &NetworkSpec) -> Vec<LayerLayout> {
    let mut out = Vec::with_capacity(spec.n_maps());
    let mut offset = 0;
    for l in 0..spec.n_maps() {
        let (i, o) = (spec.sizes[l], spec.sizes[l + 1]);
        let (kind, len) = if spec.variational[l] {
            ("variational", 2 * (o * i) + 2 * o)
        } else {
            ("dense", o * i + o)
        };
        out.push(LayerLayout { kind: kind.into(), in_dim: i, out_dim: o, offset, len });
        offset += len;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Deterministic initialization: scaled uniform fan-in for weights
    /// (also the posterior means), zero biases, and posterior stds starting
    /// at 5% of the prior std.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Network> {
        spec.validate()?;
        let rho0 = softplus_inv(0.05 * spec.prior_sigma);
        let mut layers = Vec::with_capacity(spec.n_maps());
        for l in 0..spec.n_maps() {
            let (i, o) = (spec.sizes[l], spec.sizes[l + 1]);
            let mut r = rng::substream(seed, "nn-init", l as u64);
            let bound = 1.0 / (i as f64).sqrt();
            let w = Mat::from_fn(o, i, |_, _| r.random_range(-bound..bound));
            if spec.variational[l] {
                layers.push(Layer::Variational(VariationalLayer {
                    mu_w: w,
                    rho_w: Mat::from_fn(o, i, |_, _| rho0),
                    mu_b: vec![0.0; o],
                    rho_b: vec![rho0; o],
                    prior_sigma: spec.prior_sigma,
                }));
            } else {
                layers.push(Layer::Dense(DenseLayer { weight: w, bias: vec![0.0; o] }));
            }
        }
        Ok(Network { spec, layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Dense(l) => {
                    out.extend_from_slice(l.weight.data());
                    out.extend_from_slice(&l.bias);
                }
                Layer::Variational(l) => {
                    out.extend_from_slice(l.mu_w.data());
                    out.extend_from_slice(l.rho_w.data());
                    out.extend_from_slice(&l.mu_b);
                    out.extend_from_slice(&l.rho_b);
                }
            }
        }
        out
    }

    pub fn from_flat(spec: NetworkSpec, flat: &[f64]) -> Result<Network> {
        spec.validate()?;
        let layouts = layer_offsets(&spec);
        let total: usize = layouts.iter().map(|l| l.len).sum();
        if flat.len() != total {
            return Err(Error::Shape(format!(
                "{} parameters for a network needing {}",
                flat.len(),
                total
            )));
        }
        let mut layers = Vec::with_capacity(layouts.len());
        for (l, lay) in layouts.iter().enumerate() {
            let (i, o) = (lay.in_dim, lay.out_dim);
            let s = &flat[lay.offset..lay.offset + lay.len];
            if spec.variational[l] {
                let wi = o * i;
                layers.push(Layer::Variational(VariationalLayer {
                    mu_w: Mat::from_vec(o, i, s[..wi].to_vec()),
                    rho_w: Mat::from_vec(o, i, s[wi..2 * wi].to_vec()),
                    mu_b: s[2 * wi..2 * wi + o].to_vec(),
                    rho_b: s[2 * wi + o..].to_vec(),
                    prior_sigma: spec.prior_sigma,
                }));
            } else {
                let wi = o * i;
                layers.push(Layer::Dense(DenseLayer {
                    weight: Mat::from_vec(o, i, s[..wi].to_vec()),
                    bias: s[wi..].to_vec(),
                }));
            }
        }
        Ok(Network { spec, layers })
    }

    /// One forward pass, recording intermediates for backprop.
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<(WeightVector, Tape)> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "input of {} for a network expecting {}",
                x.len(),
                self.spec.input_dim()
            )));
        }
        let n_maps = self.layers.len();
        let mut records = Vec::with_capacity(n_maps);
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let (z, sample) = match layer {
                Layer::Dense(d) => (affine(&d.weight, &a, &d.bias), None),
                Layer::Variational(v) => match mode {
                    Mode::Deterministic => (affine(&v.mu_w, &a, &v.mu_b), None),
                    Mode::Sampled { seed, draw } => {
                        let mut r = rng::substream2(seed, "nn-eps", draw, l as u64);
                        let (o, i) = (v.mu_w.rows(), v.mu_w.cols());
                        let eps_w = Mat::from_fn(o, i, |_, _| {
                            let e: f64 = StandardNormal.sample(&mut r);
                            e
                        });
                        let eps_b: Vec<f64> = (0..o)
                            .map(|_| {
                                let e: f64 = StandardNormal.sample(&mut r);
                                e
                            })
                            .collect();
                        let w_eff = Mat::from_fn(o, i, |r_, c_| {
                            v.mu_w[(r_, c_)] + softplus(v.rho_w[(r_, c_)]) * eps_w[(r_, c_)]
                        });
                        let b_eff: Vec<f64> = (0..o)
                            .map(|j| v.mu_b[j] + softplus(v.rho_b[j]) * eps_b[j])
                            .collect();
                        (affine(&w_eff, &a, &b_eff), Some(VarSample { eps_w, eps_b, w_eff }))
                    }
                },
            };
            let next = if l + 1 == n_maps {
                z.clone()
            } else {
                z.iter().map(|&v| self.spec.activation.apply(v)).collect()
            };
            records.push(LayerRecord { input: std::mem::replace(&mut a, next), z, sample });
        }
        let probs = softmax(&a);
        let weights = WeightVector::new(probs.clone())?;
        Ok((weights, Tape { records, output: probs }))
    }

    /// Reverse-mode gradients from dL/d(output weights). Chains through the
    /// softmax Jacobian, then the layers.
    pub fn backward(&self, tape: &Tape, d_output: &[f64]) -> Result<Vec<f64>> {
        let n = self.spec.output_dim();
        if d_output.len() != n || tape.output.len() != n {
            return Err(Error::Shape("stale tape: output dimension mismatch".into()));
        }
        let p = &tape.output;
        let inner: f64 = d_output.iter().zip(p).map(|(g, pi)| g * pi).sum();
        let d_logits: Vec<f64> =
            d_output.iter().zip(p).map(|(g, pi)| pi * (g - inner)).collect();
        self.backward_from_logits(tape, &d_logits)
    }

    /// Reverse-mode gradients from dL/d(logits), bypassing the softmax
    /// head. The returned vector follows the flat parameter layout.
    pub fn backward_from_logits(&self, tape: &Tape, d_logits: &[f64]) -> Result<Vec<f64>> {
        if tape.records.len() != self.layers.len() {
            return Err(Error::Shape("stale tape: layer count mismatch".into()));
        }
        for (rec, layer) in tape.records.iter().zip(&self.layers) {
            if rec.input.len() != layer.in_dim() || rec.z.len() != layer.out_dim() {
                return Err(Error::Shape("stale tape: layer shape mismatch".into()));
            }
        }
        if d_logits.len() != self.spec.output_dim() {
            return Err(Error::Shape("stale tape: logit dimension mismatch".into()));
        }
        let layouts = layer_offsets(&self.spec);
        let mut flat = vec![0.0; self.param_count()];
        let mut g = d_logits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let rec = &tape.records[l];
            let lay = &layouts[l];
            let (o, i) = (lay.out_dim, lay.in_dim);
            let seg = &mut flat[lay.offset..lay.offset + lay.len];
            // Effective weight for the input-gradient path.
            let w_eff: &Mat = match (&self.layers[l], &rec.sample) {
                (_, Some(s)) => &s.w_eff,
                (Layer::Dense(d), None) => &d.weight,
                (Layer::Variational(v), None) => &v.mu_w,
            };
            match &self.layers[l] {
                Layer::Dense(_) => {
                    // seg = [d_weight, d_bias]
                    for r in 0..o {
                        for c in 0..i {
                            seg[r * i + c] = g[r] * rec.input[c];
                        }
                        seg[o * i + r] = g[r];
                    }
                }
                Layer::Variational(v) => {
                    // seg = [d_mu_w, d_rho_w, d_mu_b, d_rho_b]
                    let wi = o * i;
                    for r in 0..o {
                        for c in 0..i {
                            let dw = g[r] * rec.input[c];
                            seg[r * i + c] = dw;
                            if let Some(s) = &rec.sample {
                                seg[wi + r * i + c] =
                                    dw * s.eps_w[(r, c)] * sigmoid(v.rho_w[(r, c)]);
                            }
                        }
                        seg[2 * wi + r] = g[r];
                        if let Some(s) = &rec.sample {
                            seg[2 * wi + o + r] = g[r] * s.eps_b[r] * sigmoid(v.rho_b[r]);
                        }
                    }
                }
            }
            if l > 0 {
                // g_input = W^T g, then through the previous activation.
                let mut gi = vec![0.0; i];
                for r in 0..o {
                    let gr = g[r];
                    for c in 0..i {
                        gi[c] += w_eff[(r, c)] * gr;
                    }
                }
                for c in 0..i {
                    gi[c] *= self.spec.activation.deriv_from_output(rec.input[c]);
                }
                g = gi;
            }
        }
        Ok(flat)
    }

    /// Total KL divergence of all variational layers against their priors.
    pub fn kl_total(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Variational(v) => Some(kl_divergence(v)),
                Layer::Dense(_) => None,
            })
            .sum()
    }

    /// Gradient of `kl_total` in the flat layout (zero on dense segments).
    pub fn kl_gradient_flat(&self) -> Vec<f64> {
        let layouts = layer_offsets(&self.spec);
        let mut flat = vec![0.0; self.param_count()];
        for (l, layer) in self.layers.iter().enumerate() {
            let v = match layer {
                Layer::Variational(v) => v,
                Layer::Dense(_) => continue,
            };
            let lay = &layouts[l];
            let (o, i) = (lay.out_dim, lay.in_dim);
            let wi = o * i;
            let sp2 = v.prior_sigma * v.prior_sigma;
            let seg = &mut flat[lay.offset..lay.offset + lay.len];
            for r in 0..o {
                for c in 0..i {
                    let sig = softplus(v.rho_w[(r, c)]);
                    seg[r * i + c] = v.mu_w[(r, c)] / sp2;
                    seg[wi + r * i + c] = (sig / sp2 - 1.0 / sig) * sigmoid(v.rho_w[(r, c)]);
                }
                let sig = softplus(v.rho_b[r]);
                seg[2 * wi + r] = v.mu_b[r] / sp2;
                seg[2 * wi + o + r] = (sig / sp2 - 1.0 / sig) * sigmoid(v.rho_b[r]);
            }
        }
        flat
    }

    /// Mean of `m` sampled passes plus the per-asset cross-sample standard
    /// deviation (population convention, so m = 1 gives zero dispersion).
    pub fn mc_average(&self, x: &[f64], m: usize, seed: u64) -> Result<(WeightVector, Vec<f64>)> {
        if m == 0 {
            return Err(Error::Config("mc_average needs at least one sample".into()));
        }
        let n = self.spec.output_dim();
        let mut samples = Vec::with_capacity(m);
        for draw in 0..m {
            let (w, _) = self.forward(x, Mode::Sampled { seed, draw: draw as u64 })?;
            samples.push(w.as_slice().to_vec());
        }
        let mut mean = vec![0.0; n];
        for s in &samples {
            for j in 0..n {
                mean[j] += s[j];
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        // Two-pass variance: identical samples give exactly zero spread.
        let mut disp = vec![0.0; n];
        for s in &samples {
            for j in 0..n {
                disp[j] += (s[j] - mean[j]).powi(2);
            }
        }
        disp.iter_mut().for_each(|v| *v = (*v / m as f64).sqrt());
        Ok((WeightVector::new(mean)?, disp))
    }
}

fn affine(w: &Mat, x: &[f64], b: &[f64]) -> Vec<f64> {
    let (o, i) = (w.rows(), w.cols());
    let mut out = b.to_vec();
    for r in 0..o {
        let row = w.row(r);
        let mut acc = 0.0;
        for c in 0..i {
            acc += row[c] * x[c];
        }
        out[r] += acc;
    }
    out
}

/// Closed-form KL of a diagonal Gaussian posterior against the zero-mean
/// isotropic prior: 1/2 sum[(sigma_q^2 + mu^2)/sigma_p^2 - 1 -
/// log(sigma_q^2/sigma_p^2)] over weights and biases.
pub fn kl_divergence(layer: &VariationalLayer) -> f64 {
    let sp2 = layer.prior_sigma * layer.prior_sigma;
    let term = |mu: f64, rho: f64| {
        let s2 = softplus(rho).powi(2);
        0.5 * ((s2 + mu * mu) / sp2 - 1.0 - (s2 / sp2).ln())
    };
    let mut total = 0.0;
    for r in 0..layer.mu_w.rows() {
        for c in 0..layer.mu_w.cols() {
            total += term(layer.mu_w[(r, c)], layer.rho_w[(r, c)]);
        }
    }
    for j in 0..layer.mu_b.len() {
        total += term(layer.mu_b[j], layer.rho_b[j]);
    }
    total
}

/// Checkpoint header stored as one JSON line ahead of the parameter block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub spec: NetworkSpec,
    pub layers: Vec<LayerLayout>,
    pub param_count: usize,
    /// Training provenance: seeds, schedule, data identity.
    pub meta: serde_json::Value,
}

pub const CHECKPOINT_FORMAT: &str = "distfolio-net-v1";

/// Write a checkpoint: JSON header line, then the flat parameters as
/// little-endian 64-bit floats in layout order.
pub fn save_checkpoint(net: &Network, meta: serde_json::Value, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        spec: net.spec.clone(),
        layers: layer_offsets(&net.spec),
        param_count: net.param_count(),
        meta,
    };
    let mut bytes = serde_json::to_string(&header)?.into_bytes();
    bytes.push(b'\n');
    for v in net.to_flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointHeader)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint(format!("{}: no header line", path.display())))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Checkpoint(format!("{}: bad header: {e}", path.display())))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "{}: format {:?} is not {CHECKPOINT_FORMAT:?}",
            path.display(),
            header.format
        )));
    }
    let block = &bytes[nl + 1..];
    if block.len() != header.param_count * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: parameter block holds {} bytes, header promises {}",
            path.display(),
            block.len(),
            header.param_count * 8
        )));
    }
    let flat: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let net = Network::from_flat(header.spec.clone(), &flat)?;
    Ok((net, header))
}
