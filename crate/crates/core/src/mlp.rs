//! Fully connected bias-free ReLU network with sqrt(m) output scaling,
//! per-sample backprop, DP-SGD training with Poisson sampling, and the
//! tangent-feature linearization used by the approximation experiments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::privacy::{dpsgd_noise_std, strict_dpsgd_noise_std, NoiseChannel, PrivacyBudget};
use crate::rng::Rng;
use crate::synth::Dataset;

/// Network weights: W_1 is m x d, W_2..W_{L-1} are m x m, W_L is 1 x m.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Matrix>,
}

impl MlpParams {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].rows
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            layers: self.layers.iter().map(|l| Matrix::zeros(l.rows, l.cols)).collect(),
        }
    }

    /// Frobenius norm of the whole parameter vector.
    pub fn frob_norm(&self) -> f64 {
        self.layers.iter().map(|l| { let n = l.frob_norm(); n * n }).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &MlpParams) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| crate::linalg::dot(&a.data, &b.data))
            .sum()
    }

    pub fn add_scaled(&mut self, s: f64, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(s, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            l.scale(s);
        }
    }

    pub fn total_dim(&self) -> usize {
        self.layers.iter().map(|l| l.data.len()).sum()
    }
}

/// Random init: hidden entries N(0, 2/m), output entries N(0, 1/m).
pub fn init_params(rng: &mut Rng, l: usize, m: usize, d: usize) -> Result<MlpParams> {
    if l < 2 || m == 0 || d == 0 {
        return Err(invalid("init_params: need L >= 2, m >= 1, d >= 1"));
    }
    let hidden_std = (2.0 / m as f64).sqrt();
    let out_std = (1.0 / m as f64).sqrt();
    let mut layers = Vec::with_capacity(l);
    for li in 0..l {
        let (rows, cols, std) = if li == 0 {
            (m, d, hidden_std)
        } else if li == l - 1 {
            (1, m, out_std)
        } else {
            (m, m, hidden_std)
        };
        let data = crate::rng::gaussian_vector(rng, rows * cols, std)?;
        layers.push(Matrix::from_data(rows, cols, data));
    }
    Ok(MlpParams { layers })
}

/// Forward pass record: post-activation hidden vectors, activation masks,
/// and the scalar output f = sqrt(m) W_L h_{L-1}.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub hidden: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub output: f64,
}

pub fn forward(params: &MlpParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.input_dim() {
        return Err(crate::Error::DimensionMismatch {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    let l = params.depth();
    let mut hidden = Vec::with_capacity(l - 1);
    let mut masks = Vec::with_capacity(l - 1);
    let mut h = x.to_vec();
    for layer in &params.layers[..l - 1] {
        let pre = layer.matvec(&h);
        let mask: Vec<bool> = pre.iter().map(|&p| p > 0.0).collect();
        h = pre.iter().map(|&p| p.max(0.0)).collect();
        masks.push(mask);
        hidden.push(h.clone());
    }
    let out = (params.width() as f64).sqrt() * crate::linalg::dot(params.layers[l - 1].row(0), &h);
    Ok(ForwardTrace { hidden, masks, output: out })
}

/// Scalar losses on the network output.
#[derive(Debug, Clone, Copy)]
pub enum Loss {
    /// ln(1 + exp(-y f)) with labels y in {-1, +1}.
    Logistic,
    /// (clamp(f) - y)^2 / 2 with the output clamped to [-bound, bound].
    Squared { bound: f64 },
}

impl Loss {
    pub fn value(&self, f: f64, y: f64) -> f64 {
        match self {
            Loss::Logistic => {
                let z = -y * f;
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            Loss::Squared { bound } => {
                let fc = f.clamp(-bound, *bound);
                (fc - y) * (fc - y) / 2.0
            }
        }
    }

    /// dl/df.
    pub fn derivative(&self, f: f64, y: f64) -> f64 {
        match self {
            Loss::Logistic => {
                let z = -y * f;
                let s = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { let e = z.exp(); e / (1.0 + e) };
                -y * s
            }
            Loss::Squared { bound } => {
                if f.abs() > *bound {
                    0.0
                } else {
                    f - y
                }
            }
        }
    }
}

/// dl/df at the output of a completed forward pass.
pub fn output_grad(loss: &Loss, trace: &ForwardTrace, y: f64) -> f64 {
    loss.derivative(trace.output, y)
}

/// Gradient of the network output f with respect to every layer, from a
/// forward trace. ReLU derivative at exactly 0 is 0.
pub fn output_param_grad(params: &MlpParams, x: &[f64], trace: &ForwardTrace) -> MlpParams {
    let l = params.depth();
    let m = params.width();
    let sqm = (m as f64).sqrt();
    let mut grads = vec![Matrix::zeros(0, 0); l];
    // output layer: sqrt(m) h_{L-1}^T
    let mut gl = Matrix::zeros(1, m);
    for (j, &h) in trace.hidden[l - 2].iter().enumerate() {
        gl.data[j] = sqm * h;
    }
    grads[l - 1] = gl;
    // delta: gradient of f with respect to the post-activation h_l
    let mut delta: Vec<f64> = params.layers[l - 1].row(0).iter().map(|&w| sqm * w).collect();
    for li in (0..l - 1).rev() {
        let mask = &trace.masks[li];
        let delta_pre: Vec<f64> =
            delta.iter().zip(mask).map(|(&d, &on)| if on { d } else { 0.0 }).collect();
        let input: &[f64] = if li == 0 { x } else { &trace.hidden[li - 1] };
        grads[li] = Matrix::outer(&delta_pre, input);
        if li > 0 {
            delta = params.layers[li].matvec_t(&delta_pre);
        }
    }
    MlpParams { layers: grads }
}

/// Backpropagated gradient of the loss for one sample.
pub fn per_sample_grad(params: &MlpParams, x: &[f64], y: f64, loss: &Loss) -> Result<MlpParams> {
    let trace = forward(params, x)?;
    let e = output_grad(loss, &trace, y);
    let mut g = output_param_grad(params, x, &trace);
    g.scale(e);
    Ok(g)
}

/// Independently rescale each layer onto the Frobenius ball of radius r.
pub fn project_layers(params: &mut MlpParams, r: f64) {
    for layer in params.layers.iter_mut() {
        let n = layer.frob_norm();
        if n > r {
            if r == 0.0 {
                layer.data.iter_mut().for_each(|v| *v = 0.0);
            } else {
                layer.scale(r / n);
            }
        }
    }
}

/// DP-SGD settings. `noise_std` overrides the calibrated level when set;
/// `strict` switches to advanced-composition calibration.
#[derive(Debug, Clone)]
pub struct DpSgdConfig {
    pub eta: f64,
    pub expected_batch: f64,
    pub iterations: usize,
    pub clip: f64,
    pub radius: f64,
    pub noise_std: Option<f64>,
    pub c2: f64,
    pub strict: bool,
}

impl DpSgdConfig {
    pub fn validate(&self, n: usize) -> Result<f64> {
        if self.eta <= 0.0 || self.iterations == 0 {
            return Err(invalid("DpSgdConfig: eta and iterations must be positive"));
        }
        if self.clip <= 0.0 || self.radius <= 0.0 || self.c2 <= 0.0 {
            return Err(invalid("DpSgdConfig: clip, radius and c2 must be positive"));
        }
        let q = self.expected_batch / n as f64;
        if !(0.0..=1.0).contains(&q) || q == 0.0 {
            return Err(invalid("DpSgdConfig: expected batch must give sampling rate in (0, 1]"));
        }
        if self.expected_batch < 1.0 {
            return Err(invalid("DpSgdConfig: expected batch below one sample"));
        }
        if self.clip > self.radius && self.radius.is_finite() {
            log::warn!(
                "DpSgdConfig: clip {} exceeds the layer radius {}; utility bounds assume C <= R",
                self.clip,
                self.radius
            );
        }
        Ok(q)
    }
}

/// A DP-SGD run: the averaged model, the final iterate, and bookkeeping for
/// the invariants tests.
#[derive(Debug, Clone)]
pub struct DpSgdReport {
    pub averaged: MlpParams,
    pub last: MlpParams,
    pub skipped_iterations: usize,
    pub max_clipped_grad_norm: f64,
    pub batch_sizes: Vec<usize>,
    /// Post-projection Frobenius norm of each layer, per iteration.
    pub layer_norms: Vec<Vec<f64>>,
}

/// Algorithm: per iteration, Poisson-sample a batch, clip each per-sample
/// gradient to C in whole-network Frobenius norm, average, add one Gaussian
/// noise draw over the full parameter vector, step, project every layer to
/// radius R. Output averages the post-projection iterates. Empty batches
/// skip the update but still count toward T.
pub fn dp_sgd_train(
    data: &Dataset,
    w0: &MlpParams,
    cfg: &DpSgdConfig,
    budget: &PrivacyBudget,
    loss: &Loss,
    channel: &mut NoiseChannel<'_>,
) -> Result<DpSgdReport> {
    let n = data.n();
    let q = cfg.validate(n)?;
    let mut w = w0.clone();
    let mut sum = w0.zeros_like();
    let total_dim = w0.total_dim();
    let mut skipped = 0usize;
    let mut max_clipped = 0.0f64;
    let mut batch_sizes = Vec::with_capacity(cfg.iterations);
    let mut layer_norms = Vec::with_capacity(cfg.iterations);
    for t in 0..cfg.iterations {
        let batch: Vec<usize> = (0..n).filter(|_| channel.rng.uniform() < q).collect();
        batch_sizes.push(batch.len());
        if batch.is_empty() {
            skipped += 1;
            sum.add_scaled(1.0, &w);
            layer_norms.push(w.layers.iter().map(|l| l.frob_norm()).collect());
            continue;
        }
        let bsz = batch.len();
        let mut g_sum = w0.zeros_like();
        for &i in &batch {
            let (x, y) = data.sample(i);
            let mut g = per_sample_grad(&w, x, y, loss)?;
            let norm = g.frob_norm();
            if cfg.clip.is_finite() && norm > cfg.clip {
                g.scale(cfg.clip / norm);
            }
            max_clipped = max_clipped.max(g.frob_norm());
            g_sum.add_scaled(1.0, &g);
        }
        g_sum.scale(1.0 / bsz as f64);
        let sigma = match cfg.noise_std {
            Some(s) => s,
            None if cfg.strict => {
                strict_dpsgd_noise_std(cfg.clip, cfg.iterations, budget, bsz)?
            }
            None => dpsgd_noise_std(q, cfg.clip, cfg.iterations, budget, bsz, cfg.c2)?,
        };
        let noise = channel.inject(
            t + 1,
            "dp_sgd",
            2.0 * cfg.clip / bsz as f64,
            sigma,
            total_dim,
        )?;
        let mut offset = 0;
        for layer in g_sum.layers.iter_mut() {
            let len = layer.data.len();
            for (v, z) in layer.data.iter_mut().zip(&noise[offset..offset + len]) {
                *v += z;
            }
            offset += len;
        }
        w.add_scaled(-cfg.eta, &g_sum);
        project_layers(&mut w, cfg.radius);
        sum.add_scaled(1.0, &w);
        layer_norms.push(w.layers.iter().map(|l| l.frob_norm()).collect());
    }
    let mut averaged = sum;
    averaged.scale(1.0 / cfg.iterations as f64);
    Ok(DpSgdReport {
        averaged,
        last: w,
        skipped_iterations: skipped,
        max_clipped_grad_norm: max_clipped,
        batch_sizes,
        layer_norms,
    })
}

/// Tangent-feature value f(W0, x) + <grad f(W0, x), disp>.
pub fn ntrf_eval(w0: &MlpParams, disp: &MlpParams, x: &[f64]) -> Result<f64> {
    let trace = forward(w0, x)?;
    let g = output_param_grad(w0, x, &trace);
    Ok(trace.output + g.dot(disp))
}

/// Fit a displacement with per-layer Frobenius norm at most r/sqrt(m) by
/// projected SGD on the tangent model, cycling through the data in order.
/// Returns the displacement and the final average training loss.
pub fn ntrf_fit(
    w0: &MlpParams,
    data: &Dataset,
    r: f64,
    loss: &Loss,
    steps: usize,
    eta: f64,
) -> Result<(MlpParams, f64)> {
    if r < 0.0 {
        return Err(invalid("ntrf_fit: r must be nonnegative"));
    }
    let n = data.n();
    if n == 0 {
        return Err(invalid("ntrf_fit: empty dataset"));
    }
    let radius = r / (w0.width() as f64).sqrt();
    // tangent features are fixed but too large to cache at realistic widths;
    // recompute per visit
    let feat = |i: usize| -> Result<(f64, MlpParams)> {
        let x = data.features.row(i);
        let trace = forward(w0, x)?;
        Ok((trace.output, output_param_grad(w0, x, &trace)))
    };
    let mut disp = w0.zeros_like();
    for step in 0..steps {
        let i = step % n;
        let (f0, g) = feat(i)?;
        let pred = f0 + g.dot(&disp);
        let e = loss.derivative(pred, data.labels[i]);
        disp.add_scaled(-eta * e, &g);
        project_layers(&mut disp, radius);
    }
    let mut total = 0.0;
    for i in 0..n {
        let (f0, g) = feat(i)?;
        total += loss.value(f0 + g.dot(&disp), data.labels[i]);
    }
    Ok((disp, total / n as f64))
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    #[serde(rename = "L")]
    l: usize,
    m: usize,
    d: usize,
    layers: Vec<Vec<f64>>,
}

const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        l: params.depth(),
        m: params.width(),
        d: params.input_dim(),
        layers: params.layers.iter().map(|l| l.data.clone()).collect(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &ck)
        .map_err(|e| invalid(format!("write_checkpoint: {e}")))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<MlpParams> {
    let file = std::fs::File::open(path)?;
    let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| invalid(format!("read_checkpoint: {e}")))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(invalid(format!("read_checkpoint: unsupported version {}", ck.version)));
    }
    if ck.l < 2 || ck.layers.len() != ck.l {
        return Err(invalid("read_checkpoint: inconsistent layer count"));
    }
    let mut layers = Vec::with_capacity(ck.l);
    for (li, data) in ck.layers.into_iter().enumerate() {
        let (rows, cols) = if li == 0 {
            (ck.m, ck.d)
        } else if li == ck.l - 1 {
            (1, ck.m)
        } else {
            (ck.m, ck.m)
        };
        if data.len() != rows * cols {
            return Err(crate::Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        layers.push(Matrix::from_data(rows, cols, data));
    }
    Ok(MlpParams { layers })
}
