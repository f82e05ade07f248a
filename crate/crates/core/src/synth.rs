//! Synthetic dataset generators with known ground truth, so excess risk can
//! be measured against the model that produced the labels.

use std::io::Write as _;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::linalg::{dot, norm, scale, Matrix};
use crate::link::LinkFunction;
use crate::rng::Rng;

/// An immutable labelled sample set together with the bounds it satisfies.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
    /// Every row satisfies ||x_i|| <= feature_norm_bound.
    pub feature_norm_bound: f64,
    /// Every label satisfies |y_i| <= label_bound.
    pub label_bound: f64,
    /// How many labels were clipped to [-label_bound, label_bound].
    pub truncated: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.rows
    }

    pub fn d(&self) -> usize {
        self.features.cols
    }

    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (self.features.row(i), self.labels[i])
    }

    /// CSV export, header `x_0,...,x_{d-1},y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.d()).map(|j| format!("x_{j}")).collect();
        writeln!(out, "{},y", header.join(","))?;
        for i in 0..self.n() {
            let row: Vec<String> = self.features.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{},{}", row.join(","), self.labels[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    WellSpecGlm,
    Kernel,
    TwoLayer,
    Misspecified,
}

/// The planted linear model behind a generated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub w_star: Vec<f64>,
    /// Norm bound W with ||w_star|| <= W.
    pub w_bound: f64,
    pub noise_std: f64,
    pub kind: ModelKind,
}

impl GroundTruth {
    pub fn new(w_star: Vec<f64>, w_bound: f64, noise_std: f64, kind: ModelKind) -> Result<Self> {
        if noise_std < 0.0 {
            return Err(invalid("GroundTruth: noise_std must be nonnegative"));
        }
        if norm(&w_star) > w_bound * (1.0 + 1e-12) {
            return Err(invalid("GroundTruth: ||w_star|| exceeds the declared bound W"));
        }
        Ok(GroundTruth { w_star, w_bound, noise_std, kind })
    }

    /// A planted vector drawn uniformly from the sphere of radius `w_norm`.
    pub fn random(rng: &mut Rng, d: usize, w_norm: f64, noise_std: f64, kind: ModelKind) -> Self {
        let mut w = rng.unit_vector(d);
        scale(&mut w, w_norm);
        GroundTruth { w_star: w, w_bound: w_norm, noise_std, kind }
    }
}

/// The planted two-layer network y = sigma2(sum_t b_t sigma1(<a_t, x>)).
#[derive(Debug, Clone)]
pub struct TwoLayerTruth {
    /// Hidden unit directions, each a unit vector in R^d.
    pub hidden: Vec<Vec<f64>>,
    /// Output weights, a unit vector in R^k.
    pub output: Vec<f64>,
    pub inner: LinkFunction,
    pub outer: LinkFunction,
}

impl TwoLayerTruth {
    pub fn new(
        hidden: Vec<Vec<f64>>,
        output: Vec<f64>,
        inner: LinkFunction,
        outer: LinkFunction,
    ) -> Result<Self> {
        if hidden.len() != output.len() {
            return Err(crate::Error::DimensionMismatch {
                expected: hidden.len(),
                got: output.len(),
            });
        }
        for a in &hidden {
            if (norm(a) - 1.0).abs() > 1e-9 {
                return Err(invalid("TwoLayerTruth: hidden weights must be unit vectors"));
            }
        }
        if (norm(&output) - 1.0).abs() > 1e-9 {
            return Err(invalid("TwoLayerTruth: output weights must form a unit vector"));
        }
        Ok(TwoLayerTruth { hidden, output, inner, outer })
    }

    pub fn random(rng: &mut Rng, d: usize, k: usize, inner: LinkFunction, outer: LinkFunction) -> Self {
        let hidden = (0..k).map(|_| rng.unit_vector(d)).collect();
        let output = rng.unit_vector(k);
        TwoLayerTruth { hidden, output, inner, outer }
    }

    /// Network value before label noise or clipping.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .hidden
            .iter()
            .zip(&self.output)
            .map(|(a, &b)| b * self.inner.value(dot(a, x)))
            .sum();
        self.outer.value(s)
    }
}

fn clip_label(y: f64, bound: f64, truncated: &mut usize) -> f64 {
    if y.abs() > bound {
        *truncated += 1;
        y.clamp(-bound, bound)
    } else {
        y
    }
}

fn warn_truncation(truncated: usize, n: usize, what: &str) {
    if n > 0 && truncated * 2 > n {
        log::warn!("{what}: {truncated}/{n} labels truncated; noise_std is too large for the label bound");
    }
}

/// Features uniform on the unit ball (sphere direction times uniform radius),
/// labels y = sigma(<w*, x>) + N(0, noise_std^2), clipped to the label bound.
pub fn gen_wellspec_glm(
    rng: &mut Rng,
    n: usize,
    d: usize,
    truth: &GroundTruth,
    link: &LinkFunction,
) -> Result<Dataset> {
    if truth.w_star.len() != d {
        return Err(crate::Error::DimensionMismatch { expected: d, got: truth.w_star.len() });
    }
    let label_bound = if link.is_bounded() {
        link.range_bound()
    } else {
        // Unbounded link: |sigma(<w*,x>)| <= max(G W, W) on the unit ball.
        truth.w_bound.max(link.lipschitz() * truth.w_bound).max(1.0)
    };
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut truncated = 0;
    for i in 0..n {
        let mut x = rng.unit_vector(d);
        scale(&mut x, rng.uniform());
        let y = link.value(dot(&truth.w_star, &x)) + truth.noise_std * rng.gaussian();
        labels.push(clip_label(y, label_bound, &mut truncated));
        features.data[i * d..(i + 1) * d].copy_from_slice(&x);
    }
    warn_truncation(truncated, n, "gen_wellspec_glm");
    Ok(Dataset { features, labels, feature_norm_bound: 1.0, label_bound, truncated })
}

/// Features uniform on the cube [-sqrt(3), sqrt(3)]^d: zero mean, identity
/// covariance, log-concave. The per-row norm bound is sqrt(3d).
pub fn gen_logconcave_features(rng: &mut Rng, n: usize, d: usize) -> Matrix {
    let half = 3.0f64.sqrt();
    let mut m = Matrix::zeros(n, d);
    for v in m.data.iter_mut() {
        *v = rng.uniform_range(-half, half);
    }
    m
}

/// ReLU regression data with a bounded adversarial bias term:
/// y = clip(relu(<w*,x>) + rho * sign(sin(<v,x>)) + noise).
/// rho = 0 with noise 0 recovers the well-specified model exactly.
pub fn gen_misspecified_relu(
    rng: &mut Rng,
    n: usize,
    d: usize,
    truth: &GroundTruth,
    bias_amplitude: f64,
) -> Result<Dataset> {
    if bias_amplitude < 0.0 {
        return Err(invalid("gen_misspecified_relu: bias_amplitude must be >= 0"));
    }
    if truth.w_star.len() != d {
        return Err(crate::Error::DimensionMismatch { expected: d, got: truth.w_star.len() });
    }
    let feature_norm_bound = (3.0 * d as f64).sqrt();
    let label_bound = truth.w_bound * feature_norm_bound + bias_amplitude;
    let v = rng.unit_vector(d);
    let features = gen_logconcave_features(rng, n, d);
    let mut labels = Vec::with_capacity(n);
    let mut truncated = 0;
    for i in 0..n {
        let x = features.row(i);
        let bias = if bias_amplitude > 0.0 {
            bias_amplitude * dot(&v, x).sin().signum()
        } else {
            0.0
        };
        let y = dot(&truth.w_star, x).max(0.0) + bias + truth.noise_std * rng.gaussian();
        labels.push(clip_label(y, label_bound, &mut truncated));
    }
    warn_truncation(truncated, n, "gen_misspecified_relu");
    Ok(Dataset { features, labels, feature_norm_bound, label_bound, truncated })
}

/// Two-layer network data: features uniform on the unit sphere, labels
/// clipped to [0, 1].
pub fn gen_twolayer(
    rng: &mut Rng,
    n: usize,
    d: usize,
    truth: &TwoLayerTruth,
    noise_std: f64,
) -> Result<Dataset> {
    if noise_std < 0.0 {
        return Err(invalid("gen_twolayer: noise_std must be >= 0"));
    }
    for a in &truth.hidden {
        if a.len() != d {
            return Err(crate::Error::DimensionMismatch { expected: d, got: a.len() });
        }
    }
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let mut truncated = 0;
    for i in 0..n {
        let x = rng.unit_vector(d);
        let y = truth.eval(&x) + noise_std * rng.gaussian();
        if !(0.0..=1.0).contains(&y) {
            truncated += 1;
        }
        labels.push(y.clamp(0.0, 1.0));
        features.data[i * d..(i + 1) * d].copy_from_slice(&x);
    }
    warn_truncation(truncated, n, "gen_twolayer");
    Ok(Dataset { features, labels, feature_norm_bound: 1.0, label_bound: 1.0, truncated })
}
