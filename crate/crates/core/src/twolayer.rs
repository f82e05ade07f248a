//! Polynomial feature maps that turn two-layer network learning into a GLM
//! problem, plus the dispatcher that trains on the mapped data.

use crate::error::{invalid, Result};
use crate::glm::{phased_sgd, projected_phased_sgd, ModelVector};
use crate::linalg::Matrix;
use crate::link::LinkFunction;
use crate::privacy::{NoiseChannel, PrivacyBudget};
use crate::synth::Dataset;

/// Default cap on the mapped dimension.
pub const FEATURE_DIM_CAP: usize = 200_000;

/// The normalized multinomial map psi(x) = (c_j/s) x^{(x)j} concatenated
/// over j = 0..degree, with s = sqrt(sum c_j^2) so that ||psi(x)|| <= 1 on
/// the unit ball.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub input_dim: usize,
    pub degree: usize,
    pub coeffs: Vec<f64>,
    pub normalizer: f64,
    pub output_dim: usize,
}

/// Mapped dimension 1 + d + ... + d^degree, None on overflow.
fn multinomial_dim(d: usize, degree: usize) -> Option<usize> {
    let mut total = 0usize;
    let mut pow = 1usize;
    for _ in 0..=degree {
        total = total.checked_add(pow)?;
        pow = pow.checked_mul(d)?;
    }
    Some(total)
}

pub fn multinomial_feature_map(d: usize, degree: usize, coeffs: &[f64]) -> Result<FeatureMap> {
    if d == 0 {
        return Err(invalid("multinomial_feature_map: d must be positive"));
    }
    if coeffs.len() != degree + 1 {
        return Err(crate::Error::DimensionMismatch { expected: degree + 1, got: coeffs.len() });
    }
    let s2: f64 = coeffs.iter().map(|c| c * c).sum();
    if s2 <= 0.0 {
        return Err(invalid("multinomial_feature_map: at least one coefficient must be nonzero"));
    }
    let dim = multinomial_dim(d, degree);
    match dim {
        Some(dim) if dim <= FEATURE_DIM_CAP => Ok(FeatureMap {
            input_dim: d,
            degree,
            coeffs: coeffs.to_vec(),
            normalizer: s2.sqrt(),
            output_dim: dim,
        }),
        Some(dim) => Err(invalid(format!(
            "multinomial_feature_map: mapped dimension {dim} exceeds the cap {FEATURE_DIM_CAP}"
        ))),
        None => Err(invalid(format!(
            "multinomial_feature_map: mapped dimension overflows for d={d}, degree={degree}"
        ))),
    }
}

impl FeatureMap {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(crate::Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut out = Vec::with_capacity(self.output_dim);
        // tensor powers built iteratively: block_j = block_{j-1} (x) x
        let mut block = vec![1.0];
        for (j, &c) in self.coeffs.iter().enumerate() {
            let scale = c / self.normalizer;
            out.extend(block.iter().map(|v| scale * v));
            if j < self.degree {
                let mut next = Vec::with_capacity(block.len() * x.len());
                for &b in &block {
                    next.extend(x.iter().map(|&xi| b * xi));
                }
                block = next;
            }
        }
        debug_assert_eq!(out.len(), self.output_dim);
        Ok(out)
    }

    /// The induced kernel sum_j (c_j^2/s^2) <x, x'>^j, without materializing
    /// the mapped vectors.
    pub fn kernel(&self, ip: f64) -> f64 {
        let s2 = self.normalizer * self.normalizer;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| c * c / s2 * ip.powi(j as i32))
            .sum()
    }
}

/// Taylor coefficients of the link about 0, the default per-degree weights.
/// Only the analytic built-in links are supported.
pub fn taylor_coeffs(link: &LinkFunction, degree: usize) -> Result<Vec<f64>> {
    // series per degree: sigmoid 1/2 + z/4 - z^3/48 + z^5/480 - ...
    //                    tanh    z - z^3/3 + 2 z^5/15 - ...
    let table: &[f64] = match link.name() {
        "sigmoid" => &[0.5, 0.25, 0.0, -1.0 / 48.0, 0.0, 1.0 / 480.0, 0.0, -17.0 / 80640.0],
        "tanh" => &[0.0, 1.0, 0.0, -1.0 / 3.0, 0.0, 2.0 / 15.0, 0.0, -17.0 / 315.0],
        other => {
            return Err(invalid(format!(
                "taylor_coeffs: no closed-form series for link {other:?}"
            )))
        }
    };
    if degree >= table.len() {
        return Err(invalid(format!(
            "taylor_coeffs: series for {} only tabulated to degree {}",
            link.name(),
            table.len() - 1
        )));
    }
    Ok(table[..=degree].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeLinkKind {
    Sigmoid,
    Relu,
}

/// Degree needed for uniform accuracy alpha0: ceil(c ln(1/alpha0)) for the
/// sigmoid family, ceil(c/alpha0) for ReLU.
pub fn degree_for_accuracy(kind: DegreeLinkKind, alpha0: f64, c_deg: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&alpha0) || alpha0 == 0.0 {
        return Err(invalid("degree_for_accuracy: need 0 < alpha0 < 1"));
    }
    if c_deg <= 0.0 {
        return Err(invalid("degree_for_accuracy: c_deg must be positive"));
    }
    let raw = match kind {
        DegreeLinkKind::Sigmoid => c_deg * (1.0 / alpha0).ln(),
        DegreeLinkKind::Relu => c_deg / alpha0,
    };
    Ok(raw.ceil() as usize)
}

/// A GLM trained in feature-map space: h(x) = sigma2(<w, psi(x)>).
#[derive(Debug, Clone)]
pub struct KernelModel {
    pub model: ModelVector,
    pub map: FeatureMap,
    pub outer: LinkFunction,
}

impl KernelModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.outer.value(self.model.predict_margin(&self.map.apply(x)?)?))
    }
}

/// Map the dataset through psi.
pub fn map_dataset(data: &Dataset, map: &FeatureMap) -> Result<Dataset> {
    let n = data.n();
    let mut features = Matrix::zeros(n, map.output_dim);
    for i in 0..n {
        let psi = map.apply(data.features.row(i))?;
        features.data[i * map.output_dim..(i + 1) * map.output_dim].copy_from_slice(&psi);
    }
    Ok(Dataset {
        features,
        labels: data.labels.clone(),
        feature_norm_bound: 1.0,
        label_bound: data.label_bound,
        truncated: data.truncated,
    })
}

/// Default projected dimension for the mapped problem,
/// ceil(ln(n/delta) n eps).
pub fn default_mapped_projection_dim(n: usize, budget: &PrivacyBudget) -> usize {
    let n = n as f64;
    ((n / budget.delta()).ln() * n * budget.epsilon()).ceil() as usize
}

/// Whether the mapped dispatcher takes the projected path.
pub fn dp_twolayer_uses_projection(n: usize, theta: f64, epsilon: f64) -> bool {
    epsilon <= theta / n as f64
}

/// Train a GLM on psi-mapped data: the direct phased solver when
/// eps > theta/n, the JL-projected one otherwise.
pub fn dp_twolayer(
    data: &Dataset,
    map: &FeatureMap,
    outer: &LinkFunction,
    budget: &PrivacyBudget,
    theta: f64,
    eta: f64,
    channel: &mut NoiseChannel<'_>,
) -> Result<KernelModel> {
    if theta <= 0.0 {
        return Err(invalid("dp_twolayer: theta must be positive"));
    }
    if data.d() != map.input_dim {
        return Err(crate::Error::DimensionMismatch { expected: map.input_dim, got: data.d() });
    }
    let mapped = map_dataset(data, map)?;
    let n = data.n();
    let model = if !dp_twolayer_uses_projection(n, theta, budget.epsilon()) {
        phased_sgd(&mapped, outer, budget, eta, vec![0.0; map.output_dim], channel)?
    } else {
        let m = default_mapped_projection_dim(n, budget);
        projected_phased_sgd(&mapped, outer, budget, eta, m, channel)?
    };
    Ok(KernelModel { model, map: map.clone(), outer: outer.clone() })
}
