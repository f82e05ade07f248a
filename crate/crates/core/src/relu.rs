//! DP projected gradient descent for well-specified ReLU regression and
//! adaptive batched gradient descent for the misspecified model.

use crate::error::{invalid, Result};
use crate::glm::ModelVector;
use crate::linalg::{axpy, dot, norm, scale};
use crate::privacy::{NoiseChannel, PrivacyBudget};
use crate::rng::{jl_project, sample_jl};
use crate::synth::Dataset;

/// The l2 ball of a given radius, with exact scaling projection.
#[derive(Debug, Clone, Copy)]
pub struct BallConstraint {
    pub radius: f64,
}

impl BallConstraint {
    pub fn new(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(invalid("BallConstraint: radius must be positive"));
        }
        Ok(BallConstraint { radius })
    }

    pub fn project(&self, w: &mut [f64]) {
        let n = norm(w);
        if n > self.radius {
            scale(w, self.radius / n);
        }
    }
}

/// Per-step noise std for the projected GD solver:
/// sigma^2 = 32 (4W + B)^2 T ln(2/delta) / (n^2 eps^2).
pub fn relu_gd_noise_std(w_bound: f64, b: f64, t: usize, n: usize, budget: &PrivacyBudget) -> f64 {
    let s = 4.0 * w_bound + b;
    let var = 32.0 * s * s * t as f64 * (2.0 / budget.delta()).ln()
        / ((n * n) as f64 * budget.epsilon() * budget.epsilon());
    var.sqrt()
}

/// Default iteration count min(n, n^2 eps^2 / (m ln(1/delta))).
pub fn default_relu_steps(n: usize, m_proj: usize, budget: &PrivacyBudget) -> usize {
    let nf = n as f64;
    let alt = nf * nf * budget.epsilon() * budget.epsilon()
        / (m_proj as f64 * (1.0 / budget.delta()).ln());
    (nf.min(alt).floor() as usize).max(1)
}

/// A projected GD run: the lifted averaged model plus the post-projection
/// iterates in projected space, for invariant checks.
#[derive(Debug, Clone)]
pub struct ReluGdReport {
    pub model: ModelVector,
    pub iterates: Vec<Vec<f64>>,
}

/// Full-batch noisy projected GD on the ReLU surrogate gradient in a JL
/// projection, output the lifted average of all iterates.
#[allow(clippy::too_many_arguments)]
pub fn dp_projected_gd_relu(
    data: &Dataset,
    budget: &PrivacyBudget,
    w_bound: f64,
    t: usize,
    eta: f64,
    m_proj: usize,
    channel: &mut NoiseChannel<'_>,
) -> Result<ReluGdReport> {
    if w_bound <= 0.0 {
        return Err(invalid("dp_projected_gd_relu: W must be positive"));
    }
    if t == 0 {
        return Err(invalid("dp_projected_gd_relu: need at least one step"));
    }
    let eta = if eta > 0.5 {
        log::warn!("dp_projected_gd_relu: step size {eta} exceeds the cap 0.5; capping");
        0.5
    } else {
        eta
    };
    let n = data.n();
    let ball = BallConstraint::new(2.0 * w_bound)?;
    let phi = sample_jl(channel.rng, m_proj, data.d())?;
    let dim = phi.out_dim();
    let projected: Vec<Vec<f64>> =
        (0..n).map(|i| jl_project(&phi, data.features.row(i))).collect::<Result<_>>()?;
    let sigma = relu_gd_noise_std(w_bound, data.label_bound, t, n, budget);
    let sensitivity = 2.0 * (2.0 * w_bound + data.label_bound) / n as f64;
    let mut w = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let mut iterates = Vec::with_capacity(t);
    for step in 0..t {
        let mut g = vec![0.0; dim];
        for i in 0..n {
            let r = dot(&w, &projected[i]).max(0.0) - data.labels[i];
            axpy(&mut g, r, &projected[i]);
        }
        scale(&mut g, 1.0 / n as f64);
        let zeta = channel.inject(step + 1, "dp_projected_gd_relu", sensitivity, sigma, dim)?;
        axpy(&mut g, 1.0, &zeta);
        axpy(&mut w, -eta, &g);
        ball.project(&mut w);
        axpy(&mut sum, 1.0, &w);
        iterates.push(w.clone());
    }
    scale(&mut sum, 1.0 / t as f64);
    Ok(ReluGdReport { model: ModelVector { w: sum, lift: Some(phi) }, iterates })
}

/// Noise variance for one adaptive step:
/// 8 (rho ||w|| + B)^2 ln(1.25/delta) / (m^2 eps^2).
pub fn adaptive_noise_variance(
    rho: f64,
    w_norm: f64,
    b: f64,
    m: usize,
    budget: &PrivacyBudget,
) -> f64 {
    let s = rho * w_norm + b;
    8.0 * s * s * (1.25 / budget.delta()).ln()
        / ((m * m) as f64 * budget.epsilon() * budget.epsilon())
}

/// Default iteration count ceil(log2(W sqrt(d) / alpha_target)).
pub fn default_adaptive_steps(w_bound: f64, d: usize, alpha_target: f64) -> usize {
    ((w_bound * (d as f64).sqrt() / alpha_target).log2().ceil() as usize).max(1)
}

/// An adaptive batched GD run, with the noise-state trajectory recorded.
#[derive(Debug, Clone)]
pub struct AdaptiveGdReport {
    pub model: ModelVector,
    pub batch_size: usize,
    pub discarded: usize,
    pub w_norms: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Adaptive DP batched GD: disjoint fresh batch per iteration, noise scaled
/// to the current iterate norm.
pub fn adaptive_dp_batched_gd(
    data: &Dataset,
    budget: &PrivacyBudget,
    t: usize,
    eta: f64,
    channel: &mut NoiseChannel<'_>,
) -> Result<AdaptiveGdReport> {
    let n = data.n();
    if t == 0 || t > n {
        return Err(invalid("adaptive_dp_batched_gd: need 1 <= T <= n"));
    }
    let eta = if eta > 1.0 / 16.0 {
        log::warn!("adaptive_dp_batched_gd: step size {eta} exceeds the cap 1/16; capping");
        1.0 / 16.0
    } else {
        eta
    };
    let m = n / t;
    let d = data.d();
    let rho = data.feature_norm_bound;
    let b = data.label_bound;
    let mut w = vec![0.0; d];
    let mut w_norms = Vec::with_capacity(t);
    let mut variances = Vec::with_capacity(t);
    for i in 0..t {
        let wn = norm(&w);
        let var = adaptive_noise_variance(rho, wn, b, m, budget);
        w_norms.push(wn);
        variances.push(var);
        let sensitivity = 2.0 * (rho * wn + b) / m as f64;
        let mut g = vec![0.0; d];
        for j in i * m..(i + 1) * m {
            let (x, y) = data.sample(j);
            let r = dot(&w, x).max(0.0) - y;
            axpy(&mut g, r, x);
        }
        scale(&mut g, 1.0 / m as f64);
        let zeta = channel.inject(i + 1, "adaptive_dp_batched_gd", sensitivity, var.sqrt(), d)?;
        axpy(&mut g, 1.0, &zeta);
        axpy(&mut w, -eta, &g);
    }
    Ok(AdaptiveGdReport {
        model: ModelVector::plain(w),
        batch_size: m,
        discarded: n - m * t,
        w_norms,
        variances,
    })
}
