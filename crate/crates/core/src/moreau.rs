//! Moreau-envelope gradient oracle for links whose surrogate is not
//! differentiable everywhere, and the phased SGD drivers built on it.

use crate::error::{invalid, Result};
use crate::glm::{
    phase_schedule, run_phases, ModelVector,
};
use crate::linalg::dot;
use crate::link::LinkFunction;
use crate::privacy::{NoiseChannel, PrivacyBudget};
use crate::rng::{jl_project, sample_jl};
use crate::synth::Dataset;

/// Parameters of the envelope oracle: smoothing level beta, output accuracy
/// gamma, and the Lipschitz parameter that sizes the search interval
/// Q = [a - 4B/beta, a + 4B/beta] and the iteration count 144 B^2/gamma^2.
#[derive(Debug, Clone, Copy)]
pub struct MoreauConfig {
    pub beta: f64,
    pub gamma: f64,
    pub lipschitz: f64,
}

impl MoreauConfig {
    pub fn new(beta: f64, gamma: f64, lipschitz: f64) -> Result<Self> {
        if beta <= 0.0 || gamma <= 0.0 || lipschitz <= 0.0 {
            return Err(invalid("MoreauConfig: beta, gamma and the Lipschitz bound must be positive"));
        }
        Ok(MoreauConfig { beta, gamma, lipschitz })
    }

    /// Search interval around the margin a.
    pub fn interval(&self, a: f64) -> (f64, f64) {
        let half = 4.0 * self.lipschitz / self.beta;
        (a - half, a + half)
    }
}

/// Inner PGD iteration count ceil(144 B^2 / gamma^2).
pub fn inner_iters(cfg: &MoreauConfig) -> Result<usize> {
    let t = (144.0 * cfg.lipschitz * cfg.lipschitz / (cfg.gamma * cfg.gamma)).ceil();
    if t > 1e8 {
        return Err(invalid(format!(
            "inner_iters: gamma {} needs {t:.3e} iterations; refusing above 1e8",
            cfg.gamma
        )));
    }
    Ok((t as usize).max(1))
}

/// Default oracle accuracy 1/(n ln n).
pub fn default_gamma(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (n * n.ln())
}

/// Default smoothing sqrt(n).
pub fn default_beta(n: usize) -> f64 {
    (n as f64).sqrt()
}

/// Scalar core of the oracle: weighted-average projected gradient descent
/// on u -> A(u) - y u + (beta/2)(u - a)^2 over Q. Returns ubar.
fn prox_pgd(cfg: &MoreauConfig, link: &LinkFunction, a: f64, y: f64) -> Result<f64> {
    let t_max = inner_iters(cfg)?;
    let (lo, hi) = cfg.interval(a);
    let mut u = a;
    let mut ubar = 0.0;
    let denom = (t_max * (t_max + 1)) as f64;
    for t in 1..=t_max {
        ubar += 2.0 * t as f64 / denom * u;
        let step = 2.0 / (cfg.beta * (t + 1) as f64);
        let g = link.value(u) - y + cfg.beta * (u - a);
        u = (u - step * g).clamp(lo, hi);
    }
    Ok(ubar)
}

/// Gradient of the Moreau envelope of the surrogate loss at w, accurate to
/// gamma in l2 norm: x * beta * (a - ubar) with a = <w, x>.
pub fn prox_gradient_oracle(
    cfg: &MoreauConfig,
    link: &LinkFunction,
    w: &[f64],
    x: &[f64],
    y: f64,
) -> Result<Vec<f64>> {
    if w.len() != x.len() {
        return Err(crate::Error::DimensionMismatch { expected: w.len(), got: x.len() });
    }
    let a = dot(w, x);
    let ubar = prox_pgd(cfg, link, a, y)?;
    let s = cfg.beta * (a - ubar);
    Ok(x.iter().map(|xi| s * xi).collect())
}

/// Brute-force reference: exhaustive minimization of the prox objective on
/// a uniform grid over Q. Returns the minimizing u.
pub fn grid_prox_oracle(
    cfg: &MoreauConfig,
    link: &LinkFunction,
    a: f64,
    y: f64,
    resolution: f64,
) -> Result<f64> {
    if resolution <= 0.0 {
        return Err(invalid("grid_prox_oracle: resolution must be positive"));
    }
    let (lo, hi) = cfg.interval(a);
    let steps = ((hi - lo) / resolution).ceil() as usize;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=steps {
        let u = (lo + k as f64 * resolution).min(hi);
        let val = link.antiderivative(u)? - y * u + 0.5 * cfg.beta * (u - a) * (u - a);
        if val < best.0 {
            best = (val, u);
        }
    }
    Ok(best.1)
}

/// Value of the Moreau envelope of g^y at a, via the grid minimizer.
pub fn grid_envelope_value(
    cfg: &MoreauConfig,
    link: &LinkFunction,
    a: f64,
    y: f64,
    resolution: f64,
) -> Result<f64> {
    let u = grid_prox_oracle(cfg, link, a, y, resolution)?;
    Ok(link.antiderivative(u)? - y * u + 0.5 * cfg.beta * (u - a) * (u - a))
}

fn check_bounded(link: &LinkFunction, what: &str) -> Result<f64> {
    if !link.is_bounded() {
        return Err(invalid(format!(
            "{what}: the link is unbounded; use the ReLU regression solvers instead"
        )));
    }
    Ok(link.range_bound())
}

/// Phased SGD stepping on envelope gradients instead of raw subgradients,
/// with noise tau_i = 10 B R eta_i sqrt(ln(1/delta))/eps.
#[allow(clippy::too_many_arguments)]
pub fn phased_sgd_oracle(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    eta: f64,
    beta: f64,
    gamma: f64,
    r_param: f64,
    channel: &mut NoiseChannel<'_>,
) -> Result<ModelVector> {
    phased_sgd_oracle_trace(data, link, budget, eta, beta, gamma, r_param, channel)
        .map(|(m, _)| m)
}

/// As `phased_sgd_oracle`, but also returns the per-phase pre-noise averages
/// for sensitivity instrumentation.
#[allow(clippy::too_many_arguments)]
pub fn phased_sgd_oracle_trace(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    eta: f64,
    beta: f64,
    gamma: f64,
    r_param: f64,
    channel: &mut NoiseChannel<'_>,
) -> Result<(ModelVector, Vec<Vec<f64>>)> {
    let b = check_bounded(link, "phased_sgd_oracle")?;
    let cfg = MoreauConfig::new(beta, gamma, b)?;
    inner_iters(&cfg)?;
    let eta = cap(eta, 2.0 / beta, "phased_sgd_oracle");
    let schedule = phase_schedule(data.n(), eta)?;
    let d = data.d();
    let noise = oracle_noise_std(b, r_param, budget);
    let (w, prenoise) = run_phases(
        &schedule,
        d,
        vec![0.0; d],
        |w, i| {
            let (x, y) = data.sample(i);
            prox_gradient_oracle(&cfg, link, w, x, y)
        },
        noise,
        |eta_i| 5.0 * b * eta_i,
        "phased_sgd_oracle",
        channel,
    )?;
    Ok((ModelVector::plain(w), prenoise))
}

/// tau_i for the oracle-driven variant.
pub fn oracle_noise_std(b: f64, r_param: f64, budget: &PrivacyBudget) -> impl Fn(f64) -> f64 {
    let (eps, delta) = (budget.epsilon(), budget.delta());
    move |eta_i| 10.0 * b * r_param * eta_i * (1.0 / delta).ln().sqrt() / eps
}

/// tau_i for the projected oracle variant (delta/2 accounting).
pub fn projected_oracle_noise_std(b: f64, budget: &PrivacyBudget) -> impl Fn(f64) -> f64 {
    let (eps, delta) = (budget.epsilon(), budget.delta());
    move |eta_i| 20.0 * b * eta_i * (2.0 / delta).ln().sqrt() / eps
}

fn cap(eta: f64, cap: f64, what: &str) -> f64 {
    if eta > cap {
        log::warn!("{what}: step size {eta} exceeds the stability cap {cap}; capping");
        cap
    } else {
        eta
    }
}

/// JL-projected oracle-driven phased SGD. The oracle runs with the doubled
/// Lipschitz parameter 2B and noise tau_i = 20 B eta_i sqrt(ln(2/delta))/eps.
pub fn projected_phased_sgd_oracle(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    eta: f64,
    m: usize,
    channel: &mut NoiseChannel<'_>,
) -> Result<ModelVector> {
    let b = check_bounded(link, "projected_phased_sgd_oracle")?;
    let n = data.n();
    let beta = default_beta(n);
    let cfg = MoreauConfig::new(beta, default_gamma(n), 2.0 * b)?;
    inner_iters(&cfg)?;
    let eta = cap(eta, 1.0 / beta, "projected_phased_sgd_oracle");
    let phi = sample_jl(channel.rng, m, data.d())?;
    let proj_dim = phi.out_dim();
    let projected: Vec<Vec<f64>> = (0..n)
        .map(|i| jl_project(&phi, data.features.row(i)))
        .collect::<Result<_>>()?;
    let schedule = phase_schedule(n, eta)?;
    let noise = projected_oracle_noise_std(b, budget);
    let (w, _) = run_phases(
        &schedule,
        proj_dim,
        vec![0.0; proj_dim],
        |w, i| prox_gradient_oracle(&cfg, link, w, &projected[i], data.labels[i]),
        noise,
        |eta_i| 10.0 * b * eta_i,
        "projected_phased_sgd_oracle",
        channel,
    )?;
    Ok(ModelVector { w, lift: Some(phi) })
}
