//! Phased SGD for non-convex GLMs, its JL-projected variant, and the
//! dispatcher that picks between them from the privacy budget and the
//! effective feature rank.

use crate::error::{invalid, Result};
use crate::linalg::{axpy, dot, scale};
use crate::link::{surrogate_grad, LinkFunction};
use crate::privacy::{NoiseChannel, PrivacyBudget};
use crate::rng::{jl_lift, jl_project, sample_jl, JlMatrix};
use crate::synth::Dataset;

/// One SGD phase: a sample budget and a step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub n_i: usize,
    pub eta_i: f64,
}

/// Geometric phase plan: n_i = floor(2^-i n), eta_i = eta/4^i, empty tail
/// phases truncated.
#[derive(Debug, Clone)]
pub struct PhaseSchedule {
    pub phases: Vec<Phase>,
    pub base_eta: f64,
    /// Samples not consumed by any phase.
    pub discarded: usize,
}

impl PhaseSchedule {
    pub fn consumed(&self) -> usize {
        self.phases.iter().map(|p| p.n_i).sum()
    }
}

pub fn phase_schedule(n: usize, eta: f64) -> Result<PhaseSchedule> {
    if n < 2 {
        return Err(invalid("phase_schedule: need n >= 2"));
    }
    if eta <= 0.0 {
        return Err(invalid("phase_schedule: step size must be positive"));
    }
    let k = (n as f64).log2().ceil() as u32;
    let mut phases = Vec::new();
    for i in 1..=k {
        let n_i = n / 2usize.pow(i);
        if n_i == 0 {
            break;
        }
        phases.push(Phase { n_i, eta_i: eta / 4f64.powi(i as i32) });
    }
    let consumed: usize = phases.iter().map(|p| p.n_i).sum();
    Ok(PhaseSchedule { phases, base_eta: eta, discarded: n - consumed })
}

/// A trained model, optionally carrying the projection it was trained
/// under. Predictions use <w, phi x> which equals <phi^T w, x>.
#[derive(Debug, Clone)]
pub struct ModelVector {
    pub w: Vec<f64>,
    pub lift: Option<JlMatrix>,
}

impl ModelVector {
    pub fn plain(w: Vec<f64>) -> Self {
        ModelVector { w, lift: None }
    }

    /// <w, phi x> for an ambient-space input x.
    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        match &self.lift {
            None => {
                if x.len() != self.w.len() {
                    return Err(crate::Error::DimensionMismatch {
                        expected: self.w.len(),
                        got: x.len(),
                    });
                }
                Ok(dot(&self.w, x))
            }
            Some(phi) => Ok(dot(&self.w, &jl_project(phi, x)?)),
        }
    }

    /// The ambient-space weight vector (phi^T w when projected).
    pub fn to_ambient(&self) -> Result<Vec<f64>> {
        match &self.lift {
            None => Ok(self.w.clone()),
            Some(phi) => jl_lift(phi, &self.w),
        }
    }
}

/// Shared phased driver. `grad` maps (current w, global sample index) to a
/// stochastic gradient; `noise_std` maps eta_i to the phase noise level.
/// Returns the final noisy phase average together with the per-phase
/// pre-noise averages (used by sensitivity tests).
pub(crate) fn run_phases<G, S, B>(
    schedule: &PhaseSchedule,
    dim: usize,
    w0: Vec<f64>,
    mut grad: G,
    noise_std: S,
    sensitivity: B,
    mechanism: &str,
    channel: &mut NoiseChannel<'_>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    G: FnMut(&[f64], usize) -> Result<Vec<f64>>,
    S: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    let mut w = w0;
    let mut idx = 0usize;
    let mut prenoise = Vec::with_capacity(schedule.phases.len());
    for (i, phase) in schedule.phases.iter().enumerate() {
        let mut acc = vec![0.0; dim];
        for _ in 0..phase.n_i {
            axpy(&mut acc, 1.0, &w);
            let g = grad(&w, idx)?;
            idx += 1;
            axpy(&mut w, -phase.eta_i, &g);
        }
        scale(&mut acc, 1.0 / phase.n_i as f64);
        prenoise.push(acc.clone());
        let tau = noise_std(phase.eta_i);
        let zeta = channel.inject(i + 1, mechanism, sensitivity(phase.eta_i), tau, dim)?;
        axpy(&mut acc, 1.0, &zeta);
        w = acc;
    }
    Ok((w, prenoise))
}

fn check_link_for_phased(link: &LinkFunction) -> Result<f64> {
    if !link.is_bounded() {
        return Err(invalid(
            "phased_sgd: the link is unbounded; use the ReLU regression solvers instead",
        ));
    }
    if !link.has_subgradient_everywhere() {
        return Err(invalid(
            "phased_sgd: the link lacks a subgradient everywhere; use the Moreau oracle variants",
        ));
    }
    Ok(link.range_bound())
}

fn cap_eta(eta: f64, cap: f64, what: &str) -> f64 {
    if eta > cap {
        log::warn!("{what}: step size {eta} exceeds the stability cap {cap}; capping");
        cap
    } else {
        eta
    }
}

/// Phased SGD on the convex surrogate, one pass over the data, Gaussian
/// noise tau_i = 8 B eta_i sqrt(ln(1/delta))/eps added to each phase
/// average. Returns the final noisy phase average.
pub fn phased_sgd(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    eta: f64,
    w0: Vec<f64>,
    channel: &mut NoiseChannel<'_>,
) -> Result<ModelVector> {
    phased_sgd_trace(data, link, budget, eta, w0, channel).map(|(m, _)| m)
}

/// As `phased_sgd`, but also returns the per-phase pre-noise averages for
/// sensitivity instrumentation.
pub fn phased_sgd_trace(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    eta: f64,
    w0: Vec<f64>,
    channel: &mut NoiseChannel<'_>,
) -> Result<(ModelVector, Vec<Vec<f64>>)> {
    let b = check_link_for_phased(link)?;
    let eta = cap_eta(eta, 2.0 / link.lipschitz(), "phased_sgd");
    let schedule = phase_schedule(data.n(), eta)?;
    let d = data.d();
    if w0.len() != d {
        return Err(crate::Error::DimensionMismatch { expected: d, got: w0.len() });
    }
    let noise = phased_noise_std(b, budget);
    let (w, prenoise) = run_phases(
        &schedule,
        d,
        w0,
        |w, i| {
            let (x, y) = data.sample(i);
            surrogate_grad(link, w, x, y)
        },
        noise,
        |eta_i| 4.0 * b * eta_i,
        "phased_sgd",
        channel,
    )?;
    Ok((ModelVector::plain(w), prenoise))
}

/// tau_i as a function of eta_i for the unprojected variant.
pub fn phased_noise_std(b: f64, budget: &PrivacyBudget) -> impl Fn(f64) -> f64 {
    let (eps, delta) = (budget.epsilon(), budget.delta());
    move |eta_i| 8.0 * b * eta_i * (1.0 / delta).ln().sqrt() / eps
}

/// tau_i for the JL-projected variant (delta/2 accounting, doubled constant).
pub fn projected_phased_noise_std(b: f64, budget: &PrivacyBudget) -> impl Fn(f64) -> f64 {
    let (eps, delta) = (budget.epsilon(), budget.delta());
    move |eta_i| 16.0 * b * eta_i * (2.0 / delta).ln().sqrt() / eps
}

/// Default projected dimension ceil(ln(n/delta) (n eps)^(2/3)); callers clamp
/// against d via the identity fallback in `sample_jl`.
pub fn default_projection_dim(n: usize, budget: &PrivacyBudget) -> usize {
    let n = n as f64;
    ((n / budget.delta()).ln() * (n * budget.epsilon()).powf(2.0 / 3.0)).ceil() as usize
}

/// Phased SGD run in a shared random projection; the returned model carries
/// the projection so predictions lift back to the ambient space.
pub fn projected_phased_sgd(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    eta: f64,
    m: usize,
    channel: &mut NoiseChannel<'_>,
) -> Result<ModelVector> {
    let b = check_link_for_phased(link)?;
    let eta = cap_eta(eta, 2.0 / link.lipschitz(), "projected_phased_sgd");
    let d = data.d();
    let phi = sample_jl(channel.rng, m, d)?;
    let proj_dim = phi.out_dim();
    let projected: Vec<Vec<f64>> =
        (0..data.n()).map(|i| jl_project(&phi, data.features.row(i))).collect::<Result<_>>()?;
    let schedule = phase_schedule(data.n(), eta)?;
    let noise = projected_phased_noise_std(b, budget);
    let (w, _) = run_phases(
        &schedule,
        proj_dim,
        vec![0.0; proj_dim],
        |w, i| surrogate_grad(link, w, &projected[i], data.labels[i]),
        noise,
        |eta_i| 8.0 * b * eta_i,
        "projected_phased_sgd",
        channel,
    )?;
    Ok(ModelVector { w, lift: Some(phi) })
}

/// Dispatcher: the direct solver when eps > theta^(3/2)/n (strict), the
/// projected solver otherwise. theta is the caller's bound on the effective
/// feature rank.
pub fn dp_glm(
    data: &Dataset,
    link: &LinkFunction,
    budget: &PrivacyBudget,
    theta: f64,
    eta: f64,
    channel: &mut NoiseChannel<'_>,
) -> Result<ModelVector> {
    if theta <= 0.0 {
        return Err(invalid("dp_glm: theta must be positive"));
    }
    let n = data.n();
    if theta > n as f64 {
        return Err(invalid("dp_glm: theta cannot exceed n"));
    }
    if budget.epsilon() > theta.powf(1.5) / n as f64 {
        phased_sgd(data, link, budget, eta, vec![0.0; data.d()], channel)
    } else {
        let m = default_projection_dim(n, budget);
        projected_phased_sgd(data, link, budget, eta, m, channel)
    }
}

/// Which branch `dp_glm` takes, for tests and reporting.
pub fn dp_glm_uses_projection(n: usize, theta: f64, epsilon: f64) -> bool {
    epsilon <= theta.powf(1.5) / n as f64
}
