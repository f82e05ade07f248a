//! Gaussian-mechanism calibration, gradient clipping, and the noise audit
//! log. Every noise injection in the crate goes through [`NoiseChannel`] so
//! tests can verify the injected standard deviations against the closed-form
//! calibration formulas.

use crate::error::{invalid, Result};
use crate::linalg::norm;
use crate::rng::{gaussian_vector, Rng};

/// (epsilon, delta) privacy budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    /// Requires epsilon > 0 and delta in (0, 1). Budgets with epsilon > 1
    /// are accepted with a warning: the utility theorems assume epsilon <= 1
    /// but sweeps may go beyond it.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid("privacy budget: epsilon must be > 0"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("privacy budget: delta must be in (0, 1)"));
        }
        if epsilon > 1.0 {
            log::warn!("privacy budget epsilon = {epsilon} > 1; utility guarantees assume epsilon <= 1");
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Gaussian mechanism std for a query with the given l2-sensitivity:
/// sqrt(2 * sens^2 * ln(1.25/delta)) / epsilon.
pub fn gaussian_mechanism_std(sensitivity: f64, budget: &PrivacyBudget) -> Result<f64> {
    if sensitivity < 0.0 {
        return Err(invalid("gaussian_mechanism_std: sensitivity must be >= 0"));
    }
    Ok((2.0 * sensitivity * sensitivity * (1.25 / budget.delta()).ln()).sqrt() / budget.epsilon())
}

/// g / max(1, ||g||_2 / c): output norm at most c, parallel to g.
pub fn clip_to_norm(g: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(invalid("clip_to_norm: clip bound must be > 0"));
    }
    let scale = 1.0 / (norm(g) / c).max(1.0);
    Ok(g.iter().map(|x| x * scale).collect())
}

/// In-place variant for large gradient buffers.
pub fn clip_to_norm_in_place(g: &mut [f64], c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid("clip_to_norm: clip bound must be > 0"));
    }
    let scale = 1.0 / (norm(g) / c).max(1.0);
    if scale < 1.0 {
        crate::linalg::scale(g, scale);
    }
    Ok(scale)
}

/// Per-iteration DP-SGD noise std:
/// c2 * q * C * sqrt(T * ln(1/delta)) / (batch_size * epsilon).
///
/// Warns when epsilon >= q^2 * T (the privacy statement assumes
/// epsilon < c1 q^2 T; c1 is taken as 1).
pub fn dpsgd_noise_std(
    q: f64,
    clip: f64,
    iterations: usize,
    budget: &PrivacyBudget,
    batch_size: usize,
    c2: f64,
) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid("dpsgd_noise_std: sampling rate must be in (0, 1]"));
    }
    if !(clip > 0.0) || iterations == 0 || batch_size == 0 || !(c2 > 0.0) {
        return Err(invalid("dpsgd_noise_std: clip, T, batch size and c2 must be positive"));
    }
    let t = iterations as f64;
    if budget.epsilon() >= q * q * t {
        log::warn!(
            "dpsgd_noise_std: epsilon = {} >= q^2 T = {}; outside the stated privacy regime",
            budget.epsilon(),
            q * q * t
        );
    }
    Ok(c2 * q * clip * (t * (1.0 / budget.delta()).ln()).sqrt() / (batch_size as f64 * budget.epsilon()))
}

/// Strict per-iteration calibration: sensitivity 2C/|B_t| through the
/// Gaussian mechanism, with the budget split across T iterations by
/// advanced composition (per-iteration epsilon/(2 sqrt(2 T ln(2/delta))),
/// delta/(2T)).
pub fn strict_dpsgd_noise_std(
    clip: f64,
    iterations: usize,
    budget: &PrivacyBudget,
    batch_size: usize,
) -> Result<f64> {
    if !(clip > 0.0) || iterations == 0 || batch_size == 0 {
        return Err(invalid("strict_dpsgd_noise_std: clip, T and batch size must be positive"));
    }
    let t = iterations as f64;
    let eps_i = budget.epsilon() / (2.0 * (2.0 * t * (2.0 / budget.delta()).ln()).sqrt());
    let delta_i = budget.delta() / (2.0 * t);
    let per_iter = PrivacyBudget::new(eps_i, delta_i)?;
    gaussian_mechanism_std(2.0 * clip / batch_size as f64, &per_iter)
}

/// One recorded noise injection.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEvent {
    pub iteration: usize,
    pub mechanism: String,
    /// Sensitivity or clip bound behind the calibration.
    pub bound: f64,
    /// Std actually used for sampling.
    pub std: f64,
    pub dim: usize,
}

/// Append-only per-run log of noise injections.
#[derive(Debug, Default, Clone)]
pub struct NoiseLog {
    events: Vec<NoiseEvent>,
}

impl NoiseLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[NoiseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn push(&mut self, ev: NoiseEvent) {
        self.events.push(ev);
    }
}

/// Shared handle for everything a training run needs to draw noise:
/// the generator, the audit log, and a stub switch. In stubbed mode the
/// stream still advances exactly as in a live run but the returned vector
/// is zero, which gives a deterministic non-private reference trajectory.
pub struct NoiseChannel<'a> {
    pub rng: &'a mut Rng,
    pub log: &'a mut NoiseLog,
    pub stubbed: bool,
}

impl<'a> NoiseChannel<'a> {
    pub fn new(rng: &'a mut Rng, log: &'a mut NoiseLog) -> Self {
        NoiseChannel { rng, log, stubbed: false }
    }

    pub fn stubbed(rng: &'a mut Rng, log: &'a mut NoiseLog) -> Self {
        NoiseChannel { rng, log, stubbed: true }
    }

    /// Draw N(0, std^2 I_dim), record the event, and return the noise
    /// (zeros when stubbed).
    pub fn inject(
        &mut self,
        iteration: usize,
        mechanism: &str,
        bound: f64,
        std: f64,
        dim: usize,
    ) -> Result<Vec<f64>> {
        let mut v = gaussian_vector(self.rng, dim, std)?;
        if self.stubbed {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.log.push(NoiseEvent {
            iteration,
            mechanism: mechanism.to_string(),
            bound,
            std,
            dim,
        });
        Ok(v)
    }
}
