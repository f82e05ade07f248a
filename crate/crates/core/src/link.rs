//! Link/activation functions and the convex surrogate loss
//! `l(w; x, y) = integral_0^{<w,x>} (sigma(z) - y) dz`.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::linalg::dot;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Sigmoid,
    Tanh,
    Relu,
    Custom {
        value: ScalarFn,
        subgradient: ScalarFn,
        lipschitz: f64,
        range_bound: f64,
        has_subgradient_everywhere: bool,
    },
}

/// A non-decreasing link sigma with value, subgradient, antiderivative and
/// the constants (G, B) used by the calibration formulas. B is infinite for
/// ReLU.
#[derive(Clone)]
pub struct LinkFunction {
    name: String,
    kind: Kind,
}

impl std::fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinkFunction").field("name", &self.name).finish()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^a), overflow-safe.
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

impl LinkFunction {
    pub fn sigmoid() -> Self {
        LinkFunction { name: "sigmoid".into(), kind: Kind::Sigmoid }
    }

    pub fn tanh() -> Self {
        LinkFunction { name: "tanh".into(), kind: Kind::Tanh }
    }

    pub fn relu() -> Self {
        LinkFunction { name: "relu".into(), kind: Kind::Relu }
    }

    /// Config-facing selection by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sigmoid" => Ok(Self::sigmoid()),
            "tanh" => Ok(Self::tanh()),
            "relu" => Ok(Self::relu()),
            other => Err(invalid(format!("unknown link function {other:?}"))),
        }
    }

    /// A user-supplied link; the antiderivative is evaluated by adaptive
    /// Simpson quadrature.
    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        range_bound: f64,
        has_subgradient_everywhere: bool,
    ) -> Self {
        LinkFunction {
            name: name.into(),
            kind: Kind::Custom {
                value: Arc::new(value),
                subgradient: Arc::new(subgradient),
                lipschitz,
                range_bound,
                has_subgradient_everywhere,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// sigma(z)
    pub fn value(&self, z: f64) -> f64 {
        match &self.kind {
            Kind::Sigmoid => sigmoid(z),
            Kind::Tanh => z.tanh(),
            Kind::Relu => z.max(0.0),
            Kind::Custom { value, .. } => value(z),
        }
    }

    /// sigma'(z); the ReLU convention at zero is sigma'(0) = 0.
    pub fn subgradient(&self, z: f64) -> f64 {
        match &self.kind {
            Kind::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Kind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Kind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Custom { subgradient, .. } => subgradient(z),
        }
    }

    /// A(a) = integral_0^a sigma(z) dz, with A(0) = 0. Closed form for the
    /// built-in links, adaptive Simpson (abs. tol 1e-10) otherwise.
    pub fn antiderivative(&self, a: f64) -> Result<f64> {
        match &self.kind {
            Kind::Sigmoid => Ok(softplus(a) - std::f64::consts::LN_2),
            // ln cosh a = |a| + ln(1 + e^{-2|a|}) - ln 2
            Kind::Tanh => Ok(a.abs() + (-2.0 * a.abs()).exp().ln_1p() - std::f64::consts::LN_2),
            Kind::Relu => Ok(a.max(0.0).powi(2) / 2.0),
            Kind::Custom { value, .. } => adaptive_simpson(value.as_ref(), 0.0, a, 1e-10),
        }
    }

    /// Lipschitz constant G.
    pub fn lipschitz(&self) -> f64 {
        match &self.kind {
            Kind::Sigmoid => 0.25,
            Kind::Tanh => 1.0,
            Kind::Relu => 1.0,
            Kind::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Range bound B with |sigma| <= B; infinite for ReLU.
    pub fn range_bound(&self) -> f64 {
        match &self.kind {
            Kind::Sigmoid | Kind::Tanh => 1.0,
            Kind::Relu => f64::INFINITY,
            Kind::Custom { range_bound, .. } => *range_bound,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.range_bound().is_finite()
    }

    /// Whether the surrogate loss is G-smooth (sigma differentiable
    /// everywhere). False for ReLU: its surrogate needs the Moreau oracle
    /// or the projected-GD path.
    pub fn has_subgradient_everywhere(&self) -> bool {
        match &self.kind {
            Kind::Sigmoid | Kind::Tanh => true,
            Kind::Relu => false,
            Kind::Custom { has_subgradient_everywhere, .. } => *has_subgradient_everywhere,
        }
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if lo == hi {
        return Ok(0.0);
    }
    let (a, b, sign) = if lo <= hi { (lo, hi, 1.0) } else { (hi, lo, -1.0) };
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    let mut residual = 0.0;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48, &mut residual);
    if residual > tol {
        return Err(Error::NumericFailure {
            context: "adaptive Simpson quadrature did not converge".into(),
            residual,
        });
    }
    Ok(sign * v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    residual: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = (left + right - whole).abs();
    if err <= 15.0 * tol || depth == 0 {
        if depth == 0 {
            *residual = residual.max(err / 15.0);
        }
        return left + right + (left + right - whole) / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, residual)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, residual)
}

fn check_dims(w: &[f64], x: &[f64]) -> Result<()> {
    if w.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), got: x.len() });
    }
    Ok(())
}

/// l(w; x, y) = A(<w,x>) - y <w,x>.
pub fn surrogate_loss(link: &LinkFunction, w: &[f64], x: &[f64], y: f64) -> Result<f64> {
    check_dims(w, x)?;
    let a = dot(w, x);
    Ok(link.antiderivative(a)? - y * a)
}

/// grad l(w; x, y) = (sigma(<w,x>) - y) x.
pub fn surrogate_grad(link: &LinkFunction, w: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
    check_dims(w, x)?;
    let s = link.value(dot(w, x)) - y;
    Ok(x.iter().map(|xi| s * xi).collect())
}

/// Monte-Carlo estimate of the squared-error population risk of `predict`
/// on fresh samples from `draw`. Returns (estimate, standard error).
pub fn population_risk_mc<P, S>(mut predict: P, mut draw: S, n_test: usize) -> Result<(f64, f64)>
where
    P: FnMut(&[f64]) -> f64,
    S: FnMut() -> (Vec<f64>, f64),
{
    if n_test < 100 {
        return Err(invalid("population_risk_mc: n_test must be >= 100"));
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n_test {
        let (x, y) = draw();
        let e = predict(&x) - y;
        let se = e * e;
        sum += se;
        sumsq += se * se;
    }
    let n = n_test as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    Ok((mean, (var / n).sqrt()))
}
