//! Seeded deterministic randomness.
//!
//! All stochastic components of the crate draw from [`Rng`], a ChaCha8-backed
//! counter generator. Gaussian variates use a fixed Box-Muller transform so a
//! seed fully determines the sample stream: one `gaussian_vector(dim, ..)`
//! call consumes exactly `2 * ceil(dim / 2)` uniform draws regardless of
//! `std`, which makes coupled-noise replay possible.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// Deterministic seeded generator. Single-owner: not shared across threads.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    /// Number of uniform draws consumed so far.
    consumed: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: ChaCha8Rng::seed_from_u64(seed), consumed: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draws consumed since construction.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    /// Derive an independent generator for a sub-task. SplitMix64-style
    /// mixing so nearby (seed, stream) pairs land far apart.
    pub fn split(&self, stream: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.consumed += 1;
        self.inner.next_u64()
    }

    /// Uniform in the open interval (0, 1); one uniform draw.
    pub fn uniform(&mut self) -> f64 {
        // 53 significant bits, shifted off zero so ln() below is safe.
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in [lo, hi); one uniform draw.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// One Box-Muller pair of independent N(0,1) samples; two uniform draws.
    pub fn gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        (r * th.cos(), r * th.sin())
    }

    /// One N(0,1) sample; consumes a full Box-Muller pair (two uniforms).
    pub fn gaussian(&mut self) -> f64 {
        self.gaussian_pair().0
    }

    /// Uniform direction on the unit sphere in R^d; `2*ceil(d/2)` uniforms
    /// plus a renormalization (resamples on the measure-zero zero vector).
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let mut v = gaussian_vector_unchecked(self, dim, 1.0);
            let n = crate::linalg::norm(&v);
            if n > 0.0 {
                crate::linalg::scale(&mut v, 1.0 / n);
                return v;
            }
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn gaussian_vector_unchecked(rng: &mut Rng, dim: usize, std: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    while out.len() < dim {
        let (a, b) = rng.gaussian_pair();
        out.push(std * a);
        if out.len() < dim {
            out.push(std * b);
        }
    }
    out
}

/// `dim` i.i.d. N(0, std^2) samples. The stream advances identically for
/// every `std`, including zero.
pub fn gaussian_vector(rng: &mut Rng, dim: usize, std: f64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid("gaussian_vector: dim must be >= 1"));
    }
    if std < 0.0 {
        return Err(invalid("gaussian_vector: std must be >= 0"));
    }
    Ok(gaussian_vector_unchecked(rng, dim, std))
}

/// Gaussian Johnson-Lindenstrauss projection, entries N(0, 1/m). When the
/// requested output dimension is at least the input dimension the identity
/// map is substituted and flagged.
#[derive(Debug, Clone)]
pub struct JlMatrix {
    rows: usize,
    cols: usize,
    /// Row-major entries; empty for the identity substitute.
    entries: Option<Matrix>,
}

impl JlMatrix {
    pub fn identity(d: usize) -> Self {
        JlMatrix { rows: d, cols: d, entries: None }
    }

    pub fn is_identity(&self) -> bool {
        self.entries.is_none()
    }

    /// Output (projected) dimension m.
    pub fn out_dim(&self) -> usize {
        self.rows
    }

    /// Input (ambient) dimension d.
    pub fn in_dim(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        match &self.entries {
            Some(m) => m.data[r * self.cols + c],
            None => {
                if r == c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sample an m x d Gaussian JL matrix; clamps to the d x d identity when
/// m >= d.
pub fn sample_jl(rng: &mut Rng, m: usize, d: usize) -> Result<JlMatrix> {
    if m == 0 || d == 0 {
        return Err(invalid("sample_jl: dimensions must be >= 1"));
    }
    if m >= d {
        return Ok(JlMatrix::identity(d));
    }
    let std = 1.0 / (m as f64).sqrt();
    let data = gaussian_vector_unchecked(rng, m * d, std);
    Ok(JlMatrix { rows: m, cols: d, entries: Some(Matrix::from_data(m, d, data)) })
}

/// Phi x
pub fn jl_project(phi: &JlMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != phi.cols {
        return Err(crate::error::Error::DimensionMismatch { expected: phi.cols, got: x.len() });
    }
    match &phi.entries {
        None => Ok(x.to_vec()),
        Some(m) => Ok(m.matvec(x)),
    }
}

/// Phi^T w
pub fn jl_lift(phi: &JlMatrix, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != phi.rows {
        return Err(crate::error::Error::DimensionMismatch { expected: phi.rows, got: w.len() });
    }
    match &phi.entries {
        None => Ok(w.to_vec()),
        Some(m) => Ok(m.matvec_t(w)),
    }
}
