//! Gaussian random forcing functions on the periodic unit interval.
//!
//! The covariance is the periodized RBF kernel
//! `k_p(x1, x2) = sum_n exp(-(x1 - x2 - n)^2 / (2 l^2))`, whose Fourier
//! eigenpairs are `lambda_k = sqrt(2 pi) l exp(-2 pi^2 k^2 l^2)` and
//! `e^{i 2 pi k x}`. Real samples use the cos/sin form of the Karhunen-Loeve
//! series:
//!
//! `f(x) = sqrt(lambda_0) a_0 + sum_{k=1}^K sqrt(2 lambda_k) (a_k cos 2 pi k x + b_k sin 2 pi k x)`
//!
//! with i.i.d. standard normal `a_k`, `b_k`. A dense Cholesky sampler is kept
//! alongside as an independent check of the covariance.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Eigenvalue ratio below which modes are dropped.
pub const TRUNCATION_RATIO: f64 = 1e-16;

pub fn kl_eigenvalue(k: i64, length_scale: f64) -> Result<f64> {
    check_length_scale(length_scale)?;
    let k = k as f64;
    Ok((2.0 * PI).sqrt() * length_scale * (-2.0 * PI * PI * k * k * length_scale * length_scale).exp())
}

fn check_length_scale(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid(format!("length scale must be positive, got {l}")));
    }
    Ok(())
}

/// Smallest `K` with `lambda_K / lambda_0 < 1e-16`.
pub fn default_truncation(length_scale: f64) -> usize {
    let mut k = 1usize;
    while (-2.0 * PI * PI * (k * k) as f64 * length_scale * length_scale).exp() >= TRUNCATION_RATIO {
        k += 1;
    }
    k
}

/// `ceil(1 + 6 l)`, at least 3.
pub fn default_kernel_terms(length_scale: f64) -> usize {
    ((1.0 + 6.0 * length_scale).ceil() as usize).max(3)
}

/// Periodized RBF kernel with the image sum truncated to `|n| <= n_terms`.
///
/// The lag is reduced modulo one before summing, so the truncated kernel is
/// exactly 1-periodic.
pub fn periodized_rbf(x1: f64, x2: f64, length_scale: f64, n_terms: usize) -> Result<f64> {
    check_length_scale(length_scale)?;
    if n_terms == 0 {
        return Err(Error::invalid("periodized kernel needs at least one image term"));
    }
    let d = (x1 - x2).rem_euclid(1.0);
    let scale = 2.0 * length_scale * length_scale;
    let n = n_terms as i64;
    Ok((-n..=n)
        .map(|i| {
            let r = d - i as f64;
            (-r * r / scale).exp()
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub length_scale: f64,
    /// KL truncation: modes `|k| <= modes` are kept.
    pub modes: usize,
    /// 1 for fields on `[0,1]`, 2 for separable fields on `[0,1]^2`.
    pub dim: usize,
}

impl GrfSpec {
    pub fn new(length_scale: f64) -> Result<Self> {
        check_length_scale(length_scale)?;
        Ok(GrfSpec {
            length_scale,
            modes: default_truncation(length_scale),
            dim: 1,
        })
    }

    pub fn new_2d(length_scale: f64) -> Result<Self> {
        Ok(GrfSpec {
            dim: 2,
            ..Self::new(length_scale)?
        })
    }

    pub fn with_modes(length_scale: f64, modes: usize) -> Result<Self> {
        check_length_scale(length_scale)?;
        Ok(GrfSpec {
            length_scale,
            modes,
            dim: 1,
        })
    }

    /// Amplitudes of the real basis `[1, cos 2pi x, sin 2pi x, cos 4pi x, ...]`:
    /// `sqrt(lambda_0)` followed by `sqrt(2 lambda_k)` twice per mode.
    pub fn real_amplitudes(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.modes + 1);
        s.push(self.eigenvalue(0).sqrt());
        for k in 1..=self.modes {
            let a = (2.0 * self.eigenvalue(k)).sqrt();
            s.push(a);
            s.push(a);
        }
        s
    }

    fn eigenvalue(&self, k: usize) -> f64 {
        // length scale validated at construction
        kl_eigenvalue(k as i64, self.length_scale).unwrap_or(0.0)
    }
}

/// One draw from the 1D field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub spec: GrfSpec,
    /// Cosine coefficients `a_0..=a_K`.
    pub a: Vec<f64>,
    /// Sine coefficients `b_1..=b_K` (stored from index 0).
    pub b: Vec<f64>,
    pub seed: u64,
}

impl FieldSample {
    pub fn from_coefficients(spec: GrfSpec, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != spec.modes + 1 || b.len() != spec.modes {
            return Err(Error::invalid(format!(
                "expected {} cosine and {} sine coefficients, got {} and {}",
                spec.modes + 1,
                spec.modes,
                a.len(),
                b.len()
            )));
        }
        Ok(FieldSample { spec, a, b, seed: 0 })
    }

    pub fn value(&self, x: f64) -> f64 {
        let amp = self.spec.real_amplitudes();
        self.value_with(&amp, x)
    }

    fn value_with(&self, amp: &[f64], x: f64) -> f64 {
        let mut s = amp[0] * self.a[0];
        for k in 1..=self.spec.modes {
            let t = 2.0 * PI * k as f64 * x;
            s += amp[2 * k - 1] * self.a[k] * t.cos() + amp[2 * k] * self.b[k - 1] * t.sin();
        }
        s
    }

    pub fn eval(&self, xs: &[f64]) -> Vec<f64> {
        let amp = self.spec.real_amplitudes();
        xs.iter().map(|&x| self.value_with(&amp, x)).collect()
    }
}

pub fn sample_field(spec: GrfSpec, seed: u64) -> FieldSample {
    let mut r = rng::seeded(seed);
    let mut a = Vec::with_capacity(spec.modes + 1);
    let mut b = Vec::with_capacity(spec.modes);
    a.push(StandardNormal.sample(&mut r));
    for _ in 1..=spec.modes {
        a.push(StandardNormal.sample(&mut r));
        b.push(StandardNormal.sample(&mut r));
    }
    FieldSample { spec, a, b, seed }
}

pub fn eval_field(sample: &FieldSample, xs: &[f64]) -> Vec<f64> {
    sample.eval(xs)
}

/// Separable 2D field with covariance `k_p(x, x') k_p(y, y')`, expanded in the
/// tensor-product real basis. `coeffs[r * n + c]` multiplies basis function
/// `r` in x and `c` in y, where `n = 2K + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample2D {
    pub spec: GrfSpec,
    pub coeffs: Vec<f64>,
    pub seed: u64,
}

impl FieldSample2D {
    pub fn sample(spec: GrfSpec, seed: u64) -> Self {
        let n = 2 * spec.modes + 1;
        let mut r = rng::seeded(seed);
        let coeffs = (0..n * n).map(|_| StandardNormal.sample(&mut r)).collect();
        FieldSample2D { spec, coeffs, seed }
    }

    fn basis(&self, amp: &[f64], x: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(amp[0]);
        for k in 1..=self.spec.modes {
            let t = 2.0 * PI * k as f64 * x;
            out.push(amp[2 * k - 1] * t.cos());
            out.push(amp[2 * k] * t.sin());
        }
    }

    /// Evaluates on the tensor grid `xs x ys`, returning values at flat index
    /// `j * xs.len() + i`.
    pub fn eval_grid(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let amp = self.spec.real_amplitudes();
        let n = amp.len();
        let mut bx = Vec::with_capacity(n);
        let bxs: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                self.basis(&amp, x, &mut bx);
                bx.clone()
            })
            .collect();
        // Contract over the x basis once per y.
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        let mut by = Vec::with_capacity(n);
        let mut partial = vec![0.0; n];
        for &y in ys {
            self.basis(&amp, y, &mut by);
            for (r, p) in partial.iter_mut().enumerate() {
                *p = (0..n).map(|c| self.coeffs[r * n + c] * by[c]).sum();
            }
            for b in &bxs {
                out.push(b.iter().zip(&partial).map(|(u, v)| u * v).sum());
            }
        }
        out
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.eval_grid(&[x], &[y])[0]
    }
}

/// Dense covariance matrix `K_ij = k_p(x_i, x_j)`.
pub fn covariance_matrix(xs: &[f64], length_scale: f64) -> Result<Vec<Vec<f64>>> {
    let terms = default_kernel_terms(length_scale);
    xs.iter()
        .map(|&a| xs.iter().map(|&b| periodized_rbf(a, b, length_scale, terms)).collect())
        .collect()
}

fn cholesky(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| a[j][k] * a[j][k]).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let s = a[i][j] - (0..j).map(|k| a[i][k] * a[j][k]).sum::<f64>();
            a[i][j] = s / d;
        }
        for k in j + 1..n {
            a[j][k] = 0.0;
        }
    }
    Some(a)
}

/// Jitter applied automatically when the unregularized factorization fails.
pub const FALLBACK_JITTER: f64 = 1e-10;

/// Draws `N(0, K + jitter I)` at `xs` through a dense Cholesky factor.
///
/// If the factorization fails at zero jitter it is retried once with
/// [`FALLBACK_JITTER`].
pub fn cholesky_sample(xs: &[f64], length_scale: f64, seed: u64, jitter: f64) -> Result<Vec<f64>> {
    let factor = cholesky_factor(xs, length_scale, jitter)?;
    let mut r = rng::seeded(seed);
    let z: Vec<f64> = (0..xs.len()).map(|_| StandardNormal.sample(&mut r)).collect();
    Ok(factor
        .iter()
        .map(|row| row.iter().zip(&z).map(|(l, z)| l * z).sum())
        .collect())
}

pub fn cholesky_factor(xs: &[f64], length_scale: f64, jitter: f64) -> Result<Vec<Vec<f64>>> {
    if jitter < 0.0 {
        return Err(Error::invalid("jitter must be nonnegative"));
    }
    let k = covariance_matrix(xs, length_scale)?;
    let with_jitter = |j: f64| {
        let mut m = k.clone();
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += j;
        }
        m
    };
    if let Some(l) = cholesky(with_jitter(jitter)) {
        return Ok(l);
    }
    if jitter == 0.0 {
        if let Some(l) = cholesky(with_jitter(FALLBACK_JITTER)) {
            return Ok(l);
        }
    }
    Err(Error::NumericalFailure(format!(
        "covariance matrix of {} points is not positive definite (jitter {jitter}); \
         retry with a larger jitter",
        xs.len()
    )))
}
