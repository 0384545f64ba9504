//! Point-evaluation encoder on `m = 2M + 1` equidistant sensors and its
//! trigonometric-interpolation decoder.
//!
//! Sensors sit at `x_j = j/m`, `j = 1..=m`. The decoder computes
//! `c_k = (1/m) sum_j f_j e^{-i 2 pi j k / m}` for `|k| <= M` by direct
//! summation and reconstructs `sum_k c_k e^{i 2 pi k x}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grf::{sample_field, GrfSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    points: Vec<f64>,
}

impl SensorGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m.is_multiple_of(2) {
            return Err(Error::invalid(format!("sensor count must be odd and positive, got {m}")));
        }
        Ok(SensorGrid {
            points: (1..=m).map(|j| j as f64 / m as f64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

pub fn encode(f: impl Fn(f64) -> f64, grid: &SensorGrid) -> Vec<f64> {
    grid.points.iter().map(|&x| f(x)).collect()
}

/// Band-limited trigonometric polynomial `sum_{|k| <= M} c_k e^{i 2 pi k x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigFunction {
    half_band: usize,
    /// `coeffs[k + M]` holds `c_k`.
    coeffs: Vec<Complex64>,
}

impl TrigFunction {
    pub fn half_band(&self) -> usize {
        self.half_band
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        let m = self.half_band as i64;
        if k.abs() > m {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + m) as usize]
        }
    }

    pub fn eval_complex(&self, x: f64) -> Complex64 {
        let m = self.half_band as i64;
        (-m..=m)
            .map(|k| self.coeff(k) * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x))
            .sum()
    }

    /// Real part of the reconstruction, pairing `k` with `-k`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut s = self.coeff(0).re;
        for k in 1..=self.half_band as i64 {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x);
            s += (self.coeff(k) * e + self.coeff(-k) * e.conj()).re;
        }
        s
    }
}

pub fn decode_trig(samples: &[f64]) -> Result<TrigFunction> {
    let m = samples.len();
    if m == 0 || m.is_multiple_of(2) {
        return Err(Error::invalid(format!("decoder needs an odd number of samples, got {m}")));
    }
    let half = (m - 1) / 2;
    let inv = 1.0 / m as f64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); m];
    coeffs[half] = Complex64::new(samples.iter().sum::<f64>() * inv, 0.0);
    for k in 1..=half {
        let c: Complex64 = samples
            .iter()
            .enumerate()
            .map(|(idx, &f)| {
                let j = (idx + 1) as f64;
                f * Complex64::from_polar(1.0, -2.0 * PI * j * k as f64 / m as f64)
            })
            .sum::<Complex64>()
            * inv;
        coeffs[half + k] = c;
        coeffs[half - k] = c.conj();
    }
    Ok(TrigFunction {
        half_band: half,
        coeffs,
    })
}

/// Quadrature points for the L2 norm in [`encode_decode_error`].
pub const L2_QUADRATURE_POINTS: usize = 1024;

/// Monte Carlo estimate of `(E ||D(E(f)) - f||_{L2}^2)^{1/2}` for each sensor
/// count, using the same field draws for every `m`.
pub fn encode_decode_error(length_scale: f64, sensor_counts: &[usize], n_mc: usize, seed: u64) -> Result<Vec<f64>> {
    if n_mc < 100 {
        return Err(Error::invalid("at least 100 Monte Carlo samples are required"));
    }
    let spec = GrfSpec::new(length_scale)?;
    let grids = sensor_counts
        .iter()
        .map(|&m| SensorGrid::new(m))
        .collect::<Result<Vec<_>>>()?;
    let quad: Vec<f64> = (0..L2_QUADRATURE_POINTS)
        .map(|i| i as f64 / L2_QUADRATURE_POINTS as f64)
        .collect();
    let mut sums = vec![0.0; grids.len()];
    for s in 0..n_mc {
        let f = sample_field(spec, rng::derive(seed, s as u64));
        let truth = f.eval(&quad);
        for (sum, grid) in sums.iter_mut().zip(&grids) {
            let decoded = decode_trig(&f.eval(grid.points()))?;
            let mse: f64 = quad
                .iter()
                .zip(&truth)
                .map(|(&x, &t)| (decoded.eval(x) - t).powi(2))
                .sum::<f64>()
                / quad.len() as f64;
            *sum += mse;
        }
    }
    Ok(sums.into_iter().map(|s| (s / n_mc as f64).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensor_grid() {
        assert_eq!(SensorGrid::new(3).unwrap().points(), &[1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(SensorGrid::new(4).is_err());
        assert_eq!(encode(|_| 2.5, &SensorGrid::new(5).unwrap()), vec![2.5; 5]);
        assert_eq!(encode(|x| x, &SensorGrid::new(3).unwrap()), vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn decode_constant_and_pure_mode() {
        let c = decode_trig(&[1.5; 7]).unwrap();
        assert!((c.coeff(0).re - 1.5).abs() < 1e-12);
        for k in 1..=3 {
            assert!(c.coeff(k).norm() < 1e-12 && c.coeff(-k).norm() < 1e-12);
        }

        let grid = SensorGrid::new(5).unwrap();
        let t = decode_trig(&encode(|x| (2.0 * PI * x).cos(), &grid)).unwrap();
        for k in -2..=2i64 {
            let expect = if k.abs() == 1 { 0.5 } else { 0.0 };
            assert!((t.coeff(k) - Complex64::new(expect, 0.0)).norm() < 1e-12, "k={k}");
        }
        assert!(decode_trig(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn decode_reencode_and_band_identity() {
        let grid = SensorGrid::new(9).unwrap();
        let samples: Vec<f64> = (0..9).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let t = decode_trig(&samples).unwrap();
        for (x, s) in grid.points().iter().zip(&samples) {
            assert!((t.eval(*x) - s).abs() < 1e-12);
            assert!(t.eval_complex(*x).im.abs() < 1e-12);
        }

        // Identity on the band |k| <= 4.
        let f = |x: f64| 0.3 + (2.0 * PI * 3.0 * x).sin() - 0.7 * (2.0 * PI * 4.0 * x).cos();
        let t = decode_trig(&encode(f, &grid)).unwrap();
        for i in 0..50 {
            let x = i as f64 / 50.0 + 0.003;
            assert!((t.eval(x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn band_limited_field_is_reconstructed_exactly() {
        let spec = GrfSpec::new(0.3).unwrap();
        let f = sample_field(spec, 9);
        let m = 2 * spec.modes + 1;
        let t = decode_trig(&f.eval(SensorGrid::new(m).unwrap().points())).unwrap();
        for i in 0..100 {
            let x = i as f64 / 100.0;
            assert!((t.eval(x) - f.value(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn encoding_error_is_non_increasing_with_paired_seeds() {
        let e = encode_decode_error(0.15, &[3, 5, 9, 17], 100, 2).unwrap();
        assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
        assert!(encode_decode_error(0.15, &[3], 10, 2).is_err());
    }
}
