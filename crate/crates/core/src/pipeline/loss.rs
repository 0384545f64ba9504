//! Training losses and the quadrature-weighted empirical risk.

use super::dataset::OperatorDataset;
use crate::deeponet::DeepOnet;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Samples evaluated per branch batch when scoring a whole dataset.
const SCORE_CHUNK: usize = 256;

pub fn check_compatible(model: &DeepOnet, ds: &OperatorDataset) -> Result<()> {
    if model.sensors() != ds.n_sensors() {
        return Err(Error::invalid(format!(
            "model expects {} sensor values but the dataset has {}",
            model.sensors(),
            ds.n_sensors()
        )));
    }
    if model.location_dim() != ds.dim() {
        return Err(Error::invalid(format!(
            "model takes {}-dimensional locations but the dataset is {}-dimensional",
            model.location_dim(),
            ds.dim()
        )));
    }
    Ok(())
}

/// Predictions on the selected (sample, location) grid, sample-major.
pub fn predictions(model: &DeepOnet, ds: &OperatorDataset, samples: &[usize], locations: &[usize]) -> Result<Vec<f64>> {
    check_compatible(model, ds)?;
    if let Some(&n) = samples.iter().find(|&&n| n >= ds.len()) {
        return Err(Error::invalid(format!("sample index {n} out of range")));
    }
    if let Some(&j) = locations.iter().find(|&&j| j >= ds.n_locations()) {
        return Err(Error::invalid(format!("location index {j} out of range")));
    }
    let d = ds.dim();
    let ys = Matrix::from_vec(
        locations.len(),
        d,
        locations.iter().flat_map(|&j| ds.location(j).iter().copied()).collect(),
    )?;
    let m = ds.n_sensors();
    let mut out = Vec::with_capacity(samples.len() * locations.len());
    for chunk in samples.chunks(SCORE_CHUNK) {
        let s = Matrix::from_vec(
            chunk.len(),
            m,
            chunk
                .iter()
                .flat_map(|&n| ds.samples[n].sensor_values.iter().copied())
                .collect(),
        )?;
        out.extend(model.predict_grid(&s, &ys)?);
    }
    Ok(out)
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Mean squared error with uniform weights over the selected pairs.
pub fn loss_mse(model: &DeepOnet, ds: &OperatorDataset, samples: &[usize], locations: &[usize]) -> Result<f64> {
    if samples.is_empty() || locations.is_empty() {
        return Err(Error::invalid("empty selection"));
    }
    let pred = predictions(model, ds, samples, locations)?;
    let mut sum = 0.0;
    for (a, &n) in samples.iter().enumerate() {
        let t = &ds.samples[n].targets;
        let row = &pred[a * locations.len()..(a + 1) * locations.len()];
        sum += row
            .iter()
            .zip(locations)
            .map(|(p, &j)| (t[j] - p).powi(2))
            .sum::<f64>();
    }
    Ok(sum / (samples.len() * locations.len()) as f64)
}

pub fn loss_mse_all(model: &DeepOnet, ds: &OperatorDataset) -> Result<f64> {
    loss_mse(model, ds, &all(ds.len()), &all(ds.n_locations()))
}

fn check_weights(ds: &OperatorDataset) -> Result<()> {
    if ds.weights.is_empty() || ds.weights.len() != ds.n_locations() {
        return Err(Error::invalid("dataset locations carry no quadrature weights"));
    }
    if ds.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("quadrature weights must be finite and non-negative"));
    }
    Ok(())
}

/// `(sum_j w_j |u_n(y_j) - N(f_n)(y_j)|^2)^{1/2}` for every sample.
pub fn per_sample_risk(model: &DeepOnet, ds: &OperatorDataset) -> Result<Vec<f64>> {
    check_weights(ds)?;
    let l = ds.n_locations();
    let pred = predictions(model, ds, &all(ds.len()), &all(l))?;
    Ok(ds
        .samples
        .iter()
        .zip(pred.chunks_exact(l))
        .map(|(s, p)| {
            s.targets
                .iter()
                .zip(p)
                .zip(&ds.weights)
                .map(|((t, p), w)| w * (t - p).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Root of the sample mean of the quadrature-weighted squared errors.
pub fn empirical_risk(model: &DeepOnet, ds: &OperatorDataset) -> Result<f64> {
    Ok(risk_from_per_sample(&per_sample_risk(model, ds)?))
}

pub fn risk_from_per_sample(per_sample: &[f64]) -> f64 {
    (per_sample.iter().map(|r| r * r).sum::<f64>() / per_sample.len() as f64).sqrt()
}

/// Risk of the predictor that is identically zero.
pub fn zero_predictor_risk(ds: &OperatorDataset) -> Result<f64> {
    check_weights(ds)?;
    let s: f64 = ds
        .samples
        .iter()
        .map(|s| s.targets.iter().zip(&ds.weights).map(|(t, w)| w * t * t).sum::<f64>())
        .sum();
    Ok((s / ds.len() as f64).sqrt())
}

/// Per-location weights `c_j` such that the training loss of one sample is
/// `sum_j c_j e_j^2 / N`. Uniform in 1D; interior/boundary split with
/// penalty `lambda` in 2D.
pub fn location_weights(ds: &OperatorDataset, lambda: f64) -> Result<Vec<f64>> {
    let l = ds.n_locations();
    if ds.dim() == 1 {
        return Ok(vec![1.0 / l as f64; l]);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("penalty must be non-negative, got {lambda}")));
    }
    let nb = (0..l).filter(|&j| ds.is_boundary(j)).count();
    let ni = l - nb;
    if nb == 0 {
        return Err(Error::invalid("no boundary locations for the penalty term"));
    }
    if ni == 0 {
        return Err(Error::invalid("no interior locations"));
    }
    Ok((0..l)
        .map(|j| {
            if ds.is_boundary(j) {
                lambda / nb as f64
            } else {
                1.0 / ni as f64
            }
        })
        .collect())
}

/// `(1/(N J_r)) sum_interior e^2 + (lambda/(N J_b)) sum_boundary e^2`.
pub fn loss_penalized_2d(model: &DeepOnet, ds: &OperatorDataset, lambda: f64) -> Result<f64> {
    if ds.dim() != 2 {
        return Err(Error::invalid("the penalized loss is defined for 2D datasets"));
    }
    let c = location_weights(ds, lambda)?;
    let l = ds.n_locations();
    let pred = predictions(model, ds, &all(ds.len()), &all(l))?;
    let total: f64 = ds
        .samples
        .iter()
        .zip(pred.chunks_exact(l))
        .map(|(s, p)| {
            s.targets
                .iter()
                .zip(p)
                .zip(&c)
                .map(|((t, p), c)| c * (t - p).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / ds.len() as f64)
}
