//! Minibatch Adam training of a [`DeepOnet`] on an operator dataset.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::OperatorDataset;
use super::loss::{check_compatible, location_weights};
use crate::deeponet::{DeepOnet, PairBatch};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix};
use crate::rng;

/// Training aborts once a loss exceeds this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size in (sample, location) pairs.
    pub batch_size: usize,
    pub seed: u64,
    /// Boundary penalty of the 2D loss; ignored in 1D.
    pub penalty_lambda: f64,
    pub activation: Activation,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub p: usize,
    /// Standardize each sensor over the training set. The affine map is
    /// folded into the first branch layer afterwards, so the returned model
    /// still takes raw sensor values.
    pub normalize_branch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            lr: 1e-3,
            batch_size: 4096,
            seed: 0,
            penalty_lambda: 0.1,
            activation: Activation::Relu,
            branch_hidden: vec![128, 128],
            trunk_hidden: vec![128, 128],
            p: 32,
            normalize_branch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.penalty_lambda >= 0.0 && self.penalty_lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "penalty must be non-negative, got {}",
                self.penalty_lambda
            )));
        }
        if self.p == 0 {
            return Err(Error::invalid("latent dimension p must be positive"));
        }
        Ok(())
    }

    /// Fresh model sized for `ds`, initialized from `seed`.
    pub fn build_model(&self, ds: &OperatorDataset) -> Result<DeepOnet> {
        DeepOnet::new(
            ds.n_sensors(),
            self.p,
            ds.dim(),
            &self.branch_hidden,
            &self.trunk_hidden,
            self.activation,
            self.seed,
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepOnet,
    /// Epoch-mean training loss, one entry per epoch.
    pub history: Vec<f64>,
    /// Training loss of the model before the first update.
    pub initial_loss: f64,
    /// Training loss of the returned model.
    pub final_loss: f64,
}

/// Per-sensor mean and standard deviation over the training samples.
fn sensor_stats(sensors: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (sensors.rows() as f64, sensors.cols());
    let mut mean = vec![0.0; m];
    for r in 0..sensors.rows() {
        for (a, v) in mean.iter_mut().zip(sensors.row(r)) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let mut sd = vec![0.0; m];
    for r in 0..sensors.rows() {
        for ((s, v), mu) in sd.iter_mut().zip(sensors.row(r)).zip(&mean) {
            *s += (v - mu).powi(2);
        }
    }
    // constant sensors keep unit scale
    sd.iter_mut().for_each(|s| {
        let v = (*s / n).sqrt();
        *s = if v > 1e-12 { v } else { 1.0 };
    });
    (mean, sd)
}

/// Rewrites the first branch layer so that the model applied to raw inputs
/// equals the old model applied to `(x - mean) / sd`.
fn fold_normalization(model: &mut DeepOnet, mean: &[f64], sd: &[f64]) -> Result<()> {
    let fan_in = mean.len();
    let mut w = model.branch.weight(0).to_vec();
    let mut b = model.branch.bias(0).to_vec();
    for (o, bo) in b.iter_mut().enumerate() {
        let row = &mut w[o * fan_in..(o + 1) * fan_in];
        for ((wi, mu), s) in row.iter_mut().zip(mean).zip(sd) {
            *wi /= s;
            *bo -= *wi * mu;
        }
    }
    model.branch.set_layer(0, &w, &b)
}

struct Objective<'a> {
    sensors: Matrix,
    locations: Matrix,
    targets: Vec<&'a [f64]>,
    /// `c_j / N`: the loss is `sum_{n,j} pair_weight[j] e_{nj}^2`.
    pair_weight: Vec<f64>,
}

impl Objective<'_> {
    fn full(&self, model: &DeepOnet) -> Result<f64> {
        let l = self.locations.rows();
        let pred = model.predict_grid(&self.sensors, &self.locations)?;
        Ok(pred
            .chunks_exact(l)
            .zip(&self.targets)
            .map(|(p, t)| {
                p.iter()
                    .zip(t.iter())
                    .zip(&self.pair_weight)
                    .map(|((p, t), w)| w * (p - t).powi(2))
                    .sum::<f64>()
            })
            .sum())
    }
}

fn check_finite(epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
        return Err(Error::Diverged { epoch, loss });
    }
    Ok(())
}

pub fn train(model: DeepOnet, ds: &OperatorDataset, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, ds, tcfg, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, loss)` after every epoch
/// (1-based).
pub fn train_with(
    mut model: DeepOnet,
    ds: &OperatorDataset,
    tcfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    check_compatible(&model, ds)?;
    ds.check_consistent()?;
    let n = ds.len();
    let l = ds.n_locations();
    let pair_weight: Vec<f64> = location_weights(ds, tcfg.penalty_lambda)?
        .into_iter()
        .map(|c| c / n as f64)
        .collect();

    let mut sensors = ds.sensor_matrix();
    let stats = if tcfg.normalize_branch {
        let (mean, sd) = sensor_stats(&sensors);
        for r in 0..sensors.rows() {
            for ((v, mu), s) in sensors.row_mut(r).iter_mut().zip(&mean).zip(&sd) {
                *v = (*v - mu) / s;
            }
        }
        Some((mean, sd))
    } else {
        None
    };
    let objective = Objective {
        sensors,
        locations: ds.location_matrix(),
        targets: ds.samples.iter().map(|s| s.targets.as_slice()).collect(),
        pair_weight,
    };
    let initial_loss = objective.full(&model)?;
    check_finite(0, initial_loss)?;

    let adam = AdamConfig {
        lr: tcfg.lr,
        ..AdamConfig::default()
    };
    let mut branch_opt = AdamState::new(model.branch.num_params(), adam);
    let mut trunk_opt = AdamState::new(model.trunk.num_params(), adam);

    let total = n * l;
    let m = ds.n_sensors();
    let d = ds.dim();
    let mut order: Vec<usize> = Vec::with_capacity(total);
    let mut sample_slot = vec![usize::MAX; n];
    let mut loc_slot = vec![usize::MAX; l];
    let mut history = Vec::with_capacity(tcfg.epochs);

    for epoch in 1..=tcfg.epochs {
        order.clear();
        order.extend(0..total);
        order.shuffle(&mut rng::seeded(rng::derive(tcfg.seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let mut s_rows = Vec::new();
            let mut l_rows = Vec::new();
            let mut pairs = Vec::with_capacity(chunk.len());
            for &k in chunk {
                let (s, j) = (k / l, k % l);
                if sample_slot[s] == usize::MAX {
                    sample_slot[s] = s_rows.len();
                    s_rows.push(s);
                }
                if loc_slot[j] == usize::MAX {
                    loc_slot[j] = l_rows.len();
                    l_rows.push(j);
                }
                pairs.push((sample_slot[s], loc_slot[j]));
            }
            let mut sm = Matrix::zeros(s_rows.len(), m);
            for (r, &s) in s_rows.iter().enumerate() {
                sm.row_mut(r).copy_from_slice(objective.sensors.row(s));
            }
            let mut lm = Matrix::zeros(l_rows.len(), d);
            for (r, &j) in l_rows.iter().enumerate() {
                lm.row_mut(r).copy_from_slice(objective.locations.row(j));
            }
            let batch = PairBatch {
                sensors: sm,
                locations: lm,
                pairs,
            };

            let (pred, cache) = model.forward_pairs(&batch)?;
            let scale = total as f64 / chunk.len() as f64;
            let mut sum = 0.0;
            let mut d_out = Vec::with_capacity(chunk.len());
            for (&k, p) in chunk.iter().zip(&pred) {
                let (s, j) = (k / l, k % l);
                let w = objective.pair_weight[j];
                let e = p - objective.targets[s][j];
                sum += w * e * e;
                d_out.push(2.0 * scale * w * e);
            }
            check_finite(epoch, scale * sum)?;
            epoch_loss += sum;

            let grads = model.backward_pairs(&cache, &batch, &d_out)?;
            branch_opt.step(model.branch.params_mut(), &grads.branch.data)?;
            trunk_opt.step(model.trunk.params_mut(), &grads.trunk.data)?;

            for &s in &s_rows {
                sample_slot[s] = usize::MAX;
            }
            for &j in &l_rows {
                loc_slot[j] = usize::MAX;
            }
        }
        check_finite(epoch, epoch_loss)?;
        history.push(epoch_loss);
        on_epoch(epoch, epoch_loss);
    }

    let final_loss = objective.full(&model)?;
    check_finite(tcfg.epochs, final_loss)?;
    if let Some((mean, sd)) = stats {
        fold_normalization(&mut model, &mean, &sd)?;
    }
    Ok(TrainOutcome {
        model,
        history,
        initial_loss,
        final_loss,
    })
}

pub fn history_csv<W: std::io::Write>(history: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "epoch,loss")?;
    for (i, v) in history.iter().enumerate() {
        writeln!(out, "{},{v}", i + 1)?;
    }
    Ok(())
}
