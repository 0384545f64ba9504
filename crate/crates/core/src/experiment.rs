//! One train-and-evaluate cell of a sweep: generate training data, fit a
//! model, score it on held-out samples located on a fine Shishkin mesh.

use serde::{Deserialize, Serialize};

use crate::deeponet::DeepOnet;
use crate::error::Result;
use crate::mesh::MeshKind;
use crate::pipeline::dataset::{generate_dataset, DatasetConfig};
use crate::pipeline::loss::{empirical_risk, zero_predictor_risk};
use crate::pipeline::train::{train, TrainConfig};
use crate::pipeline::OperatorDataset;

/// Interval count of the evaluation mesh.
pub const EVAL_INTERVALS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub data: DatasetConfig,
    pub train: TrainConfig,
    pub eval_samples: usize,
    pub eval_intervals: usize,
}

impl CellSpec {
    pub fn new(data: DatasetConfig, train: TrainConfig) -> Self {
        CellSpec {
            eval_samples: data.n_samples,
            eval_intervals: EVAL_INTERVALS,
            data,
            train,
        }
    }

    pub fn held_out_config(&self) -> DatasetConfig {
        self.data.held_out(self.eval_samples, self.eval_intervals)
    }

    /// Stable key for caching trained cells.
    pub fn key(&self) -> Result<String> {
        Ok(crate::pipeline::io::sha256_hex(&serde_json::to_vec(self)?)[..16].to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub epsilon: f64,
    pub mesh: MeshKind,
    pub intervals: usize,
    pub n_samples: usize,
    /// Weighted empirical risk on held-out samples.
    pub risk: f64,
    /// Weighted empirical risk on the training samples, evaluated on the
    /// same fine mesh.
    pub risk_in_sample: f64,
    /// Held-out risk of the zero predictor.
    pub zero_risk: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

pub struct CellRun {
    pub result: CellResult,
    pub model: DeepOnet,
    pub history: Vec<f64>,
}

/// Training data re-located on the evaluation mesh, for in-sample risk.
fn in_sample_config(spec: &CellSpec) -> DatasetConfig {
    DatasetConfig {
        intervals: spec.eval_intervals,
        mesh: MeshKind::Shishkin,
        ..spec.data.clone()
    }
}

pub fn evaluate(spec: &CellSpec, model: &DeepOnet, held_out: &OperatorDataset) -> Result<(f64, f64, f64)> {
    let risk = empirical_risk(model, held_out)?;
    let zero = zero_predictor_risk(held_out)?;
    let in_sample = generate_dataset(&in_sample_config(spec))?;
    Ok((risk, empirical_risk(model, &in_sample)?, zero))
}

pub fn run_cell(spec: &CellSpec) -> Result<CellRun> {
    let ds = generate_dataset(&spec.data)?;
    let held_out = generate_dataset(&spec.held_out_config())?;
    let model = spec.train.build_model(&ds)?;
    let out = train(model, &ds, &spec.train)?;
    let (risk, risk_in_sample, zero_risk) = evaluate(spec, &out.model, &held_out)?;
    Ok(CellRun {
        result: CellResult {
            epsilon: spec.data.epsilon,
            mesh: spec.data.mesh,
            intervals: spec.data.intervals,
            n_samples: spec.data.n_samples,
            risk,
            risk_in_sample,
            zero_risk,
            initial_loss: out.initial_loss,
            final_loss: out.final_loss,
        },
        model: out.model,
        history: out.history,
    })
}
