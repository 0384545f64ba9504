use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sppdon::experiment::{run_cell, CellResult, CellSpec};
use sppdon::fdsolve::Preset;
use sppdon::mesh::MeshKind;
use sppdon::pipeline::dataset::DatasetConfig;

use crate::commands::TrainFlags;
use crate::error::{usage, CliError};
use crate::manifest::{absolute, into_dir, manifest_for, write_atomic, Outcome, Recorded};

/// Data-side flags shared by both sweeps.
#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct CellFlags {
    #[arg(long, default_value = "example1")]
    pub preset: Preset,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long = "l", default_value_t = 0.2)]
    pub length_scale: f64,
    /// Sensors (per direction in 2D)
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub jfine: Option<usize>,
    /// Held-out sample count; defaults to the training count
    #[arg(long)]
    pub eval_n: Option<usize>,
    #[arg(long, default_value_t = sppdon::experiment::EVAL_INTERVALS)]
    pub eval_j: usize,
    /// Independent repetitions of every cell, seeded seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Directory of finished cells (result and model), keyed by their full configuration
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl CellFlags {
    fn spec(&self, train: &TrainFlags, eps: f64, mesh: MeshKind, n: usize, j: usize, seed: u64) -> CellSpec {
        let mut d = DatasetConfig::new(self.preset, eps, n, j);
        d.alpha = self.alpha;
        d.length_scale = self.length_scale;
        d.mesh = mesh;
        d.base_seed = seed;
        if let Some(m) = self.m {
            d.sensors = m;
        }
        if let Some(f) = self.jfine {
            d.fine_intervals = f;
        }
        let mut t = train.config();
        t.seed = seed;
        let mut spec = CellSpec::new(d, t);
        spec.eval_samples = self.eval_n.unwrap_or(n);
        spec.eval_intervals = self.eval_j;
        spec
    }

    fn run(&self, specs: &[CellSpec]) -> Result<Vec<CellResult>, CliError> {
        for s in specs {
            s.data.validate()?;
            s.train.validate()?;
        }
        if let Some(c) = &self.cache {
            fs::create_dir_all(c)?;
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| usage(format!("cannot start worker pool: {e}")))?;
        let total = specs.len();
        pool.install(|| {
            specs
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let r = cached_cell(s, self.cache.as_deref())?;
                    eprintln!(
                        "cell {}/{total} eps={} mesh={} J={} N={} seed={} risk={:.4e}",
                        i + 1,
                        s.data.epsilon,
                        s.data.mesh,
                        s.data.intervals,
                        s.data.n_samples,
                        s.data.base_seed,
                        r.risk
                    );
                    Ok(r)
                })
                .collect()
        })
    }
}

fn cached_cell(spec: &CellSpec, cache: Option<&Path>) -> Result<CellResult, CliError> {
    let Some(dir) = cache else {
        return Ok(run_cell(spec)?.result);
    };
    let path = dir.join(format!("{}.json", spec.key()?));
    if let Ok(bytes) = fs::read(&path) {
        #[derive(Deserialize)]
        struct Entry {
            spec: CellSpec,
            result: CellResult,
        }
        if let Ok(e) = serde_json::from_slice::<Entry>(&bytes) {
            if &e.spec == spec {
                return Ok(e.result);
            }
        }
    }
    let run = run_cell(spec)?;
    let mut model = Vec::new();
    run.model.write_to(&mut model)?;
    write_atomic(&path.with_extension("don"), &model)?;
    let json = serde_json::to_vec_pretty(&serde_json::json!({ "spec": spec, "result": run.result }))?;
    write_atomic(&path, &json)?;
    Ok(run.result)
}

const ROW_HEADER: &str = "preset,epsilon,mesh,intervals,n_samples,seed,risk,risk_in_sample,zero_risk,initial_loss,final_loss";

fn write_row(out: &mut Vec<u8>, prefix: &str, s: &CellSpec, r: &CellResult) -> std::io::Result<()> {
    writeln!(
        out,
        "{prefix}{},{},{},{},{},{},{},{},{},{},{}",
        s.data.preset,
        r.epsilon,
        r.mesh,
        r.intervals,
        r.n_samples,
        s.data.base_seed,
        r.risk,
        r.risk_in_sample,
        r.zero_risk,
        r.initial_loss,
        r.final_loss
    )
}

fn seeds(train: &TrainFlags, cells: &CellFlags) -> Vec<u64> {
    (0..cells.replicates).map(|r| train.seed + r).collect()
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepEps {
    /// Comma-separated perturbation parameters
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
    pub eps_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "shishkin,uniform")]
    pub mesh_list: Vec<MeshKind>,
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub j_list: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub cells: CellFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    /// Tidy CSV, one row per cell
    #[arg(long)]
    pub out: PathBuf,
}

impl Recorded for SweepEps {
    const NAME: &'static str = "sweep-eps";

    fn execute(&self) -> Result<Outcome, CliError> {
        if self.eps_list.is_empty() || self.mesh_list.is_empty() || self.j_list.is_empty() {
            return Err(usage("eps, mesh and J lists must be non-empty"));
        }
        let seeds = seeds(&self.train, &self.cells);
        let mut specs = Vec::new();
        for &eps in &self.eps_list {
            for &mesh in &self.mesh_list {
                for &j in &self.j_list {
                    for &seed in &seeds {
                        specs.push(self.cells.spec(&self.train, eps, mesh, self.n, j, seed));
                    }
                }
            }
        }
        let results = self.cells.run(&specs)?;
        let mut csv = Vec::new();
        writeln!(csv, "{ROW_HEADER}")?;
        for (s, r) in specs.iter().zip(&results) {
            write_row(&mut csv, "", s, r)?;
        }
        write_atomic(&self.out, &csv)?;
        println!("cells={} out={}", specs.len(), self.out.display());
        Ok(Outcome {
            manifest: manifest_for(&self.out),
            artifacts: vec![self.out.clone()],
            seeds,
            config: serde_json::to_value(&specs)?,
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        if let Some(c) = &mut self.cells.cache {
            absolute(c)?;
        }
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        into_dir(&mut self.out, dir);
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Varied {
    /// Number of training samples
    N,
    /// Number of location intervals
    J,
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepSize {
    #[arg(long, value_enum)]
    pub vary: Varied,
    /// Values taken by the varied quantity
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<usize>,
    /// Value of the quantity held fixed
    #[arg(long)]
    pub fixed: usize,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value = "shishkin")]
    pub mesh: MeshKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub cells: CellFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

impl Recorded for SweepSize {
    const NAME: &'static str = "sweep-size";

    fn execute(&self) -> Result<Outcome, CliError> {
        if self.values.is_empty() {
            return Err(usage("--values must be non-empty"));
        }
        let seeds = seeds(&self.train, &self.cells);
        let mut specs = Vec::new();
        for &v in &self.values {
            for &seed in &seeds {
                let (n, j) = match self.vary {
                    Varied::N => (v, self.fixed),
                    Varied::J => (self.fixed, v),
                };
                specs.push(self.cells.spec(&self.train, self.eps, self.mesh, n, j, seed));
            }
        }
        let results = self.cells.run(&specs)?;
        let name = match self.vary {
            Varied::N => "n",
            Varied::J => "j",
        };
        let mut csv = Vec::new();
        writeln!(csv, "varied,varied_value,{ROW_HEADER}")?;
        for ((s, r), &v) in specs.iter().zip(&results).zip(self.values.iter().flat_map(|v| seeds.iter().map(move |_| v))) {
            write_row(&mut csv, &format!("{name},{v},"), s, r)?;
        }
        write_atomic(&self.out, &csv)?;
        println!("cells={} out={}", specs.len(), self.out.display());
        Ok(Outcome {
            manifest: manifest_for(&self.out),
            artifacts: vec![self.out.clone()],
            seeds,
            config: serde_json::to_value(&specs)?,
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        if let Some(c) = &mut self.cells.cache {
            absolute(c)?;
        }
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        into_dir(&mut self.out, dir);
    }
}
