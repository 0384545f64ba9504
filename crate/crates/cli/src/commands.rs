use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sppdon::deeponet::DeepOnet;
use sppdon::fdsolve::{self, Preset, SppProblem1D, UpwindSystem1D};
use sppdon::grf::{sample_field, GrfSpec};
use sppdon::mesh::{transition_point, Grid, Mesh1D, MeshKind, ShishkinMesh};
use sppdon::nn::{Activation, Matrix};
use sppdon::pipeline::dataset::{generate_dataset, DatasetConfig, Forcing, OperatorDataset};
use sppdon::pipeline::io::{load_dataset, save_dataset, DATA_FILE, META_FILE};
use sppdon::pipeline::loss::{check_compatible, per_sample_risk, predictions, risk_from_per_sample};
use sppdon::pipeline::train::{history_csv, train_with, TrainConfig};
use sppdon::spectral::SensorGrid;

use crate::error::{usage, CliError};
use crate::manifest::{absolute, into_dir, manifest_for, sibling, write_atomic, Outcome, Recorded};

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenData {
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Length scale of the forcing covariance
    #[arg(long = "l", default_value_t = 0.2)]
    pub length_scale: f64,
    /// Number of samples
    #[arg(long)]
    pub n: usize,
    /// Location intervals (per direction in 2D)
    #[arg(long)]
    pub j: usize,
    /// Sensors (per direction in 2D); 129 in 1D and 17 in 2D by default
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value = "shishkin")]
    pub mesh: MeshKind,
    #[arg(long, default_value = "example1")]
    pub preset: Preset,
    /// Reference mesh intervals; 4096 in 1D and 256 in 2D by default
    #[arg(long)]
    pub jfine: Option<usize>,
    /// grf, zero, exp or const:<c>
    #[arg(long, default_value = "grf")]
    pub forcing: Forcing,
    #[arg(long, env = "SPP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

impl GenData {
    pub fn config(&self) -> DatasetConfig {
        let mut c = DatasetConfig::new(self.preset, self.eps, self.n, self.j);
        c.alpha = self.alpha;
        c.length_scale = self.length_scale;
        c.mesh = self.mesh;
        c.base_seed = self.seed;
        c.forcing = self.forcing;
        if let Some(m) = self.m {
            c.sensors = m;
        }
        if let Some(f) = self.jfine {
            c.fine_intervals = f;
        }
        c
    }
}

impl Recorded for GenData {
    const NAME: &'static str = "gen-data";

    fn execute(&self) -> Result<Outcome, CliError> {
        let cfg = self.config();
        cfg.validate()?;
        let ds = generate_dataset(&cfg)?;
        save_dataset(&ds, &self.out)?;
        let bytes = fs::metadata(self.out.join(DATA_FILE))?.len();
        println!(
            "N={} J={} m={} eps={} mesh={} preset={} bytes={}",
            cfg.n_samples, cfg.intervals, cfg.sensors, cfg.epsilon, cfg.mesh, cfg.preset, bytes
        );
        Ok(Outcome {
            manifest: self.out.join("manifest.json"),
            artifacts: vec![self.out.join(META_FILE), self.out.join(DATA_FILE)],
            seeds: ds.samples.iter().map(|s| s.seed).collect(),
            config: serde_json::to_value(&cfg)?,
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        self.out = dir.to_path_buf();
    }
}

/// Model and optimizer flags shared by every training command.
#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainFlags {
    /// Latent dimension
    #[arg(long, default_value_t = 32)]
    pub p: usize,
    /// Hidden widths of the branch net, comma separated
    #[arg(long, default_value = "128,128", value_delimiter = ',')]
    pub branch_dims: Vec<usize>,
    /// Hidden widths of the trunk net, comma separated
    #[arg(long, default_value = "128,128", value_delimiter = ',')]
    pub trunk_dims: Vec<usize>,
    #[arg(long, default_value = "relu")]
    pub activation: Activation,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Minibatch size in (sample, location) pairs
    #[arg(long, default_value_t = 4096)]
    pub batch: usize,
    /// Boundary penalty of the 2D loss
    #[arg(long = "lambda", default_value_t = 0.1)]
    pub lambda: f64,
    /// Standardize sensor values during training
    #[arg(long)]
    pub normalize_branch: bool,
    #[arg(long, env = "SPP_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl TrainFlags {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch,
            seed: self.seed,
            penalty_lambda: self.lambda,
            activation: self.activation,
            branch_hidden: self.branch_dims.clone(),
            trunk_hidden: self.trunk_dims.clone(),
            p: self.p,
            normalize_branch: self.normalize_branch,
        }
    }
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Train {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub flags: TrainFlags,
    /// Print the loss every this many epochs (0 for never)
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,
    /// Model file; the history and manifest are written next to it
    #[arg(long)]
    pub out: PathBuf,
}

impl Recorded for Train {
    const NAME: &'static str = "train";

    fn execute(&self) -> Result<Outcome, CliError> {
        let ds = load_dataset(&self.data)?;
        let tcfg = self.flags.config();
        tcfg.validate()?;
        let model = tcfg.build_model(&ds)?;
        let start = Instant::now();
        let log_every = self.log_every;
        let out = train_with(model, &ds, &tcfg, |epoch, loss| {
            if log_every > 0 && epoch % log_every == 0 {
                eprintln!("epoch {epoch} loss {loss:.6e}");
            }
        })?;
        if let Some(dir) = self.out.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut model_bytes = Vec::new();
        out.model.write_to(&mut model_bytes)?;
        write_atomic(&self.out, &model_bytes)?;
        let hist_path = sibling(&self.out, ".history.csv");
        let mut hist = Vec::new();
        history_csv(&out.history, &mut hist)?;
        write_atomic(&hist_path, &hist)?;
        println!(
            "epochs={} params={} initial_loss={:.6e} final_loss={:.6e} seconds={:.1}",
            tcfg.epochs,
            out.model.count_params(),
            out.initial_loss,
            out.final_loss,
            start.elapsed().as_secs_f64()
        );
        Ok(Outcome {
            manifest: manifest_for(&self.out),
            artifacts: vec![self.out.clone(), hist_path],
            seeds: vec![tcfg.seed],
            config: serde_json::json!({
                "train": tcfg,
                "data": ds.config,
                "initial_loss": out.initial_loss,
                "final_loss": out.final_loss,
            }),
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        absolute(&mut self.data)?;
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        into_dir(&mut self.out, dir);
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Fresh samples from the held-out seed range on an eval-j Shishkin mesh
    Heldout,
    /// The dataset's own samples relocated to an eval-j Shishkin mesh
    InSample,
    /// The dataset exactly as stored
    AsIs,
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Eval {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "heldout")]
    pub mode: EvalMode,
    /// Intervals of the evaluation mesh
    #[arg(long, default_value_t = 4096)]
    pub eval_j: usize,
    /// Held-out sample count; defaults to the dataset's
    #[arg(long)]
    pub eval_n: Option<usize>,
    /// Per-sample CSV
    #[arg(long)]
    pub out: PathBuf,
}

impl Recorded for Eval {
    const NAME: &'static str = "eval";

    fn execute(&self) -> Result<Outcome, CliError> {
        let model = DeepOnet::load(&self.model)?;
        let base = load_dataset(&self.data)?;
        check_compatible(&model, &base)?;
        let ds = match self.mode {
            EvalMode::AsIs => base,
            EvalMode::Heldout => generate_dataset(
                &base
                    .config
                    .held_out(self.eval_n.unwrap_or(base.config.n_samples), self.eval_j),
            )?,
            EvalMode::InSample => generate_dataset(&DatasetConfig {
                intervals: self.eval_j,
                mesh: MeshKind::Shishkin,
                ..base.config.clone()
            })?,
        };
        let risks = per_sample_risk(&model, &ds)?;
        let l = ds.n_locations();
        let pred = predictions(&model, &ds, &(0..ds.len()).collect::<Vec<_>>(), &(0..l).collect::<Vec<_>>())?;
        let mse: Vec<f64> = ds
            .samples
            .iter()
            .zip(pred.chunks_exact(l))
            .map(|(s, p)| s.targets.iter().zip(p).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / l as f64)
            .collect();
        let risk = risk_from_per_sample(&risks);
        let mean_mse = mse.iter().sum::<f64>() / mse.len() as f64;

        let mut csv = Vec::new();
        writeln!(csv, "sample,seed,risk,mse")?;
        for (n, ((s, r), e)) in ds.samples.iter().zip(&risks).zip(&mse).enumerate() {
            writeln!(csv, "{n},{},{r},{e}", s.seed)?;
        }
        write_atomic(&self.out, &csv)?;
        let mode = serde_json::to_value(self.mode)?;
        let mode = mode.as_str().unwrap_or_default();
        println!("mode={mode} N={} J={} risk={risk:.6e} mse={mean_mse:.6e}", ds.len(), l - 1);
        Ok(Outcome {
            manifest: manifest_for(&self.out),
            artifacts: vec![self.out.clone()],
            seeds: ds.samples.iter().map(|s| s.seed).collect(),
            config: serde_json::json!({
                "data": ds.config,
                "risk": risk,
                "mse": mean_mse,
            }),
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        absolute(&mut self.model)?;
        absolute(&mut self.data)?;
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        into_dir(&mut self.out, dir);
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Upwind solution on a fine Shishkin mesh
    Fd,
    /// Closed form of example1 with constant forcing
    Exact,
}

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Predict {
    #[arg(long)]
    pub model: PathBuf,
    /// seed:<int>, const:<c> or expr-preset:<exp|one|zero>
    #[arg(long)]
    pub f: String,
    /// {shishkin|uniform}:<J>
    #[arg(long)]
    pub grid: String,
    #[arg(long, value_enum)]
    pub reference: Option<Reference>,
    /// Take eps, alpha, l and the preset from this dataset
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "l")]
    pub length_scale: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    pub jfine: usize,
    #[arg(long)]
    pub out: PathBuf,
}

enum PredictForcing {
    Field(u64),
    Fixed(fn(f64) -> f64),
    Const(f64),
}

impl PredictForcing {
    fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || usage(format!("--f expects seed:<int>, const:<c> or expr-preset:<name>, got '{s}'"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "seed" => value.parse().map(PredictForcing::Field).map_err(|_| bad()),
            "const" => value.parse().map(PredictForcing::Const).map_err(|_| bad()),
            "expr-preset" => match value {
                "exp" => Ok(PredictForcing::Fixed(f64::exp)),
                "one" => Ok(PredictForcing::Const(1.0)),
                "zero" => Ok(PredictForcing::Const(0.0)),
                _ => Err(usage(format!("unknown expression preset '{value}' (exp, one, zero)"))),
            },
            _ => Err(bad()),
        }
    }
}

fn parse_grid(s: &str) -> Result<(MeshKind, usize), CliError> {
    let (kind, j) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("--grid expects <shishkin|uniform>:<J>, got '{s}'")))?;
    let kind: MeshKind = kind.parse()?;
    let j = j.parse().map_err(|_| usage(format!("bad interval count in --grid '{s}'")))?;
    Ok((kind, j))
}

impl Recorded for Predict {
    const NAME: &'static str = "predict";

    fn execute(&self) -> Result<Outcome, CliError> {
        let model = DeepOnet::load(&self.model)?;
        if model.location_dim() != 1 {
            return Err(usage("predict supports 1D models only"));
        }
        let from_data: Option<OperatorDataset> = self.data.as_deref().map(load_dataset).transpose()?;
        let dcfg = from_data.as_ref().map(|d| &d.config);
        let eps = self
            .eps
            .or(dcfg.map(|c| c.epsilon))
            .ok_or_else(|| usage("--eps is required without --data"))?;
        let preset = self.preset.or(dcfg.map(|c| c.preset)).unwrap_or(Preset::Example1);
        let alpha = self.alpha.or(dcfg.map(|c| c.alpha)).unwrap_or(1.0);
        let l = self.length_scale.or(dcfg.map(|c| c.length_scale)).unwrap_or(0.2);
        if preset.dim() != 1 {
            return Err(usage("predict supports 1D presets only"));
        }
        let forcing = PredictForcing::parse(&self.f)?;
        if self.reference == Some(Reference::Exact) {
            if preset != Preset::Example1 {
                return Err(usage("the exact reference exists for example1 only"));
            }
            if !matches!(forcing, PredictForcing::Const(_)) {
                return Err(usage("the exact reference needs a constant forcing"));
            }
        }
        let (kind, j) = parse_grid(&self.grid)?;
        let grid = Mesh1D::build(kind, j, eps, alpha)?;
        let sensors = SensorGrid::new(model.sensors())?;

        let f: Box<dyn Fn(f64) -> f64> = match forcing {
            PredictForcing::Field(seed) => {
                let s = sample_field(GrfSpec::new(l)?, seed);
                Box::new(move |x| s.value(x))
            }
            PredictForcing::Fixed(g) => Box::new(g),
            PredictForcing::Const(c) => Box::new(move |_| c),
        };
        let sensor_vals: Vec<f64> = sensors.points().iter().map(|&x| f(x)).collect();
        let xs = grid.points();
        let pred = model.forward(&sensor_vals, &Matrix::from_vec(xs.len(), 1, xs.to_vec())?)?;

        let reference = match (self.reference, &forcing) {
            (None, _) => None,
            (Some(Reference::Exact), PredictForcing::Const(c)) => {
                Some(fdsolve::exact_example1(eps, xs).into_iter().map(|u| c * u).collect::<Vec<_>>())
            }
            (Some(_), _) => {
                let fine = ShishkinMesh::new(self.jfine, eps, alpha)?;
                let problem = SppProblem1D::preset(preset, eps, Arc::new(|_| 0.0))?;
                let system = UpwindSystem1D::assemble(&problem, &fine)?;
                let forcing: Vec<f64> = fine.points().iter().map(|&x| f(x)).collect();
                let sol = system.solve_nodal(&forcing)?;
                Some(fdsolve::interp_linear_points(&sol.points, &sol.values, xs)?)
            }
        };

        let sigma = transition_point(j, eps, alpha);
        let w = fs::File::create(&self.out)?;
        let mut w = BufWriter::new(w);
        match &reference {
            Some(_) => writeln!(w, "x,prediction,reference,abs_error,in_layer")?,
            None => writeln!(w, "x,prediction,in_layer")?,
        }
        let (mut worst, mut worst_layer, mut worst_outer) = (0.0f64, 0.0f64, 0.0f64);
        for (i, (&x, &p)) in xs.iter().zip(&pred).enumerate() {
            let layer = u8::from(x >= 1.0 - sigma);
            match &reference {
                Some(r) => {
                    let e = (p - r[i]).abs();
                    worst = worst.max(e);
                    if layer == 1 {
                        worst_layer = worst_layer.max(e);
                    } else {
                        worst_outer = worst_outer.max(e);
                    }
                    writeln!(w, "{x},{p},{},{e},{layer}", r[i])?;
                }
                None => writeln!(w, "{x},{p},{layer}")?,
            }
        }
        w.flush()?;
        drop(w);
        print!("points={} u(0)={:.4e} u(1)={:.4e}", xs.len(), pred[0], pred[pred.len() - 1]);
        if reference.is_some() {
            print!(" max_abs_error={worst:.4e} layer={worst_layer:.4e} outer={worst_outer:.4e}");
        }
        println!();
        Ok(Outcome {
            manifest: manifest_for(&self.out),
            artifacts: vec![self.out.clone()],
            seeds: match forcing {
                PredictForcing::Field(s) => vec![s],
                _ => Vec::new(),
            },
            config: serde_json::json!({
                "epsilon": eps,
                "alpha": alpha,
                "length_scale": l,
                "preset": preset,
                "grid": { "kind": kind, "intervals": j },
                "sensors": model.sensors(),
            }),
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        absolute(&mut self.model)?;
        if let Some(d) = &mut self.data {
            absolute(d)?;
        }
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        into_dir(&mut self.out, dir);
    }
}
