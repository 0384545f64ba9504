//! Operator datasets: forcing samples encoded at sensors, paired with
//! reference solutions at a set of locations.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdsolve::{self, Preset, SppProblem1D, UpwindSystem1D, UpwindSystem2D};
use crate::grf::{sample_field, FieldSample2D, GrfSpec};
use crate::mesh::{Grid, Mesh1D, MeshKind, ShishkinMesh, TensorMesh2D};
use crate::nn::Matrix;
use crate::rng;
use crate::spectral::SensorGrid;

/// Offset between training and held-out seed ranges.
pub const HELD_OUT_SEED_OFFSET: u64 = 1_000_000;

/// What drives each sample. Anything but `Grf` replaces the random field by
/// a fixed function, mostly for checks against closed-form solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Forcing {
    Grf,
    Const { value: f64 },
    /// `e^x`, 1D only.
    Exp,
    Zero,
}

impl std::fmt::Display for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Grf => f.write_str("grf"),
            Forcing::Const { value } => write!(f, "const:{value}"),
            Forcing::Exp => f.write_str("exp"),
            Forcing::Zero => f.write_str("zero"),
        }
    }
}

impl std::str::FromStr for Forcing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grf" => Ok(Forcing::Grf),
            "exp" => Ok(Forcing::Exp),
            "zero" => Ok(Forcing::Zero),
            _ => match s.strip_prefix("const:") {
                Some(v) => v
                    .parse()
                    .map(|value| Forcing::Const { value })
                    .map_err(|_| Error::invalid(format!("bad constant in '{s}'"))),
                None => Err(Error::invalid(format!("unknown forcing '{s}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub preset: Preset,
    pub epsilon: f64,
    pub alpha: f64,
    pub length_scale: f64,
    pub n_samples: usize,
    /// Location intervals (per direction in 2D).
    pub intervals: usize,
    /// Sensor count (per direction in 2D).
    pub sensors: usize,
    pub mesh: MeshKind,
    /// Intervals of the reference-solver mesh (per direction in 2D).
    pub fine_intervals: usize,
    pub base_seed: u64,
    pub forcing: Forcing,
}

impl DatasetConfig {
    /// Defaults: `alpha = 1`, `l = 0.2`, Shishkin locations, 129 sensors and
    /// a 4096-interval reference mesh in 1D; 17 x 17 sensors and a 256 x 256
    /// reference mesh in 2D.
    pub fn new(preset: Preset, epsilon: f64, n_samples: usize, intervals: usize) -> Self {
        let two_d = preset.dim() == 2;
        DatasetConfig {
            preset,
            epsilon,
            alpha: 1.0,
            length_scale: 0.2,
            n_samples,
            intervals,
            sensors: if two_d { 17 } else { 129 },
            mesh: MeshKind::Shishkin,
            fine_intervals: if two_d { 256 } else { 4096 },
            base_seed: 0,
            forcing: Forcing::Grf,
        }
    }

    pub fn dim(&self) -> usize {
        self.preset.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("at least one sample is required"));
        }
        if self.sensors.is_multiple_of(2) {
            return Err(Error::invalid(format!("sensor count must be odd, got {}", self.sensors)));
        }
        if self.mesh == MeshKind::Shishkin && (self.intervals < 4 || self.intervals % 2 == 1) {
            return Err(Error::invalid(format!(
                "a Shishkin mesh needs an even interval count >= 4, got {}",
                self.intervals
            )));
        }
        if self.intervals < 2 {
            return Err(Error::invalid("at least two location intervals are required"));
        }
        if self.fine_intervals < 4 || self.fine_intervals % 2 == 1 {
            return Err(Error::invalid(format!(
                "reference mesh needs an even interval count >= 4, got {}",
                self.fine_intervals
            )));
        }
        if self.dim() == 2 && self.forcing == Forcing::Exp {
            return Err(Error::invalid("the exp forcing is only defined in 1D"));
        }
        Ok(())
    }

    /// Same problem with fresh forcing draws from a disjoint seed range,
    /// located on `intervals` Shishkin intervals.
    pub fn held_out(&self, n_samples: usize, intervals: usize) -> Self {
        DatasetConfig {
            n_samples,
            intervals,
            mesh: MeshKind::Shishkin,
            base_seed: self.base_seed.wrapping_add(HELD_OUT_SEED_OFFSET),
            ..self.clone()
        }
    }

    pub fn sample_seed(&self, n: usize) -> u64 {
        rng::derive(self.base_seed, n as u64)
    }

    pub fn location_mesh(&self) -> Result<Mesh1D> {
        Mesh1D::build(self.mesh, self.intervals, self.epsilon, self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seed: u64,
    pub sensor_values: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDataset {
    pub config: DatasetConfig,
    /// Location coordinates, `dim` consecutive values per location.
    pub locations: Vec<f64>,
    /// Quadrature weight of each location.
    pub weights: Vec<f64>,
    /// Sensor coordinates, `dim` consecutive values per sensor.
    pub sensors: Vec<f64>,
    pub samples: Vec<Sample>,
}

impl OperatorDataset {
    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_locations(&self) -> usize {
        self.weights.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len() / self.dim()
    }

    pub fn location(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.locations[j * d..(j + 1) * d]
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        self.location(j).iter().any(|&c| c == 0.0 || c == 1.0)
    }

    pub fn sensor_matrix(&self) -> Matrix {
        let m = self.n_sensors();
        let data = self.samples.iter().flat_map(|s| s.sensor_values.iter().copied()).collect();
        Matrix::from_vec(self.len(), m, data).expect("sample widths are consistent")
    }

    pub fn location_matrix(&self) -> Matrix {
        Matrix::from_vec(self.n_locations(), self.dim(), self.locations.clone()).expect("location widths are consistent")
    }

    /// Checks that all arrays agree with the configuration.
    pub fn check_consistent(&self) -> Result<()> {
        let d = self.dim();
        let l = self.n_locations();
        let per_axis = self.config.intervals + 1;
        let expected_l = if d == 2 { per_axis * per_axis } else { per_axis };
        let expected_m = if d == 2 {
            self.config.sensors * self.config.sensors
        } else {
            self.config.sensors
        };
        if l != expected_l || self.locations.len() != l * d {
            return Err(Error::invalid(format!("expected {expected_l} locations, found {l}")));
        }
        if self.sensors.len() != expected_m * d {
            return Err(Error::invalid(format!("expected {expected_m} sensors")));
        }
        if self.samples.len() != self.config.n_samples {
            return Err(Error::invalid(format!(
                "expected {} samples, found {}",
                self.config.n_samples,
                self.samples.len()
            )));
        }
        for (n, s) in self.samples.iter().enumerate() {
            if s.sensor_values.len() != expected_m || s.targets.len() != l {
                return Err(Error::invalid(format!("sample {n} has inconsistent lengths")));
            }
        }
        Ok(())
    }
}

fn with_index<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Sample {
        index,
        source: Box::new(e),
    })
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<OperatorDataset> {
    cfg.validate()?;
    match cfg.dim() {
        1 => generate_1d(cfg),
        _ => generate_dataset_2d(cfg),
    }
}

fn generate_1d(cfg: &DatasetConfig) -> Result<OperatorDataset> {
    let spec = GrfSpec::new(cfg.length_scale)?;
    let fine = ShishkinMesh::new(cfg.fine_intervals, cfg.epsilon, cfg.alpha)?;
    let problem = SppProblem1D::preset(cfg.preset, cfg.epsilon, Arc::new(|_| 0.0))?;
    if cfg.alpha > problem.alpha {
        return Err(Error::invalid(format!(
            "alpha {} exceeds the convection lower bound {} of {}",
            cfg.alpha, problem.alpha, cfg.preset
        )));
    }
    let system = UpwindSystem1D::assemble(&problem, &fine)?;
    let locations = cfg.location_mesh()?;
    let grid = SensorGrid::new(cfg.sensors)?;
    let fixed = |x: f64| match cfg.forcing {
        Forcing::Const { value } => value,
        Forcing::Exp => x.exp(),
        _ => 0.0,
    };

    let samples = (0..cfg.n_samples)
        .into_par_iter()
        .map(|n| {
            let seed = cfg.sample_seed(n);
            let (sensor_values, forcing) = match cfg.forcing {
                Forcing::Grf => {
                    let f = sample_field(spec, seed);
                    (f.eval(grid.points()), f.eval(fine.points()))
                }
                _ => (
                    grid.points().iter().map(|&x| fixed(x)).collect(),
                    fine.points().iter().map(|&x| fixed(x)).collect(),
                ),
            };
            let solution = with_index(n, system.solve_nodal(&forcing))?;
            let targets = with_index(
                n,
                fdsolve::interp_linear_points(&solution.points, &solution.values, locations.points()),
            )?;
            Ok(Sample {
                seed,
                sensor_values,
                targets,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(OperatorDataset {
        config: cfg.clone(),
        locations: locations.points().to_vec(),
        weights: locations.weights().to_vec(),
        sensors: grid.points().to_vec(),
        samples,
    })
}

/// 2D variant: separable random forcing on the unit square, reference
/// solutions on a fine tensor Shishkin mesh, bilinear interpolation to the
/// location grid, sensors on an `m x m` equidistant grid (x fastest).
pub fn generate_dataset_2d(cfg: &DatasetConfig) -> Result<OperatorDataset> {
    cfg.validate()?;
    if cfg.dim() != 2 {
        return Err(Error::invalid(format!("{} is not a 2D preset", cfg.preset)));
    }
    let spec = GrfSpec::new_2d(cfg.length_scale)?;
    let fine_axis = Mesh1D::build(MeshKind::Shishkin, cfg.fine_intervals, cfg.epsilon, cfg.alpha)?;
    let fine = TensorMesh2D::new(fine_axis.clone(), fine_axis);
    let system = UpwindSystem2D::assemble(cfg.epsilon, &fine)?;
    let fx = fine.x_mesh().points().to_vec();
    let fy = fine.y_mesh().points().to_vec();

    let axis = cfg.location_mesh()?;
    let loc_mesh = TensorMesh2D::new(axis.clone(), axis);
    let mut locations = Vec::with_capacity(2 * loc_mesh.len());
    for k in 0..loc_mesh.len() {
        let (x, y) = loc_mesh.node(k);
        locations.push(x);
        locations.push(y);
    }
    let s1 = SensorGrid::new(cfg.sensors)?;
    let mut sensors = Vec::with_capacity(2 * s1.len() * s1.len());
    for &y in s1.points() {
        for &x in s1.points() {
            sensors.push(x);
            sensors.push(y);
        }
    }

    let samples = (0..cfg.n_samples)
        .into_par_iter()
        .map(|n| {
            let seed = cfg.sample_seed(n);
            let (sensor_values, forcing) = match cfg.forcing {
                Forcing::Grf => {
                    let f = FieldSample2D::sample(spec, seed);
                    (f.eval_grid(s1.points(), s1.points()), f.eval_grid(&fx, &fy))
                }
                Forcing::Const { value } => (vec![value; s1.len() * s1.len()], vec![value; fx.len() * fy.len()]),
                _ => (vec![0.0; s1.len() * s1.len()], vec![0.0; fx.len() * fy.len()]),
            };
            let solution = with_index(n, system.solve_nodal(&forcing))?;
            let targets = locations
                .chunks_exact(2)
                .map(|c| solution.interp(c[0], c[1]))
                .collect::<Result<Vec<_>>>();
            Ok(Sample {
                seed,
                sensor_values,
                targets: with_index(n, targets)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(OperatorDataset {
        config: cfg.clone(),
        locations,
        weights: loc_mesh.weights().to_vec(),
        sensors,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(preset: Preset) -> DatasetConfig {
        let mut c = DatasetConfig::new(preset, 1e-3, 3, 16);
        c.sensors = 9;
        c.fine_intervals = if preset.dim() == 2 { 32 } else { 512 };
        c
    }

    #[test]
    fn forcing_parses() {
        assert_eq!("const:1".parse::<Forcing>().unwrap(), Forcing::Const { value: 1.0 });
        assert_eq!("exp".parse::<Forcing>().unwrap(), Forcing::Exp);
        assert!("const:x".parse::<Forcing>().is_err());
        for f in [Forcing::Grf, Forcing::Zero, Forcing::Exp, Forcing::Const { value: -2.5 }] {
            assert_eq!(f.to_string().parse::<Forcing>().unwrap(), f);
        }
    }

    #[test]
    fn validation() {
        let mut c = small(Preset::Example1);
        assert!(c.validate().is_ok());
        c.intervals = 65;
        assert!(c.validate().is_err());
        c.mesh = MeshKind::Uniform;
        assert!(c.validate().is_ok());
        let mut c = small(Preset::Example1);
        c.sensors = 8;
        assert!(c.validate().is_err());
        let mut c = small(Preset::Example1);
        c.n_samples = 0;
        assert!(c.validate().is_err());
        let mut c = small(Preset::Example3);
        c.forcing = Forcing::Exp;
        assert!(c.validate().is_err());
    }

    #[test]
    fn targets_vanish_on_the_boundary() {
        let ds = generate_dataset(&small(Preset::Example2)).unwrap();
        ds.check_consistent().unwrap();
        for s in &ds.samples {
            assert_eq!(s.targets[0], 0.0);
            assert_eq!(*s.targets.last().unwrap(), 0.0);
        }
        let ds = generate_dataset(&small(Preset::Example3)).unwrap();
        ds.check_consistent().unwrap();
        let boundary: Vec<usize> = (0..ds.n_locations()).filter(|&j| ds.is_boundary(j)).collect();
        assert_eq!(boundary.len(), 4 * 16);
        for s in &ds.samples {
            assert!(boundary.iter().all(|&j| s.targets[j] == 0.0));
            assert!(s.targets.iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn exact_solution_with_constant_forcing() {
        let mut c = DatasetConfig::new(Preset::Example1, 1e-3, 1, 64);
        c.forcing = Forcing::Const { value: 1.0 };
        let ds = generate_dataset(&c).unwrap();
        let exact = fdsolve::exact_example1(1e-3, &ds.locations);
        let err = ds.samples[0]
            .targets
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.06, "{err}");
    }

    #[test]
    fn zero_forcing_gives_zero_targets_in_2d() {
        let mut c = small(Preset::Example3);
        c.forcing = Forcing::Zero;
        let ds = generate_dataset(&c).unwrap();
        assert!(ds.samples.iter().all(|s| s.targets.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn held_out_seeds_are_disjoint() {
        let c = small(Preset::Example1);
        let h = c.held_out(3, 32);
        assert_eq!(h.base_seed, HELD_OUT_SEED_OFFSET);
        let a: Vec<u64> = (0..3).map(|n| c.sample_seed(n)).collect();
        assert!((0..3).all(|n| !a.contains(&h.sample_seed(n))));
    }
}
