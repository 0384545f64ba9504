//! One-dimensional Shishkin and uniform meshes on `[0, 1]` and their tensor
//! products, each carrying the right-Riemann quadrature weights used by the
//! empirical risk.
//!
//! The Shishkin mesh puts half of its `J` intervals inside the boundary layer
//! at `x = 1`. With transition point `sigma = min(1/2, 2 eps ln(J) / alpha)`
//! the coarse step is `h = 2(1 - sigma)/J` and the fine step `H = 2 sigma/J`.
//! Weights are `w_0 = 0`, `w_j = h` on the coarse half and `w_j = H` on the
//! fine half, so they always sum to one.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that exposes mesh nodes together with quadrature weights.
pub trait Grid {
    fn points(&self) -> &[f64];
    fn weights(&self) -> &[f64];

    /// Number of subintervals.
    fn intervals(&self) -> usize {
        self.points().len() - 1
    }

    fn to_csv<W: Write>(&self, mut out: W) -> Result<()>
    where
        Self: Sized,
    {
        writeln!(out, "index,point,weight")?;
        for (j, (x, w)) in self.points().iter().zip(self.weights()).enumerate() {
            writeln!(out, "{j},{x},{w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Shishkin,
    Uniform,
}

impl std::fmt::Display for MeshKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshKind::Shishkin => f.write_str("shishkin"),
            MeshKind::Uniform => f.write_str("uniform"),
        }
    }
}

impl std::str::FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shishkin" => Ok(MeshKind::Shishkin),
            "uniform" => Ok(MeshKind::Uniform),
            other => Err(Error::invalid(format!("unknown mesh kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShishkinMesh {
    intervals: usize,
    epsilon: f64,
    alpha: f64,
    sigma: f64,
    coarse_step: f64,
    fine_step: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ShishkinMesh {
    pub fn new(intervals: usize, epsilon: f64, alpha: f64) -> Result<Self> {
        if intervals < 4 || !intervals.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "Shishkin mesh needs an even number of intervals >= 4, got {intervals}"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }

        let sigma = transition_point(intervals, epsilon, alpha);
        let half = intervals / 2;
        let coarse_step = 2.0 * (1.0 - sigma) / intervals as f64;
        let fine_step = 2.0 * sigma / intervals as f64;

        let (points, weights) = if sigma == 0.5 {
            // Degenerate case: must coincide bit for bit with the uniform mesh.
            let u = UniformMesh::new(intervals)?;
            (u.points, u.weights)
        } else {
            let mut points = Vec::with_capacity(intervals + 1);
            let mut weights = Vec::with_capacity(intervals + 1);
            for j in 0..=intervals {
                let x = if j < half {
                    j as f64 * coarse_step
                } else if j == half {
                    1.0 - sigma
                } else if j == intervals {
                    1.0
                } else {
                    1.0 - sigma + (j - half) as f64 * fine_step
                };
                points.push(x);
                weights.push(match j {
                    0 => 0.0,
                    j if j <= half => coarse_step,
                    _ => fine_step,
                });
            }
            (points, weights)
        };

        Ok(ShishkinMesh {
            intervals,
            epsilon,
            alpha,
            sigma,
            coarse_step,
            fine_step,
            points,
            weights,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Step on `[0, 1 - sigma]`.
    pub fn coarse_step(&self) -> f64 {
        self.coarse_step
    }

    /// Step on `[1 - sigma, 1]`.
    pub fn fine_step(&self) -> f64 {
        self.fine_step
    }
}

impl Grid for ShishkinMesh {
    fn points(&self) -> &[f64] {
        &self.points
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn intervals(&self) -> usize {
        self.intervals
    }
}

/// `sigma = min(1/2, 2 eps ln(J) / alpha)`.
pub fn transition_point(intervals: usize, epsilon: f64, alpha: f64) -> f64 {
    (2.0 * epsilon * (intervals as f64).ln() / alpha).min(0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformMesh {
    intervals: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl UniformMesh {
    pub fn new(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::invalid("uniform mesh needs at least one interval"));
        }
        let n = intervals as f64;
        let points = (0..=intervals).map(|j| j as f64 / n).collect();
        let weights = (0..=intervals)
            .map(|j| if j == 0 { 0.0 } else { 1.0 / n })
            .collect();
        Ok(UniformMesh {
            intervals,
            points,
            weights,
        })
    }
}

impl Grid for UniformMesh {
    fn points(&self) -> &[f64] {
        &self.points
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn intervals(&self) -> usize {
        self.intervals
    }
}

/// Runtime choice between the two 1D mesh families.
#[derive(Debug, Clone, PartialEq)]
pub enum Mesh1D {
    Shishkin(ShishkinMesh),
    Uniform(UniformMesh),
}

impl Mesh1D {
    /// Builds a mesh of the given kind; `epsilon` and `alpha` are ignored for
    /// uniform meshes.
    pub fn build(kind: MeshKind, intervals: usize, epsilon: f64, alpha: f64) -> Result<Self> {
        match kind {
            MeshKind::Shishkin => ShishkinMesh::new(intervals, epsilon, alpha).map(Mesh1D::Shishkin),
            MeshKind::Uniform => UniformMesh::new(intervals).map(Mesh1D::Uniform),
        }
    }

    pub fn kind(&self) -> MeshKind {
        match self {
            Mesh1D::Shishkin(_) => MeshKind::Shishkin,
            Mesh1D::Uniform(_) => MeshKind::Uniform,
        }
    }
}

impl Grid for Mesh1D {
    fn points(&self) -> &[f64] {
        match self {
            Mesh1D::Shishkin(m) => m.points(),
            Mesh1D::Uniform(m) => m.points(),
        }
    }
    fn weights(&self) -> &[f64] {
        match self {
            Mesh1D::Shishkin(m) => m.weights(),
            Mesh1D::Uniform(m) => m.weights(),
        }
    }
}

impl From<ShishkinMesh> for Mesh1D {
    fn from(m: ShishkinMesh) -> Self {
        Mesh1D::Shishkin(m)
    }
}

impl From<UniformMesh> for Mesh1D {
    fn from(m: UniformMesh) -> Self {
        Mesh1D::Uniform(m)
    }
}

/// `sum_j w_j v_j`.
pub fn riemann_sum(mesh: &impl Grid, values: &[f64]) -> Result<f64> {
    let w = mesh.weights();
    if values.len() != w.len() {
        return Err(Error::invalid(format!(
            "expected {} nodal values, got {}",
            w.len(),
            values.len()
        )));
    }
    Ok(w.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Tensor product of two 1D meshes. Node `(i, j)` (x index `i`, y index `j`)
/// is stored at flat index `j * (nx + 1) + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMesh2D {
    mx: Mesh1D,
    my: Mesh1D,
    weights: Vec<f64>,
    boundary: Vec<usize>,
    interior: Vec<usize>,
}

impl TensorMesh2D {
    pub fn new(mx: Mesh1D, my: Mesh1D) -> Self {
        let nx = mx.intervals();
        let ny = my.intervals();
        let mut weights = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        for (j, wy) in my.weights().iter().enumerate() {
            for (i, wx) in mx.weights().iter().enumerate() {
                let k = j * (nx + 1) + i;
                weights.push(wx * wy);
                if i == 0 || i == nx || j == 0 || j == ny {
                    boundary.push(k);
                } else {
                    interior.push(k);
                }
            }
        }
        TensorMesh2D {
            mx,
            my,
            weights,
            boundary,
            interior,
        }
    }

    pub fn x_mesh(&self) -> &Mesh1D {
        &self.mx
    }

    pub fn y_mesh(&self) -> &Mesh1D {
        &self.my
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.mx.intervals() + 1, self.my.intervals() + 1)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn interior_indices(&self) -> &[usize] {
        &self.interior
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.mx.intervals() + 1) + i
    }

    pub fn node(&self, k: usize) -> (f64, f64) {
        let nx = self.mx.intervals() + 1;
        (self.mx.points()[k % nx], self.my.points()[k / nx])
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (nx, ny) = self.shape();
        let (i, j) = (k % nx, k / nx);
        i == 0 || j == 0 || i == nx - 1 || j == ny - 1
    }

    pub fn to_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,x,y,weight")?;
        for (k, w) in self.weights.iter().enumerate() {
            let (x, y) = self.node(k);
            writeln!(out, "{k},{x},{y},{w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shishkin_constants_match_hand_evaluation() {
        // sigma = 2e-3 * 8 ln 2, h = 2(1 - sigma)/256, H = 2 sigma / 256
        let m = ShishkinMesh::new(256, 1e-3, 1.0).unwrap();
        let sigma = 0.016 * std::f64::consts::LN_2;
        assert!((m.sigma() - sigma).abs() < 1e-15);
        assert!((m.sigma() - 0.0110904).abs() < 1e-7);
        assert!((m.coarse_step() - 0.0077259).abs() < 1e-7);
        assert!((m.fine_step() - 8.6644e-5).abs() < 1e-9);
    }

    #[test]
    fn shishkin_clamps_to_uniform() {
        let m = ShishkinMesh::new(4, 1.0, 1.0).unwrap();
        assert_eq!(m.sigma(), 0.5);
        assert_eq!(m.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.points(), UniformMesh::new(4).unwrap().points());
        assert_eq!(m.weights(), UniformMesh::new(4).unwrap().weights());
    }

    #[test]
    fn transition_point_is_a_node() {
        let m = ShishkinMesh::new(64, 0.01, 1.0).unwrap();
        assert_eq!(m.points()[32], 1.0 - m.sigma());
        assert_eq!(m.points()[0], 0.0);
        assert_eq!(m.points()[64], 1.0);
        assert!(m.points().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(ShishkinMesh::new(65, 1e-3, 1.0).is_err());
        assert!(ShishkinMesh::new(2, 1e-3, 1.0).is_err());
        assert!(ShishkinMesh::new(64, 0.0, 1.0).is_err());
        assert!(ShishkinMesh::new(64, 1e-3, -1.0).is_err());
        assert!(UniformMesh::new(0).is_err());
    }

    #[test]
    fn uniform_points() {
        assert_eq!(UniformMesh::new(4).unwrap().points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(UniformMesh::new(1).unwrap().points(), &[0.0, 1.0]);
        let s: f64 = UniformMesh::new(256).unwrap().weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riemann_sum_examples() {
        let m = ShishkinMesh::new(64, 1e-3, 1.0).unwrap();
        let ones = vec![1.0; 65];
        assert!((riemann_sum(&m, &ones).unwrap() - 1.0).abs() < 1e-12);

        let mut e0 = vec![0.0; 65];
        e0[0] = 1.0;
        assert_eq!(riemann_sum(&m, &e0).unwrap(), 0.0);

        let u = UniformMesh::new(2).unwrap();
        let v = u.points().to_vec();
        assert!((riemann_sum(&u, &v).unwrap() - 0.75).abs() < 1e-15);

        assert!(riemann_sum(&u, &[1.0]).is_err());
    }

    #[test]
    fn tensor_mesh_counts() {
        let u = Mesh1D::from(UniformMesh::new(2).unwrap());
        let t = TensorMesh2D::new(u.clone(), u);
        assert_eq!(t.len(), 9);
        assert_eq!(t.boundary_indices().len(), 8);
        assert_eq!(t.interior_indices(), &[4]);

        let s = Mesh1D::from(ShishkinMesh::new(64, 1e-3, 1.0).unwrap());
        let t = TensorMesh2D::new(s.clone(), s);
        assert_eq!(t.interior_indices().len(), 63 * 63);
        let total: f64 = t.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(t.boundary_indices().iter().all(|&k| t.is_boundary(k)));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        UniformMesh::new(2).unwrap().to_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "index,point,weight\n0,0,0\n1,0.5,0.5\n2,1,0.5\n");
    }
}
