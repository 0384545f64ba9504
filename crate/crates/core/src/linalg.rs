//! Direct solvers for the sparse systems produced by the upwind schemes.

use crate::error::{Error, Result};

/// Thomas algorithm for `A x = rhs` with `A` tridiagonal.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (so `lower[0]` is ignored) and
/// `upper[i]` multiplies `x[i+1]` (so `upper[n-1]` is ignored). No pivoting:
/// intended for diagonally dominant or M-matrix systems.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::invalid("tridiagonal bands and rhs must share one length"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    for i in 0..n {
        if i > 0 {
            pivot = diag[i] - lower[i] * c[i - 1];
        }
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::NumericalFailure(format!("Thomas algorithm broke down at row {i}")));
        }
        c[i] = upper[i] / pivot;
        let prev = if i > 0 { x[i - 1] } else { 0.0 };
        let low = if i > 0 { lower[i] } else { 0.0 };
        x[i] = (rhs[i] - low * prev) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// `max_i |(A x - rhs)_i|` for the tridiagonal layout of [`thomas`].
pub fn tridiagonal_residual(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64], rhs: &[f64]) -> f64 {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut r = diag[i] * x[i] - rhs[i];
            if i > 0 {
                r += lower[i] * x[i - 1];
            }
            if i + 1 < n {
                r += upper[i] * x[i + 1];
            }
            r.abs()
        })
        .fold(0.0, f64::max)
}

/// Square band matrix with equal lower and upper bandwidth, stored row by
/// row: entry `(i, j)` with `|i - j| <= bw` lives at `i * (2 bw + 1) + (j + bw - i)`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization without pivoting (Doolittle, unit lower).
    pub fn factorize(mut self) -> Result<BandLu> {
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * width + bw];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "banded LU broke down at pivot {k}"
                )));
            }
            let hi = (k + bw).min(n - 1);
            for i in k + 1..=hi {
                let ik = i * width + (k + bw - i);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                // row_i[k+1..=hi] -= l * row_k[k+1..=hi]
                let src = k * width + bw + 1;
                let dst = i * width + (k + 1 + bw - i);
                let len = hi - k;
                let (head, tail) = self.data.split_at_mut(dst);
                let row_k = &head[src..src + len];
                for (t, s) in tail[..len].iter_mut().zip(row_k) {
                    *t -= l * s;
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

/// LU factors of a [`BandMatrix`], reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, bw) = (self.m.n, self.m.bw);
        if rhs.len() != n {
            return Err(Error::invalid(format!("rhs length {} != matrix size {n}", rhs.len())));
        }
        let width = 2 * bw + 1;
        let d = &self.m.data;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = i * width;
            let mut s = x[i];
            for j in lo..i {
                s -= d[row + j + bw - i] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = i * width;
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= d[row + j + bw - i] * x[j];
            }
            x[i] = s / d[row + bw];
        }
        Ok(x)
    }
}

/// Dense Gaussian elimination with partial pivoting. Test oracle for the
/// structured solvers.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .ok_or_else(|| Error::invalid("empty system"))?;
        if a[p][k] == 0.0 {
            return Err(Error::NumericalFailure("singular matrix".into()));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}
