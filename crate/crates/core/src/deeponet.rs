//! DeepONet: a branch net on sensor values paired with a trunk net on query
//! locations,
//! `N(f)(y) = tau_0(y) + sum_{k=1..p} beta_k(f) tau_k(y)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{self, Activation, CountingReader, ForwardCache, Gradients, Matrix, Mlp};
use crate::rng;

pub const DON_MAGIC: &[u8; 7] = b"SPPDON1";

#[derive(Debug, Clone, PartialEq)]
pub struct DeepOnet {
    m: usize,
    p: usize,
    d: usize,
    pub branch: Mlp,
    pub trunk: Mlp,
}

/// Training batch over (sample, location) pairs. The branch runs once per
/// row of `sensors` and the trunk once per row of `locations`; `pairs`
/// indexes into both.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub sensors: Matrix,
    pub locations: Matrix,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct DonCache {
    branch: ForwardCache,
    trunk: ForwardCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonGradients {
    pub branch: Gradients,
    pub trunk: Gradients,
}

impl DeepOnet {
    /// Branch dims `[m, branch_hidden.., p]`, trunk dims
    /// `[d, trunk_hidden.., p + 1]`.
    pub fn new(
        m: usize,
        p: usize,
        d: usize,
        branch_hidden: &[usize],
        trunk_hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let bdims: Vec<usize> = std::iter::once(m)
            .chain(branch_hidden.iter().copied())
            .chain(std::iter::once(p))
            .collect();
        let tdims: Vec<usize> = std::iter::once(d)
            .chain(trunk_hidden.iter().copied())
            .chain(std::iter::once(p + 1))
            .collect();
        let branch = Mlp::new(&bdims, activation, rng::derive(seed, 0))?;
        let trunk = Mlp::new(&tdims, activation, rng::derive(seed, 1))?;
        Self::from_parts(branch, trunk)
    }

    pub fn from_parts(branch: Mlp, trunk: Mlp) -> Result<Self> {
        let p = branch.output_dim();
        if trunk.output_dim() != p + 1 {
            return Err(Error::invalid(format!(
                "trunk must emit p + 1 = {} features, got {}",
                p + 1,
                trunk.output_dim()
            )));
        }
        Ok(DeepOnet {
            m: branch.input_dim(),
            p,
            d: trunk.input_dim(),
            branch,
            trunk,
        })
    }

    pub fn sensors(&self) -> usize {
        self.m
    }

    pub fn latent(&self) -> usize {
        self.p
    }

    pub fn location_dim(&self) -> usize {
        self.d
    }

    pub fn activation(&self) -> Activation {
        self.branch.activation()
    }

    pub fn count_params(&self) -> usize {
        self.branch.num_params() + self.trunk.num_params()
    }

    fn check_widths(&self, sensors: &Matrix, ys: &Matrix) -> Result<()> {
        if sensors.cols() != self.m {
            return Err(Error::invalid(format!(
                "expected {} sensor values, got {}",
                self.m,
                sensors.cols()
            )));
        }
        if ys.cols() != self.d {
            return Err(Error::invalid(format!(
                "expected {}-dimensional locations, got {}",
                self.d,
                ys.cols()
            )));
        }
        Ok(())
    }

    #[inline]
    fn pair(&self, beta: &[f64], tau: &[f64]) -> f64 {
        tau[0] + beta.iter().zip(&tau[1..]).map(|(b, t)| b * t).sum::<f64>()
    }

    /// Evaluates one input function (given by its sensor values) at every
    /// row of `ys`.
    pub fn forward(&self, sensor_vals: &[f64], ys: &Matrix) -> Result<Vec<f64>> {
        let s = Matrix::from_vec(1, sensor_vals.len(), sensor_vals.to_vec())?;
        self.predict_grid(&s, ys)
    }

    /// Predictions for every (sample, location) combination, sample-major:
    /// entry `n * ys.rows() + j`.
    pub fn predict_grid(&self, sensors: &Matrix, ys: &Matrix) -> Result<Vec<f64>> {
        self.check_widths(sensors, ys)?;
        let beta = self.branch.predict(sensors)?;
        let tau = self.trunk.predict(ys)?;
        let mut out = Vec::with_capacity(sensors.rows() * ys.rows());
        for n in 0..sensors.rows() {
            let b = beta.row(n);
            for j in 0..ys.rows() {
                out.push(self.pair(b, tau.row(j)));
            }
        }
        Ok(out)
    }

    pub fn forward_pairs(&self, batch: &PairBatch) -> Result<(Vec<f64>, DonCache)> {
        self.check_widths(&batch.sensors, &batch.locations)?;
        let (beta, bc) = self.branch.forward(&batch.sensors)?;
        let (tau, tc) = self.trunk.forward(&batch.locations)?;
        let mut out = Vec::with_capacity(batch.pairs.len());
        for &(s, l) in &batch.pairs {
            if s >= beta.rows() || l >= tau.rows() {
                return Err(Error::invalid(format!("pair ({s}, {l}) out of range")));
            }
            out.push(self.pair(beta.row(s), tau.row(l)));
        }
        Ok((out, DonCache { branch: bc, trunk: tc }))
    }

    /// Chain rule through the bilinear pairing. `d_out[i]` is the loss
    /// derivative with respect to the output of pair `i`.
    pub fn backward_pairs(&self, cache: &DonCache, batch: &PairBatch, d_out: &[f64]) -> Result<DonGradients> {
        if d_out.len() != batch.pairs.len() {
            return Err(Error::invalid(format!(
                "{} output gradients for {} pairs",
                d_out.len(),
                batch.pairs.len()
            )));
        }
        let beta = cache.branch.output();
        let tau = cache.trunk.output();
        if beta.rows() != batch.sensors.rows() || tau.rows() != batch.locations.rows() {
            return Err(Error::InvalidState("cache does not belong to this batch".into()));
        }
        let mut d_beta = Matrix::zeros(beta.rows(), self.p);
        let mut d_tau = Matrix::zeros(tau.rows(), self.p + 1);
        for (&(s, l), &g) in batch.pairs.iter().zip(d_out) {
            if g == 0.0 {
                continue;
            }
            let b = beta.row(s);
            let t = tau.row(l);
            for (db, tk) in d_beta.row_mut(s).iter_mut().zip(&t[1..]) {
                *db += g * tk;
            }
            let dt = d_tau.row_mut(l);
            dt[0] += g;
            for (dtk, bk) in dt[1..].iter_mut().zip(b) {
                *dtk += g * bk;
            }
        }
        Ok(DonGradients {
            branch: self.branch.backward(&cache.branch, &d_beta)?,
            trunk: self.trunk.backward(&cache.trunk, &d_tau)?,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DON_MAGIC)?;
        for v in [self.m, self.p, self.d] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&[self.activation().tag()])?;
        self.branch.write_to(&mut out)?;
        self.trunk.write_to(&mut out)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut reader = CountingReader { inner: input, pos: 0 };
        let mut magic = [0u8; 7];
        reader.exact(&mut magic, "model magic")?;
        if &magic != DON_MAGIC {
            return Err(Error::format(0, "bad model magic"));
        }
        let m = reader.u32("m")? as usize;
        let p = reader.u32("p")? as usize;
        let d = reader.u32("d")? as usize;
        let mut tag = [0u8; 1];
        reader.exact(&mut tag, "activation tag")?;
        let activation = Activation::from_tag(tag[0])
            .ok_or_else(|| Error::format(reader.pos - 1, format!("unknown activation tag {}", tag[0])))?;
        let start = reader.pos;
        let (branch, pos) = Mlp::read_from(reader.inner, start)?;
        let (trunk, _) = Mlp::read_from(reader.inner, pos)?;
        let model = DeepOnet::from_parts(branch, trunk).map_err(|e| Error::format(start, e.to_string()))?;
        if (model.m, model.p, model.d) != (m, p, d) {
            return Err(Error::format(
                7,
                format!(
                    "header says m={m}, p={p}, d={d} but networks have m={}, p={}, d={}",
                    model.m, model.p, model.d
                ),
            ));
        }
        if model.activation() != activation || model.trunk.activation() != activation {
            return Err(Error::format(19, "activation tag disagrees with network payloads"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Gradient check of [`DeepOnet::backward_pairs`] against central
/// differences of `L = 1/2 sum_i N(f_i)(y_i)^2` over a random subset of the
/// combined branch and trunk parameters.
pub fn grad_check(model: &DeepOnet, batch: &PairBatch, fd_step: f64) -> Result<f64> {
    let loss = |net: &DeepOnet| -> Result<f64> {
        Ok(0.5 * net.forward_pairs(batch)?.0.iter().map(|v| v * v).sum::<f64>())
    };
    let (y, cache) = model.forward_pairs(batch)?;
    let g = model.backward_pairs(&cache, batch, &y)?;
    let nb = model.branch.num_params();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in nn::sample_indices(model.count_params(), 0x5d) {
        let analytic = if i < nb { g.branch.data[i] } else { g.trunk.data[i - nb] };
        let set = |net: &mut DeepOnet, v: f64| {
            if i < nb {
                net.branch.params_mut()[i] = v;
            } else {
                net.trunk.params_mut()[i - nb] = v;
            }
        };
        let orig = if i < nb { probe.branch.params()[i] } else { probe.trunk.params()[i - nb] };
        set(&mut probe, orig + fd_step);
        let up = loss(&probe)?;
        set(&mut probe, orig - fd_step);
        let down = loss(&probe)?;
        set(&mut probe, orig);
        worst = worst.max(nn::relative_error(analytic, (up - down) / (2.0 * fd_step)));
    }
    Ok(worst)
}
