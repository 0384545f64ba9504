//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (bypassing the libtest capture) and then asserts.
//!
//! The training-heavy checks are ignored by default; run them with
//! `cargo test -p sppdon-cli --test acceptance -- --include-ignored`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use sppdon::deeponet::{self, DeepOnet, PairBatch};
use sppdon::experiment::{run_cell, CellResult, CellSpec};
use sppdon::fdsolve::{self, Preset, SppProblem1D, SppProblem2D};
use sppdon::grf::{cholesky_sample, periodized_rbf, sample_field, GrfSpec};
use sppdon::mesh::{transition_point, Grid, Mesh1D, MeshKind, ShishkinMesh, TensorMesh2D, UniformMesh};
use sppdon::nn::{self, Activation, Matrix, Mlp};
use sppdon::pipeline::dataset::{generate_dataset, DatasetConfig};
use sppdon::pipeline::loss::{loss_mse, loss_penalized_2d};
use sppdon::pipeline::train::{train, TrainConfig};
use sppdon::rng;
use sppdon::spectral::encode_decode_error;

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn verdict(name: &str, ok: bool, detail: &str, start: Instant) {
    let line = format!(
        "acceptance {} {name} ({:.1}s): {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "{name}: {detail}");
}

#[test]
fn mesh_quadrature_exactness() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for j in [4, 64, 256, 4096] {
        for eps in [1.0, 1e-3] {
            let m = ShishkinMesh::new(j, eps, 1.0).unwrap();
            worst = worst.max((m.weights().iter().sum::<f64>() - 1.0).abs());
        }
    }
    let sigma = transition_point(256, 1e-3, 1.0);
    let hand = 2.0 * 1e-3 * (256f64).ln();
    let ok = worst < 1e-12 && (sigma - hand).abs() < 1e-15 && (sigma - 0.0110904).abs() < 5e-8;
    verdict(
        "mesh_quadrature_exactness",
        ok,
        &format!("max |sum w - 1| = {worst:.2e}, sigma(256, 1e-3) = {sigma:.7}"),
        t,
    );
}

fn fd_error_example1(j: usize, eps: f64) -> f64 {
    let mesh = ShishkinMesh::new(j, eps, 1.0).unwrap();
    let problem = SppProblem1D::preset(Preset::Example1, eps, Arc::new(|_| 1.0)).unwrap();
    let sol = fdsolve::solve_upwind_1d(&problem, &mesh).unwrap();
    let exact = fdsolve::exact_example1(eps, &sol.points);
    sol.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn fd_solver_against_closed_form() {
    let t = Instant::now();
    let coarse = fd_error_example1(64, 0.1);
    let refine: Vec<f64> = [64, 128, 256, 512].iter().map(|&j| fd_error_example1(j, 1e-3)).collect();
    let across: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| fd_error_example1(256, e)).collect();
    let spread = across.iter().cloned().fold(0.0, f64::max) / across.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = coarse <= 0.06 && refine.windows(2).all(|w| w[1] < w[0]) && spread < 3.0;
    verdict(
        "fd_solver_against_closed_form",
        ok,
        &format!("err(J=64, eps=0.1) = {coarse:.3e}; refinement {}; eps spread at J=256 {spread:.3}", sci(&refine)),
        t,
    );
}

#[test]
fn interpolation_rate_on_shishkin_points() {
    let t = Instant::now();
    let eps = 1e-3;
    let probes: Vec<f64> = (0..10_000).map(|i| i as f64 / 9_999.0).collect();
    let exact = fdsolve::exact_example1(eps, &probes);
    let errs: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&j| {
            let mesh = ShishkinMesh::new(j, eps, 1.0).unwrap();
            let nodal = fdsolve::exact_example1(eps, mesh.points());
            let interp = fdsolve::interp_linear(&mesh, &nodal, &probes).unwrap();
            interp.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = ratios.iter().all(|&r| r <= 0.35);
    verdict(
        "interpolation_rate_on_shishkin_points",
        ok,
        &format!("max errors {}, doubling ratios {ratios:.3?}", sci(&errs)),
        t,
    );
}

fn empirical_cov(draws: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = draws[0].len();
    let mut c = vec![vec![0.0; n]; n];
    for d in draws {
        for i in 0..n {
            for j in 0..n {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    let k = draws.len() as f64;
    c.iter().map(|r| r.iter().map(|v| v / k).collect()).collect()
}

fn max_entry_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn grf_covariance() {
    let t = Instant::now();
    let l = 1.0;
    let draws = 20_000u64;
    let xs: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
    let spec = GrfSpec::new(l).unwrap();
    let kl: Vec<Vec<f64>> = (0..draws).map(|s| sample_field(spec, rng::derive(11, s)).eval(&xs)).collect();
    let chol: Vec<Vec<f64>> = (0..draws)
        .map(|s| cholesky_sample(&xs, l, rng::derive(12, s), 1e-10).unwrap())
        .collect();
    let kernel: Vec<Vec<f64>> = xs
        .iter()
        .map(|&a| xs.iter().map(|&b| periodized_rbf(a, b, l, 8).unwrap()).collect())
        .collect();
    let (ckl, cch) = (empirical_cov(&kl), empirical_cov(&chol));
    let kl_err = max_entry_gap(&ckl, &kernel);
    let paths = max_entry_gap(&ckl, &cch);
    verdict(
        "grf_covariance",
        kl_err < 0.05 && paths < 0.07,
        &format!("KL vs kernel {kl_err:.4}, KL vs Cholesky {paths:.4}"),
        t,
    );
}

#[test]
fn encoder_decoder_error() {
    let t = Instant::now();
    let short = encode_decode_error(0.1, &[3, 7, 15, 31], 500, 5).unwrap();
    let long = encode_decode_error(1.0, &[7], 500, 6).unwrap()[0];
    let ok = short.windows(2).all(|w| w[1] < w[0]) && long < 1e-6;
    verdict(
        "encoder_decoder_error",
        ok,
        &format!("l=0.1 RMS {}; l=1, m=7 RMS {long:.3e}", sci(&short)),
        t,
    );
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    use rand::Rng;
    let mut r = rng::seeded(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn gradient_correctness() {
    let t = Instant::now();
    let mlp = Mlp::new(&[5, 16, 16, 3], Activation::Tanh, 1).unwrap();
    let mlp_err = nn::grad_check(&mlp, &random_matrix(7, 5, 2), nn::DEFAULT_FD_STEP).unwrap();

    let don = DeepOnet::new(9, 6, 1, &[12, 12], &[12, 12], Activation::Tanh, 3).unwrap();
    let batch = PairBatch {
        sensors: random_matrix(4, 9, 4),
        locations: random_matrix(5, 1, 5),
        pairs: (0..4).flat_map(|s| (0..5).map(move |l| (s, l))).filter(|(s, l)| (s + l) % 3 != 0).collect(),
    };
    let don_err = deeponet::grad_check(&don, &batch, nn::DEFAULT_FD_STEP).unwrap();

    let (a, b, c) = (0.2, 0.5, 0.6);
    let hat = nn::hat_relu_net(a, b, c).unwrap();
    let xs: Vec<f64> = (0..100).map(|i| -0.25 + 1.5 * i as f64 / 99.0).collect();
    let out = hat.predict(&Matrix::from_vec(100, 1, xs.clone()).unwrap()).unwrap();
    let oracle = |x: f64| {
        if x <= a || x >= c {
            0.0
        } else if x <= b {
            (x - a) / (b - a)
        } else {
            (c - x) / (c - b)
        }
    };
    let hat_err = xs
        .iter()
        .zip(out.as_slice())
        .map(|(&x, &y)| (y - oracle(x)).abs())
        .fold(0.0, f64::max);
    verdict(
        "gradient_correctness",
        mlp_err < 1e-5 && don_err < 1e-5 && hat_err < 1e-12,
        &format!("MLP {mlp_err:.2e}, DeepONet {don_err:.2e}, hat {hat_err:.2e}"),
        t,
    );
}

fn desk_cell(eps: f64, mesh: MeshKind, n: usize, j: usize, train: TrainConfig) -> CellSpec {
    let mut d = DatasetConfig::new(Preset::Example1, eps, n, j);
    d.sensors = 33;
    d.mesh = mesh;
    d.base_seed = train.seed;
    CellSpec::new(d, train)
}

fn desk_train(epochs: usize, batch: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: batch,
        seed,
        p: 32,
        activation: Activation::Relu,
        ..TrainConfig::default()
    }
}

fn run(spec: &CellSpec) -> CellResult {
    let r = run_cell(spec).unwrap().result;
    let _ = writeln!(
        std::io::stderr(),
        "  cell eps={:e} mesh={} N={} J={} seed={}: risk {:.4e} (zero {:.4e}), loss {:.3e} -> {:.3e}",
        r.epsilon,
        r.mesh,
        r.n_samples,
        r.intervals,
        spec.data.base_seed,
        r.risk,
        r.zero_risk,
        r.initial_loss,
        r.final_loss
    );
    r
}

#[test]
fn desk_scale_training() {
    let t = Instant::now();
    let r = run(&desk_cell(1e-3, MeshKind::Shishkin, 200, 64, desk_train(300, 4096, 0)));
    let loss_ratio = r.final_loss / r.initial_loss;
    let gain = r.zero_risk / r.risk;
    verdict(
        "desk_scale_training",
        r.risk.is_finite() && loss_ratio < 0.1 && gain >= 5.0,
        &format!("final/initial loss {loss_ratio:.4}, zero-predictor risk / risk {gain:.2}"),
        t,
    );
}

#[test]
#[ignore = "slow: six training runs"]
fn epsilon_uniformity_trend() {
    let t = Instant::now();
    let epss = [1e-2, 1e-3, 1e-4];
    let risks = |mesh| -> Vec<f64> {
        epss.iter()
            .map(|&e| run(&desk_cell(e, mesh, 200, 64, desk_train(300, 1024, 0))).risk)
            .collect()
    };
    let sh = risks(MeshKind::Shishkin);
    let un = risks(MeshKind::Uniform);
    let sh_ratio = sh.iter().cloned().fold(0.0, f64::max) / sh.iter().cloned().fold(f64::INFINITY, f64::min);
    let un_ratio = un[2] / un[0];
    verdict(
        "epsilon_uniformity_trend",
        sh_ratio <= 3.0 && un_ratio >= 5.0,
        &format!("Shishkin risks {} (max/min {sh_ratio:.2}); uniform risks {} (1e-4 over 1e-2 {un_ratio:.2})", sci(&sh), sci(&un)),
        t,
    );
}

/// Mean held-out risk over paired seeds, with one entry per size.
fn size_trend(sizes: &[(usize, usize)], seeds: &[u64]) -> Vec<f64> {
    sizes
        .iter()
        .map(|&(n, j)| {
            let total: f64 = seeds
                .iter()
                .map(|&s| run(&desk_cell(1e-3, MeshKind::Shishkin, n, j, desk_train(300, 1024, s))).risk)
                .sum();
            total / seeds.len() as f64
        })
        .collect()
}

#[test]
#[ignore = "slow: fifteen training runs"]
fn sample_size_trends() {
    let t = Instant::now();
    let seeds = [0, 1, 2];
    let by_n = size_trend(&[(100, 64), (200, 64), (400, 64)], &seeds);
    let by_j = size_trend(&[(200, 32), (200, 64), (200, 128)], &seeds);
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    verdict(
        "sample_size_trends",
        non_increasing(&by_n) && non_increasing(&by_j),
        &format!("risk over N {{100, 200, 400}} {}; over J {{32, 64, 128}} {}", sci(&by_n), sci(&by_j)),
        t,
    );
}

fn manufactured_error_2d(n: usize) -> f64 {
    use std::f64::consts::PI;
    let eps = 1.0;
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let f = move |x: f64, y: f64| {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        2.0 * eps * PI * PI * sx * sy + PI * cx * sy + PI * sx * cy + sx * sy
    };
    let u = Mesh1D::from(UniformMesh::new(n).unwrap());
    let mesh = TensorMesh2D::new(u.clone(), u);
    let sol = fdsolve::solve_upwind_2d(&SppProblem2D::new(eps, Arc::new(f)).unwrap(), &mesh).unwrap();
    (0..mesh.len())
        .map(|k| {
            let (x, y) = mesh.node(k);
            (sol.values[k] - exact(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

fn two_d_config(n: usize) -> DatasetConfig {
    let mut d = DatasetConfig::new(Preset::Example3, 1e-2, n, 32);
    d.fine_intervals = 128;
    d
}

#[test]
#[ignore = "slow: builds a 2D dataset and trains on it"]
fn two_d_smoke() {
    let t = Instant::now();
    let mms: Vec<f64> = [32, 64].iter().map(|&n| manufactured_error_2d(n)).collect();

    let ds = generate_dataset(&two_d_config(100)).unwrap();
    let tcfg = TrainConfig {
        epochs: 300,
        penalty_lambda: 0.1,
        ..TrainConfig::default()
    };
    let model = tcfg.build_model(&ds).unwrap();
    let interior: Vec<usize> = (0..ds.n_locations()).filter(|&j| !ds.is_boundary(j)).collect();
    let all: Vec<usize> = (0..ds.len()).collect();
    let identity_gap = (loss_penalized_2d(&model, &ds, 0.0).unwrap() - loss_mse(&model, &ds, &all, &interior).unwrap()).abs();
    let out = train(model, &ds, &tcfg).unwrap();
    let reduction = out.initial_loss / out.final_loss;
    verdict(
        "two_d_smoke",
        mms[0] < 0.02 && mms[1] < mms[0] && identity_gap < 1e-12 && reduction >= 5.0,
        &format!(
            "manufactured error {}; lambda=0 identity gap {identity_gap:.1e}; loss reduction {reduction:.1}x",
            sci(&mms)
        ),
        t,
    );
}

fn sppdon(args: &[&str], cwd: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_sppdon"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPP_SEED")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "sppdon {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn manifest_replay_is_byte_identical() {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let small = [
        "--epochs", "15", "--batch", "256", "--branch-dims", "24,24", "--trunk-dims", "24,24", "--p", "8",
    ];
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> {
        head.iter().chain(tail).map(|s| s.to_string()).collect()
    };
    let runs: Vec<(Vec<String>, &str)> = vec![
        (with(&["gen-data", "--eps", "1e-3", "--n", "24", "--j", "32", "--m", "17", "--out", "data"], &[]), "data/manifest.json"),
        (with(&["train", "--data", "data", "--out", "model/don.bin"], &small), "model/don.bin.manifest.json"),
        (
            with(&["eval", "--model", "model/don.bin", "--data", "data", "--eval-n", "8", "--eval-j", "512", "--out", "eval.csv"], &[]),
            "eval.csv.manifest.json",
        ),
        (
            with(&["predict", "--model", "model/don.bin", "--f", "seed:9", "--grid", "shishkin:32", "--reference", "fd", "--data", "data", "--jfine", "1024", "--out", "pred.csv"], &[]),
            "pred.csv.manifest.json",
        ),
        (
            with(&["sweep-eps", "--eps-list", "1e-2,1e-4", "--j-list", "16", "--n", "12", "--m", "17", "--eval-j", "256", "--out", "eps.csv"], &small),
            "eps.csv.manifest.json",
        ),
        (
            with(&["sweep-size", "--vary", "j", "--values", "8,16", "--fixed", "12", "--eps", "1e-3", "--m", "17", "--eval-j", "256", "--replicates", "2", "--out", "size.csv"], &small),
            "size.csv.manifest.json",
        ),
        (
            with(&["plot", "--input", "eps.csv", "--x", "epsilon", "--y", "risk", "--group", "mesh", "--log-x", "--log-y", "--out", "eps.svg"], &[]),
            "eps.svg.manifest.json",
        ),
    ];
    let mut checked = 0;
    let mut differing = Vec::new();
    for (i, (args, manifest)) in runs.iter().enumerate() {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        sppdon(&args, dir);
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join(manifest)).unwrap()).unwrap();
        let replay = dir.join(format!("replay{i}"));
        sppdon(&["replay", "--manifest", manifest, "--into", replay.to_str().unwrap()], dir);
        let base = dir.join(manifest).parent().unwrap().to_path_buf();
        for a in m["artifacts"].as_array().unwrap() {
            let rel = PathBuf::from(a["path"].as_str().unwrap());
            let name = rel.file_name().unwrap();
            let original = std::fs::read(base.join(&rel)).unwrap();
            let again = std::fs::read(replay.join(name)).unwrap();
            checked += 1;
            if original != again {
                differing.push(name.to_string_lossy().into_owned());
            }
        }
    }
    verdict(
        "manifest_replay_is_byte_identical",
        differing.is_empty() && checked >= 9,
        &format!("{checked} artifacts from {} commands, differing: {differing:?}", runs.len()),
        t,
    );
}
