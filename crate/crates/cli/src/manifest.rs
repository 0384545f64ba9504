//! Run manifests: the resolved arguments of a command plus checksums of
//! everything it wrote, enough to re-run it and verify the outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sppdon::pipeline::io::sha256_hex;

use crate::commands::{Eval, GenData, Predict, Train};
use crate::error::{usage, CliError};
use crate::plot::Plot;
use crate::sweep::{SweepEps, SweepSize};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// What a command produced.
pub struct Outcome {
    pub manifest: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

pub trait Recorded: Serialize + DeserializeOwned {
    const NAME: &'static str;

    fn execute(&self) -> Result<Outcome, CliError>;

    /// Makes every path argument absolute.
    fn absolutize(&mut self) -> std::io::Result<()>;

    /// Moves every output into `dir`, keeping file names.
    fn redirect(&mut self, dir: &Path);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the manifest's directory when possible.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<ArtifactRecord>,
    pub wall_clock_seconds: f64,
    pub code_version: String,
}

pub fn absolute(p: &mut PathBuf) -> std::io::Result<()> {
    *p = std::path::absolute(&*p)?;
    Ok(())
}

pub fn into_dir(p: &mut PathBuf, dir: &Path) {
    if let Some(name) = p.file_name() {
        *p = dir.join(name);
    }
}

/// `dir/stem<suffix>` for `path = dir/stem.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// `dir/name.ext.manifest.json` for `path = dir/name.ext`.
pub fn manifest_for(path: &Path) -> PathBuf {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{name}.manifest.json"))
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn artifact_record(path: &Path, base: &Path) -> std::io::Result<ArtifactRecord> {
    let bytes = fs::read(path)?;
    let rel = path
        .strip_prefix(base)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf());
    Ok(ArtifactRecord {
        path: rel.to_string_lossy().into_owned(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

fn run_recorded<C: Recorded>(mut cmd: C) -> Result<(PathBuf, RunManifest), CliError> {
    cmd.absolutize()?;
    let start = Instant::now();
    let out = cmd.execute()?;
    let base = out.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let artifacts = out
        .artifacts
        .iter()
        .map(|p| artifact_record(p, &base))
        .collect::<std::io::Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: C::NAME.to_string(),
        args: serde_json::to_value(&cmd)?,
        config: out.config,
        seeds: out.seeds,
        artifacts,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        code_version: CODE_VERSION.to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&out.manifest, &json)?;
    Ok((out.manifest, manifest))
}

pub fn record<C: Recorded>(cmd: C) -> Result<(), CliError> {
    run_recorded(cmd).map(|_| ())
}

#[derive(clap::Args, Debug)]
pub struct Replay {
    /// Manifest written by an earlier run
    #[arg(long)]
    pub manifest: PathBuf,

    /// Write the outputs here instead of over the originals
    #[arg(long)]
    pub into: Option<PathBuf>,
}

fn replay_as<C: Recorded>(old: &RunManifest, into: Option<&Path>) -> Result<RunManifest, CliError> {
    let mut cmd: C = serde_json::from_value(old.args.clone())
        .map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
    if let Some(dir) = into {
        fs::create_dir_all(dir)?;
        cmd.redirect(&std::path::absolute(dir)?);
    }
    Ok(run_recorded(cmd)?.1)
}

impl Replay {
    pub fn run(&self) -> Result<(), CliError> {
        let old: RunManifest = serde_json::from_slice(&fs::read(&self.manifest)?)?;
        let into = self.into.as_deref();
        let new = match old.command.as_str() {
            GenData::NAME => replay_as::<GenData>(&old, into)?,
            Train::NAME => replay_as::<Train>(&old, into)?,
            Eval::NAME => replay_as::<Eval>(&old, into)?,
            SweepEps::NAME => replay_as::<SweepEps>(&old, into)?,
            SweepSize::NAME => replay_as::<SweepSize>(&old, into)?,
            Predict::NAME => replay_as::<Predict>(&old, into)?,
            Plot::NAME => replay_as::<Plot>(&old, into)?,
            other => return Err(usage(format!("unknown command '{other}' in manifest"))),
        };
        let name = |a: &ArtifactRecord| {
            Path::new(&a.path)
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        let mut bad = 0;
        for a in &old.artifacts {
            match new.artifacts.iter().find(|b| name(b) == name(a)) {
                Some(b) if b.sha256 == a.sha256 => println!("ok        {} {}", a.sha256, name(a)),
                Some(b) => {
                    bad += 1;
                    println!("MISMATCH  {} != {} {}", b.sha256, a.sha256, name(a));
                }
                None => {
                    bad += 1;
                    println!("MISSING   {}", name(a));
                }
            }
        }
        if bad > 0 {
            return Err(CliError::Mismatch(format!("{bad} artifact(s) differ from the manifest")));
        }
        Ok(())
    }
}
