//! On-disk dataset format: `meta.json` plus `data.bin`.
//!
//! `data.bin` is an 8-byte magic, a little-endian `u64` float count, then the
//! payload of little-endian `f64`s ordered
//! `[locations | weights | sensors | s_0 sensors | s_0 targets | ...]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{DatasetConfig, OperatorDataset, Sample};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DATA_MAGIC: &[u8; 8] = b"SPPDAT1\0";
pub const DATA_HEADER_BYTES: usize = 16;
pub const META_FILE: &str = "meta.json";
pub const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub config: DatasetConfig,
    pub dim: usize,
    pub n_locations: usize,
    pub n_sensors: usize,
    pub seeds: Vec<u64>,
    pub payload_floats: u64,
    pub payload_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Number of payload floats for the given dimensions.
pub fn payload_floats(dim: usize, n_locations: usize, n_sensors: usize, n_samples: usize) -> usize {
    n_locations * (dim + 1) + n_sensors * dim + n_samples * (n_sensors + n_locations)
}

/// Serializes `ds` into the `(meta.json, data.bin)` byte pair.
pub fn encode_dataset(ds: &OperatorDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    ds.check_consistent()?;
    let n_floats = payload_floats(ds.dim(), ds.n_locations(), ds.n_sensors(), ds.len());
    let mut data = Vec::with_capacity(DATA_HEADER_BYTES + 8 * n_floats);
    data.extend_from_slice(DATA_MAGIC);
    data.extend_from_slice(&(n_floats as u64).to_le_bytes());
    let mut push = |xs: &[f64]| {
        for x in xs {
            data.extend_from_slice(&x.to_le_bytes());
        }
    };
    push(&ds.locations);
    push(&ds.weights);
    push(&ds.sensors);
    for s in &ds.samples {
        push(&s.sensor_values);
        push(&s.targets);
    }
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        config: ds.config.clone(),
        dim: ds.dim(),
        n_locations: ds.n_locations(),
        n_sensors: ds.n_sensors(),
        seeds: ds.samples.iter().map(|s| s.seed).collect(),
        payload_floats: n_floats as u64,
        payload_sha256: sha256_hex(&data[DATA_HEADER_BYTES..]),
    };
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    Ok((json, data))
}

pub fn decode_dataset(meta_bytes: &[u8], data: &[u8]) -> Result<OperatorDataset> {
    let meta: DatasetMeta = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::format(e.column() as u64, format!("{META_FILE}: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(
            0,
            format!(
                "{META_FILE}: format version {} is not supported (expected {FORMAT_VERSION})",
                meta.format_version
            ),
        ));
    }
    let cfg = meta.config;
    if meta.dim != cfg.dim() || meta.seeds.len() != cfg.n_samples {
        return Err(Error::format(0, format!("{META_FILE}: inconsistent metadata")));
    }
    let expected = payload_floats(meta.dim, meta.n_locations, meta.n_sensors, cfg.n_samples);
    if meta.payload_floats != expected as u64 {
        return Err(Error::format(0, format!("{META_FILE}: payload size disagrees with dimensions")));
    }

    if data.len() < DATA_HEADER_BYTES {
        return Err(Error::format(data.len() as u64, format!("{DATA_FILE}: truncated header")));
    }
    if &data[..8] != DATA_MAGIC {
        let bad = data.iter().zip(DATA_MAGIC).position(|(a, b)| a != b).unwrap_or(0);
        return Err(Error::format(bad as u64, format!("{DATA_FILE}: bad magic")));
    }
    let count = u64::from_le_bytes(data[8..16].try_into().expect("8 bytes"));
    if count != expected as u64 {
        return Err(Error::format(
            8,
            format!("{DATA_FILE}: header declares {count} floats, metadata implies {expected}"),
        ));
    }
    let need = DATA_HEADER_BYTES + 8 * expected;
    if data.len() < need {
        return Err(Error::format(
            data.len() as u64,
            format!("{DATA_FILE}: truncated payload ({} of {need} bytes)", data.len()),
        ));
    }
    if data.len() > need {
        return Err(Error::format(need as u64, format!("{DATA_FILE}: trailing bytes")));
    }
    if sha256_hex(&data[DATA_HEADER_BYTES..]) != meta.payload_sha256 {
        return Err(Error::format(DATA_HEADER_BYTES as u64, format!("{DATA_FILE}: checksum mismatch")));
    }

    let mut floats = data[DATA_HEADER_BYTES..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let (d, l, m) = (meta.dim, meta.n_locations, meta.n_sensors);
    let locations = take(l * d);
    let weights = take(l);
    let sensors = take(m * d);
    let samples = meta
        .seeds
        .iter()
        .map(|&seed| Sample {
            seed,
            sensor_values: take(m),
            targets: take(l),
        })
        .collect();
    let ds = OperatorDataset {
        config: cfg,
        locations,
        weights,
        sensors,
        samples,
    };
    ds.check_consistent()
        .map_err(|e| Error::format(0, format!("{META_FILE}: {e}")))?;
    Ok(ds)
}

/// Writes `meta.json` and `data.bin` into `dir`, creating it if needed.
pub fn save_dataset(ds: &OperatorDataset, dir: &Path) -> Result<()> {
    let (meta, data) = encode_dataset(ds)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(DATA_FILE), data)?;
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<OperatorDataset> {
    let meta = fs::read(dir.join(META_FILE))?;
    let data = fs::read(dir.join(DATA_FILE))?;
    decode_dataset(&meta, &data)
}
