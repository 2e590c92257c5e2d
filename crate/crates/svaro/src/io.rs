//! File formats and persistence: the volume container, design CSV, run
//! configuration, and fitted-chain outputs.
//!
//! Bulk data lives in raw little-endian `f64` payloads; structure and
//! provenance live in JSON sidecars. All writes go through a temp-file rename
//! so partial files are never observed.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeGraph};
use crate::model::Hyperparams;
use crate::sampler::{ChainOutput, SamplerConfig};
use crate::simulate::SimConfig;

/// JSON sidecar of a volume payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: Vec<usize>,
    /// Run-length encoded mask over the full grid, entries like `"16x1"`.
    pub mask_rle: Vec<String>,
    pub t: usize,
    pub n: usize,
    pub units: String,
    /// Payload file name, relative to the header.
    pub payload: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Encodes a boolean mask as `"COUNTxVALUE"` runs.
pub fn encode_mask_rle(mask: &[bool]) -> Vec<String> {
    let mut runs = Vec::new();
    let mut iter = mask.iter();
    let Some(&first) = iter.next() else {
        return runs;
    };
    let mut current = first;
    let mut count = 1usize;
    for &b in iter {
        if b == current {
            count += 1;
        } else {
            runs.push(format!("{}x{}", count, u8::from(current)));
            current = b;
            count = 1;
        }
    }
    runs.push(format!("{}x{}", count, u8::from(current)));
    runs
}

/// Decodes `"COUNTxVALUE"` runs back into a mask of length `len`.
pub fn decode_mask_rle(runs: &[String], len: usize) -> Result<Vec<bool>> {
    let mut mask = Vec::with_capacity(len);
    for run in runs {
        let (count, value) = run
            .split_once('x')
            .ok_or_else(|| Error::VolumeFormat(format!("bad RLE run {run:?}")))?;
        let count: usize = count
            .parse()
            .map_err(|_| Error::VolumeFormat(format!("bad RLE count in {run:?}")))?;
        let value = match value {
            "0" => false,
            "1" => true,
            _ => return Err(Error::VolumeFormat(format!("bad RLE value in {run:?}"))),
        };
        mask.extend(std::iter::repeat_n(value, count));
    }
    if mask.len() != len {
        return Err(Error::VolumeFormat(format!(
            "RLE mask covers {} cells, grid has {len}",
            mask.len()
        )));
    }
    Ok(mask)
}

/// Writes `bytes` to `path` atomically (temp file in the same directory, then
/// rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn f64s_to_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn bytes_to_f64s(bytes: &[u8], what: &str) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::VolumeFormat(format!("{what}: truncated payload")));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size")))
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::VolumeFormat(format!("{what}: non-finite value at index {pos}")));
    }
    Ok(values)
}

/// Writes a `T x N` volume: `<stem>.json` header plus `<stem>.f64` payload.
pub fn write_volume(
    dir: &Path,
    stem: &str,
    data: &Array2<f64>,
    graph: &LatticeGraph,
    units: &str,
    seed: Option<u64>,
    config_hash: Option<String>,
) -> Result<PathBuf> {
    let (t, n) = data.dim();
    if n != graph.n_voxels {
        return Err(Error::DimensionMismatch(format!(
            "volume covers {n} voxels, lattice has {}",
            graph.n_voxels
        )));
    }
    let header = VolumeHeader {
        dims: graph.dims.clone(),
        mask_rle: encode_mask_rle(&graph.mask),
        t,
        n,
        units: units.to_string(),
        payload: format!("{stem}.f64"),
        seed,
        config_hash,
    };
    atomic_write(&dir.join(format!("{stem}.f64")), &f64s_to_bytes(data.iter().copied()))?;
    let header_path = dir.join(format!("{stem}.json"));
    atomic_write(&header_path, &(serde_json::to_vec_pretty(&header)?))?;
    Ok(header_path)
}

/// Reads a volume from its header path; returns the header, the data, and the
/// reconstructed lattice graph.
pub fn read_volume(header_path: &Path) -> Result<(VolumeHeader, Array2<f64>, LatticeGraph)> {
    let header: VolumeHeader = serde_json::from_slice(&fs::read(header_path)?)?;
    let n_cells: usize = header.dims.iter().product();
    let mask = decode_mask_rle(&header.mask_rle, n_cells)?;
    let graph = build_lattice(&header.dims, &mask)?;
    if graph.n_voxels != header.n {
        return Err(Error::VolumeFormat(format!(
            "header says {} voxels but the mask selects {}",
            header.n, graph.n_voxels
        )));
    }
    let payload_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.payload);
    let bytes = fs::read(&payload_path)?;
    if bytes.len() != 8 * header.t * header.n {
        return Err(Error::VolumeFormat(format!(
            "payload holds {} bytes, header promises {}",
            bytes.len(),
            8 * header.t * header.n
        )));
    }
    let values = bytes_to_f64s(&bytes, "volume payload")?;
    let data = Array2::from_shape_vec((header.t, header.n), values)
        .map_err(|e| Error::VolumeFormat(e.to_string()))?;
    Ok((header, data, graph))
}

/// Reads a design matrix CSV; a non-numeric first line is treated as a header
/// row.
pub fn read_design(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if row.len() != first.len() {
                        return Err(Error::VolumeFormat(format!(
                            "design line {} has {} fields, expected {}",
                            lineno + 1,
                            row.len(),
                            first.len()
                        )));
                    }
                }
                if let Some(pos) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::VolumeFormat(format!(
                        "design line {} column {} is not finite",
                        lineno + 1,
                        pos + 1
                    )));
                }
                rows.push(row);
            }
            Err(_) if lineno == 0 && rows.is_empty() => continue, // header row
            Err(e) => {
                return Err(Error::VolumeFormat(format!("design line {}: {e}", lineno + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::VolumeFormat("design file holds no rows".into()));
    }
    let k = rows[0].len();
    let t = rows.len();
    Ok(Array2::from_shape_fn((t, k), |(i, j)| rows[i][j]))
}

/// Writes a design matrix as CSV (full float round-trip precision).
pub fn write_design(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut text = String::new();
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Run mode: the full model or the fixed-order baseline.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    #[default]
    Svaro,
    FixedOrder(usize),
}

/// Scalar broadcast or explicit per-order values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrVec::Vec(v) => {
                if v.len() != len {
                    Err(Error::Config(format!("{what} needs {len} entries, got {}", v.len())))
                } else {
                    Ok(v.clone())
                }
            }
        }
    }
}

/// Prior constants as they appear in configuration files; anything omitted
/// takes the library default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    pub p: usize,
    #[serde(default)]
    pub beta0: Option<ScalarOrVec>,
    #[serde(default)]
    pub beta1: Option<ScalarOrVec>,
    #[serde(default)]
    pub q1: Option<f64>,
    #[serde(default)]
    pub q2: Option<f64>,
    #[serde(default)]
    pub u1: Option<f64>,
    #[serde(default)]
    pub u2: Option<f64>,
    #[serde(default)]
    pub r1: Option<f64>,
    #[serde(default)]
    pub r2: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub contrast: Option<Vec<f64>>,
    #[serde(default)]
    pub delta_e: Option<f64>,
    #[serde(default)]
    pub delta_p: Option<f64>,
    #[serde(default)]
    pub spatial_jitter: Option<f64>,
}

impl HyperConfig {
    pub fn to_hyperparams(&self, k: usize) -> Result<Hyperparams> {
        let mut h = Hyperparams::new(self.p, k);
        if let Some(b) = &self.beta0 {
            h.beta0 = b.expand(self.p, "beta0")?;
        }
        if let Some(b) = &self.beta1 {
            h.beta1 = b.expand(self.p, "beta1")?;
        }
        if let Some(v) = self.q1 {
            h.q1 = v;
        }
        if let Some(v) = self.q2 {
            h.q2 = v;
        }
        if let Some(v) = self.u1 {
            h.u1 = v;
        }
        if let Some(v) = self.u2 {
            h.u2 = v;
        }
        if let Some(v) = self.r1 {
            h.r1 = v;
        }
        if let Some(v) = self.r2 {
            h.r2 = v;
        }
        if let Some(v) = self.epsilon {
            h.epsilon = v;
        }
        if let Some(c) = &self.contrast {
            h.contrast = c.clone();
        }
        if let Some(v) = self.delta_e {
            h.delta_e = v;
        }
        if let Some(v) = self.delta_p {
            h.delta_p = v;
        }
        if let Some(v) = self.spatial_jitter {
            h.spatial_jitter = v;
        }
        h.validate(k)?;
        Ok(h)
    }
}

/// Assumptions behind the configuration-time feasibility warning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsCheck {
    #[serde(default = "default_bounds_pi")]
    pub pi: f64,
    #[serde(default = "default_bounds_r2")]
    pub r2: f64,
}

fn default_bounds_pi() -> f64 {
    0.1
}

fn default_bounds_r2() -> f64 {
    0.05
}

impl Default for BoundsCheck {
    fn default() -> Self {
        Self { pi: default_bounds_pi(), r2: default_bounds_r2() }
    }
}

/// Top-level run configuration. Unknown keys are rejected at every level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Volume header path (observations).
    #[serde(default)]
    pub y: Option<String>,
    /// Design CSV path.
    #[serde(default)]
    pub design: Option<String>,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub hyper: HyperConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub bounds_check: Option<BoundsCheck>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_slice(&fs::read(path)?)?;
    Ok(cfg)
}

/// Stable fingerprint of a configuration (FNV-1a over its canonical JSON);
/// provenance only, not a cryptographic digest.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).unwrap_or_default();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in &bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Writes one per-voxel map as raw binary, CSV with grid coordinates, and an
/// optional 8-bit graymap preview (2D grids only; previews never feed back
/// into numeric outputs).
pub fn write_map(
    dir: &Path,
    stem: &str,
    values: &[f64],
    graph: &LatticeGraph,
    pgm: bool,
) -> Result<()> {
    if values.len() != graph.n_voxels {
        return Err(Error::DimensionMismatch(format!(
            "map holds {} values, lattice has {} voxels",
            values.len(),
            graph.n_voxels
        )));
    }
    atomic_write(&dir.join(format!("{stem}.f64")), &f64s_to_bytes(values.iter().copied()))?;

    let mut csv = String::from("voxel");
    for axis in 0..graph.dims.len() {
        csv.push_str(&format!(",i{axis}"));
    }
    csv.push_str(",value\n");
    for (voxel, &v) in values.iter().enumerate() {
        csv.push_str(&voxel.to_string());
        for c in graph.coords(voxel) {
            csv.push_str(&format!(",{c}"));
        }
        csv.push_str(&format!(",{v}\n"));
    }
    atomic_write(&dir.join(format!("{stem}.csv")), csv.as_bytes())?;

    if pgm && graph.dims.len() == 2 {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let (rows, cols) = (graph.dims[0], graph.dims[1]);
        let mut body = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        for cell in 0..rows * cols {
            let px = match graph.voxel_index[cell] {
                Some(v) if span > 0.0 => (255.0 * (values[v] - lo) / span).round() as u8,
                Some(_) => 0,
                None => 0,
            };
            body.push(px);
        }
        atomic_write(&dir.join(format!("{stem}.pgm")), &body)?;
    }
    Ok(())
}

fn read_flat(path: &Path, what: &str) -> Result<Vec<f64>> {
    bytes_to_f64s(&fs::read(path)?, what)
}

/// Metadata persisted next to fitted-chain maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub seed: u64,
    pub config_hash: String,
    pub n_draws: usize,
    pub t: usize,
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub dims: Vec<usize>,
    pub mask_rle: Vec<String>,
    pub contrast: Vec<f64>,
    pub delta_e: f64,
    pub has_loglik: bool,
    pub sampler: SamplerConfig,
}

/// Persists chain summaries (and the log-density matrix when stored) under
/// `dir`.
pub fn write_fit(dir: &Path, chain: &ChainOutput, graph: &LatticeGraph, t: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (k, n) = chain.w_mean.dim();
    let p = chain.a_mean.nrows();
    let summary = FitSummary {
        seed: chain.seed,
        config_hash: config_hash(&chain.config),
        n_draws: chain.n_draws,
        t,
        n,
        k,
        p,
        dims: graph.dims.clone(),
        mask_rle: encode_mask_rle(&graph.mask),
        contrast: chain.contrast.clone(),
        delta_e: chain.delta_e,
        has_loglik: chain.loglik.is_some(),
        sampler: chain.config.clone(),
    };
    atomic_write(&dir.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;

    let write_matrix = |stem: &str, m: &Array2<f64>| -> Result<()> {
        atomic_write(&dir.join(format!("{stem}.f64")), &f64s_to_bytes(m.iter().copied()))
    };
    write_matrix("w_mean", &chain.w_mean)?;
    write_matrix("w_var", &chain.w_var)?;
    write_matrix("a_mean", &chain.a_mean)?;
    write_matrix("a_var", &chain.a_var)?;
    write_matrix("gamma_freq", &chain.gamma_freq)?;
    atomic_write(
        &dir.join("lambda_mean.f64"),
        &f64s_to_bytes(chain.lambda_mean.iter().copied()),
    )?;
    atomic_write(
        &dir.join("mean_max_order.f64"),
        &f64s_to_bytes(chain.mean_max_order.iter().copied()),
    )?;
    atomic_write(&dir.join("ppm.f64"), &f64s_to_bytes(chain.exceed_probability().into_iter()))?;
    if let Some(ll) = &chain.loglik {
        write_matrix("loglik", ll)?;
    }
    Ok(())
}

/// Fitted-chain outputs reloaded from disk.
#[derive(Debug, Clone)]
pub struct StoredFit {
    pub summary: FitSummary,
    pub graph: LatticeGraph,
    pub w_mean: Array2<f64>,
    pub w_var: Array2<f64>,
    pub a_mean: Array2<f64>,
    pub a_var: Array2<f64>,
    pub gamma_freq: Array2<f64>,
    pub lambda_mean: Vec<f64>,
    pub mean_max_order: Vec<f64>,
    pub ppm: Vec<f64>,
    pub loglik: Option<Array2<f64>>,
}

impl StoredFit {
    /// Reconstructs a ChainOutput view sufficient for the diagnostics layer.
    pub fn to_chain(&self) -> ChainOutput {
        let n = self.summary.n;
        ChainOutput {
            n_draws: self.summary.n_draws,
            w_mean: self.w_mean.clone(),
            w_var: self.w_var.clone(),
            a_mean: self.a_mean.clone(),
            a_var: self.a_var.clone(),
            lambda_mean: self.lambda_mean.clone(),
            lambda_var: vec![0.0; n],
            gamma_freq: self.gamma_freq.clone(),
            mean_max_order: self.mean_max_order.clone(),
            exceed_count: self
                .ppm
                .iter()
                .map(|&p| (p * self.summary.n_draws as f64).round() as u64)
                .collect(),
            contrast: self.summary.contrast.clone(),
            delta_e: self.summary.delta_e,
            loglik: self.loglik.clone(),
            draws: None,
            seed: self.summary.seed,
            config: self.summary.sampler.clone(),
        }
    }
}

pub fn read_fit(dir: &Path) -> Result<StoredFit> {
    let summary: FitSummary = serde_json::from_slice(&fs::read(dir.join("summary.json"))?)?;
    let n_cells: usize = summary.dims.iter().product();
    let mask = decode_mask_rle(&summary.mask_rle, n_cells)?;
    let graph = build_lattice(&summary.dims, &mask)?;
    let (k, p, n) = (summary.k, summary.p, summary.n);
    let matrix = |stem: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let values = read_flat(&dir.join(format!("{stem}.f64")), stem)?;
        if values.len() != rows * cols {
            return Err(Error::VolumeFormat(format!(
                "{stem}: expected {} values, found {}",
                rows * cols,
                values.len()
            )));
        }
        Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::VolumeFormat(e.to_string()))
    };
    let loglik = if summary.has_loglik {
        Some(matrix("loglik", summary.n_draws, n)?)
    } else {
        None
    };
    Ok(StoredFit {
        graph,
        w_mean: matrix("w_mean", k, n)?,
        w_var: matrix("w_var", k, n)?,
        a_mean: matrix("a_mean", p, n)?,
        a_var: matrix("a_var", p, n)?,
        gamma_freq: matrix("gamma_freq", p, n)?,
        lambda_mean: read_flat(&dir.join("lambda_mean.f64"), "lambda_mean")?,
        mean_max_order: read_flat(&dir.join("mean_max_order.f64"), "mean_max_order")?,
        ppm: read_flat(&dir.join("ppm.f64"), "ppm")?,
        loglik,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use proptest::prelude::*;

    #[test]
    fn rle_all_true_grid() {
        let runs = encode_mask_rle(&vec![true; 16]);
        assert_eq!(runs, vec!["16x1".to_string()]);
        let back = decode_mask_rle(&runs, 16).unwrap();
        assert_eq!(back, vec![true; 16]);
    }

    #[test]
    fn rle_mixed_runs() {
        let mask = vec![true, true, false, false, false, true];
        let runs = encode_mask_rle(&mask);
        assert_eq!(runs, vec!["2x1", "3x0", "1x1"]);
        assert_eq!(decode_mask_rle(&runs, 6).unwrap(), mask);
        assert!(decode_mask_rle(&runs, 7).is_err());
    }

    #[test]
    fn volume_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let graph = build_lattice(&[2, 3], &[true, true, false, true, true, true]).unwrap();
        let data = Array2::from_shape_fn((7, 5), |(i, j)| {
            (i as f64 * 0.1234567891234 - j as f64).exp() * 1e-3 + i as f64
        });
        let header_path =
            write_volume(dir.path(), "vol", &data, &graph, "a.u.", Some(9), None).unwrap();
        let (header, back, graph2) = read_volume(&header_path).unwrap();
        assert_eq!(back, data);
        assert_eq!(header.seed, Some(9));
        assert_eq!(graph2.n_voxels, 5);
    }

    #[test]
    fn volume_rejects_truncation_and_nonfinite() {
        let dir = tempfile::tempdir().unwrap();
        let graph = build_lattice(&[1, 2], &[true, true]).unwrap();
        let data = Array2::from_shape_fn((3, 2), |(i, j)| (i + j) as f64);
        let header_path =
            write_volume(dir.path(), "vol", &data, &graph, "a.u.", None, None).unwrap();
        // Truncate the payload.
        let payload = dir.path().join("vol.f64");
        let bytes = fs::read(&payload).unwrap();
        fs::write(&payload, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_volume(&header_path).is_err());

        // Non-finite value.
        let mut bad = bytes.clone();
        bad[0..8].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&payload, &bad).unwrap();
        let err = read_volume(&header_path).unwrap_err();
        assert!(err.to_string().contains("index 0"), "{err}");
    }

    #[test]
    fn design_csv_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i as f64 + 0.5) * (j as f64 + 1.5) / 7.0);
        write_design(&path, &x).unwrap();
        let back = read_design(&path).unwrap();
        assert_eq!(back, x);

        // Header row is skipped.
        let mut text = String::from("stim,intercept\n");
        text.push_str(&fs::read_to_string(&path).unwrap());
        fs::write(&path, text).unwrap();
        let back = read_design(&path).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn design_csv_ragged_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        assert!(read_design(&path).is_err());
    }

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let ok = r#"{
            "hyper": {"p": 2, "beta0": -0.2, "beta1": [0.3, 0.1]},
            "sampler": {"n_burnin": 5, "n_samples": 10, "seed": 1},
            "mode": {"fixed_order": 1}
        }"#;
        let cfg: RunConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(cfg.mode, ModeConfig::FixedOrder(1));
        let h = cfg.hyper.to_hyperparams(2).unwrap();
        assert_eq!(h.beta0, vec![-0.2, -0.2]);
        assert_eq!(h.beta1, vec![0.3, 0.1]);

        let bad = r#"{
            "hyper": {"p": 2},
            "sampler": {"n_burnin": 5, "n_samples": 10, "seed": 1},
            "unknown_key": 3
        }"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());

        let bad_inner = r#"{
            "hyper": {"p": 2, "zeta": 1},
            "sampler": {"n_burnin": 5, "n_samples": 10, "seed": 1}
        }"#;
        assert!(serde_json::from_str::<RunConfig>(bad_inner).is_err());
    }

    #[test]
    fn config_hash_stable_and_sensitive() {
        let a = SamplerConfig::new(10, 20, 7);
        let mut b = SamplerConfig::new(10, 20, 7);
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 8;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn map_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let graph = build_lattice(&[2, 2], &[true; 4]).unwrap();
        write_map(dir.path(), "m", &[0.0, 0.5, 1.0, 0.25], &graph, true).unwrap();
        assert!(dir.path().join("m.f64").exists());
        assert!(dir.path().join("m.csv").exists());
        assert!(dir.path().join("m.pgm").exists());
        let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert!(csv.starts_with("voxel,i0,i1,value\n"));
        let pgm = fs::read(dir.path().join("m.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(pgm.len(), b"P5\n2 2\n255\n".len() + 4);
    }

    proptest! {
        #[test]
        fn rle_round_trips(mask in proptest::collection::vec(any::<bool>(), 1..200)) {
            let runs = encode_mask_rle(&mask);
            let back = decode_mask_rle(&runs, mask.len()).unwrap();
            prop_assert_eq!(back, mask);
        }

        #[test]
        fn flat_f64_round_trips(values in proptest::collection::vec(-1e12f64..1e12, 1..64)) {
            let bytes = f64s_to_bytes(values.iter().copied());
            let back = bytes_to_f64s(&bytes, "test").unwrap();
            prop_assert_eq!(back, values);
        }
    }
}
