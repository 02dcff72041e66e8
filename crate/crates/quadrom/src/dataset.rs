//! Snapshot datasets on disk.
//!
//! A dataset is a plain-text manifest of `key = value` lines plus three
//! arrays: coordinates (`n_dof × d`), parameters (`n_mu × d_mu`) and
//! snapshots (`n_mu × n_dof·d_field`, one snapshot per row, point-major).
//! Arrays are headerless little-endian `f64`, or CSV when the file name ends
//! in `.csv` (one matrix row per line, an optional non-numeric header line).
//! File names in the manifest are relative to the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadrom_core::synthetic::{generate_synthetic, SyntheticSpec};
use quadrom_core::{DenseMatrix, SnapshotSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{corrupt, io_err, Error, Result};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    External,
    Synthetic { kind: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub d: usize,
    pub d_field: usize,
    pub d_mu: usize,
    pub n_dof: usize,
    pub n_mu: usize,
    pub coords_file: PathBuf,
    pub params_file: PathBuf,
    pub snapshots_file: PathBuf,
    pub provenance: Provenance,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| corrupt(format!("manifest line {}: expected `key = value`", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| corrupt(format!("manifest is missing `{}`", k)));
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| corrupt(format!("manifest `{}` is not a non-negative integer", k)))
        };
        let generator = kv.get("generator").cloned().unwrap_or_else(|| "external".into());
        let provenance = if generator == "external" {
            Provenance::External
        } else {
            let seed = get("seed")?
                .parse()
                .map_err(|_| corrupt("manifest `seed` is not an integer"))?;
            Provenance::Synthetic { kind: generator, seed }
        };
        Ok(Self {
            name: get("name")?,
            d: num("d")?,
            d_field: num("d_field")?,
            d_mu: num("d_mu")?,
            n_dof: num("n_dof")?,
            n_mu: num("n_mu")?,
            coords_file: get("coords_file")?.into(),
            params_file: get("params_file")?.into(),
            snapshots_file: get("snapshots_file")?.into(),
            provenance,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (generator, seed) = match &self.provenance {
            Provenance::External => ("external".to_string(), "none".to_string()),
            Provenance::Synthetic { kind, seed } => (kind.clone(), seed.to_string()),
        };
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "d_field = {}", self.d_field);
        let _ = writeln!(s, "d_mu = {}", self.d_mu);
        let _ = writeln!(s, "n_dof = {}", self.n_dof);
        let _ = writeln!(s, "n_mu = {}", self.n_mu);
        let _ = writeln!(s, "coords_file = {}", self.coords_file.display());
        let _ = writeln!(s, "params_file = {}", self.params_file.display());
        let _ = writeln!(s, "snapshots_file = {}", self.snapshots_file.display());
        let _ = writeln!(s, "generator = {}", generator);
        let _ = writeln!(s, "seed = {}", seed);
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

/// Raw little-endian `f64` values.
pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 8 != 0 {
        return Err(corrupt(format!("{}: length {} is not a multiple of 8", path.display(), bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Numeric CSV; a first line that does not parse is taken as a header.
pub fn read_csv_matrix(path: &Path) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if n == 0 => continue,
            Err(_) => return Err(corrupt(format!("{}: line {} is not numeric", path.display(), n + 1))),
        }
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(bad) = rows.iter().position(|r| r.len() != w) {
            return Err(corrupt(format!("{}: row {} has {} values, expected {}", path.display(), bad + 1, rows[bad].len(), w)));
        }
    }
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    DenseMatrix::from_rows(&rows).map_err(Error::from)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => corrupt(format!("{}: {:?}", path.display(), other)),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads an array declared as `rows × cols` in the manifest.
fn read_array(path: &Path, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix> {
    if is_csv(path) {
        let m = read_csv_matrix(path)?;
        if m.shape() != (rows, cols) {
            return Err(corrupt(format!(
                "{} file {} is {}×{}, manifest declares {}×{}",
                what,
                path.display(),
                m.rows(),
                m.cols(),
                rows,
                cols
            )));
        }
        return Ok(m);
    }
    let data = read_f64s(path)?;
    if data.len() != rows * cols {
        return Err(corrupt(format!(
            "{} file {} holds {} values, manifest declares {}×{} = {}",
            what,
            path.display(),
            data.len(),
            rows,
            cols,
            rows * cols
        )));
    }
    Ok(DenseMatrix::new(rows, cols, data)?)
}

fn resolve(manifest_path: &Path, file: &Path) -> PathBuf {
    if file.is_absolute() {
        file.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(file)
    }
}

/// Loads a dataset, checking every array against the manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<SnapshotSet> {
    Ok(load_dataset_with_manifest(manifest_path)?.0)
}

pub fn load_dataset_with_manifest(manifest_path: &Path) -> Result<(SnapshotSet, Manifest)> {
    let m = Manifest::read(manifest_path)?;
    if m.d == 0 || m.d_field == 0 || m.d_mu == 0 || m.n_dof == 0 || m.n_mu == 0 {
        return Err(corrupt("manifest sizes must all be positive"));
    }
    let coords = read_array(&resolve(manifest_path, &m.coords_file), m.n_dof, m.d, "coordinate")?;
    let params = read_array(&resolve(manifest_path, &m.params_file), m.n_mu, m.d_mu, "parameter")?;
    let snaps = read_array(&resolve(manifest_path, &m.snapshots_file), m.n_mu, m.n_dof * m.d_field, "snapshot")?;
    let set = SnapshotSet::new(coords, params, snaps, m.d_field).map_err(|e| corrupt(e.to_string()))?;
    Ok((set, m))
}

/// Writes `set` next to `manifest_path` as `<stem>.coords.f64`,
/// `<stem>.params.f64` and `<stem>.snapshots.f64`.
pub fn save_dataset(set: &SnapshotSet, manifest_path: &Path, provenance: &Provenance) -> Result<PathBuf> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad manifest path {}", manifest_path.display())))?
        .to_string();
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let files = [
        format!("{}.coords.f64", stem),
        format!("{}.params.f64", stem),
        format!("{}.snapshots.f64", stem),
    ];
    write_f64s(&dir.join(&files[0]), set.points().as_slice())?;
    write_f64s(&dir.join(&files[1]), set.params().as_slice())?;
    write_f64s(&dir.join(&files[2]), set.fields().as_slice())?;
    let m = Manifest {
        name: stem,
        d: set.dim(),
        d_field: set.d_field(),
        d_mu: set.d_mu(),
        n_dof: set.n_dof(),
        n_mu: set.len(),
        coords_file: files[0].clone().into(),
        params_file: files[1].clone().into(),
        snapshots_file: files[2].clone().into(),
        provenance: provenance.clone(),
    };
    fs::write(manifest_path, m.to_text()).map_err(io_err(manifest_path))?;
    Ok(manifest_path.to_path_buf())
}

/// Generates a synthetic dataset and saves it with its provenance.
pub fn generate_and_save(spec: &SyntheticSpec, manifest_path: &Path) -> Result<SnapshotSet> {
    let set = generate_synthetic(spec)?;
    save_dataset(
        &set,
        manifest_path,
        &Provenance::Synthetic {
            kind: spec.kind.name().to_string(),
            seed: spec.seed,
        },
    )?;
    Ok(set)
}

const MATRIX_MAGIC: &[u8; 4] = b"QMAT";

/// Matrix file: `"QMAT"`, rows and cols as `u64`, then the entries
/// row-major, all little-endian.
pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(20 + m.as_slice().len() * 8);
    bytes.extend_from_slice(MATRIX_MAGIC);
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = || corrupt(format!("{}: not a matrix file", path.display()));
    if bytes.len() < 20 || &bytes[..4] != MATRIX_MAGIC {
        return Err(bad());
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(bad)?;
    if (bytes.len() - 20) as u64 != n {
        return Err(bad());
    }
    let data = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::new(rows as usize, cols as usize, data)?)
}

/// One decimal index per line.
pub fn write_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(indices.len() * 6);
    for i in indices {
        let _ = writeln!(s, "{}", i);
    }
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(n, l)| {
            l.parse()
                .map_err(|_| corrupt(format!("{}: line {} is not an index", path.display(), n + 1)))
        })
        .collect()
}

/// Shuffled partition of `0..n` into sorted train and test index lists.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {}", train_fraction)));
    }
    if n < 2 {
        return Err(Error::Config(format!("cannot split {} snapshot(s)", n)));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(set: &SnapshotSet, train_fraction: f64, seed: u64) -> Result<(SnapshotSet, SnapshotSet)> {
    let (train, test) = split_indices(set.len(), train_fraction, seed)?;
    Ok((set.subset(&train), set.subset(&test)))
}
