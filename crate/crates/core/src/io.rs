//! File formats: model JSON, dataset CSV with a JSON sidecar, coefficient
//! CSV. Every writer goes through [`write_atomic`].

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ARModel, Dataset, NoiseFamily, NoiseSpec};

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serde adapter storing a list of matrices as nested row arrays.
pub mod serde_blocks {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nr = rows.len();
        let nc = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != nc) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(blocks: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Vec<f64>>> = blocks.iter().map(to_rows).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let raw = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        raw.iter()
            .map(|b| from_rows(b).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// JSON form of an [`ARModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub p: usize,
    pub d: usize,
    pub sigma: f64,
    #[serde(with = "serde_blocks")]
    pub blocks: Vec<DMatrix<f64>>,
}

impl From<&ARModel> for ModelFile {
    fn from(m: &ARModel) -> Self {
        ModelFile { p: m.p, d: m.d, sigma: m.sigma, blocks: m.blocks.clone() }
    }
}

impl TryFrom<ModelFile> for ARModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let m = ARModel::new(f.blocks, f.sigma)?;
        if m.p != f.p || m.d != f.d {
            return Err(Error::dims(format!(
                "declared p = {}, d = {} but blocks give p = {}, d = {}",
                f.p, f.d, m.p, m.d
            )));
        }
        Ok(m)
    }
}

pub fn model_to_json(m: &ARModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from(m))?)
}

pub fn model_from_json(s: &str) -> Result<ARModel> {
    serde_json::from_str::<ModelFile>(s)?.try_into()
}

pub fn read_model(path: &Path) -> Result<ARModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_model(m: &ARModel, path: &Path) -> Result<()> {
    write_atomic(path, model_to_json(m)?.as_bytes())
}

/// Dataset sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "N")]
    pub num_seqs: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub d: usize,
    pub seed: Option<u64>,
    pub noise_family: Option<NoiseFamily>,
    pub sigma: Option<f64>,
}

impl From<&Dataset> for DatasetMeta {
    fn from(ds: &Dataset) -> Self {
        DatasetMeta {
            num_seqs: ds.num_seqs,
            horizon: ds.horizon,
            d: ds.dim,
            seed: ds.seed,
            noise_family: ds.noise.map(|n| n.family),
            sigma: ds.noise.map(|n| n.sigma),
        }
    }
}

/// Sidecar path for a dataset CSV: `data.csv` → `data.csv.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// CSV rows `n,t,i,value` with one-based indices.
pub fn dataset_to_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "t", "i", "value"])?;
    for n in 0..ds.num_seqs {
        for t in 1..=ds.horizon {
            for (i, v) in ds.state(n, t).iter().enumerate() {
                w.write_record([
                    (n + 1).to_string(),
                    t.to_string(),
                    (i + 1).to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn dataset_from_csv(bytes: &[u8], meta: &DatasetMeta) -> Result<Dataset> {
    let (nn, tt, d) = (meta.num_seqs, meta.horizon, meta.d);
    let mut data = vec![f64::NAN; nn * tt * d];
    let mut r = csv::Reader::from_reader(bytes);
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("expected 4 columns, got {}", rec.len())));
        }
        let idx = |k: usize| -> Result<usize> {
            rec[k].trim().parse::<usize>().map_err(|e| Error::Parse(format!("{}: {e}", &rec[k])))
        };
        let (n, t, i) = (idx(0)?, idx(1)?, idx(2)?);
        if n == 0 || n > nn || t == 0 || t > tt || i == 0 || i > d {
            return Err(Error::Parse(format!("index ({n}, {t}, {i}) out of range")));
        }
        let v: f64 = rec[3].trim().parse().map_err(|e| Error::Parse(format!("{}: {e}", &rec[3])))?;
        data[((n - 1) * tt + (t - 1)) * d + (i - 1)] = v;
    }
    if data.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("dataset CSV is missing entries".into()));
    }
    let mut ds = Dataset::new(nn, tt, d, data)?;
    ds.seed = meta.seed;
    ds.noise = match (meta.noise_family, meta.sigma) {
        (Some(f), Some(s)) => Some(NoiseSpec::new(f, s)?),
        _ => None,
    };
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, csv_path: &Path) -> Result<()> {
    write_atomic(csv_path, &dataset_to_csv(ds)?)?;
    let meta = serde_json::to_string_pretty(&DatasetMeta::from(ds))?;
    write_atomic(&sidecar_path(csv_path), meta.as_bytes())
}

pub fn read_dataset(csv_path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv_path))?)?;
    dataset_from_csv(&std::fs::read(csv_path)?, &meta)
}

/// Coefficient CSV rows `k,i,j,value` with one-based indices.
pub fn blocks_to_csv(blocks: &[DMatrix<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "i", "j", "value"])?;
    for (k, b) in blocks.iter().enumerate() {
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                w.write_record([
                    (k + 1).to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    b[(i, j)].to_string(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn blocks_from_csv(bytes: &[u8]) -> Result<Vec<DMatrix<f64>>> {
    let mut entries = Vec::new();
    let (mut p, mut d) = (0, 0);
    let mut r = csv::Reader::from_reader(bytes);
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("expected 4 columns, got {}", rec.len())));
        }
        let idx = |k: usize| -> Result<usize> {
            match rec[k].trim().parse::<usize>() {
                Ok(0) => Err(Error::Parse("indices are one-based".into())),
                Ok(v) => Ok(v),
                Err(e) => Err(Error::Parse(format!("{}: {e}", &rec[k]))),
            }
        };
        let (k, i, j) = (idx(0)?, idx(1)?, idx(2)?);
        let v: f64 = rec[3].trim().parse().map_err(|e| Error::Parse(format!("{}: {e}", &rec[3])))?;
        p = p.max(k);
        d = d.max(i).max(j);
        entries.push((k - 1, i - 1, j - 1, v));
    }
    if entries.len() != p * d * d {
        return Err(Error::Parse(format!("expected {} entries, got {}", p * d * d, entries.len())));
    }
    let mut blocks = vec![DMatrix::zeros(d, d); p];
    for (k, i, j, v) in entries {
        blocks[k][(i, j)] = v;
    }
    Ok(blocks)
}

pub fn write_blocks(blocks: &[DMatrix<f64>], path: &Path) -> Result<()> {
    write_atomic(path, &blocks_to_csv(blocks)?)
}

pub fn read_blocks(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    blocks_from_csv(&std::fs::read(path)?)
}
