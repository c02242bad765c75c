//! Model persistence and run manifests.
//!
//! Container layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SPAUCMDL"
//! version      u32
//! manifest     u64 byte length, then UTF-8 TOML text
//! kernel       u8 kind (0 gaussian, 1 linear), f64 sigma (0 for linear)
//! C            f64
//! basis count  u64
//! per basis    u64 training-row index, f64 coefficient,
//!              u64 nnz, nnz × (u32 feature index, f64 value)
//! scaler       u8 present flag; if 1: u64 feature count, count × (f64 lo, f64 hi)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{LabelMapping, Scaler, SparseVec};
use crate::error::{Error, Result};
use crate::greedy::{GreedyConfig, ModelState};
use crate::kernel::KernelSpec;

pub const MAGIC: &[u8; 8] = b"SPAUCMDL";
pub const FORMAT_VERSION: u32 = 1;

/// Where validation data for early stopping came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Validation {
    None,
    File { path: PathBuf, sha256: String },
    /// Stratified holdout carved from the training file with `seed`.
    Holdout { fraction: f64, seed: u64 },
}

/// Every setting that influences a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub format_version: u32,
    pub train_path: PathBuf,
    pub train_sha256: String,
    pub c: f64,
    /// Fit per-feature `[-1, 1]` scaling on the training portion.
    pub scale: bool,
    pub label_mapping: LabelMapping,
    pub kernel: KernelSpec,
    pub validation: Validation,
    pub greedy: GreedyConfig,
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ModelFormat(format!("manifest serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ModelFormat(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: ModelState,
    pub manifest: RunManifest,
    pub scaler: Option<Scaler>,
}

impl ModelFile {
    /// Prepares a raw input row the way training rows were prepared.
    pub fn prepare(&self, x: &SparseVec) -> SparseVec {
        match &self.scaler {
            Some(s) => s.transform(x),
            None => x.clone(),
        }
    }

    pub fn predict(&self, x: &SparseVec) -> f64 {
        match &self.scaler {
            Some(s) => self.model.predict(&s.transform(x)),
            None => self.model.predict(x),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = self.manifest.to_toml()?;
        let m = &self.model;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        match m.spec {
            KernelSpec::Gaussian { sigma } => {
                out.push(0);
                out.extend_from_slice(&sigma.to_le_bytes());
            }
            KernelSpec::Linear => {
                out.push(1);
                out.extend_from_slice(&0f64.to_le_bytes());
            }
        }
        out.extend_from_slice(&m.c.to_le_bytes());
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        for ((&q, &b), v) in m.basis.iter().zip(&m.beta).zip(&m.basis_vectors) {
            out.extend_from_slice(&(q as u64).to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
            out.extend_from_slice(&(v.nnz() as u64).to_le_bytes());
            for &(i, x) in v.entries() {
                out.extend_from_slice(&i.to_le_bytes());
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        match &self.scaler {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&(s.ranges().len() as u64).to_le_bytes());
                for &(lo, hi) in s.ranges() {
                    out.extend_from_slice(&lo.to_le_bytes());
                    out.extend_from_slice(&hi.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let len = r.len()?;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::ModelFormat("manifest is not UTF-8".into()))?;
        let manifest = RunManifest::from_toml(text)?;
        let kind = r.take(1)?[0];
        let sigma = r.f64()?;
        let spec = match kind {
            0 => KernelSpec::gaussian(sigma)?,
            1 => KernelSpec::Linear,
            k => return Err(Error::ModelFormat(format!("unknown kernel kind {k}"))),
        };
        let c = r.f64()?;
        let count = r.len()?;
        let mut model = ModelState::empty(spec, c);
        for _ in 0..count {
            model.basis.push(r.len()?);
            model.beta.push(r.f64()?);
            let nnz = r.len()?;
            let mut entries = Vec::with_capacity(nnz.min(bytes.len() / 12));
            for _ in 0..nnz {
                entries.push((r.u32()?, r.f64()?));
            }
            let v = SparseVec::from_sorted(entries).map_err(|e| Error::ModelFormat(format!("basis vector: {e}")))?;
            model.basis_vectors.push(v);
        }
        let scaler = match r.take(1)?[0] {
            0 => None,
            1 => {
                let n = r.len()?;
                let mut ranges = Vec::with_capacity(n.min(bytes.len() / 16));
                for _ in 0..n {
                    ranges.push((r.f64()?, r.f64()?));
                }
                Some(Scaler::from_ranges(ranges))
            }
            f => return Err(Error::ModelFormat(format!("bad scaler flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(ModelFile { model, manifest, scaler })
    }

    /// Writes through a sibling temporary file so a failed write leaves no partial model.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::ModelFormat(format!("length {v} out of range")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
