//! Model persistence: a TOML manifest plus little-endian binary sidecars.
//!
//! | file        | contents                                              |
//! |-------------|-------------------------------------------------------|
//! | `slots.f64` | training inputs, ℓ rows of `(t, d, c)`, row-major     |
//! | `A.f64`     | OKL latent coefficients, ℓ×p row-major                |
//! | `B.f64`     | OKL mixing coefficients, m×p row-major                |
//! | `omega.u64` | KRR observed slots: per task a count then the indices |
//! | `coef.f64`  | KRR coefficients of all tasks, concatenated           |

use std::fs;
use std::path::Path;

use faer::Mat;
use loadcast::kernels::{CalendarPoint, KernelExpr};
use loadcast::krr::{KrrModel, KrrTask};
use loadcast::okl::OklModel;
use loadcast::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiment::{FittedModel, SelectionEntry};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
const SLOTS_FILE: &str = "slots.f64";
const A_FILE: &str = "A.f64";
const B_FILE: &str = "B.f64";
const OMEGA_FILE: &str = "omega.u64";
const COEF_FILE: &str = "coef.f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train_days: usize,
    pub val_frac: f64,
    pub seed: u64,
    pub train_slots: usize,
    pub validation_slots: usize,
    pub test_slots: usize,
    /// Slots the stored model was fitted on.
    pub refit_on: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub max_iters: usize,
    pub tol: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// How the refit was initialized.
    pub init: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub lambda: f64,
    pub validation_nmae: Option<f64>,
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
}

impl From<&SelectionEntry> for SelectionRecord {
    fn from(e: &SelectionEntry) -> Self {
        SelectionRecord {
            lambda: e.lambda,
            validation_nmae: e.validation_nmae,
            sweeps: e.sweeps,
            converged: e.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub method: String,
    pub kernel: String,
    pub lambda: f64,
    pub rank: Option<usize>,
    pub seed: u64,
    pub group: String,
    pub num_slots: usize,
    pub parameter_count: usize,
    pub dataset_digest: String,
    pub task_ids: Vec<String>,
    pub objective_trace: Vec<f64>,
    pub selection_rule: String,
    pub split: SplitRecord,
    pub solver: Option<SolverRecord>,
    pub selection: Vec<SelectionRecord>,
}

#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub manifest: Manifest,
    pub model: FittedModel,
}

fn write_f64(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn write_u64(path: &Path, values: impl IntoIterator<Item = u64>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(u64::to_le_bytes).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_words(path: &Path) -> Result<Vec<[u8; 8]>> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!(
            "{} has {} bytes, not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| c.try_into().expect("chunk of 8"))
        .collect())
}

fn read_f64(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let words = read_words(path)?;
    if words.len() != expected {
        return Err(Error::Data(format!(
            "{} holds {} values, manifest implies {expected}",
            path.display(),
            words.len()
        )));
    }
    Ok(words.into_iter().map(f64::from_le_bytes).collect())
}

fn rows(m: &Mat<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

fn from_rows(values: &[f64], nrows: usize, ncols: usize) -> Mat<f64> {
    Mat::from_fn(nrows, ncols, |i, j| values[i * ncols + j])
}

impl ModelArtifact {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let slots = self.model.slots();
        write_f64(
            &dir.join(SLOTS_FILE),
            slots.iter().flat_map(|p| [p.t, p.d, f64::from(p.c)]),
        )?;
        match &self.model {
            FittedModel::Okl(m) => {
                write_f64(&dir.join(A_FILE), rows(&m.a))?;
                write_f64(&dir.join(B_FILE), rows(&m.b))?;
            }
            FittedModel::Krr(m) => {
                let omega = m
                    .tasks
                    .iter()
                    .flat_map(|t| std::iter::once(t.observed.len() as u64).chain(t.observed.iter().map(|&i| i as u64)));
                write_u64(&dir.join(OMEGA_FILE), omega)?;
                write_f64(&dir.join(COEF_FILE), m.tasks.iter().flat_map(|t| t.coef.iter().copied()))?;
            }
        }
        let text = toml::to_string(&self.manifest)
            .map_err(|e| Error::Internal(format!("manifest serialization failed: {e}")))?;
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                manifest.format_version
            )));
        }
        let kernel = KernelExpr::parse(&manifest.kernel)?;
        let l = manifest.num_slots;
        let m = manifest.task_ids.len();
        let raw = read_f64(&dir.join(SLOTS_FILE), 3 * l)?;
        let slots = raw
            .chunks_exact(3)
            .map(|r| {
                if r[2].fract() != 0.0 || !(0.0..=255.0).contains(&r[2]) {
                    return Err(Error::Data(format!("bad day type {} in {SLOTS_FILE}", r[2])));
                }
                CalendarPoint::new(r[0], r[1], r[2] as u8)
            })
            .collect::<Result<Vec<_>>>()?;

        let model = match manifest.method.as_str() {
            "okl" => {
                let p = manifest
                    .rank
                    .ok_or_else(|| Error::Data("okl manifest without rank".into()))?;
                let a = read_f64(&dir.join(A_FILE), l * p)?;
                let b = read_f64(&dir.join(B_FILE), m * p)?;
                FittedModel::Okl(OklModel {
                    kernel,
                    lam: manifest.lambda,
                    rank: p,
                    slots,
                    a: from_rows(&a, l, p),
                    b: from_rows(&b, m, p),
                    trace: manifest.objective_trace.clone(),
                    converged: manifest.solver.as_ref().is_some_and(|s| s.converged),
                })
            }
            "krr" => {
                let words = read_words(&dir.join(OMEGA_FILE))?;
                let omega: Vec<u64> = words.into_iter().map(u64::from_le_bytes).collect();
                let mut tasks = Vec::with_capacity(m);
                let mut pos = 0;
                for _ in 0..m {
                    let n = *omega
                        .get(pos)
                        .ok_or_else(|| Error::Data(format!("{OMEGA_FILE} is truncated")))? as usize;
                    let idx = omega
                        .get(pos + 1..pos + 1 + n)
                        .ok_or_else(|| Error::Data(format!("{OMEGA_FILE} is truncated")))?;
                    if idx.iter().any(|&i| i as usize >= l) || idx.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Data(format!("{OMEGA_FILE} has invalid slot indices")));
                    }
                    tasks.push(KrrTask {
                        observed: idx.iter().map(|&i| i as usize).collect(),
                        coef: Vec::new(),
                    });
                    pos += 1 + n;
                }
                if pos != omega.len() {
                    return Err(Error::Data(format!("{OMEGA_FILE} has trailing data")));
                }
                let total = tasks.iter().map(|t| t.observed.len()).sum();
                let coef = read_f64(&dir.join(COEF_FILE), total)?;
                let mut offset = 0;
                for t in &mut tasks {
                    t.coef = coef[offset..offset + t.observed.len()].to_vec();
                    offset += t.observed.len();
                }
                FittedModel::Krr(KrrModel {
                    kernel,
                    lam: manifest.lambda,
                    slots,
                    tasks,
                })
            }
            other => return Err(Error::Data(format!("unknown method `{other}` in manifest"))),
        };
        if model.parameter_count() != manifest.parameter_count {
            return Err(Error::Data(format!(
                "payload holds {} coefficients, manifest records {}",
                model.parameter_count(),
                manifest.parameter_count
            )));
        }
        Ok(ModelArtifact { manifest, model })
    }
}

/// SHA-256 over the processed dataset files, each prefixed by its name and length.
pub fn dataset_digest(dir: &Path) -> Result<String> {
    use loadcast::data::io::{METERS_FILE, OBSERVATIONS_FILE, SLOTS_FILE};
    let mut h = Sha256::new();
    for name in [SLOTS_FILE, METERS_FILE, OBSERVATIONS_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}
