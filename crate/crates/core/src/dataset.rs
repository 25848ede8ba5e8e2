//! On-disk dataset directories: a `manifest.toml` plus one CSV per matrix.
//!
//! Matrix files have the header `path_id,t0,t1,...` and one row per path.
//! Floats are written in shortest round-trip form, so save/load is lossless.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::condor::{CondorSpec, ValueTensor};
use crate::error::{Error, Result};
use crate::fgn::HurstParam;
use crate::matrix::Matrix;
use crate::pricer::{OptionKind, PricingGrid};
use crate::roughheston::{ModelParams, PathBundle, SimGrid};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";

const SPOT_FILE: &str = "s.csv";
const VARIANCE_FILE: &str = "v.csv";
const INCREMENT_FILE: &str = "dw2.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub s0: f64,
    pub model: ManifestModel,
    pub grid: ManifestGrid,
    pub matrices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<ManifestPricing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub portfolios: Vec<CondorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub h: f64,
    pub kappa: f64,
    pub theta_mean: f64,
    pub nu: f64,
    pub rho: f64,
    pub v0: f64,
    pub mu: f64,
}

/// Grid with the seed as a decimal string (TOML integers are signed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestGrid {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub master_seed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPricing {
    pub strikes: Vec<f64>,
    pub n_inner: usize,
    pub seed: String,
    pub files: Vec<String>,
}

impl From<&ModelParams> for ManifestModel {
    fn from(p: &ModelParams) -> Self {
        Self {
            h: p.h.value(),
            kappa: p.kappa,
            theta_mean: p.theta_mean,
            nu: p.nu,
            rho: p.rho,
            v0: p.v0,
            mu: p.mu,
        }
    }
}

impl ManifestModel {
    fn to_params(self) -> Result<ModelParams> {
        let p = ModelParams {
            h: HurstParam::new(self.h)?,
            kappa: self.kappa,
            theta_mean: self.theta_mean,
            nu: self.nu,
            rho: self.rho,
            v0: self.v0,
            mu: self.mu,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Manifest {
    pub fn for_bundle(bundle: &PathBundle) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            s0: bundle.s0,
            model: (&bundle.params).into(),
            grid: ManifestGrid {
                n_paths: bundle.grid.n_paths,
                n_steps: bundle.grid.n_steps,
                dt: bundle.grid.dt,
                master_seed: bundle.grid.master_seed.to_string(),
            },
            matrices: vec![SPOT_FILE.into(), VARIANCE_FILE.into(), INCREMENT_FILE.into()],
            pricing: None,
            portfolios: Vec::new(),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        self.model.to_params()
    }

    pub fn sim_grid(&self) -> Result<SimGrid> {
        let grid = SimGrid {
            n_paths: self.grid.n_paths,
            n_steps: self.grid.n_steps,
            dt: self.grid.dt,
            master_seed: parse_seed(&self.grid.master_seed)?,
        };
        grid.validate()?;
        Ok(grid)
    }
}

fn parse_seed(s: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::Dataset {
        path: PathBuf::from(MANIFEST),
        message: format!("seed `{s}` is not an unsigned integer"),
    })
}

fn dataset_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let body = toml::to_string(manifest).map_err(|e| dataset_err(&dir.join(MANIFEST), e.to_string()))?;
    fs::write(dir.join(MANIFEST), body)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| dataset_err(&path, e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(dataset_err(
            &path,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    Ok(manifest)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["path_id".to_string()];
    header.extend((0..m.cols()).map(|t| format!("t{t}")));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(m.cols() + 1);
    for (p, row) in m.iter_rows().enumerate() {
        record.clear();
        record.push(p.to_string());
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        if rec.len() != cols + 1 {
            return Err(Error::SchemaViolation {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", cols + 1, rec.len()),
            });
        }
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::SchemaViolation {
                path: path.to_path_buf(),
                line,
                message: format!("`{field}` is not a number"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

/// Writes the bundle and its manifest into `dir`.
pub fn save_bundle(dir: &Path, bundle: &PathBundle) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join(SPOT_FILE), &bundle.s)?;
    write_matrix(&dir.join(VARIANCE_FILE), &bundle.v)?;
    write_matrix(&dir.join(INCREMENT_FILE), &bundle.dw2)?;
    let manifest = Manifest::for_bundle(bundle);
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn load_bundle(dir: &Path) -> Result<PathBundle> {
    let manifest = read_manifest(dir)?;
    let params = manifest.model_params()?;
    let grid = manifest.sim_grid()?;
    let s = read_matrix(&dir.join(SPOT_FILE))?;
    let v = read_matrix(&dir.join(VARIANCE_FILE))?;
    let dw2 = read_matrix(&dir.join(INCREMENT_FILE))?;
    let n = grid.n_steps;
    for (name, m, cols) in [(SPOT_FILE, &s, n + 1), (VARIANCE_FILE, &v, n + 1), (INCREMENT_FILE, &dw2, n)] {
        if m.rows() != grid.n_paths || m.cols() != cols {
            return Err(dataset_err(
                &dir.join(name),
                format!("shape {}x{} does not match the manifest", m.rows(), m.cols()),
            ));
        }
    }
    Ok(PathBundle {
        s,
        v,
        dw2,
        grid,
        params,
        s0: manifest.s0,
    })
}

fn leg_file(prefix: &str, idx: usize, kind: OptionKind) -> String {
    format!("{prefix}_k{idx:03}_{}.csv", kind.as_str())
}

const KINDS: [OptionKind; 2] = [OptionKind::Call, OptionKind::Put];

/// Adds the pricing grid to a dataset directory holding its bundle.
pub fn save_pricing(dir: &Path, grid: &PricingGrid) -> Result<()> {
    let mut manifest = read_manifest(dir)?;
    let mut files = Vec::new();
    for idx in 0..grid.strikes.len() {
        for kind in KINDS {
            let price = leg_file("price", idx, kind);
            let se = leg_file("se", idx, kind);
            write_matrix(&dir.join(&price), &grid.leg_matrix(idx, kind))?;
            write_matrix(&dir.join(&se), &grid.std_error_matrix(idx, kind))?;
            files.push(price);
            files.push(se);
        }
    }
    manifest.pricing = Some(ManifestPricing {
        strikes: grid.strikes.clone(),
        n_inner: grid.n_inner,
        seed: grid.seed.to_string(),
        files,
    });
    write_manifest(dir, &manifest)
}

pub fn load_pricing(dir: &Path) -> Result<PricingGrid> {
    let manifest = read_manifest(dir)?;
    let pricing = manifest
        .pricing
        .as_ref()
        .ok_or_else(|| dataset_err(&dir.join(MANIFEST), "no pricing section"))?;
    let (n_paths, n_steps) = (manifest.grid.n_paths, manifest.grid.n_steps);
    let n_strikes = pricing.strikes.len();
    let cell = n_strikes * 2;
    let total = n_paths * (n_steps + 1) * cell;
    let mut values = vec![0.0; total];
    let mut errors = vec![0.0; total];
    for idx in 0..n_strikes {
        for (slot, kind) in KINDS.into_iter().enumerate() {
            for (prefix, out) in [("price", &mut values), ("se", &mut errors)] {
                let path = dir.join(leg_file(prefix, idx, kind));
                let m = read_matrix(&path)?;
                if m.rows() != n_paths || m.cols() != n_steps + 1 {
                    return Err(dataset_err(&path, "shape does not match the manifest"));
                }
                for p in 0..n_paths {
                    for t in 0..=n_steps {
                        out[(p * (n_steps + 1) + t) * cell + idx * 2 + slot] = m.get(p, t);
                    }
                }
            }
        }
    }
    PricingGrid::from_parts(
        pricing.strikes.clone(),
        n_paths,
        n_steps,
        pricing.n_inner,
        parse_seed(&pricing.seed)?,
        values,
        errors,
    )
}

fn value_file(f: usize) -> String {
    format!("values_f{f}.csv")
}

/// Adds portfolio value processes to a dataset directory.
pub fn save_tensor(dir: &Path, tensor: &ValueTensor) -> Result<()> {
    let mut manifest = read_manifest(dir)?;
    for f in 1..tensor.n_slots() {
        write_matrix(&dir.join(value_file(f)), &tensor.slot_matrix(f))?;
    }
    manifest.portfolios = tensor.specs.clone();
    write_manifest(dir, &manifest)
}

pub fn load_tensor(dir: &Path) -> Result<ValueTensor> {
    let manifest = read_manifest(dir)?;
    let s = read_matrix(&dir.join(SPOT_FILE))?;
    let values = (1..=manifest.portfolios.len())
        .map(|f| read_matrix(&dir.join(value_file(f))))
        .collect::<Result<Vec<_>>>()?;
    ValueTensor::from_slots(&s, &values, manifest.portfolios)
}
