//! Experiment configuration: TOML file, profile defaults and flag overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use condor_core::condor::StructureParams;
use condor_core::metrics::{SweepAxis, SweepConfig};
use condor_core::pricer::{strike_lattice, DEFAULT_N_INNER};
use condor_core::rng::{derive_seed, tags};
use condor_core::theoremlab::{BoundedMartingaleSpec, TheoremConfig};
use condor_core::{HurstParam, ModelParams, SimGrid};

pub const FORMAT_VERSION: u32 = 1;
pub const OUTPUT_ENV: &str = "CONDOR_OUTPUT_DIR";

/// Input error reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    /// `(n_paths, n_inner, repeats)`.
    pub fn scale(self) -> (usize, usize, usize) {
        match self {
            Profile::Desk => (2000, DEFAULT_N_INNER, 5),
            Profile::Paper => (10_000, DEFAULT_N_INNER, 30),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format_version: Option<u32>,
    pub profile: Option<Profile>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<ModelSection>,
    pub grid: Option<GridSection>,
    pub pricing: Option<PricingSection>,
    pub sweep: Option<SweepSection>,
    pub theorem: Option<TheoremSection>,
    pub replay: Option<ReplaySection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub h: f64,
    pub kappa: Option<f64>,
    pub theta_mean: Option<f64>,
    pub nu: Option<f64>,
    pub rho: Option<f64>,
    pub v0: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSection {
    pub strikes: Option<Vec<f64>>,
    pub n_inner: Option<usize>,
    pub seed: Option<u64>,
    pub portfolios: Option<Vec<StructureParams>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<SweepAxis>,
    pub values: Option<Vec<f64>>,
    pub fixed: Option<StructureParams>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSection {
    pub k_low: Option<f64>,
    pub k_high: Option<f64>,
    pub shrink: Option<f64>,
    pub n_steps: Option<usize>,
    pub n_paths: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub wing: Option<f64>,
    pub n_inner: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub chains_dir: Option<PathBuf>,
    pub expiry: Option<String>,
    pub portfolios: Option<Vec<StructureParams>>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub n_paths: Option<usize>,
    pub n_inner: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub model: ModelParams,
    pub grid: SimGrid,
    pub strikes: Vec<f64>,
    pub n_inner: usize,
    pub pricing_seed: u64,
    pub portfolios: Vec<StructureParams>,
    pub repeats: usize,
    pub sweep: Option<SweepSection>,
    pub theorem: TheoremSection,
    pub replay: ReplaySection,
    pub output_dir: PathBuf,
}

pub fn read_file_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    parse_file_config(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn parse_file_config(text: &str) -> anyhow::Result<FileConfig> {
    let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
    if let Some(model) = raw.get("model").and_then(|m| m.as_table()) {
        if !model.contains_key("h") {
            return Err(config_err("missing required field `model.h`"));
        }
    }
    let cfg: FileConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    if let Some(v) = cfg.format_version {
        if v != FORMAT_VERSION {
            return Err(config_err(format!(
                "format_version {v} is not supported (expected {FORMAT_VERSION})"
            )));
        }
    }
    Ok(cfg)
}

fn standard_portfolios() -> Vec<StructureParams> {
    vec![
        StructureParams { x: 0.04, xhat: 0.04, xbar: 0.0 },
        StructureParams { x: 0.04, xhat: 0.04, xbar: 0.10 },
        StructureParams { x: 0.04, xhat: 0.04, xbar: -0.10 },
    ]
}

impl ExperimentConfig {
    /// Merges defaults, the profile, the file and the flags, in that order.
    pub fn resolve(file: FileConfig, flags: &Overrides, env_output: Option<PathBuf>) -> anyhow::Result<Self> {
        let profile = flags.profile.or(file.profile).unwrap_or(Profile::Desk);
        let (p_paths, p_inner, p_repeats) = profile.scale();

        let defaults = ModelParams::default();
        let model = match &file.model {
            None => defaults,
            Some(m) => ModelParams {
                h: HurstParam::new(m.h).map_err(|e| config_err(format!("model.h: {e}")))?,
                kappa: m.kappa.unwrap_or(defaults.kappa),
                theta_mean: m.theta_mean.unwrap_or(defaults.theta_mean),
                nu: m.nu.unwrap_or(defaults.nu),
                rho: m.rho.unwrap_or(defaults.rho),
                v0: m.v0.unwrap_or(defaults.v0),
                mu: m.mu.unwrap_or(defaults.mu),
            },
        };
        model.validate().map_err(|e| config_err(format!("model: {e}")))?;

        let g = file.grid.unwrap_or_default();
        let base = SimGrid::default();
        let grid = SimGrid {
            n_paths: flags.n_paths.or(g.n_paths).unwrap_or(p_paths),
            n_steps: g.n_steps.unwrap_or(base.n_steps),
            dt: g.dt.unwrap_or(base.dt),
            master_seed: flags.seed.or(g.seed).unwrap_or(base.master_seed),
        };
        grid.validate().map_err(|e| config_err(format!("grid: {e}")))?;

        let pricing = file.pricing.unwrap_or_default();
        let strikes = pricing.strikes.unwrap_or_else(|| strike_lattice(0.8, 1.2, 0.02));
        if strikes.is_empty() || strikes.iter().any(|k| !(*k > 0.0)) || strikes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("pricing.strikes must be positive and strictly increasing"));
        }
        for k in &strikes {
            if *k < 0.8 - 1e-9 || *k > 1.2 + 1e-9 {
                eprintln!("warning: strike {k} lies outside the [0.8, 1.2] lattice");
            }
        }
        let n_inner = flags.n_inner.or(pricing.n_inner).unwrap_or(p_inner);
        if n_inner == 0 {
            return Err(config_err("n_inner must be positive"));
        }
        let pricing_seed = pricing
            .seed
            .unwrap_or_else(|| derive_seed(grid.master_seed, &[tags::PRICING]));

        let repeats = flags
            .repeats
            .or(file.sweep.as_ref().and_then(|s| s.repeats))
            .unwrap_or(p_repeats);
        if repeats == 0 {
            return Err(config_err("repeats must be positive"));
        }
        let output_dir = flags
            .output_dir
            .clone()
            .or(env_output)
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("condor-output"));

        Ok(Self {
            format_version: file.format_version.unwrap_or(FORMAT_VERSION),
            model,
            grid,
            strikes,
            n_inner,
            pricing_seed,
            portfolios: pricing.portfolios.unwrap_or_else(standard_portfolios),
            repeats,
            sweep: file.sweep,
            theorem: file.theorem.unwrap_or_default(),
            replay: file.replay.unwrap_or_default(),
            output_dir,
        })
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_dir.join("dataset")
    }

    /// Sweep for `axis`: the file section when it names this axis, else the
    /// standard grid for the axis.
    pub fn sweep_config(&self, axis: SweepAxis) -> anyhow::Result<SweepConfig> {
        let mut c = SweepConfig::standard(axis, self.repeats);
        if let Some(s) = &self.sweep {
            if s.axis.is_none() || s.axis == Some(axis) {
                if let Some(v) = &s.values {
                    c.values = v.clone();
                }
                if let Some(f) = s.fixed {
                    c.fixed = f;
                }
            }
        }
        c.validate().map_err(|e| config_err(format!("sweep: {e}")))?;
        Ok(c)
    }

    /// One theorem configuration per seed.
    pub fn theorem_configs(&self) -> anyhow::Result<Vec<TheoremConfig>> {
        let t = &self.theorem;
        let base = BoundedMartingaleSpec::default();
        let seeds = t.seeds.clone().unwrap_or_else(|| vec![self.grid.master_seed]);
        if seeds.is_empty() {
            return Err(config_err("theorem.seeds must not be empty"));
        }
        let configs: Vec<TheoremConfig> = seeds
            .into_iter()
            .map(|seed| TheoremConfig {
                martingale: BoundedMartingaleSpec {
                    s0: 1.0,
                    k_low: t.k_low.unwrap_or(base.k_low),
                    k_high: t.k_high.unwrap_or(base.k_high),
                    shrink: t.shrink.unwrap_or(base.shrink),
                    n_steps: t.n_steps.unwrap_or(base.n_steps),
                    n_paths: t.n_paths.unwrap_or(base.n_paths),
                    seed,
                },
                wing: t.wing.unwrap_or(0.04),
                model: self.model,
                dt: self.grid.dt,
                n_inner: t.n_inner.unwrap_or(self.n_inner),
            })
            .collect();
        for c in &configs {
            c.martingale
                .validate()
                .map_err(|e| config_err(format!("theorem: {e}")))?;
        }
        Ok(configs)
    }

    pub fn replay_portfolios(&self) -> Vec<StructureParams> {
        self.replay.portfolios.clone().unwrap_or_else(standard_portfolios)
    }
}
