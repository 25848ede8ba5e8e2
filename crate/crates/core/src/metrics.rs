//! Regime partition, profit/success/risk metrics, empirical stopping times and
//! parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::condor::{from_params, from_strikes, value_process, CondorSpec, StructureParams};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::pricer::{build_pricing_grid, round_strike};
use crate::rng::{derive_seed, tags};
use crate::roughheston::{simulate, ModelParams, SimGrid};
use crate::stats::quantile_sorted;

pub const BEAR_THRESHOLD: f64 = 0.9;
pub const BULL_THRESHOLD: f64 = 1.1;

/// Spacing of the relative strike lattice.
pub const LATTICE_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Bullish,
    Sideways,
    Bearish,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Bullish, Regime::Sideways, Regime::Bearish];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Bullish => "bullish",
            Regime::Sideways => "sideways",
            Regime::Bearish => "bearish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePartition {
    pub labels: Vec<Regime>,
    pub low: f64,
    pub high: f64,
}

impl RegimePartition {
    pub fn mask(&self, regime: Regime) -> Vec<bool> {
        self.labels.iter().map(|&l| l == regime).collect()
    }

    pub fn count(&self, regime: Regime) -> usize {
        self.labels.iter().filter(|&&l| l == regime).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Labels each path by `S_T / S_0`; ratios of exactly 0.9 or 1.1 are sideways.
pub fn partition(s0: f64, s_t: &[f64]) -> Result<RegimePartition> {
    if !(s0 > 0.0) {
        return Err(Error::NonpositiveSpot(s0));
    }
    let labels = s_t
        .iter()
        .map(|&s| {
            let ratio = s / s0;
            if ratio > BULL_THRESHOLD {
                Regime::Bullish
            } else if ratio < BEAR_THRESHOLD {
                Regime::Bearish
            } else {
                Regime::Sideways
            }
        })
        .collect();
    Ok(RegimePartition {
        labels,
        low: BEAR_THRESHOLD,
        high: BULL_THRESHOLD,
    })
}

/// Normalized profit `φ = (credit − P) / credit`.
pub fn phi_process(values: &Matrix, credit: f64) -> Result<Matrix> {
    if !(credit > 0.0) {
        return Err(Error::NonpositiveCredit(credit));
    }
    let data = values.as_slice().iter().map(|v| (credit - v) / credit).collect();
    Ok(Matrix::from_vec(values.rows(), values.cols(), data))
}

fn check_subset(phi: &Matrix, subset: &[bool]) -> Result<usize> {
    if subset.len() != phi.rows() {
        return Err(invalid("subset", "mask length must equal the number of paths"));
    }
    match subset.iter().filter(|&&m| m).count() {
        0 => Err(Error::EmptySubset),
        n => Ok(n),
    }
}

/// Mean of `φ` over the masked paths at every step.
pub fn mean_curve(phi: &Matrix, subset: &[bool]) -> Result<Vec<f64>> {
    let n = check_subset(phi, subset)?;
    let mut acc = vec![0.0; phi.cols()];
    for (row, _) in phi.iter_rows().zip(subset).filter(|(_, &m)| m) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}

/// Last index of the maximum.
pub fn argmax_last(curve: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (t, &m) in curve.iter().enumerate() {
        if best.is_none_or(|(_, b)| m >= b) {
            best = Some((t, m));
        }
    }
    best
}

/// Step maximizing the subset mean of `φ`, ties going to the later step.
pub fn optimal_tau(phi: &Matrix, subset: &[bool]) -> Result<(usize, f64)> {
    let curve = mean_curve(phi, subset)?;
    argmax_last(&curve).ok_or(Error::EmptySubset)
}

/// Fractions of the subset with positive `φ` at `T` and at `tau`.
pub fn success_rates(phi: &Matrix, tau: usize, subset: &[bool]) -> Result<(f64, f64)> {
    let n = check_subset(phi, subset)?;
    check_step(phi, tau)?;
    let last = phi.cols() - 1;
    let (mut at_t, mut at_tau) = (0usize, 0usize);
    for (row, _) in phi.iter_rows().zip(subset).filter(|(_, &m)| m) {
        at_t += usize::from(row[last] > 0.0);
        at_tau += usize::from(row[tau] > 0.0);
    }
    Ok((at_t as f64 / n as f64, at_tau as f64 / n as f64))
}

fn check_step(phi: &Matrix, step: usize) -> Result<()> {
    if step >= phi.cols() {
        return Err(Error::IndexOutOfRange {
            what: "tau",
            index: step,
            limit: phi.cols(),
        });
    }
    Ok(())
}

/// Subset mean of `φ` at one step, `None` for an empty subset.
pub fn conditional_mean(phi: &Matrix, subset: &[bool], step: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (row, _) in phi.iter_rows().zip(subset).filter(|(_, &m)| m) {
        sum += row[step];
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskMetrics {
    pub eta_t_r: Option<f64>,
    pub eta_tau_r: Option<f64>,
    pub eta_t_l: Option<f64>,
    pub eta_tau_l: Option<f64>,
}

/// Bullish and bearish conditional means of `φ` at `T` and `tau`.
pub fn risk_metrics(phi: &Matrix, tau: usize, part: &RegimePartition) -> Result<RiskMetrics> {
    if part.len() != phi.rows() {
        return Err(invalid("partition", "one label per path is required"));
    }
    check_step(phi, tau)?;
    let last = phi.cols() - 1;
    let r = part.mask(Regime::Bullish);
    let l = part.mask(Regime::Bearish);
    Ok(RiskMetrics {
        eta_t_r: conditional_mean(phi, &r, last),
        eta_tau_r: conditional_mean(phi, &r, tau),
        eta_t_l: conditional_mean(phi, &l, last),
        eta_tau_l: conditional_mean(phi, &l, tau),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub control: StructureParams,
    pub phi_t: f64,
    pub phi_tau: f64,
    pub tau: usize,
    pub theta_t: f64,
    pub theta_tau: f64,
    pub phi_t_m: Option<f64>,
    pub phi_tau_m: Option<f64>,
    pub eta_t_r: Option<f64>,
    pub eta_tau_r: Option<f64>,
    pub eta_t_l: Option<f64>,
    pub eta_tau_l: Option<f64>,
}

/// All row metrics for one portfolio; `tau` comes from the full dataset.
pub fn evaluate(control: StructureParams, phi: &Matrix, part: &RegimePartition) -> Result<MetricsRow> {
    let all = vec![true; phi.rows()];
    let curve = mean_curve(phi, &all)?;
    let (tau, phi_tau) = argmax_last(&curve).ok_or(Error::EmptySubset)?;
    let last = phi.cols() - 1;
    let (theta_t, theta_tau) = success_rates(phi, tau, &all)?;
    let risk = risk_metrics(phi, tau, part)?;
    let m = part.mask(Regime::Sideways);
    Ok(MetricsRow {
        control,
        phi_t: curve[last],
        phi_tau,
        tau,
        theta_t,
        theta_tau,
        phi_t_m: conditional_mean(phi, &m, last),
        phi_tau_m: conditional_mean(phi, &m, tau),
        eta_t_r: risk.eta_t_r,
        eta_tau_r: risk.eta_tau_r,
        eta_t_l: risk.eta_t_l,
        eta_tau_l: risk.eta_tau_l,
    })
}

/// Path subset for figure data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Bullish,
    Sideways,
    Bearish,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::All, Subset::Bullish, Subset::Sideways, Subset::Bearish];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Bullish => "bullish",
            Subset::Sideways => "sideways",
            Subset::Bearish => "bearish",
        }
    }

    fn mask(self, part: &RegimePartition) -> Vec<bool> {
        match self {
            Subset::All => vec![true; part.len()],
            Subset::Bullish => part.mask(Regime::Bullish),
            Subset::Sideways => part.mask(Regime::Sideways),
            Subset::Bearish => part.mask(Regime::Bearish),
        }
    }
}

/// Per-step mean and deciles (10%..90%) of `φ` over one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub subset: Subset,
    pub n_paths: usize,
    pub mean: Vec<f64>,
    pub deciles: Vec<[f64; 9]>,
}

pub fn bands(phi: &Matrix, part: &RegimePartition) -> Vec<Band> {
    Subset::ALL
        .iter()
        .filter_map(|&subset| {
            let mask = subset.mask(part);
            let n = mask.iter().filter(|&&m| m).count();
            if n == 0 {
                return None;
            }
            let mut mean = Vec::with_capacity(phi.cols());
            let mut deciles = Vec::with_capacity(phi.cols());
            let mut col = Vec::with_capacity(n);
            for t in 0..phi.cols() {
                col.clear();
                col.extend(phi.iter_rows().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| r[t]));
                mean.push(col.iter().sum::<f64>() / n as f64);
                col.sort_by(f64::total_cmp);
                deciles.push(std::array::from_fn(|i| quantile_sorted(&col, (i + 1) as f64 / 10.0)));
            }
            Some(Band {
                subset,
                n_paths: n,
                mean,
                deciles,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Moneyness,
    Span,
    Asymmetry,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Moneyness => "moneyness",
            SweepAxis::Span => "span",
            SweepAxis::Asymmetry => "asymmetry",
        }
    }

    /// Column label of the swept parameter.
    pub fn symbol(self) -> &'static str {
        match self {
            SweepAxis::Moneyness => "x",
            SweepAxis::Span => "xhat",
            SweepAxis::Asymmetry => "xbar",
        }
    }

    pub fn value_of(self, p: &StructureParams) -> f64 {
        match self {
            SweepAxis::Moneyness => p.x,
            SweepAxis::Span => p.xhat,
            SweepAxis::Asymmetry => p.xbar,
        }
    }

    fn apply(self, fixed: StructureParams, v: f64) -> StructureParams {
        let mut p = fixed;
        match self {
            SweepAxis::Moneyness => p.x = v,
            SweepAxis::Span => p.xhat = v,
            SweepAxis::Asymmetry => p.xbar = v,
        }
        p
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "moneyness" => Ok(SweepAxis::Moneyness),
            "span" => Ok(SweepAxis::Span),
            "asymmetry" => Ok(SweepAxis::Asymmetry),
            other => Err(format!("unknown sweep axis `{other}` (moneyness, span, asymmetry)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Parameters held constant; the swept component is overwritten.
    pub fixed: StructureParams,
    pub repeats: usize,
}

impl SweepConfig {
    /// Desk defaults for each axis.
    pub fn standard(axis: SweepAxis, repeats: usize) -> Self {
        let (values, fixed) = match axis {
            SweepAxis::Moneyness => (
                vec![0.0, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18],
                StructureParams { x: 0.0, xhat: 0.04, xbar: 0.0 },
            ),
            SweepAxis::Span => (
                vec![0.02, 0.04, 0.06, 0.08, 0.10, 0.12, 0.14],
                StructureParams { x: 0.02, xhat: 0.02, xbar: 0.0 },
            ),
            SweepAxis::Asymmetry => (
                vec![-0.10, -0.08, -0.06, 0.0, 0.06, 0.08, 0.10],
                StructureParams { x: 0.04, xhat: 0.04, xbar: 0.0 },
            ),
        };
        Self {
            axis,
            values,
            fixed,
            repeats,
        }
    }

    /// Structure parameters of each sweep point, sorted by the swept value.
    pub fn points(&self) -> Vec<StructureParams> {
        let mut values = self.values.clone();
        values.sort_by(f64::total_cmp);
        values.into_iter().map(|v| self.axis.apply(self.fixed, v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid("sweep.values", "at least one value is required"));
        }
        if self.repeats == 0 {
            return Err(invalid("sweep.repeats", "must be positive"));
        }
        for p in self.points() {
            for (name, v) in [("x", p.x), ("xhat", p.xhat), ("xbar", p.xbar)] {
                if !on_lattice(v) {
                    return Err(invalid(
                        "sweep",
                        format!("{name}={v} is not a multiple of {LATTICE_STEP}"),
                    ));
                }
            }
            from_params(p.x, p.xhat, p.xbar, 1.0)?;
        }
        Ok(())
    }
}

fn on_lattice(v: f64) -> bool {
    let q = v / LATTICE_STEP;
    (q - q.round()).abs() < 1e-9
}

/// One sweep point: its portfolio, table row and figure bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strikes: [f64; 4],
    pub row: MetricsRow,
    pub bands: Vec<Band>,
    /// Entry credit in each repeat.
    pub credits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub n_paths: usize,
    pub n_steps: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.points.iter().map(|p| p.row.clone()).collect()
    }
}

/// Seed of repeat `r` derived from the master seed.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &[tags::REPEAT, r as u64])
}

/// Runs one sweep; see [`run_sweeps`].
pub fn run_sweep(config: &SweepConfig, model: &ModelParams, grid: &SimGrid, n_inner: usize) -> Result<SweepResult> {
    Ok(run_sweeps(std::slice::from_ref(config), model, grid, n_inner)?.remove(0))
}

/// Runs several sweeps over shared simulations.
///
/// Repeat `r` simulates `grid.n_paths` paths from [`repeat_seed`] and prices
/// every strike any sweep needs on one grid. The repeats are pooled into one
/// dataset `D`; `tau` is the argmax of the pooled mean curve and is reused for
/// the conditional metrics.
pub fn run_sweeps(
    configs: &[SweepConfig],
    model: &ModelParams,
    grid: &SimGrid,
    n_inner: usize,
) -> Result<Vec<SweepResult>> {
    model.validate()?;
    grid.validate()?;
    if configs.is_empty() {
        return Err(invalid("sweeps", "at least one sweep is required"));
    }
    for c in configs {
        c.validate()?;
    }
    let s0 = 1.0;
    let strike_sets: Vec<Vec<[f64; 4]>> = configs
        .iter()
        .map(|c| {
            c.points()
                .iter()
                .map(|p| from_params(p.x, p.xhat, p.xbar, s0))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut strikes: Vec<f64> = strike_sets.iter().flatten().flatten().map(|&k| round_strike(k)).collect();
    strikes.sort_by(f64::total_cmp);
    strikes.dedup();

    let max_repeats = configs.iter().map(|c| c.repeats).max().unwrap_or(1);
    // pooled[c][i] = (phi rows over repeats, credits)
    let mut pooled: Vec<Vec<(Vec<f64>, Vec<f64>)>> = strike_sets
        .iter()
        .map(|set| vec![(Vec::new(), Vec::new()); set.len()])
        .collect();
    let mut terminal = vec![Vec::new(); configs.len()];

    for r in 0..max_repeats {
        let seed = repeat_seed(grid.master_seed, r);
        let g = SimGrid {
            master_seed: seed,
            ..grid.clone()
        };
        let bundle = simulate(model, &g, s0)?;
        let pricing = build_pricing_grid(&bundle, &strikes, n_inner, derive_seed(seed, &[tags::PRICING]))?;
        let s_t = bundle.terminal_spots();
        for (c, config) in configs.iter().enumerate() {
            if r >= config.repeats {
                continue;
            }
            terminal[c].extend_from_slice(&s_t);
            for (i, k) in strike_sets[c].iter().enumerate() {
                let spec = from_strikes(*k, &pricing, 0, 0)?;
                let phi = phi_process(&value_process(&spec, &pricing)?, spec.credit)?;
                pooled[c][i].0.extend_from_slice(phi.as_slice());
                pooled[c][i].1.push(spec.credit);
            }
        }
    }

    let cols = grid.n_steps + 1;
    configs
        .iter()
        .zip(pooled)
        .zip(terminal)
        .zip(&strike_sets)
        .map(|(((config, pool), s_t), sets)| {
            let part = partition(s0, &s_t)?;
            let points = config
                .points()
                .into_iter()
                .zip(pool)
                .zip(sets)
                .map(|((control, (data, credits)), k)| {
                    let phi = Matrix::from_vec(s_t.len(), cols, data);
                    Ok(SweepPoint {
                        strikes: *k,
                        row: evaluate(control, &phi, &part)?,
                        bands: bands(&phi, &part),
                        credits,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepResult {
                config: config.clone(),
                n_paths: s_t.len(),
                n_steps: grid.n_steps,
                points,
            })
        })
        .collect()
}

/// Direct evaluation of a row from portfolio values, for callers that hold
/// their own value processes.
pub fn row_from_values(
    spec: &CondorSpec,
    values: &Matrix,
    s0: f64,
    s_t: &[f64],
) -> Result<MetricsRow> {
    let phi = phi_process(values, spec.credit)?;
    let part = partition(s0, s_t)?;
    let control = spec.params.unwrap_or_else(|| crate::condor::structure_of(spec.strikes(), s0));
    evaluate(control, &phi, &part)
}
