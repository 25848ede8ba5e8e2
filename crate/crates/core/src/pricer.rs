//! Leg valuation by history-conditioned nested Monte Carlo.
//!
//! A valuation at `(path, step)` branches `n_inner` continuations off the
//! outer path (reusing its retained variance history) and averages the
//! undiscounted payoff; the rate is zero throughout. All strikes and both
//! option kinds at one `(path, step)` share the same continuations.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::roughheston::{Branch, ModelParams, PathBundle, VolterraScheme};
use crate::rng::{derive_seed, stream_rng};

/// Default ceiling on `n_paths · n_steps · n_strikes · n_inner`.
pub const DEFAULT_BUDGET: u128 = 20_000_000_000;

/// Inner paths per valuation at desk scale.
pub const DEFAULT_N_INNER: usize = 500;

const STRIKE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    #[inline]
    pub fn intrinsic(self, s: f64, k: f64) -> f64 {
        match self {
            OptionKind::Call => (s - k).max(0.0),
            OptionKind::Put => (k - s).max(0.0),
        }
    }

    fn slot(self) -> usize {
        match self {
            OptionKind::Call => 0,
            OptionKind::Put => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        }
    }
}

impl std::str::FromStr for OptionKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(format!("unknown option kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegQuote {
    pub kind: OptionKind,
    pub strike: f64,
    pub value: f64,
    pub std_error: f64,
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black–Scholes price; intrinsic value of the forward when `tau_years` or
/// `sigma` is zero.
pub fn bs_price(kind: OptionKind, s: f64, k: f64, sigma: f64, tau_years: f64, r: f64) -> f64 {
    let df = (-r * tau_years).exp();
    let total_vol = sigma * tau_years.sqrt();
    if total_vol <= 0.0 {
        return kind.intrinsic(s, k * df);
    }
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau_years) / total_vol;
    let d2 = d1 - total_vol;
    match kind {
        OptionKind::Call => s * norm_cdf(d1) - k * df * norm_cdf(d2),
        OptionKind::Put => k * df * norm_cdf(-d2) - s * norm_cdf(-d1),
    }
}

/// Seed of the valuation at `(path, step)`. Every path shares the entry
/// state, so step 0 uses a single path-independent stream.
pub fn valuation_seed(seed: u64, path: usize, step: usize) -> u64 {
    let path_label = if step == 0 { u64::MAX } else { path as u64 };
    derive_seed(seed, &[path_label, step as u64])
}

/// Mean and standard error of call and put payoffs for each strike over a
/// shared set of terminal spots. Output layout: `[call, put]` per strike.
fn payoff_moments(terminals: &[f64], strikes_abs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = terminals.len() as f64;
    let mut values = Vec::with_capacity(strikes_abs.len() * 2);
    let mut errors = Vec::with_capacity(strikes_abs.len() * 2);
    for &k in strikes_abs {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let (mut sum, mut sq) = (0.0, 0.0);
            for &s in terminals {
                let x = kind.intrinsic(s, k);
                sum += x;
                sq += x * x;
            }
            let mean = sum / n;
            let var = if n > 1.0 {
                ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            values.push(mean);
            errors.push((var / n).sqrt());
        }
    }
    (values, errors)
}

fn branch_terminals(branch: &Branch<'_>, rng: &mut ChaCha8Rng, n_inner: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(branch.scheme.n_steps());
    (0..n_inner).map(|_| branch.terminal(rng, &mut g)).collect()
}

/// Prices one leg at `(path_index, step)`.
#[allow(clippy::too_many_arguments)]
pub fn price_leg(
    bundle: &PathBundle,
    path_index: usize,
    step: usize,
    kind: OptionKind,
    strike: f64,
    n_inner: usize,
    seed: u64,
) -> Result<LegQuote> {
    if !(strike > 0.0) {
        return Err(invalid("strike", format!("must be positive, got {strike}")));
    }
    let n = bundle.n_steps();
    let scheme = VolterraScheme::new(&bundle.params, bundle.grid.dt, n);
    let branch = Branch::new(&scheme, bundle, path_index, step)?;
    let k_abs = strike * bundle.s0;
    if step == n {
        return Ok(LegQuote {
            kind,
            strike,
            value: kind.intrinsic(bundle.s.get(path_index, n), k_abs),
            std_error: 0.0,
        });
    }
    if n_inner == 0 {
        return Err(invalid("n_inner", "must be positive"));
    }
    let mut rng = stream_rng(valuation_seed(seed, path_index, step), 0);
    let terminals = branch_terminals(&branch, &mut rng, n_inner);
    let (values, errors) = payoff_moments(&terminals, &[k_abs]);
    Ok(LegQuote {
        kind,
        strike,
        value: values[kind.slot()],
        std_error: errors[kind.slot()],
    })
}

/// Leg prices for every `(path, step, strike, kind)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingGrid {
    pub strikes: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_inner: usize,
    pub seed: u64,
    values: Vec<f64>,
    std_errors: Vec<f64>,
}

impl PricingGrid {
    #[inline]
    fn offset(&self, path: usize, step: usize, strike_idx: usize, kind: OptionKind) -> usize {
        ((path * (self.n_steps + 1) + step) * self.strikes.len() + strike_idx) * 2 + kind.slot()
    }

    pub fn value(&self, path: usize, step: usize, strike_idx: usize, kind: OptionKind) -> f64 {
        self.values[self.offset(path, step, strike_idx, kind)]
    }

    pub fn std_error(&self, path: usize, step: usize, strike_idx: usize, kind: OptionKind) -> f64 {
        self.std_errors[self.offset(path, step, strike_idx, kind)]
    }

    pub fn quote(&self, path: usize, step: usize, strike_idx: usize, kind: OptionKind) -> LegQuote {
        LegQuote {
            kind,
            strike: self.strikes[strike_idx],
            value: self.value(path, step, strike_idx, kind),
            std_error: self.std_error(path, step, strike_idx, kind),
        }
    }

    /// Index of `strike` on the grid (within 1e-9).
    pub fn strike_index(&self, strike: f64) -> Result<usize> {
        find_strike(&self.strikes, strike)
    }

    pub fn from_parts(
        strikes: Vec<f64>,
        n_paths: usize,
        n_steps: usize,
        n_inner: usize,
        seed: u64,
        values: Vec<f64>,
        std_errors: Vec<f64>,
    ) -> Result<Self> {
        let expected = n_paths * (n_steps + 1) * strikes.len() * 2;
        if values.len() != expected || std_errors.len() != expected {
            return Err(invalid("values", format!("expected {expected} entries")));
        }
        Ok(Self {
            strikes,
            n_paths,
            n_steps,
            n_inner,
            seed,
            values,
            std_errors,
        })
    }

    /// `n_paths × (n_steps+1)` matrix of one leg's prices.
    pub fn leg_matrix(&self, strike_idx: usize, kind: OptionKind) -> crate::matrix::Matrix {
        let mut m = crate::matrix::Matrix::zeros(self.n_paths, self.n_steps + 1);
        for p in 0..self.n_paths {
            for t in 0..=self.n_steps {
                m.set(p, t, self.value(p, t, strike_idx, kind));
            }
        }
        m
    }

    pub fn std_error_matrix(&self, strike_idx: usize, kind: OptionKind) -> crate::matrix::Matrix {
        let mut m = crate::matrix::Matrix::zeros(self.n_paths, self.n_steps + 1);
        for p in 0..self.n_paths {
            for t in 0..=self.n_steps {
                m.set(p, t, self.std_error(p, t, strike_idx, kind));
            }
        }
        m
    }
}

pub(crate) fn find_strike(strikes: &[f64], strike: f64) -> Result<usize> {
    strikes
        .iter()
        .position(|k| (k - strike).abs() < STRIKE_TOLERANCE)
        .ok_or(Error::StrikeNotOnGrid(strike))
}

/// Strike lattice `lo, lo+step, …, hi`, rounded to 12 decimals.
pub fn strike_lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| round_strike(lo + step * i as f64)).collect()
}

pub(crate) fn round_strike(k: f64) -> f64 {
    (k * 1e12).round() / 1e12
}

/// [`build_pricing_grid_with_budget`] under [`DEFAULT_BUDGET`].
pub fn build_pricing_grid(
    bundle: &PathBundle,
    strikes: &[f64],
    n_inner: usize,
    seed: u64,
) -> Result<PricingGrid> {
    build_pricing_grid_with_budget(bundle, strikes, n_inner, seed, DEFAULT_BUDGET)
}

pub fn build_pricing_grid_with_budget(
    bundle: &PathBundle,
    strikes: &[f64],
    n_inner: usize,
    seed: u64,
    budget: u128,
) -> Result<PricingGrid> {
    if strikes.is_empty() {
        return Err(invalid("strikes", "at least one strike is required"));
    }
    if strikes.iter().any(|k| !(*k > 0.0)) {
        return Err(invalid("strikes", "strikes must be positive"));
    }
    if strikes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("strikes", "strikes must be strictly increasing"));
    }
    if n_inner == 0 {
        return Err(invalid("n_inner", "must be positive"));
    }
    let n_paths = bundle.n_paths();
    let n = bundle.n_steps();
    let requested = n_paths as u128 * n as u128 * strikes.len() as u128 * n_inner as u128;
    if requested > budget {
        return Err(Error::CapacityExceeded { requested, budget });
    }

    let scheme = VolterraScheme::new(&bundle.params, bundle.grid.dt, n);
    let strikes_abs: Vec<f64> = strikes.iter().map(|k| k * bundle.s0).collect();
    let cell = strikes.len() * 2;

    let value_at = |path: usize, step: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        if step == n {
            let s = bundle.s.get(path, n);
            let values = strikes_abs
                .iter()
                .flat_map(|&k| [OptionKind::Call.intrinsic(s, k), OptionKind::Put.intrinsic(s, k)])
                .collect();
            return Ok((values, vec![0.0; cell]));
        }
        let branch = Branch::new(&scheme, bundle, path, step)?;
        let mut rng = stream_rng(valuation_seed(seed, path, step), 0);
        let terminals = branch_terminals(&branch, &mut rng, n_inner);
        Ok(payoff_moments(&terminals, &strikes_abs))
    };

    let entry = value_at(0, 0)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut values = Vec::with_capacity((n + 1) * cell);
            let mut errors = Vec::with_capacity((n + 1) * cell);
            values.extend_from_slice(&entry.0);
            errors.extend_from_slice(&entry.1);
            for step in 1..=n {
                let (v, e) = value_at(path, step)?;
                values.extend(v);
                errors.extend(e);
            }
            Ok((values, errors))
        })
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(n_paths * (n + 1) * cell);
    let mut std_errors = Vec::with_capacity(values.capacity());
    for (v, e) in rows {
        values.extend(v);
        std_errors.extend(e);
    }
    Ok(PricingGrid {
        strikes: strikes.to_vec(),
        n_paths,
        n_steps: n,
        n_inner,
        seed,
        values,
        std_errors,
    })
}

/// Nested Monte Carlo pricer that restarts the rough Heston dynamics at the
/// current spot with the initial variance and no memory. Used when the
/// underlying is not itself a rough Heston path.
#[derive(Debug, Clone)]
pub struct FreshStartPricer {
    scheme: VolterraScheme,
    pub n_inner: usize,
}

impl FreshStartPricer {
    /// `max_steps` is the longest remaining horizon that will be requested.
    pub fn new(params: &ModelParams, dt: f64, max_steps: usize, n_inner: usize) -> Result<Self> {
        params.validate()?;
        if n_inner == 0 {
            return Err(invalid("n_inner", "must be positive"));
        }
        if max_steps == 0 {
            return Err(Error::InvalidHorizon);
        }
        Ok(Self {
            scheme: VolterraScheme::new(params, dt, max_steps),
            n_inner,
        })
    }

    /// Inner terminal spots behind [`FreshStartPricer::price`] for the same
    /// arguments; a single `s` when nothing remains.
    pub fn terminals(&self, s: f64, remaining_steps: usize, seed: u64) -> Result<Vec<f64>> {
        if !(s > 0.0) {
            return Err(Error::NonpositiveSpot(s));
        }
        let max = self.scheme.n_steps();
        if remaining_steps > max {
            return Err(Error::IndexOutOfRange {
                what: "remaining_steps",
                index: remaining_steps,
                limit: max + 1,
            });
        }
        if remaining_steps == 0 {
            return Ok(vec![s]);
        }
        let mut branch = Branch::fresh(&self.scheme, s);
        branch.from = max - remaining_steps;
        let mut rng = stream_rng(seed, 0);
        Ok(branch_terminals(&branch, &mut rng, self.n_inner))
    }

    /// Call and put quotes for each strike (absolute units) with
    /// `remaining_steps` to expiry, drawing from stream 0 of `seed`.
    pub fn price(&self, s: f64, remaining_steps: usize, strikes: &[f64], seed: u64) -> Result<Vec<[LegQuote; 2]>> {
        if !(s > 0.0) {
            return Err(Error::NonpositiveSpot(s));
        }
        if remaining_steps > self.scheme.n_steps() {
            return Err(Error::IndexOutOfRange {
                what: "remaining_steps",
                index: remaining_steps,
                limit: self.scheme.n_steps() + 1,
            });
        }
        let (values, errors) = if remaining_steps == 0 {
            let values = strikes
                .iter()
                .flat_map(|&k| [OptionKind::Call.intrinsic(s, k), OptionKind::Put.intrinsic(s, k)])
                .collect();
            (values, vec![0.0; strikes.len() * 2])
        } else {
            payoff_moments(&self.terminals(s, remaining_steps, seed)?, strikes)
        };
        Ok(strikes
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                [OptionKind::Call, OptionKind::Put].map(|kind| LegQuote {
                    kind,
                    strike: k,
                    value: values[2 * i + kind.slot()],
                    std_error: errors[2 * i + kind.slot()],
                })
            })
            .collect())
    }
}
