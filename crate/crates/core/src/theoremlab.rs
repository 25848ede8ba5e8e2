//! Numerical checks of late stopping for Iron Condors on a bounded martingale,
//! and of the time-decay ordering across the four legs.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condor::{check_strike_order, CondorSpec};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::argmax_last;
use crate::pricer::{bs_price, FreshStartPricer, OptionKind};
use crate::rng::{derive_seed, stream_rng, tags};
use crate::roughheston::ModelParams;
use crate::stats::mean_se;

/// Paths `S_{t+1} = S_t ± δ·min(S_t − k_low, k_high − S_t)`, each sign with
/// probability ½.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedMartingaleSpec {
    pub s0: f64,
    pub k_low: f64,
    pub k_high: f64,
    pub shrink: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for BoundedMartingaleSpec {
    fn default() -> Self {
        Self {
            s0: 1.0,
            k_low: 0.96,
            k_high: 1.04,
            shrink: 0.3,
            n_steps: 63,
            n_paths: 1000,
            seed: 1,
        }
    }
}

impl BoundedMartingaleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_low < self.k_high) {
            return Err(invalid(
                "k_low",
                format!("k_low ({}) must be below k_high ({})", self.k_low, self.k_high),
            ));
        }
        if !(self.k_low < self.s0 && self.s0 < self.k_high) {
            return Err(invalid("s0", "start must lie strictly between the bounds"));
        }
        if !(0.0..1.0).contains(&self.shrink) {
            return Err(invalid("shrink", "must lie in [0, 1)"));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidHorizon);
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be positive"));
        }
        Ok(())
    }
}

pub fn simulate_bounded_martingale(spec: &BoundedMartingaleSpec) -> Result<Matrix> {
    spec.validate()?;
    let rows: Vec<Vec<f64>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(spec.seed, p as u64);
            let mut s = spec.s0;
            let mut row = Vec::with_capacity(spec.n_steps + 1);
            row.push(s);
            for _ in 0..spec.n_steps {
                let step = spec.shrink * (s - spec.k_low).min(spec.k_high - s);
                s += if rng.random::<bool>() { step } else { -step };
                row.push(s);
            }
            row
        })
        .collect();
    Ok(Matrix::from_rows(rows))
}

/// Strikes `[k_low − wing, k_low, k_high, k_high + wing]`.
pub fn theorem_strikes(k_low: f64, k_high: f64, wing: f64) -> [f64; 4] {
    [k_low - wing, k_low, k_high, k_high + wing]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmartingaleReport {
    pub strikes: [f64; 4],
    pub credit: f64,
    /// `m_t`, mean normalized profit per step.
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Steps `t` with `m_{t+1} < m_t − 3·sqrt(se_t² + se_{t+1}²)`.
    pub violations: Vec<usize>,
    pub argmax: usize,
}

impl SubmartingaleReport {
    pub fn n_steps(&self) -> usize {
        self.means.len() - 1
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "strikes = [{}, {}, {}, {}]",
            self.strikes[0], self.strikes[1], self.strikes[2], self.strikes[3]
        );
        let _ = writeln!(s, "credit = {}", self.credit);
        let _ = writeln!(s, "n_steps = {}", self.n_steps());
        let _ = writeln!(s, "argmax = {}", self.argmax);
        let _ = writeln!(s, "violations = {}", self.violations.len());
        if !self.violations.is_empty() {
            let list: Vec<String> = self.violations.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(s, "violation_steps = [{}]", list.join(", "));
        }
        let _ = writeln!(s, "result = {}", if self.passed() { "pass" } else { "fail" });
        s.push_str("t,mean,se\n");
        for (t, (m, e)) in self.means.iter().zip(&self.std_errors).enumerate() {
            let _ = writeln!(s, "{t},{m},{e}");
        }
        s
    }
}

/// Adjacent steps where the mean curve drops by more than `z` combined
/// standard errors.
pub fn count_violations(means: &[f64], std_errors: &[f64], z: f64) -> Vec<usize> {
    (0..means.len().saturating_sub(1))
        .filter(|&t| {
            let band = z * (std_errors[t].powi(2) + std_errors[t + 1].powi(2)).sqrt();
            means[t + 1] < means[t] - band
        })
        .collect()
}

/// Values the Iron Condor along `paths` with `pricer` and checks that the
/// mean normalized profit never falls significantly between adjacent steps.
pub fn check_submartingale(
    paths: &Matrix,
    strikes: [f64; 4],
    k_low: f64,
    k_high: f64,
    pricer: &FreshStartPricer,
    seed: u64,
) -> Result<SubmartingaleReport> {
    check_strike_order(strikes).map_err(|_| structure_violation(strikes, k_low, k_high))?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    if !same(strikes[1], k_low) || !same(strikes[2], k_high) || !(strikes[1] < strikes[2]) {
        return Err(structure_violation(strikes, k_low, k_high));
    }
    if paths.rows() == 0 || paths.cols() < 2 {
        return Err(invalid("paths", "need at least one path with one step"));
    }
    let n = paths.cols() - 1;
    let value = |s: f64, remaining: usize, seed: u64| -> Result<f64> {
        let q = pricer.price(s, remaining, &strikes, seed)?;
        Ok(CondorSpec::combine([
            q[0][1].value,
            q[1][1].value,
            q[2][0].value,
            q[3][0].value,
        ]))
    };
    let entry_seed = pricing_seed(seed, None, 0);
    let credit = value(paths.get(0, 0), n, entry_seed)?;
    if !(credit > 0.0) {
        return Err(Error::NonpositiveCredit(credit));
    }
    // φ_0 is zero by construction, but every later φ_t inherits the entry
    // valuation's error; that error is the step-0 standard error.
    let spec = CondorSpec::new(strikes, credit)?;
    let entry_payoffs: Vec<f64> = pricer
        .terminals(paths.get(0, 0), n, entry_seed)?
        .iter()
        .map(|&s| spec.terminal_value(s))
        .collect();
    let entry_se = mean_se(&entry_payoffs).1 / credit;
    let phi_rows: Vec<Vec<f64>> = (0..paths.rows())
        .into_par_iter()
        .map(|p| {
            let mut row = Vec::with_capacity(n + 1);
            row.push(0.0);
            for t in 1..=n {
                let v = value(paths.get(p, t), n - t, pricing_seed(seed, Some(p), t))?;
                row.push((credit - v) / credit);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut means = Vec::with_capacity(n + 1);
    let mut std_errors = Vec::with_capacity(n + 1);
    let mut col = Vec::with_capacity(phi_rows.len());
    for t in 0..=n {
        col.clear();
        col.extend(phi_rows.iter().map(|r| r[t]));
        let (m, e) = mean_se(&col);
        means.push(m);
        std_errors.push(if t == 0 { entry_se } else { e });
    }
    let violations = count_violations(&means, &std_errors, 3.0);
    let argmax = argmax_last(&means).map(|(t, _)| t).unwrap_or(0);
    Ok(SubmartingaleReport {
        strikes,
        credit,
        means,
        std_errors,
        violations,
        argmax,
    })
}

fn structure_violation(strikes: [f64; 4], k_low: f64, k_high: f64) -> Error {
    Error::StrikeStructureViolation(format!(
        "need k1 < k2 = {k_low} < k3 = {k_high} < k4, got {strikes:?}"
    ))
}

fn pricing_seed(seed: u64, path: Option<usize>, step: usize) -> u64 {
    let label = path.map_or(u64::MAX, |p| p as u64);
    derive_seed(seed, &[tags::THEOREM, label, step as u64])
}

/// Settings for a full theorem check run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub martingale: BoundedMartingaleSpec,
    /// Width of each vertical spread.
    pub wing: f64,
    pub model: ModelParams,
    pub dt: f64,
    pub n_inner: usize,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            martingale: BoundedMartingaleSpec::default(),
            wing: 0.04,
            model: ModelParams::default(),
            dt: 1.0 / 252.0,
            n_inner: 500,
        }
    }
}

pub fn run_theorem_check(config: &TheoremConfig) -> Result<SubmartingaleReport> {
    let m = &config.martingale;
    m.validate()?;
    if !(config.wing > 0.0) {
        return Err(invalid("wing", "must be positive"));
    }
    let paths = simulate_bounded_martingale(m)?;
    let pricer = FreshStartPricer::new(&config.model, config.dt, m.n_steps, config.n_inner)?;
    let strikes = theorem_strikes(m.k_low, m.k_high, config.wing);
    check_submartingale(&paths, strikes, m.k_low, m.k_high, &pricer, m.seed)
}

/// Stopping rule applied to a strictly decreasing profit curve.
pub fn supermartingale_tau(n_steps: usize) -> usize {
    let curve: Vec<f64> = (0..=n_steps).map(|t| -(t as f64)).collect();
    argmax_last(&curve).map(|(t, _)| t).unwrap_or(0)
}

/// Leg pricer for time-decay estimates.
#[derive(Debug, Clone)]
pub enum ThetaPricer {
    BlackScholes { sigma: f64, r: f64 },
    /// Fresh-start nested Monte Carlo; maturities must be whole steps.
    MonteCarlo { pricer: FreshStartPricer, dt: f64, seed: u64 },
}

impl ThetaPricer {
    /// Price and standard error of each leg `[put k1, put k2, call k3, call k4]`.
    fn legs(&self, s: f64, strikes: [f64; 4], tau: f64) -> Result<([f64; 4], [f64; 4])> {
        let kinds = [OptionKind::Put, OptionKind::Put, OptionKind::Call, OptionKind::Call];
        match self {
            ThetaPricer::BlackScholes { sigma, r } => Ok((
                std::array::from_fn(|i| bs_price(kinds[i], s, strikes[i], *sigma, tau, *r)),
                [0.0; 4],
            )),
            ThetaPricer::MonteCarlo { pricer, dt, seed } => {
                let steps = (tau / dt).round() as usize;
                let q = pricer.price(s, steps, &strikes, derive_seed(*seed, &[steps as u64]))?;
                let slot = |i: usize| usize::from(kinds[i] == OptionKind::Put);
                Ok((
                    std::array::from_fn(|i| q[i][slot(i)].value),
                    std::array::from_fn(|i| q[i][slot(i)].std_error),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub s: f64,
    pub tau: f64,
    pub step: f64,
    /// `Θ = ∂V/∂t` per leg, negative for decaying long options.
    pub theta: [f64; 4],
    pub theta_se: [f64; 4],
    /// `|Θ2| + |Θ3| − |Θ1| − |Θ4|`, the decay collected by the short side.
    pub net_decay: f64,
    pub net_decay_se: f64,
    pub put_ordering: bool,
    pub call_ordering: bool,
    pub net_nonnegative: bool,
}

impl ThetaPoint {
    pub fn passed(&self) -> bool {
        self.put_ordering && self.call_ordering && self.net_nonnegative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub strikes: [f64; 4],
    pub points: Vec<ThetaPoint>,
}

impl ThetaReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(ThetaPoint::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("s,tau,theta_k1,theta_k2,theta_k3,theta_k4,net_decay,put_ordering,call_ordering,net_nonnegative\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                p.s, p.tau, p.theta[0], p.theta[1], p.theta[2], p.theta[3], p.net_decay, p.put_ordering, p.call_ordering, p.net_nonnegative
            );
        }
        s
    }
}

/// Central-difference time decay of each leg at spot `s` and maturity `tau`
/// (years), with difference step `min(step, tau/2)`.
pub fn theta_ordering(
    pricer: &ThetaPricer,
    s: f64,
    strikes: [f64; 4],
    tau: f64,
    step: f64,
) -> Result<ThetaPoint> {
    check_strike_order(strikes)?;
    if !(strikes[1] <= s && s <= strikes[2]) {
        return Err(invalid("s", format!("spot {s} must lie in [k2, k3]")));
    }
    if !(tau > 0.0 && step > 0.0) {
        return Err(Error::InvalidHorizon);
    }
    let h = match pricer {
        ThetaPricer::MonteCarlo { dt, .. } => *dt,
        ThetaPricer::BlackScholes { .. } => step.min(tau / 2.0),
    };
    let (later, later_se) = pricer.legs(s, strikes, tau - h)?;
    let (earlier, earlier_se) = pricer.legs(s, strikes, tau + h)?;
    let theta: [f64; 4] = std::array::from_fn(|i| (later[i] - earlier[i]) / (2.0 * h));
    let theta_se: [f64; 4] =
        std::array::from_fn(|i| (earlier_se[i].powi(2) + later_se[i].powi(2)).sqrt() / (2.0 * h));
    let a: [f64; 4] = theta.map(f64::abs);
    let tol = |i: usize, j: usize| 3.0 * (theta_se[i].powi(2) + theta_se[j].powi(2)).sqrt();
    let net_decay = a[1] + a[2] - a[0] - a[3];
    let net_decay_se = theta_se.iter().map(|e| e * e).sum::<f64>().sqrt();
    Ok(ThetaPoint {
        s,
        tau,
        step: h,
        theta,
        theta_se,
        net_decay,
        net_decay_se,
        put_ordering: a[0] <= a[1] + tol(0, 1),
        call_ordering: a[3] <= a[2] + tol(3, 2),
        net_nonnegative: net_decay >= -3.0 * net_decay_se,
    })
}

/// Evaluates `n_spots` evenly spaced spots in `[k2, k3]` at each maturity.
pub fn theta_grid(
    pricer: &ThetaPricer,
    strikes: [f64; 4],
    maturities: &[f64],
    n_spots: usize,
    step: f64,
) -> Result<ThetaReport> {
    if n_spots < 2 {
        return Err(invalid("n_spots", "need at least two spot points"));
    }
    let mut points = Vec::with_capacity(maturities.len() * n_spots);
    for &tau in maturities {
        for i in 0..n_spots {
            let s = strikes[1] + (strikes[2] - strikes[1]) * i as f64 / (n_spots - 1) as f64;
            points.push(theta_ordering(pricer, s, strikes, tau, step)?);
        }
    }
    Ok(ThetaReport { strikes, points })
}

/// Black–Scholes oracle setup: σ = 0.2, r = 0, strikes [0.9, 0.95, 1.05, 1.1],
/// maturities of one, three and six months, 11 spots, daily step.
pub fn black_scholes_theta_report() -> Result<ThetaReport> {
    theta_grid(
        &ThetaPricer::BlackScholes { sigma: 0.2, r: 0.0 },
        [0.9, 0.95, 1.05, 1.1],
        &[1.0 / 12.0, 0.25, 0.5],
        11,
        1.0 / 252.0,
    )
}
