//! Rough Heston paths on a uniform grid.
//!
//! The variance solves a Volterra equation with kernel
//! `(u - s)^{H - 1/2} / Γ(H + 1/2)`. It is discretized with exact step
//! integrals of the kernel (left-point integrand), full truncation of
//! negative variance, and a log-Euler step for the spot correlated with the
//! variance driver through `Z¹ = ρ Z² + √(1-ρ²) Z⊥`.
//!
//! The variance-driving Brownian increments are retained so any path can be
//! continued from any step: the history contribution to every later Volterra
//! sum is fixed, only the post-branch increments are redrawn.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fgn::HurstParam;
use crate::matrix::Matrix;
use crate::rng::stream_rng;

/// Trading days per year used for the default step.
pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub h: HurstParam,
    pub kappa: f64,
    pub theta_mean: f64,
    pub nu: f64,
    pub rho: f64,
    pub v0: f64,
    pub mu: f64,
}

impl Default for ModelParams {
    /// SPX calibration with zero rate, H = 0.1.
    fn default() -> Self {
        Self {
            h: HurstParam::new(0.1).expect("valid default"),
            kappa: 0.1,
            theta_mean: 0.3156,
            nu: 0.0331,
            rho: -0.681,
            v0: 0.0392,
            mu: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and non-negative, got {v}")))
            }
        };
        nonneg("kappa", self.kappa)?;
        nonneg("theta_mean", self.theta_mean)?;
        nonneg("nu", self.nu)?;
        nonneg("v0", self.v0)?;
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(invalid("rho", format!("must lie in [-1, 1], got {}", self.rho)));
        }
        if !self.mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub master_seed: u64,
}

impl Default for SimGrid {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: 63,
            dt: 1.0 / TRADING_DAYS,
            master_seed: 20_240_601,
        }
    }
}

impl SimGrid {
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidHorizon);
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Ensemble of spot and variance paths plus the retained variance-driving
/// increments. Rows are paths; `s` and `v` have `n_steps + 1` columns,
/// `dw2` has `n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub s: Matrix,
    pub v: Matrix,
    pub dw2: Matrix,
    pub grid: SimGrid,
    pub params: ModelParams,
    pub s0: f64,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.s.rows()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn terminal_spots(&self) -> Vec<f64> {
        self.s.column(self.grid.n_steps)
    }
}

/// Exact integrals of the power-law kernel over each grid step,
/// `w_j = [(j+1)^{H+½} − j^{H+½}] dt^{H+½} / ((H+½) Γ(H+½))`.
pub fn kernel_weights(h: HurstParam, dt: f64, n_steps: usize) -> Vec<f64> {
    let a = h.value() + 0.5;
    let scale = dt.powf(a) / (a * gamma(a));
    (0..n_steps)
        .map(|j| {
            let j = j as f64;
            ((j + 1.0).powf(a) - j.powf(a)) * scale
        })
        .collect()
}

/// Discretized dynamics shared by outer simulation, continuation and fresh
/// restarts.
#[derive(Debug, Clone)]
pub(crate) struct VolterraScheme {
    params: ModelParams,
    dt: f64,
    sqrt_dt: f64,
    rho_perp: f64,
    /// Step-averaged kernel `w_j / dt`; identically 1 at H = 1/2.
    avg_kernel: Vec<f64>,
}

impl VolterraScheme {
    pub(crate) fn new(params: &ModelParams, dt: f64, n_steps: usize) -> Self {
        let avg_kernel = kernel_weights(params.h, dt, n_steps)
            .into_iter()
            .map(|w| w / dt)
            .collect();
        Self {
            params: *params,
            dt,
            sqrt_dt: dt.sqrt(),
            rho_perp: (1.0 - params.rho * params.rho).max(0.0).sqrt(),
            avg_kernel,
        }
    }

    pub(crate) fn n_steps(&self) -> usize {
        self.avg_kernel.len()
    }

    /// Integrand of the Volterra sum over one step.
    #[inline]
    fn drive(&self, v: f64, dw: f64) -> f64 {
        self.params.kappa * (self.params.theta_mean - v) * self.dt + self.params.nu * v.sqrt() * dw
    }

    /// Contribution of the outer increments `j < from` to each later sum
    /// `V_{i+1}`, `i = from..n_steps`.
    pub(crate) fn history(&self, v: &[f64], dw2: &[f64], from: usize) -> Vec<f64> {
        let n = self.n_steps();
        let g: Vec<f64> = (0..from).map(|j| self.drive(v[j], dw2[j])).collect();
        (from..n)
            .map(|i| g.iter().enumerate().map(|(j, gj)| self.avg_kernel[i - j] * gj).sum())
            .collect()
    }

    /// Evolves one path from step `from` (state `v_from`, `log_s_from`) to the
    /// horizon. `history` comes from [`Self::history`] (empty slice for a
    /// fresh start). `on_step(i + 1, v, log_s, dw)` observes every new state.
    /// Returns the terminal log spot.
    ///
    /// `g` is scratch space; integrands are stored newest-first at its tail so
    /// the convolution is a forward dot product.
    #[inline]
    pub(crate) fn evolve<R: Rng + ?Sized, F: FnMut(usize, f64, f64, f64)>(
        &self,
        rng: &mut R,
        from: usize,
        v_from: f64,
        log_s_from: f64,
        history: &[f64],
        g: &mut Vec<f64>,
        mut on_step: F,
    ) -> f64 {
        let n = self.n_steps();
        let p = &self.params;
        g.clear();
        g.resize(n, 0.0);
        let mut head = n;
        let mut v = v_from;
        let mut log_s = log_s_from;
        for i in from..n {
            let z2: f64 = rng.sample(StandardNormal);
            let zp: f64 = rng.sample(StandardNormal);
            let dw = z2 * self.sqrt_dt;
            head -= 1;
            g[head] = self.drive(v, dw);
            let z1 = p.rho * z2 + self.rho_perp * zp;
            log_s += (p.mu - 0.5 * v) * self.dt + (v * self.dt).sqrt() * z1;

            let hist = history.get(i - from).copied().unwrap_or(0.0);
            let conv = dot(&self.avg_kernel[..n - head], &g[head..]);
            v = (p.v0 + hist + conv).max(0.0);
            on_step(i + 1, v, log_s, dw);
        }
        log_s
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_inputs(params: &ModelParams, grid: &SimGrid, s0: f64) -> Result<()> {
    grid.validate()?;
    params.validate()?;
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::NonpositiveSpot(s0));
    }
    Ok(())
}

/// Simulates `grid.n_paths` paths starting at `s0`. Path `p` draws from
/// stream `p` of `grid.master_seed`, so results are independent of the
/// rayon worker count.
pub fn simulate(params: &ModelParams, grid: &SimGrid, s0: f64) -> Result<PathBundle> {
    check_inputs(params, grid, s0)?;
    let n = grid.n_steps;
    let scheme = VolterraScheme::new(params, grid.dt, n);
    let log_s0 = s0.ln();

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..grid.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(grid.master_seed, p as u64);
            let mut s = vec![0.0; n + 1];
            let mut v = vec![0.0; n + 1];
            let mut dw2 = vec![0.0; n];
            s[0] = s0;
            v[0] = params.v0;
            let mut g = Vec::with_capacity(n);
            scheme.evolve(&mut rng, 0, params.v0, log_s0, &[], &mut g, |t, vt, ls, dw| {
                s[t] = ls.exp();
                v[t] = vt;
                dw2[t - 1] = dw;
            });
            (s, v, dw2)
        })
        .collect();

    Ok(assemble(rows, n, *grid, *params, s0))
}

fn assemble(
    rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    n_steps: usize,
    grid: SimGrid,
    params: ModelParams,
    s0: f64,
) -> PathBundle {
    let n_paths = rows.len();
    let mut s = Vec::with_capacity(n_paths * (n_steps + 1));
    let mut v = Vec::with_capacity(n_paths * (n_steps + 1));
    let mut dw2 = Vec::with_capacity(n_paths * n_steps);
    for (rs, rv, rw) in rows {
        s.extend(rs);
        v.extend(rv);
        dw2.extend(rw);
    }
    PathBundle {
        s: Matrix::from_vec(n_paths, n_steps + 1, s),
        v: Matrix::from_vec(n_paths, n_steps + 1, v),
        dw2: Matrix::from_vec(n_paths, n_steps, dw2),
        grid,
        params,
        s0,
    }
}

/// Branching point of a single outer path: state at `from_step` plus the
/// frozen history contribution of earlier increments.
#[derive(Debug, Clone)]
pub(crate) struct Branch<'a> {
    pub(crate) scheme: &'a VolterraScheme,
    pub(crate) from: usize,
    pub(crate) v_from: f64,
    pub(crate) log_s_from: f64,
    pub(crate) history: Vec<f64>,
}

impl<'a> Branch<'a> {
    pub(crate) fn new(
        scheme: &'a VolterraScheme,
        bundle: &PathBundle,
        path: usize,
        from: usize,
    ) -> Result<Self> {
        check_branch(bundle, path, from)?;
        Ok(Self {
            scheme,
            from,
            v_from: bundle.v.get(path, from),
            log_s_from: bundle.s.get(path, from).ln(),
            history: scheme.history(bundle.v.row(path), bundle.dw2.row(path), from),
        })
    }

    /// Fresh start at spot `s` with initial variance `v0`.
    pub(crate) fn fresh(scheme: &'a VolterraScheme, s: f64) -> Self {
        Self {
            scheme,
            from: 0,
            v_from: scheme.params.v0,
            log_s_from: s.ln(),
            history: Vec::new(),
        }
    }

    /// Terminal spot of one continuation.
    #[inline]
    pub(crate) fn terminal<R: Rng + ?Sized>(&self, rng: &mut R, g: &mut Vec<f64>) -> f64 {
        if self.from == self.scheme.n_steps() {
            return self.log_s_from.exp();
        }
        self.scheme
            .evolve(rng, self.from, self.v_from, self.log_s_from, &self.history, g, |_, _, _, _| {})
            .exp()
    }
}

fn check_branch(bundle: &PathBundle, path: usize, from: usize) -> Result<()> {
    if path >= bundle.n_paths() {
        return Err(Error::IndexOutOfRange {
            what: "path_index",
            index: path,
            limit: bundle.n_paths(),
        });
    }
    if from > bundle.n_steps() {
        return Err(Error::IndexOutOfRange {
            what: "from_step",
            index: from,
            limit: bundle.n_steps() + 1,
        });
    }
    Ok(())
}

/// Continues outer path `path_index` from `from_step` with `n_inner` fresh
/// branches. The returned bundle has full-length rows: columns up to
/// `from_step` (and increments before it) are copied from the outer path.
/// Branches draw sequentially from stream 0 of `inner_seed`.
pub fn continue_paths(
    bundle: &PathBundle,
    path_index: usize,
    from_step: usize,
    n_inner: usize,
    inner_seed: u64,
) -> Result<PathBundle> {
    let n = bundle.n_steps();
    let scheme = VolterraScheme::new(&bundle.params, bundle.grid.dt, n);
    let branch = Branch::new(&scheme, bundle, path_index, from_step)?;
    let mut rng = stream_rng(inner_seed, 0);
    let mut g = Vec::with_capacity(n);

    let rows = (0..n_inner)
        .map(|_| {
            let mut s = bundle.s.row(path_index).to_vec();
            let mut v = bundle.v.row(path_index).to_vec();
            let mut dw2 = bundle.dw2.row(path_index).to_vec();
            scheme.evolve(
                &mut rng,
                from_step,
                branch.v_from,
                branch.log_s_from,
                &branch.history,
                &mut g,
                |t, vt, ls, dw| {
                    s[t] = ls.exp();
                    v[t] = vt;
                    dw2[t - 1] = dw;
                },
            );
            (s, v, dw2)
        })
        .collect();

    let grid = SimGrid {
        n_paths: n_inner,
        master_seed: inner_seed,
        ..bundle.grid
    };
    Ok(assemble(rows, n, grid, bundle.params, bundle.s0))
}

/// Roughness of log-variance from second-order structure functions:
/// half the log-log slope of `E[(ln V_{t+Δ} − ln V_t)²]` over `Δ = 1..=max_lag`.
pub fn estimate_log_variance_roughness(bundle: &PathBundle, max_lag: usize) -> f64 {
    let n = bundle.n_steps();
    let max_lag = max_lag.min(n);
    let mut log_lags = Vec::with_capacity(max_lag);
    let mut log_m2 = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in bundle.v.iter_rows() {
            for t in 0..=(n - lag) {
                let (a, b) = (row[t], row[t + lag]);
                if a > 0.0 && b > 0.0 {
                    sum += (b.ln() - a.ln()).powi(2);
                    count += 1;
                }
            }
        }
        if count > 0 && sum > 0.0 {
            log_lags.push((lag as f64).ln());
            log_m2.push((sum / count as f64).ln());
        }
    }
    0.5 * crate::stats::ols_slope(&log_lags, &log_m2)
}
