//! Iron Condor construction and valuation.
//!
//! Legs: long put `k1`, short put `k2`, short call `k3`, long call `k4`, with
//! `k1 < k2 <= k3 < k4`. The portfolio value is the cost of closing the
//! short position, `P = (put(k2) − put(k1)) + (call(k3) − call(k4))`; the
//! entry value is the credit collected and profit is `credit − P`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::pricer::{round_strike, OptionKind, PricingGrid};
use crate::roughheston::PathBundle;

/// Smallest credit admitted; below this the normalized profit is undefined.
pub const MIN_CREDIT: f64 = 1e-8;

/// Moneyness `x`, span `x̂` and asymmetry `x̄` of a portfolio, in units of
/// the entry spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub x: f64,
    pub xhat: f64,
    pub xbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondorSpec {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub credit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<StructureParams>,
}

pub fn check_strike_order(k: [f64; 4]) -> Result<()> {
    let [k1, k2, k3, k4] = k;
    if k1 < k2 && k2 <= k3 && k3 < k4 && k1 > 0.0 {
        Ok(())
    } else {
        Err(Error::StrikeOrderViolation(k1, k2, k3, k4))
    }
}

impl CondorSpec {
    pub fn new(strikes: [f64; 4], credit: f64) -> Result<Self> {
        check_strike_order(strikes)?;
        Ok(Self {
            k1: strikes[0],
            k2: strikes[1],
            k3: strikes[2],
            k4: strikes[3],
            credit,
            params: None,
        })
    }

    pub fn strikes(&self) -> [f64; 4] {
        [self.k1, self.k2, self.k3, self.k4]
    }

    pub fn put_width(&self) -> f64 {
        self.k2 - self.k1
    }

    pub fn call_width(&self) -> f64 {
        self.k4 - self.k3
    }

    /// Liability at expiry for underlying level `s`.
    #[inline]
    pub fn terminal_value(&self, s: f64) -> f64 {
        let put = OptionKind::Put;
        let call = OptionKind::Call;
        (put.intrinsic(s, self.k2) - put.intrinsic(s, self.k1))
            + (call.intrinsic(s, self.k3) - call.intrinsic(s, self.k4))
    }

    /// Portfolio value from the four leg prices `[put(k1), put(k2), call(k3), call(k4)]`.
    #[inline]
    pub fn combine(legs: [f64; 4]) -> f64 {
        (legs[1] - legs[0]) + (legs[2] - legs[3])
    }

    pub fn with_params(mut self, params: StructureParams) -> Self {
        self.params = Some(params);
        self
    }
}

/// Builds a portfolio whose credit is its grid value at `(path, step)`.
pub fn from_strikes(
    strikes: [f64; 4],
    grid: &PricingGrid,
    path: usize,
    step: usize,
) -> Result<CondorSpec> {
    check_strike_order(strikes)?;
    if path >= grid.n_paths {
        return Err(Error::IndexOutOfRange {
            what: "path",
            index: path,
            limit: grid.n_paths,
        });
    }
    if step > grid.n_steps {
        return Err(Error::IndexOutOfRange {
            what: "step",
            index: step,
            limit: grid.n_steps + 1,
        });
    }
    let idx = LegIndex::locate(&strikes, grid)?;
    let credit = idx.value(grid, path, step);
    if !(credit > MIN_CREDIT) {
        return Err(Error::NonpositiveCredit(credit));
    }
    let mut spec = CondorSpec::new(strikes, credit)?;
    spec.params = Some(structure_of(strikes, 1.0));
    Ok(spec)
}

/// Strikes for moneyness `x`, span `xhat` and asymmetry `xbar` around `s0`.
///
/// The symmetric base is `k2 = s0(1−x)`, `k3 = s0(1+x)` with spreads of width
/// `xhat·s0`; a positive `xbar` moves the put pair down by `xbar·s0`, a
/// negative one moves the call pair up by `|xbar|·s0`.
pub fn from_params(x: f64, xhat: f64, xbar: f64, s0: f64) -> Result<[f64; 4]> {
    if !(x >= 0.0) {
        return Err(invalid("x", format!("moneyness must be non-negative, got {x}")));
    }
    if !(xhat > 0.0) {
        return Err(invalid("xhat", format!("span must be positive, got {xhat}")));
    }
    if !(s0 > 0.0) {
        return Err(Error::NonpositiveSpot(s0));
    }
    let put_shift = xbar.max(0.0);
    let call_shift = (-xbar).max(0.0);
    let k2 = 1.0 - x - put_shift;
    let k1 = k2 - xhat;
    let k3 = 1.0 + x + call_shift;
    let k4 = k3 + xhat;
    let strikes = [k1, k2, k3, k4].map(|k| round_strike(k) * s0);
    check_strike_order(strikes)?;
    Ok(strikes)
}

/// Recovers `(x, x̂, x̄)` from strikes.
pub fn structure_of(strikes: [f64; 4], s0: f64) -> StructureParams {
    let [k1, k2, _, k4] = strikes;
    StructureParams {
        x: (k2 - s0).abs() / s0,
        xhat: (k2 - k1) / s0,
        xbar: ((s0 - k1) - (k4 - s0)) / s0,
    }
}

/// Grid positions of the four legs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LegIndex([usize; 4]);

impl LegIndex {
    pub(crate) fn locate(strikes: &[f64; 4], grid: &PricingGrid) -> Result<Self> {
        let mut idx = [0; 4];
        for (slot, k) in idx.iter_mut().zip(strikes) {
            *slot = grid.strike_index(*k)?;
        }
        Ok(Self(idx))
    }

    #[inline]
    pub(crate) fn value(&self, grid: &PricingGrid, path: usize, step: usize) -> f64 {
        let [i1, i2, i3, i4] = self.0;
        CondorSpec::combine([
            grid.value(path, step, i1, OptionKind::Put),
            grid.value(path, step, i2, OptionKind::Put),
            grid.value(path, step, i3, OptionKind::Call),
            grid.value(path, step, i4, OptionKind::Call),
        ])
    }
}

/// Portfolio value `P_t` for every path and step.
pub fn value_process(spec: &CondorSpec, grid: &PricingGrid) -> Result<Matrix> {
    let idx = LegIndex::locate(&spec.strikes(), grid)?;
    let mut out = Matrix::zeros(grid.n_paths, grid.n_steps + 1);
    for p in 0..grid.n_paths {
        let row = out.row_mut(p);
        for (t, cell) in row.iter_mut().enumerate() {
            *cell = idx.value(grid, p, t);
        }
    }
    Ok(out)
}

/// Profit at expiry in price units.
pub fn terminal_payoff(spec: &CondorSpec, s_t: f64) -> f64 {
    spec.credit - spec.terminal_value(s_t)
}

/// Underlying levels `(k2 − credit, k3 + credit)` where the expiry profit is zero.
pub fn breakevens(spec: &CondorSpec) -> Result<(f64, f64)> {
    if spec.credit >= spec.put_width() {
        return Err(Error::NoBreakeven {
            side: "put",
            credit: spec.credit,
            width: spec.put_width(),
        });
    }
    if spec.credit >= spec.call_width() {
        return Err(Error::NoBreakeven {
            side: "call",
            credit: spec.credit,
            width: spec.call_width(),
        });
    }
    Ok((spec.k2 - spec.credit, spec.k3 + spec.credit))
}

/// Underlying at slot 0 and portfolio value processes at slots `1..=F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTensor {
    pub n_paths: usize,
    pub n_steps: usize,
    pub specs: Vec<CondorSpec>,
    data: Vec<f64>,
}

impl ValueTensor {
    pub fn n_slots(&self) -> usize {
        self.specs.len() + 1
    }

    #[inline]
    pub fn get(&self, path: usize, step: usize, slot: usize) -> f64 {
        self.data[(path * (self.n_steps + 1) + step) * self.n_slots() + slot]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_paths, self.n_steps + 1, self.n_slots())
    }

    pub fn slot_matrix(&self, slot: usize) -> Matrix {
        let mut m = Matrix::zeros(self.n_paths, self.n_steps + 1);
        for p in 0..self.n_paths {
            for t in 0..=self.n_steps {
                m.set(p, t, self.get(p, t, slot));
            }
        }
        m
    }

    pub fn from_slots(underlying: &Matrix, values: &[Matrix], specs: Vec<CondorSpec>) -> Result<Self> {
        if values.len() != specs.len() {
            return Err(invalid("specs", "one value matrix per portfolio is required"));
        }
        let (n_paths, cols) = (underlying.rows(), underlying.cols());
        if values.iter().any(|m| m.rows() != n_paths || m.cols() != cols) {
            return Err(invalid("values", "value matrices must match the underlying shape"));
        }
        let slots = specs.len() + 1;
        let mut data = Vec::with_capacity(n_paths * cols * slots);
        for p in 0..n_paths {
            for t in 0..cols {
                data.push(underlying.get(p, t));
                data.extend(values.iter().map(|m| m.get(p, t)));
            }
        }
        Ok(Self {
            n_paths,
            n_steps: cols - 1,
            specs,
            data,
        })
    }
}

pub fn build_value_tensor(
    bundle: &PathBundle,
    grid: &PricingGrid,
    specs: &[CondorSpec],
) -> Result<ValueTensor> {
    if specs.is_empty() {
        return Err(invalid("specs", "at least one portfolio is required"));
    }
    if grid.n_paths != bundle.n_paths() || grid.n_steps != bundle.n_steps() {
        return Err(invalid("grid", "pricing grid does not match the path bundle"));
    }
    let values = specs
        .iter()
        .map(|s| value_process(s, grid))
        .collect::<Result<Vec<_>>>()?;
    ValueTensor::from_slots(&bundle.s, &values, specs.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: [f64; 4], b: [f64; 4]) {
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn figure_strike_sets() {
        close(from_params(0.0, 0.04, 0.0, 1.0).unwrap(), [0.96, 1.0, 1.0, 1.04]);
        close(from_params(0.04, 0.04, 0.10, 1.0).unwrap(), [0.82, 0.86, 1.04, 1.08]);
        close(from_params(0.04, 0.04, -0.10, 1.0).unwrap(), [0.92, 0.96, 1.14, 1.18]);
        close(from_params(0.04, 0.04, 0.0, 1.0).unwrap(), [0.92, 0.96, 1.04, 1.08]);
        close(from_params(0.02, 0.14, 0.0, 1.0).unwrap(), [0.84, 0.98, 1.02, 1.16]);
    }

    #[test]
    fn from_params_validation() {
        assert!(from_params(-0.01, 0.04, 0.0, 1.0).is_err());
        assert!(from_params(0.02, 0.0, 0.0, 1.0).is_err());
        assert!(matches!(
            from_params(0.5, 0.6, 0.0, 1.0),
            Err(Error::StrikeOrderViolation(..))
        ));
    }

    #[test]
    fn strike_order() {
        assert!(CondorSpec::new([0.9, 1.0, 1.0, 1.1], 0.01).is_ok());
        assert!(CondorSpec::new([0.9, 1.01, 1.0, 1.1], 0.01).is_err());
        assert!(CondorSpec::new([0.9, 0.9, 1.0, 1.1], 0.01).is_err());
        assert!(CondorSpec::new([0.9, 0.95, 1.1, 1.1], 0.01).is_err());
    }

    #[test]
    fn terminal_payoff_regions() {
        let spec = CondorSpec::new([0.92, 0.96, 1.04, 1.08], 0.015).unwrap();
        assert_eq!(terminal_payoff(&spec, 1.0), 0.015);
        assert_eq!(terminal_payoff(&spec, 0.96), 0.015);
        assert_abs_diff_eq!(terminal_payoff(&spec, 0.85), 0.015 - 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(terminal_payoff(&spec, 1.3), 0.015 - 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(terminal_payoff(&spec, 0.96 - 0.015), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn breakevens_zero_the_payoff() {
        let spec = CondorSpec::new([0.92, 0.96, 1.04, 1.08], 0.012).unwrap();
        let (lo, hi) = breakevens(&spec).unwrap();
        assert_abs_diff_eq!(lo - 1.0, -(hi - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(terminal_payoff(&spec, lo), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(terminal_payoff(&spec, hi), 0.0, epsilon = 1e-15);

        let tiny = CondorSpec::new([0.92, 0.96, 1.04, 1.08], 1e-12).unwrap();
        let (lo, hi) = breakevens(&tiny).unwrap();
        assert_abs_diff_eq!(lo, 0.96, epsilon = 1e-11);
        assert_abs_diff_eq!(hi, 1.04, epsilon = 1e-11);

        let rich = CondorSpec::new([0.92, 0.96, 1.04, 1.08], 0.05).unwrap();
        assert!(matches!(breakevens(&rich), Err(Error::NoBreakeven { .. })));
    }

    proptest! {
        #[test]
        fn payoff_is_bounded(
            k1 in 0.5f64..1.0, w1 in 0.001f64..0.2, gap in 0.0f64..0.3, w2 in 0.001f64..0.2,
            credit in 0.0001f64..0.1, s in 0.01f64..3.0,
        ) {
            let spec = CondorSpec::new([k1, k1 + w1, k1 + w1 + gap, k1 + w1 + gap + w2], credit).unwrap();
            let pay = terminal_payoff(&spec, s);
            prop_assert!(pay <= credit + 1e-15);
            prop_assert!(pay >= credit - w1.max(w2) - 1e-12);
        }

        #[test]
        fn structure_round_trip(xi in 0u32..10, hi in 1u32..8, bi in -6i32..=6) {
            let (x, xhat, xbar) = (0.02 * xi as f64, 0.02 * hi as f64, 0.02 * bi as f64);
            let k = from_params(x, xhat, xbar, 1.0).unwrap();
            let back = structure_of(k, 1.0);
            prop_assert!((back.xhat - xhat).abs() < 1e-12);
            prop_assert!((back.xbar - xbar).abs() < 1e-12);
            prop_assert!(((k[3] - k[2]) - (k[1] - k[0])).abs() < 1e-12);
            if xbar >= 0.0 {
                prop_assert!((back.x - (x + xbar)).abs() < 1e-12);
            } else {
                prop_assert!((back.x - x).abs() < 1e-12);
            }
        }
    }
}
