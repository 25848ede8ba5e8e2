//! Fractional Gaussian noise at unit lag.
//!
//! Samples have zero mean, unit variance and autocovariance
//! `½(|k+1|^{2H} + |k-1|^{2H} - 2|k|^{2H})`. Consumers that need a time step
//! `dt` rescale by `dt^H`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// Largest size accepted by the dense Cholesky generator.
pub const CHOLESKY_MAX_N: usize = 2048;

const EMBEDDING_TOLERANCE: f64 = 1e-10;

/// Hurst exponent in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(invalid("h", format!("Hurst exponent must lie in (0, 1), got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// True for the anti-persistent regime H < 1/2.
    pub fn is_rough(self) -> bool {
        self.0 < 0.5
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    pub increments: Vec<f64>,
    pub h: HurstParam,
    pub seed: u64,
}

impl NoiseBlock {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Autocovariance of unit-lag fGn at integer lag `k`.
pub fn autocovariance(h: HurstParam, k: u64) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
}

/// Draws `n` fGn samples by circulant embedding of the covariance sequence
/// (transform length `2(n-1)`).
pub fn sample_fgn(h: HurstParam, n: usize, seed: u64) -> Result<NoiseBlock> {
    if n == 0 {
        return Err(invalid("n", "sample count must be positive"));
    }
    let mut rng = stream_rng(seed, 0);
    if n == 1 {
        let z: f64 = StandardNormal.sample(&mut rng);
        return Ok(NoiseBlock {
            increments: vec![z],
            h,
            seed,
        });
    }

    let m = 2 * (n - 1);
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j < n { j } else { m - j };
            Complex::new(autocovariance(h, lag as u64), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let mut spectrum = Vec::with_capacity(m);
    for (index, lambda) in row.iter().map(|c| c.re).enumerate() {
        if lambda < -EMBEDDING_TOLERANCE {
            return Err(Error::EmbeddingNotNonnegative { index, value: lambda });
        }
        let amp = (lambda.max(0.0) / m as f64).sqrt();
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        spectrum.push(Complex::new(amp * re, amp * im));
    }
    fft.process(&mut spectrum);

    Ok(NoiseBlock {
        increments: spectrum[..n].iter().map(|c| c.re).collect(),
        h,
        seed,
    })
}

/// Covariance matrix of `n` consecutive fGn samples.
pub fn covariance_matrix(h: HurstParam, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| autocovariance(h, i.abs_diff(j) as u64))
}

/// Exact fGn samples through the lower Cholesky factor of the Toeplitz
/// covariance. Dense and O(n^3); used as a reference for [`sample_fgn`].
pub fn sample_fgn_cholesky(h: HurstParam, n: usize, seed: u64) -> Result<NoiseBlock> {
    if n == 0 {
        return Err(invalid("n", "sample count must be positive"));
    }
    if n > CHOLESKY_MAX_N {
        return Err(Error::SizeExceeded {
            n,
            max: CHOLESKY_MAX_N,
        });
    }
    let chol = covariance_matrix(h, n)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let mut rng = stream_rng(seed, 0);
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let x = chol.l() * z;
    Ok(NoiseBlock {
        increments: x.iter().copied().collect(),
        h,
        seed,
    })
}

/// Sample autocovariance at lag `k` for a zero-mean series.
pub fn sample_autocovariance(xs: &[f64], k: usize) -> f64 {
    if k >= xs.len() {
        return f64::NAN;
    }
    let n = xs.len() - k;
    xs[..n].iter().zip(&xs[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}
