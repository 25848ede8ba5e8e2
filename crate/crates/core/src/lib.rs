//! Rough-volatility simulation and Iron Condor stopping analysis.
//!
//! Pipeline: [`roughheston::simulate`] generates spot/variance paths,
//! [`pricer::build_pricing_grid`] values every leg along every path by nested
//! Monte Carlo, [`condor`] combines legs into portfolio value processes and
//! [`metrics`] reduces them to profit, success-rate, risk and stopping-time
//! statistics per market regime. [`theoremlab`] checks the late-stopping
//! result for bounded martingales and [`replay`] runs the same portfolios
//! over recorded option chains.

pub mod condor;
pub mod dataset;
pub mod error;
pub mod fgn;
pub mod matrix;
pub mod metrics;
pub mod pricer;
pub mod replay;
pub mod report;
pub mod rng;
pub mod roughheston;
pub mod stats;
pub mod theoremlab;

pub use error::{Error, Result};
pub use fgn::HurstParam;
pub use matrix::Matrix;
pub use roughheston::{ModelParams, PathBundle, SimGrid};
