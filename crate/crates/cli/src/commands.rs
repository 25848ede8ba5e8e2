use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use chrono::NaiveDate;

use condor_core::condor::{build_value_tensor, from_params, from_strikes, value_process, CondorSpec};
use condor_core::metrics::{evaluate, partition, phi_process, run_sweeps, SweepAxis, SweepResult};
use condor_core::pricer::build_pricing_grid;
use condor_core::theoremlab::{black_scholes_theta_report, run_theorem_check, supermartingale_tau};
use condor_core::{dataset, replay, report, roughheston};

use crate::config::{ConfigError, ExperimentConfig};

fn write(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn simulate(cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let start = Instant::now();
    let bundle = roughheston::simulate(&cfg.model, &cfg.grid, 1.0)?;
    let dir = cfg.dataset_dir();
    dataset::save_bundle(&dir, &bundle)?;
    println!(
        "simulated n_paths={} n_steps={} seed={} elapsed={:.2?} -> {}",
        cfg.grid.n_paths,
        cfg.grid.n_steps,
        cfg.grid.master_seed,
        start.elapsed(),
        dir.display()
    );
    Ok(dir)
}

fn specs_for(cfg: &ExperimentConfig, grid: &condor_core::pricer::PricingGrid) -> anyhow::Result<Vec<CondorSpec>> {
    cfg.portfolios
        .iter()
        .map(|p| {
            let k = from_params(p.x, p.xhat, p.xbar, 1.0)?;
            Ok(from_strikes(k, grid, 0, 0)?.with_params(*p))
        })
        .collect()
}

pub fn price(cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.dataset_dir();
    if !dir.join(dataset::MANIFEST).exists() {
        return Err(ConfigError(format!("no dataset in {}; run `condor simulate` first", dir.display())).into());
    }
    let start = Instant::now();
    let bundle = dataset::load_bundle(&dir)?;
    let grid = build_pricing_grid(&bundle, &cfg.strikes, cfg.n_inner, cfg.pricing_seed)?;
    dataset::save_pricing(&dir, &grid)?;
    let specs = specs_for(cfg, &grid)?;
    let tensor = build_value_tensor(&bundle, &grid, &specs)?;
    dataset::save_tensor(&dir, &tensor)?;
    println!(
        "priced {} strikes x {} paths x {} steps, n_inner={} elapsed={:.2?} -> {}",
        grid.strikes.len(),
        grid.n_paths,
        grid.n_steps,
        grid.n_inner,
        start.elapsed(),
        dir.display()
    );
    Ok(dir)
}

pub fn metrics(cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.dataset_dir();
    let bundle = dataset::load_bundle(&dir).context("loading dataset (run `simulate` and `price` first)")?;
    let grid = dataset::load_pricing(&dir).context("loading pricing grid (run `price` first)")?;
    let part = partition(bundle.s0, &bundle.terminal_spots())?;
    let rows = specs_for(cfg, &grid)?
        .iter()
        .map(|spec| {
            let phi = phi_process(&value_process(spec, &grid)?, spec.credit)?;
            evaluate(spec.params.expect("set by specs_for"), &phi, &part)
        })
        .collect::<condor_core::Result<Vec<_>>>()?;
    let path = cfg.output_dir.join("metrics.csv");
    write(&path, &report::portfolio_metrics_csv(&rows))?;
    println!("metrics for {} portfolios -> {}", rows.len(), path.display());
    Ok(path)
}

fn run_and_write(cfg: &ExperimentConfig, axes: &[SweepAxis]) -> anyhow::Result<Vec<SweepResult>> {
    let configs = axes.iter().map(|&a| cfg.sweep_config(a)).collect::<anyhow::Result<Vec<_>>>()?;
    let start = Instant::now();
    let results = run_sweeps(&configs, &cfg.model, &cfg.grid, cfg.n_inner)?;
    for r in &results {
        let files = report::write_sweep(&cfg.output_dir, r)?;
        println!(
            "{} sweep: {} rows, {} pooled paths -> {}",
            r.config.axis.as_str(),
            r.points.len(),
            r.n_paths,
            files[0].display()
        );
    }
    println!("elapsed={:.2?}", start.elapsed());
    Ok(results)
}

pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis) -> anyhow::Result<()> {
    let results = run_and_write(cfg, &[axis])?;
    print!("{}", report::metrics_markdown(axis, &results[0].rows()));
    Ok(())
}

/// All three sweeps on shared simulations plus a combined Markdown report.
pub fn full_report(cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let axes = [SweepAxis::Moneyness, SweepAxis::Span, SweepAxis::Asymmetry];
    let results = run_and_write(cfg, &axes)?;
    let mut md = String::from("# Iron Condor sweep report\n\n");
    let _ = writeln!(
        md,
        "{} paths per repeat, {} repeats, {} steps, n_inner = {}, seed = {}.\n",
        cfg.grid.n_paths, cfg.repeats, cfg.grid.n_steps, cfg.n_inner, cfg.grid.master_seed
    );
    for r in &results {
        let axis = r.config.axis;
        let _ = writeln!(
            md,
            "## {} (x = {}, xhat = {}, xbar = {} unless swept)\n",
            axis.as_str(),
            r.config.fixed.x,
            r.config.fixed.xhat,
            r.config.fixed.xbar
        );
        md.push_str(&report::metrics_markdown(axis, &r.rows()));
        let _ = writeln!(md, "\n![mean profit]({}_mean.svg)\n", axis.as_str());
    }
    let path = cfg.output_dir.join("report.md");
    write(&path, &md)?;
    println!("report -> {}", path.display());
    Ok(path)
}

/// Returns whether every seed passed.
pub fn theorem_check(cfg: &ExperimentConfig, inject_supermartingale: bool) -> anyhow::Result<bool> {
    let path = cfg.output_dir.join("theorem_check.txt");
    if inject_supermartingale {
        let n = cfg.theorem_configs()?[0].martingale.n_steps;
        let tau = supermartingale_tau(n);
        let body = format!("injected decreasing profit curve\nn_steps = {n}\ntau = {tau}\n");
        write(&path, &body)?;
        print!("{body}");
        return Ok(true);
    }
    let configs = cfg.theorem_configs()?;
    let start = Instant::now();
    let mut body = String::new();
    let mut passed = true;
    for c in &configs {
        let r = run_theorem_check(c)?;
        let ok = r.passed() && r.argmax == r.n_steps();
        passed &= ok;
        println!(
            "seed {}: violations={} argmax={} of {}",
            c.martingale.seed,
            r.violations.len(),
            r.argmax,
            r.n_steps()
        );
        let _ = writeln!(body, "[seed {}]", c.martingale.seed);
        let _ = writeln!(
            body,
            "k_low = {}\nk_high = {}\nshrink = {}\nn_paths = {}\nn_inner = {}",
            c.martingale.k_low, c.martingale.k_high, c.martingale.shrink, c.martingale.n_paths, c.n_inner
        );
        body.push_str(&r.to_text());
        body.push('\n');
    }
    let theta = black_scholes_theta_report()?;
    passed &= theta.passed();
    let _ = writeln!(body, "[theta ordering, Black-Scholes sigma=0.2]");
    let _ = writeln!(body, "result = {}", if theta.passed() { "pass" } else { "fail" });
    body.push_str(&theta.to_text());
    write(&path, &body)?;
    println!(
        "theta ordering: {} of {} points pass; elapsed={:.2?} -> {}",
        theta.points.iter().filter(|p| p.passed()).count(),
        theta.points.len(),
        start.elapsed(),
        path.display()
    );
    Ok(passed)
}

pub fn replay_cmd(cfg: &ExperimentConfig, chains: Option<&Path>) -> anyhow::Result<PathBuf> {
    let dir = chains
        .map(Path::to_path_buf)
        .or_else(|| cfg.replay.chains_dir.clone())
        .ok_or_else(|| ConfigError("no chains directory (use --chains or replay.chains_dir)".into()))?;
    if !dir.is_dir() {
        return Err(ConfigError(format!("chains directory {} does not exist", dir.display())).into());
    }
    let snapshots = replay::load_chains(&dir)?;
    let expiry = match &cfg.replay.expiry {
        Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| ConfigError(format!("replay.expiry `{s}` is not an ISO-8601 date")))?,
        None => replay::default_expiry(&snapshots)
            .ok_or_else(|| ConfigError("no expiry on or after the last snapshot".into()))?,
    };
    let result = replay::replay(&snapshots, expiry, &cfg.replay_portfolios())?;
    let pnl = cfg.output_dir.join("replay_pnl.csv");
    write(&pnl, &replay::pnl_csv(&result))?;
    write(&cfg.output_dir.join("replay_figure.csv"), &replay::figure_csv(&result))?;
    for s in &result.series {
        let p = s.spec.params.expect("set by select_strikes");
        println!(
            "{} ({}): strikes {:?} credit {:.4} final pnl {:.4}",
            replay::portfolio_id(&p),
            replay::orientation(&p),
            s.spec.strikes(),
            s.spec.credit,
            s.pnl.last().copied().unwrap_or(0.0)
        );
    }
    println!("{} dates -> {}", result.dates.len(), pnl.display());
    Ok(pnl)
}
