use condor_core::pricer::{price_leg, OptionKind};
use condor_core::roughheston::{continue_paths, estimate_log_variance_roughness, simulate};
use condor_core::stats::{ks_two_sample, mean_se};
use condor_core::{HurstParam, ModelParams, SimGrid};

fn grid(n_paths: usize, seed: u64) -> SimGrid {
    SimGrid {
        n_paths,
        master_seed: seed,
        ..SimGrid::default()
    }
}

#[test]
fn constant_variance_reduces_to_gbm() {
    let params = ModelParams {
        nu: 0.0,
        kappa: 0.0,
        v0: 0.04,
        h: HurstParam::new(0.3).unwrap(),
        ..ModelParams::default()
    };
    let b = simulate(&params, &grid(10_000, 11), 1.0).unwrap();
    assert!(b.v.as_slice().iter().all(|&v| v == 0.04));
    let logs: Vec<f64> = b.terminal_spots().iter().map(|s| s.ln()).collect();
    let (m, se) = mean_se(&logs);
    let expected = -0.5 * 0.04 * 63.0 / 252.0;
    assert!((m - expected).abs() < 3.0 * se, "mean {m} vs {expected}, se {se}");
}

#[test]
fn driftless_spot_is_a_martingale() {
    let b = simulate(&ModelParams::default(), &grid(10_000, 12), 1.0).unwrap();
    let (m, se) = mean_se(&b.terminal_spots());
    assert!((m - 1.0).abs() < 3.0 * se, "E[S_T] = {m}, se {se}");
}

#[test]
fn default_variance_paths_are_rough() {
    let b = simulate(&ModelParams::default(), &grid(2_000, 13), 1.0).unwrap();
    let h = estimate_log_variance_roughness(&b, 10);
    assert!((0.05..=0.2).contains(&h), "estimated H = {h}");
}

#[test]
fn smooth_variance_is_not_flagged_rough() {
    let params = ModelParams {
        h: HurstParam::new(0.5).unwrap(),
        ..ModelParams::default()
    };
    let b = simulate(&params, &grid(2_000, 13), 1.0).unwrap();
    let h = estimate_log_variance_roughness(&b, 10);
    assert!(h > 0.35, "estimated H = {h}");
}

#[test]
fn continuation_from_origin_matches_fresh_simulation() {
    let params = ModelParams::default();
    let outer = simulate(&params, &grid(1, 14), 1.0).unwrap();
    let cont = continue_paths(&outer, 0, 0, 5_000, 99).unwrap();
    let fresh = simulate(&params, &grid(5_000, 15), 1.0).unwrap();
    let (_, p) = ks_two_sample(&cont.terminal_spots(), &fresh.terminal_spots());
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn halving_dt_moves_atm_call_within_two_se() {
    let params = ModelParams::default();
    let price = |n_steps: usize, dt: f64| {
        let g = SimGrid {
            n_paths: 1,
            n_steps,
            dt,
            master_seed: 16,
        };
        let b = simulate(&params, &g, 1.0).unwrap();
        price_leg(&b, 0, 0, OptionKind::Call, 1.0, 20_000, 17 + n_steps as u64).unwrap()
    };
    let coarse = price(63, 1.0 / 252.0);
    let fine = price(126, 1.0 / 504.0);
    let se = coarse.std_error.hypot(fine.std_error);
    assert!(
        (coarse.value - fine.value).abs() < 2.0 * se,
        "{} vs {} (se {se})",
        coarse.value,
        fine.value
    );
}

#[test]
fn bit_identical_across_worker_counts() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&ModelParams::default(), &grid(300, 18), 1.0).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let bits = |m: &condor_core::Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.s), bits(&b.s));
    assert_eq!(bits(&a.v), bits(&b.v));
    assert_eq!(bits(&a.dw2), bits(&b.dw2));
}
