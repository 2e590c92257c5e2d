//! Scratch harness probe (not part of the test suite).

use std::time::Instant;

use svaro::diagnostics::{ar_order_map, lpml, mse_table, sensitivity_curve, OrderRule, Ppm};
use svaro::model::Hyperparams;
use svaro::sampler::{fixed_order_baseline, run_chain, SamplerConfig};
use svaro::simulate::{simulate_glmar, simulate_svaro, SimConfig};

fn main() {
    let rep: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let sweeps: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let sim2: bool = std::env::args().nth(3).map(|s| s == "sim2").unwrap_or(false);

    let t0 = Instant::now();
    let (ds, truth) = if sim2 {
        let cfg = SimConfig { p_max: 4, tau: vec![400.0; 4], ..SimConfig::sim2() };
        simulate_glmar(&cfg, 1000 + rep).unwrap()
    } else {
        let cfg = SimConfig { p_max: 4, tau: vec![20.0; 4], ..SimConfig::sim1() };
        simulate_svaro(&cfg, 1000 + rep).unwrap()
    };
    println!("simulate: {:?}", t0.elapsed());

    let mut hyper = Hyperparams::new(4, 2);
    hyper.delta_e = truth.delta_e_top10;
    let mut config = SamplerConfig::new(sweeps, sweeps, 9000 + rep);
    config.store_loglik = true;

    let t1 = Instant::now();
    let chain = run_chain(&ds, &hyper, &config).unwrap();
    println!("svaro fit: {:?}", t1.elapsed());

    let t2 = Instant::now();
    let base = fixed_order_baseline(&ds, &hyper, &config, 1).unwrap();
    println!("baseline fit: {:?}", t2.elapsed());

    // Order recovery.
    let (orders, hist) = ar_order_map(&chain, OrderRule::MedianFrequency);
    let truth_orders = truth.max_order();
    let within1 = orders
        .iter()
        .zip(&truth_orders)
        .filter(|&(&e, &t)| (e as i64 - t as i64).abs() <= 1)
        .count();
    let exact = orders.iter().zip(&truth_orders).filter(|&(&e, &t)| e == t).count();
    println!(
        "order recovery: {}/{} within +-1 ({:.1}%), {} exact; histogram {:?}",
        within1,
        orders.len(),
        100.0 * within1 as f64 / orders.len() as f64,
        exact,
        hist
    );

    // MSE + LPML directions.
    let mse_s = mse_table(&chain, &truth).unwrap();
    let mse_b = mse_table(&base, &truth).unwrap();
    println!("svaro  mse: w={:?} a1={:.5}", mse_s.w, mse_s.a[0]);
    println!("base   mse: w={:?} a1={:.5}", mse_b.w, mse_b.a[0]);
    let lp_s = lpml(&chain).unwrap();
    let lp_b = lpml(&base).unwrap();
    println!("lpml: svaro {lp_s:.1} vs baseline {lp_b:.1} (svaro better: {})", lp_s > lp_b);

    // Sensitivity dominance.
    let grid = [0.90, 0.925, 0.95, 0.975, 0.99];
    let ppm_s = Ppm {
        values: chain.exceed_probability(),
        contrast: hyper.contrast.clone(),
        delta_e: hyper.delta_e,
        n_draws: chain.n_draws,
    };
    let ppm_b = Ppm {
        values: base.exceed_probability(),
        contrast: hyper.contrast.clone(),
        delta_e: hyper.delta_e,
        n_draws: base.n_draws,
    };
    let c_s = sensitivity_curve(&ppm_s, &truth.active_top10, &grid, "top10").unwrap();
    let c_b = sensitivity_curve(&ppm_b, &truth.active_top10, &grid, "top10").unwrap();
    println!("svaro  sensitivity: {:?}", c_s.sensitivity);
    println!("base   sensitivity: {:?}", c_b.sensitivity);
    println!("total: {:?}", t0.elapsed());
}
