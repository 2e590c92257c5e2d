//! Command-line interface: subcommand parsing, dispatch, and result
//! persistence. Exit codes are documented in the README.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::diagnostics::{ar_order_map, lpml, mse_table, sensitivity_curve, threshold_ppm, OrderRule, Ppm};
use crate::error::{Error, Result};
use crate::explore::ar_order_map_exploratory;
use crate::io::{
    config_hash, read_config, read_design, read_fit, read_volume, write_design, write_fit,
    write_map, write_volume, BoundsCheck, ModeConfig, RunConfig,
};
use crate::ising::{ising_bounds, IsingBoundInput};
use crate::model::Dataset;
use crate::sampler::{fixed_order_baseline, run_chain};
use crate::simulate::{simulate, GroundTruth, SimConfig};

#[derive(Parser)]
#[command(name = "svaro", version, about = "Spatiotemporal regression with spatially varying AR noise order")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Simulate {
        /// Built-in design: "sim1" (varying order) or "sim2" (homogeneous AR(1)).
        #[arg(long)]
        preset: Option<String>,
        /// Run configuration holding a "sim" section (overrides --preset).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the posterior sampler and persist chain summaries.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Volume header path (overrides the config).
        #[arg(long)]
        y: Option<PathBuf>,
        /// Design CSV path (overrides the config).
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// "svaro" or "fixed:P0".
        #[arg(long)]
        mode: Option<String>,
    },
    /// Threshold the stored probability map into an activation map.
    Ppm {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        delta_p: f64,
        /// Also write 8-bit graymap previews (2D grids).
        #[arg(long)]
        pgm: bool,
    },
    /// Log pseudo-marginal likelihood of a stored fit.
    Lpml {
        #[arg(long)]
        fit: PathBuf,
    },
    /// Mean squared error of posterior means against stored ground truth.
    Mse {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Sensitivity across probability thresholds against stored ground truth.
    Sensitivity {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated thresholds; default 0.90,0.925,0.95,0.975,0.99.
        #[arg(long)]
        grid: Option<String>,
        /// Activation definition: "top10" or "top5".
        #[arg(long, default_value = "top10")]
        top: String,
        /// CSV output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior AR-order map and histogram from a stored fit.
    OrderMap {
        #[arg(long)]
        fit: PathBuf,
        /// "freq" (median-frequency rule) or "mean" (rounded posterior mean).
        #[arg(long, default_value = "freq")]
        rule: String,
        #[arg(long)]
        pgm: bool,
    },
    /// Exploratory per-voxel least squares + AIC order map.
    Explore {
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 12)]
        p_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ising hyperparameter feasibility report.
    Bounds {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        pi: f64,
        #[arg(long)]
        r2: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        beta0: Option<f64>,
        #[arg(long)]
        beta1: Option<f64>,
    },
}

/// Entry point for the binary.
pub fn run() -> i32 {
    dispatch(std::env::args_os())
}

/// Parses and executes `argv`; returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match run_command(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_command(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { preset, config, seed, out } => cmd_simulate(preset, config, seed, &out),
        Command::Fit { config, y, design, out, seed, burnin, samples, thin, mode } => {
            cmd_fit(&config, y, design, out, seed, burnin, samples, thin, mode)
        }
        Command::Ppm { fit, delta_p, pgm } => cmd_ppm(&fit, delta_p, pgm),
        Command::Lpml { fit } => {
            let stored = read_fit(&fit)?;
            let value = lpml(&stored.to_chain())?;
            println!("lpml={value}");
            Ok(())
        }
        Command::Mse { fit, truth } => cmd_mse(&fit, &truth),
        Command::Sensitivity { fit, truth, grid, top, out } => {
            cmd_sensitivity(&fit, &truth, grid, &top, out)
        }
        Command::OrderMap { fit, rule, pgm } => cmd_order_map(&fit, &rule, pgm),
        Command::Explore { y, design, p_max, out } => cmd_explore(&y, &design, p_max, &out),
        Command::Bounds { n, pi, r2, t, beta0, beta1 } => {
            let report = bounds_report(n, pi, r2, t, beta0, beta1)?;
            println!("{report}");
            Ok(())
        }
    }
}

fn cmd_simulate(
    preset: Option<String>,
    config: Option<PathBuf>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let sim_cfg: SimConfig = if let Some(path) = config {
        let run: RunConfig = read_config(&path)?;
        run.sim.ok_or_else(|| Error::Config("configuration has no \"sim\" section".into()))?
    } else {
        match preset.as_deref() {
            Some("sim1") => SimConfig::sim1(),
            Some("sim2") => SimConfig::sim2(),
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected \"sim1\" or \"sim2\""
                )))
            }
            None => return Err(Error::Config("pass --preset or --config".into())),
        }
    };
    let (dataset, truth) = simulate(&sim_cfg, seed)?;
    fs::create_dir_all(out)?;
    let hash = config_hash(&sim_cfg);
    write_volume(out, "y", &dataset.y, &dataset.graph, "a.u.", Some(seed), Some(hash.clone()))?;
    write_design(&out.join("design.csv"), &dataset.x_full)?;
    crate::io::atomic_write(&out.join("truth.json"), &serde_json::to_vec_pretty(&truth)?)?;
    println!(
        "simulate: wrote {} voxels x {} timepoints to {} (seed={seed}, config={hash})",
        dataset.n,
        dataset.t,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    config_path: &Path,
    y: Option<PathBuf>,
    design: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    burnin: Option<usize>,
    samples: Option<usize>,
    thin: Option<usize>,
    mode: Option<String>,
) -> Result<()> {
    let mut cfg = read_config(config_path)?;
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }
    if let Some(b) = burnin {
        cfg.sampler.n_burnin = b;
    }
    if let Some(s) = samples {
        cfg.sampler.n_samples = s;
    }
    if let Some(t) = thin {
        cfg.sampler.thin = t;
    }
    if let Some(m) = mode {
        cfg.mode = parse_mode(&m)?;
    }

    let y_path = y
        .or_else(|| cfg.y.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no observation volume given (config \"y\" or --y)".into()))?;
    let design_path = design
        .or_else(|| cfg.design.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no design given (config \"design\" or --design)".into()))?;
    let out_dir = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no output directory (config \"output_dir\" or --out)".into()))?;

    let (header, y_data, graph) = read_volume(&y_path)?;
    let x_full = read_design(&design_path)?;
    if x_full.nrows() != header.t {
        return Err(Error::Config(format!(
            "design has {} rows but the volume has {} timepoints",
            x_full.nrows(),
            header.t
        )));
    }
    let k = x_full.ncols();
    let hyper = cfg.hyper.to_hyperparams(k)?;
    let dataset = Dataset::new(y_data, x_full, graph, hyper.p)?;

    // Feasibility is advisory: warn, never block.
    let bounds_assumptions = cfg.bounds_check.clone().unwrap_or_default();
    warn_on_infeasible_betas(&hyper, dataset.n, dataset.t as f64, &bounds_assumptions);

    let chain = match cfg.mode {
        ModeConfig::Svaro => run_chain(&dataset, &hyper, &cfg.sampler)?,
        ModeConfig::FixedOrder(p0) => fixed_order_baseline(&dataset, &hyper, &cfg.sampler, p0)?,
    };
    write_fit(&out_dir, &chain, &dataset.graph, dataset.t)?;
    println!(
        "fit: n_draws={} seed={} out={} config={}",
        chain.n_draws,
        chain.seed,
        out_dir.display(),
        config_hash(&cfg)
    );
    Ok(())
}

fn parse_mode(text: &str) -> Result<ModeConfig> {
    if text == "svaro" {
        return Ok(ModeConfig::Svaro);
    }
    if let Some(rest) = text.strip_prefix("fixed:") {
        let p0: usize = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad fixed order in mode {text:?}")))?;
        return Ok(ModeConfig::FixedOrder(p0));
    }
    Err(Error::Config(format!("unknown mode {text:?}; expected \"svaro\" or \"fixed:P0\"")))
}

fn warn_on_infeasible_betas(
    hyper: &crate::model::Hyperparams,
    n: usize,
    t_len: f64,
    assumptions: &BoundsCheck,
) {
    let input = IsingBoundInput { n, pi_p: assumptions.pi, r2: assumptions.r2, t_len };
    if let Ok(bound) = ising_bounds(input) {
        for p in 0..hyper.p {
            if !bound.feasible_low_order(hyper.beta0[p], hyper.beta1[p]) {
                eprintln!(
                    "warning: order {}: beta0 + {:.2} * beta1 = {:.3} < {:.3}; the indicator field may mix poorly",
                    p + 1,
                    bound.coef,
                    hyper.beta0[p] + bound.coef * hyper.beta1[p],
                    bound.rhs
                );
            }
        }
    }
}

fn cmd_ppm(fit_dir: &Path, delta_p: f64, pgm: bool) -> Result<()> {
    let stored = read_fit(fit_dir)?;
    let map = Ppm {
        values: stored.ppm.clone(),
        contrast: stored.summary.contrast.clone(),
        delta_e: stored.summary.delta_e,
        n_draws: stored.summary.n_draws,
    };
    let active = threshold_ppm(&map, delta_p)?;
    let active_f64: Vec<f64> = active.iter().map(|&a| f64::from(u8::from(a))).collect();
    write_map(fit_dir, "activation", &active_f64, &stored.graph, pgm)?;
    if pgm {
        write_map(fit_dir, "ppm", &stored.ppm, &stored.graph, true)?;
    }
    println!(
        "ppm: {} of {} voxels active at delta_p={delta_p}",
        active.iter().filter(|&&a| a).count(),
        active.len()
    );
    Ok(())
}

fn read_truth(path: &Path) -> Result<GroundTruth> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn cmd_mse(fit_dir: &Path, truth_path: &Path) -> Result<()> {
    let stored = read_fit(fit_dir)?;
    let truth = read_truth(truth_path)?;
    let table = mse_table(&stored.to_chain(), &truth)?;
    for (i, v) in table.w.iter().enumerate() {
        println!("mse,w,{},{v}", i + 1);
    }
    for (i, v) in table.a.iter().enumerate() {
        println!("mse,a,{},{v}", i + 1);
    }
    Ok(())
}

fn cmd_sensitivity(
    fit_dir: &Path,
    truth_path: &Path,
    grid: Option<String>,
    top: &str,
    out: Option<PathBuf>,
) -> Result<()> {
    let stored = read_fit(fit_dir)?;
    let truth = read_truth(truth_path)?;
    let grid: Vec<f64> = match grid {
        Some(text) => text
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad grid value {tok:?}")))
            })
            .collect::<Result<_>>()?,
        None => vec![0.90, 0.925, 0.95, 0.975, 0.99],
    };
    let active = match top {
        "top10" => &truth.active_top10,
        "top5" => &truth.active_top5,
        other => {
            return Err(Error::Config(format!(
                "unknown activation definition {other:?}; expected \"top10\" or \"top5\""
            )))
        }
    };
    let map = Ppm {
        values: stored.ppm.clone(),
        contrast: stored.summary.contrast.clone(),
        delta_e: stored.summary.delta_e,
        n_draws: stored.summary.n_draws,
    };
    let curve = sensitivity_curve(&map, active, &grid, top)?;
    let mut csv = String::from("delta_p,sensitivity\n");
    for (g, s) in curve.grid.iter().zip(&curve.sensitivity) {
        csv.push_str(&format!("{g},{s}\n"));
    }
    match out {
        Some(path) => crate::io::atomic_write(&path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_order_map(fit_dir: &Path, rule: &str, pgm: bool) -> Result<()> {
    let stored = read_fit(fit_dir)?;
    let rule = match rule {
        "freq" => OrderRule::MedianFrequency,
        "mean" => OrderRule::RoundedMean,
        other => {
            return Err(Error::Config(format!(
                "unknown rule {other:?}; expected \"freq\" or \"mean\""
            )))
        }
    };
    let (orders, histogram) = ar_order_map(&stored.to_chain(), rule);
    let values: Vec<f64> = orders.iter().map(|&o| o as f64).collect();
    write_map(fit_dir, "order_map", &values, &stored.graph, pgm)?;
    let mut csv = String::from("order,count\n");
    for (order, count) in histogram.iter().enumerate() {
        csv.push_str(&format!("{order},{count}\n"));
    }
    crate::io::atomic_write(&fit_dir.join("order_histogram.csv"), csv.as_bytes())?;
    println!(
        "order-map: histogram {:?} written to {}",
        histogram,
        fit_dir.join("order_histogram.csv").display()
    );
    Ok(())
}

fn cmd_explore(y_path: &Path, design_path: &Path, p_max: usize, out: &Path) -> Result<()> {
    let (header, y_data, graph) = read_volume(y_path)?;
    let x_full = read_design(design_path)?;
    if x_full.nrows() != header.t {
        return Err(Error::Config(format!(
            "design has {} rows but the volume has {} timepoints",
            x_full.nrows(),
            header.t
        )));
    }
    let dataset = Dataset::new(y_data, x_full, graph, 0)?;
    let orders = ar_order_map_exploratory(&dataset, p_max)?;
    fs::create_dir_all(out)?;
    let values: Vec<f64> = orders.iter().map(|&o| o as f64).collect();
    write_map(out, "aic_order_map", &values, &dataset.graph, true)?;
    let mut histogram = vec![0usize; p_max + 1];
    for &o in &orders {
        histogram[o] += 1;
    }
    let mut csv = String::from("order,count\n");
    for (order, count) in histogram.iter().enumerate() {
        csv.push_str(&format!("{order},{count}\n"));
    }
    crate::io::atomic_write(&out.join("aic_order_histogram.csv"), csv.as_bytes())?;
    println!("explore: order histogram {histogram:?}");
    Ok(())
}

/// Formats the feasibility report printed by the `bounds` subcommand.
pub fn bounds_report(
    n: usize,
    pi: f64,
    r2: f64,
    t: f64,
    beta0: Option<f64>,
    beta1: Option<f64>,
) -> Result<String> {
    let bound = ising_bounds(IsingBoundInput { n, pi_p: pi, r2, t_len: t })?;
    let mut report = format!(
        "v_p={:.3} coef={:.2} rhs={:.2}\nlow-order constraint: beta0 + {:.2} * beta1 >= {:.2}\nhigh-order constraint: beta0 + 3 * beta1 < 0",
        bound.v_p, bound.coef, bound.rhs, bound.coef, bound.rhs
    );
    if let (Some(b0), Some(b1)) = (beta0, beta1) {
        report.push_str(&format!(
            "\n(beta0, beta1) = ({b0}, {b1}): low-order {}, high-order {}",
            if bound.feasible_low_order(b0, b1) { "feasible" } else { "INFEASIBLE" },
            if bound.feasible_high_order(b0, b1) { "feasible" } else { "INFEASIBLE" },
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_report_worked_example() {
        let report = bounds_report(56526, 0.1, 0.05, 352.0, Some(-0.2), Some(0.3)).unwrap();
        assert!(report.contains("coef=2.83"), "{report}");
        assert!(report.contains("rhs=-9.26"), "{report}");
        assert!(report.contains("low-order feasible"), "{report}");
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(parse_mode("svaro").unwrap(), ModeConfig::Svaro);
        assert_eq!(parse_mode("fixed:1").unwrap(), ModeConfig::FixedOrder(1));
        assert!(parse_mode("fixed:x").is_err());
        assert!(parse_mode("else").is_err());
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let code = dispatch(["svaro", "frobnicate"]);
        assert_eq!(code, 2);
    }
}
