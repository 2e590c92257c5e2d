//! The MCMC engine: sweep scheduling, chain management, and output summaries.
//!
//! One chain owns one mutable state. Within a sweep the update order is fixed
//! (all `w_n`, all `a_n`, all indicator fields, all `alpha_k`, all `tau_p`,
//! all `lambda_n`); voxels of one sweep color update concurrently, as do the
//! fully independent blocks. Every draw site uses its own seed-derived stream,
//! so output is bit-identical across thread counts.

pub mod rngstream;
pub mod updates;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::GibbsForm;
use crate::lattice::{color_for_sweep, laplacian, LaplacianOperator, SweepColoring};
use crate::model::{Dataset, Hyperparams, ModelState, LN_2PI};
use rngstream::{stream, PHASE_A, PHASE_ALPHA, PHASE_GAMMA, PHASE_LAMBDA, PHASE_TAU, PHASE_W};
use updates::{update_a, update_alpha, update_lambda, update_tau, update_w};

/// How the latent state is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Per-voxel ridge least squares for `w`, zeros elsewhere, prior means for
    /// the precisions.
    #[default]
    Ridge,
    /// Everything at zero / prior means.
    Zeros,
}

/// Chain configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_burnin: usize,
    pub n_samples: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub seed: u64,
    /// Every `sw_period`-th indicator update uses Swendsen-Wang; the rest use
    /// single-site Gibbs. Zero disables SW.
    #[serde(default = "default_sw_period")]
    pub sw_period: usize,
    /// Retain per-draw per-voxel log densities (needed for LPML).
    #[serde(default)]
    pub store_loglik: bool,
    /// Retain thinned full draws of the state.
    #[serde(default)]
    pub store_draws: bool,
    /// Use the ones-only neighbor shorthand in the Gibbs indicator update
    /// instead of the exact agreement form.
    #[serde(default)]
    pub gamma_ones_form: bool,
    #[serde(default)]
    pub init: InitPolicy,
}

fn default_thin() -> usize {
    1
}

fn default_sw_period() -> usize {
    5
}

impl SamplerConfig {
    pub fn new(n_burnin: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            n_burnin,
            n_samples,
            thin: 1,
            seed,
            sw_period: 5,
            store_loglik: false,
            store_draws: false,
            gamma_ones_form: false,
            init: InitPolicy::Ridge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        Ok(())
    }

    fn gibbs_form(&self) -> GibbsForm {
        if self.gamma_ones_form {
            GibbsForm::OnesOnly
        } else {
            GibbsForm::Agreement
        }
    }
}

/// Running mean and variance accumulators (Welford).
#[derive(Debug, Clone, Default)]
struct Moments {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: usize,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { mean: vec![0.0; len], m2: vec![0.0; len], count: 0 }
    }

    fn push(&mut self, values: impl Iterator<Item = f64>) {
        self.count += 1;
        let c = self.count as f64;
        for (i, v) in values.enumerate() {
            let delta = v - self.mean[i];
            self.mean[i] += delta / c;
            self.m2[i] += delta * (v - self.mean[i]);
        }
    }

    fn variance(&self) -> Vec<f64> {
        let denom = (self.count as f64 - 1.0).max(1.0);
        self.m2.iter().map(|&m| m / denom).collect()
    }
}

/// Posterior summaries and optional retained draws from one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub n_draws: usize,
    /// Posterior means/variances of the regression coefficients, `K x N`.
    pub w_mean: Array2<f64>,
    pub w_var: Array2<f64>,
    /// Posterior means/variances of the AR coefficients, `P x N`.
    pub a_mean: Array2<f64>,
    pub a_var: Array2<f64>,
    pub lambda_mean: Vec<f64>,
    pub lambda_var: Vec<f64>,
    /// Inclusion frequency per `(order, voxel)`.
    pub gamma_freq: Array2<f64>,
    /// Posterior mean of the maximum included order per voxel.
    pub mean_max_order: Vec<f64>,
    /// Draws with `c^T w_n > delta_e`, per voxel.
    pub exceed_count: Vec<u64>,
    pub contrast: Vec<f64>,
    pub delta_e: f64,
    /// Per-draw per-voxel conditional log densities, `n_draws x N`.
    pub loglik: Option<Array2<f64>>,
    /// Thinned full draws.
    pub draws: Option<Vec<ModelState>>,
    pub seed: u64,
    pub config: SamplerConfig,
}

impl ChainOutput {
    pub fn exceed_probability(&self) -> Vec<f64> {
        self.exceed_count
            .iter()
            .map(|&c| c as f64 / self.n_draws.max(1) as f64)
            .collect()
    }
}

/// Runs the full posterior sampler.
pub fn run_chain(dataset: &Dataset, hyper: &Hyperparams, config: &SamplerConfig) -> Result<ChainOutput> {
    run_chain_mode(dataset, hyper, config, None)
}

/// Runs the sampler with the indicators clamped to a fixed order `p0`
/// (`gamma_pn = 1` for the first `p0` orders, 0 above) and indicator updates
/// skipped; this realizes the constant-order baseline model.
pub fn fixed_order_baseline(
    dataset: &Dataset,
    hyper: &Hyperparams,
    config: &SamplerConfig,
    p0: usize,
) -> Result<ChainOutput> {
    if p0 > hyper.p {
        return Err(Error::Config(format!(
            "fixed order {p0} exceeds the maximum order {}",
            hyper.p
        )));
    }
    run_chain_mode(dataset, hyper, config, Some(p0))
}

fn run_chain_mode(
    dataset: &Dataset,
    hyper: &Hyperparams,
    config: &SamplerConfig,
    clamp: Option<usize>,
) -> Result<ChainOutput> {
    hyper.validate(dataset.k)?;
    config.validate()?;
    if hyper.p != dataset.p {
        return Err(Error::DimensionMismatch(format!(
            "hyperparameters use max order {} but the dataset embeds {}",
            hyper.p, dataset.p
        )));
    }
    let lap = laplacian(&dataset.graph);
    let coloring = color_for_sweep(&dataset.graph);
    let (k, p, n) = (dataset.k, dataset.p, dataset.n);
    let t_minus_p = (dataset.t - dataset.p) as f64;

    let mut state = init_state(dataset, hyper, config, clamp);

    let mut w_mom = Moments::new(k * n);
    let mut a_mom = Moments::new(p * n);
    let mut lam_mom = Moments::new(n);
    let mut gamma_freq = vec![0.0; p * n];
    let mut max_order_mean = vec![0.0; n];
    let mut exceed = vec![0u64; n];
    let mut loglik_rows: Vec<Vec<f64>> = Vec::new();
    let mut draws: Vec<ModelState> = Vec::new();

    let total = config.n_burnin + config.n_samples;
    let mut n_draws = 0usize;
    for sweep in 0..total {
        let ssr = sweep_once(&mut state, dataset, hyper, &lap, &coloring, config, clamp, sweep)
            .map_err(|e| Error::Numerical(format!("sweep {sweep}: {e}")))?;

        if sweep < config.n_burnin {
            continue;
        }
        let post = sweep - config.n_burnin;
        if (post + 1) % config.thin != 0 {
            continue;
        }
        n_draws += 1;
        w_mom.push(state.w.iter().copied());
        a_mom.push(state.a.iter().copied());
        lam_mom.push(state.lambda.iter().copied());
        for (i, &g) in state.gamma.iter().enumerate() {
            gamma_freq[i] += g as f64;
        }
        for voxel in 0..n {
            let mut max_order = 0usize;
            for order in 0..p {
                if state.gamma[(order, voxel)] == 1 {
                    max_order = order + 1;
                }
            }
            max_order_mean[voxel] += max_order as f64;
            let c_dot: f64 =
                (0..k).map(|ki| hyper.contrast[ki] * state.w[(ki, voxel)]).sum();
            if c_dot > hyper.delta_e {
                exceed[voxel] += 1;
            }
        }
        if config.store_loglik {
            let row: Vec<f64> = (0..n)
                .map(|voxel| {
                    0.5 * t_minus_p * (state.lambda[voxel].ln() - LN_2PI)
                        - 0.5 * state.lambda[voxel] * ssr[voxel]
                })
                .collect();
            loglik_rows.push(row);
        }
        if config.store_draws {
            draws.push(state.clone());
        }
    }

    let loglik = if config.store_loglik {
        let mut arr = Array2::zeros((n_draws, n));
        for (i, row) in loglik_rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                arr[(i, j)] = v;
            }
        }
        Some(arr)
    } else {
        None
    };

    let d = n_draws.max(1) as f64;
    Ok(ChainOutput {
        n_draws,
        w_mean: Array2::from_shape_vec((k, n), w_mom.mean.clone()).expect("shape"),
        w_var: Array2::from_shape_vec((k, n), w_mom.variance()).expect("shape"),
        a_mean: Array2::from_shape_vec((p, n), a_mom.mean.clone()).expect("shape"),
        a_var: Array2::from_shape_vec((p, n), a_mom.variance()).expect("shape"),
        lambda_mean: lam_mom.mean.clone(),
        lambda_var: lam_mom.variance(),
        gamma_freq: Array2::from_shape_vec(
            (p, n),
            gamma_freq.iter().map(|&c| c / d).collect(),
        )
        .expect("shape"),
        mean_max_order: max_order_mean.iter().map(|&c| c / d).collect(),
        exceed_count: exceed,
        contrast: hyper.contrast.clone(),
        delta_e: hyper.delta_e,
        loglik,
        draws: if config.store_draws { Some(draws) } else { None },
        seed: config.seed,
        config: config.clone(),
    })
}

fn init_state(
    dataset: &Dataset,
    hyper: &Hyperparams,
    config: &SamplerConfig,
    clamp: Option<usize>,
) -> ModelState {
    let (k, p, n) = (dataset.k, dataset.p, dataset.n);
    let mut state = ModelState::zeros(k, p, n);
    state.alpha = vec![hyper.q1 * hyper.q2; k];
    state.tau = vec![hyper.u1 * hyper.u2; p];
    state.lambda = vec![hyper.r1 * hyper.r2; n];

    if config.init == InitPolicy::Ridge {
        // Ridge least squares on the conditioned block, one voxel at a time.
        let x = dataset.design();
        let rows = dataset.t - dataset.p;
        let mut xtx = nalgebra::DMatrix::zeros(k, k);
        for t in 0..rows {
            for i in 0..k {
                for j in 0..k {
                    xtx[(i, j)] += x[(t, i)] * x[(t, j)];
                }
            }
        }
        let ridge = 1e-6 * xtx.trace() / k as f64 + 1e-12;
        for i in 0..k {
            xtx[(i, i)] += ridge;
        }
        if let Some(chol) = nalgebra::Cholesky::new(xtx) {
            for voxel in 0..n {
                let mut xty = nalgebra::DVector::zeros(k);
                for t in 0..rows {
                    for i in 0..k {
                        xty[i] += x[(t, i)] * dataset.y[(dataset.p + t, voxel)];
                    }
                }
                let beta = chol.solve(&xty);
                for i in 0..k {
                    state.w[(i, voxel)] = beta[i];
                }
            }
        }
    }

    if let Some(p0) = clamp {
        for order in 0..p0 {
            for voxel in 0..n {
                state.gamma[(order, voxel)] = 1;
            }
        }
    }
    state
}

/// One full sweep. Returns the whitened residual sum of squares per voxel,
/// consistent with the post-sweep state (the `lambda` phase computes it last).
#[allow(clippy::too_many_arguments)]
fn sweep_once(
    state: &mut ModelState,
    dataset: &Dataset,
    hyper: &Hyperparams,
    lap: &LaplacianOperator,
    coloring: &SweepColoring,
    config: &SamplerConfig,
    clamp: Option<usize>,
    sweep: usize,
) -> Result<Vec<f64>> {
    let seed = config.seed;
    let sweep_id = sweep as u64;
    let (k, p, n) = (dataset.k, dataset.p, dataset.n);

    // Regression coefficients, color class by color class.
    for group in &coloring.groups {
        let new_w: Vec<(usize, Vec<f64>)> = group
            .par_iter()
            .map(|&voxel| {
                let mut rng = stream(seed, [sweep_id, PHASE_W, voxel as u64]);
                update_w(voxel, state, dataset, hyper, lap, &mut rng)
                    .map(|w| (voxel, w))
                    .map_err(|e| Error::Numerical(format!("w update, voxel {voxel}: {e}")))
            })
            .collect::<Result<_>>()?;
        for (voxel, w) in new_w {
            for i in 0..k {
                state.w[(i, voxel)] = w[i];
            }
        }
    }

    // AR coefficients, independent across voxels.
    if p > 0 {
        let new_a: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|voxel| {
                let mut rng = stream(seed, [sweep_id, PHASE_A, voxel as u64]);
                update_a(voxel, state, dataset, hyper, &mut rng)
                    .map_err(|e| Error::Numerical(format!("a update, voxel {voxel}: {e}")))
            })
            .collect::<Result<_>>()?;
        for (voxel, a) in new_a.into_iter().enumerate() {
            for i in 0..p {
                state.a[(i, voxel)] = a[i];
            }
        }
    }

    // Indicator fields, independent across orders; skipped when clamped.
    if clamp.is_none() && p > 0 {
        let use_sw = config.sw_period > 0 && (sweep + 1) % config.sw_period == 0;
        let rows: Vec<Vec<u8>> = (0..p)
            .into_par_iter()
            .map(|order| {
                let mut rng = stream(seed, [sweep_id, PHASE_GAMMA, order as u64]);
                let a_row: Vec<f64> = state.a.row(order).to_vec();
                let mut row = state.gamma.row(order).to_vec();
                if use_sw {
                    updates::gamma_row_sw(
                        &mut row,
                        &a_row,
                        state.tau[order],
                        hyper.beta0[order],
                        hyper.beta1[order],
                        hyper.epsilon,
                        &dataset.graph,
                        &mut rng,
                    )
                    .map_err(|e| Error::Numerical(format!("gamma SW, order {order}: {e}")))?;
                } else {
                    updates::gamma_row_gibbs(
                        &mut row,
                        &a_row,
                        state.tau[order],
                        hyper.beta0[order],
                        hyper.beta1[order],
                        hyper.epsilon,
                        &dataset.graph,
                        config.gibbs_form(),
                        &mut rng,
                    );
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        for (order, row) in rows.into_iter().enumerate() {
            for (voxel, g) in row.into_iter().enumerate() {
                state.gamma[(order, voxel)] = g;
            }
        }
    }

    // Spatial precisions.
    for ki in 0..k {
        let mut rng = stream(seed, [sweep_id, PHASE_ALPHA, ki as u64]);
        state.alpha[ki] = update_alpha(ki, state, hyper, lap, &mut rng);
    }

    // Slab precisions.
    for order in 0..p {
        let mut rng = stream(seed, [sweep_id, PHASE_TAU, order as u64]);
        state.tau[order] = update_tau(order, state, hyper, &mut rng);
    }

    // Innovation precisions; keep the residual sums for the draw records.
    let lam_ssr: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|voxel| {
            let mut rng = stream(seed, [sweep_id, PHASE_LAMBDA, voxel as u64]);
            update_lambda(voxel, state, dataset, hyper, &mut rng)
        })
        .collect();
    let mut ssr = vec![0.0; n];
    for (voxel, (lam, s)) in lam_ssr.into_iter().enumerate() {
        state.lambda[voxel] = lam;
        ssr[voxel] = s;
    }
    Ok(ssr)
}
