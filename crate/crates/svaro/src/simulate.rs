//! Synthetic data generation with known ground truth, plus the GMRF and AR
//! utilities the generators need.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{sample_ising_prior, PriorSampleConfig};
use crate::lattice::{build_lattice, laplacian, LaplacianOperator};
use crate::model::Dataset;
use crate::sampler::rngstream::{stream, PHASE_SIM};

/// Latent truth behind a simulated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True regression coefficients, `K x N`.
    pub w: Array2<f64>,
    /// True AR coefficients, `P x N`.
    pub a: Array2<f64>,
    /// True inclusion indicators, `P x N`.
    pub gamma: Array2<u8>,
    /// True innovation precisions.
    pub lambda: Vec<f64>,
    /// Contrast defining activation.
    pub contrast: Vec<f64>,
    /// Contrast magnitude cutoffs at the top 10% / top 5% of voxels.
    pub delta_e_top10: f64,
    pub delta_e_top5: f64,
    /// Voxels in the top 10% / top 5% by contrast magnitude.
    pub active_top10: Vec<bool>,
    pub active_top5: Vec<bool>,
}

impl GroundTruth {
    /// Largest included order per voxel (0 when no order is included).
    pub fn max_order(&self) -> Vec<usize> {
        let (p, n) = self.gamma.dim();
        (0..n)
            .map(|voxel| {
                (0..p).rev().find(|&order| self.gamma[(order, voxel)] == 1).map_or(0, |o| o + 1)
            })
            .collect()
    }
}

/// Which generative model produces the AR structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    /// Indicator fields from the Ising prior, slab coefficients per order.
    VaryingOrder,
    /// Homogeneous AR(1): the lag-one coefficient field is one smooth GMRF
    /// draw, all higher orders are exactly zero.
    HomogeneousAr1 {
        /// GMRF precision scale for the coefficient field.
        ar_precision_scale: f64,
        /// Ridge making that field's precision proper, absolute units.
        ar_jitter: f64,
    },
}

/// Simulation design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dims: Vec<usize>,
    /// Optional mask; full grid when absent.
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
    pub t_len: usize,
    pub p_max: usize,
    /// Slab precision per order (truth).
    pub tau: Vec<f64>,
    /// Ising truth hyperparameters (shared across orders).
    pub beta0: f64,
    pub beta1: f64,
    /// Innovation precision, shared across voxels.
    pub lambda_prec: f64,
    /// Mean per regression row (slope first, intercept second).
    pub w_mean: Vec<f64>,
    /// GMRF precision scale for the coefficient rows.
    pub w_precision_scale: f64,
    /// Ridge making the coefficient prior proper, absolute units.
    pub w_jitter: f64,
    /// Supplied stimulus regressor; a built-in block design convolved with a
    /// double-gamma response is used when absent.
    #[serde(default)]
    pub regressor: Option<Vec<f64>>,
    #[serde(default = "default_ising_burnin")]
    pub ising_burnin: usize,
    /// Extra warm-up steps per AR order before the retained series starts.
    #[serde(default = "default_warmup_factor")]
    pub warmup_factor: usize,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: usize,
    pub kind: SimKind,
}

fn default_ising_burnin() -> usize {
    500
}

fn default_warmup_factor() -> usize {
    10
}

fn default_retry_cap() -> usize {
    1000
}

impl SimConfig {
    /// Heterogeneous-order design: Ising truth, slab precision 20, innovation
    /// precision 0.1, on a 20x20 slice.
    pub fn sim1() -> Self {
        let p_max = 8;
        Self {
            dims: vec![20, 20],
            mask: None,
            t_len: 200,
            p_max,
            tau: vec![20.0; p_max],
            beta0: -0.2,
            beta1: 0.3,
            lambda_prec: 0.1,
            w_mean: vec![0.0, 100.0],
            w_precision_scale: 10.0,
            w_jitter: 1.0,
            regressor: None,
            ising_burnin: default_ising_burnin(),
            warmup_factor: default_warmup_factor(),
            retry_cap: default_retry_cap(),
            kind: SimKind::VaryingOrder,
        }
    }

    /// Homogeneous AR(1) design: smooth lag-one coefficient field with
    /// precision scale 400, everything else as in the first design.
    pub fn sim2() -> Self {
        let p_max = 4;
        Self {
            dims: vec![20, 20],
            mask: None,
            t_len: 200,
            p_max,
            tau: vec![400.0; p_max],
            beta0: -0.2,
            beta1: 0.3,
            lambda_prec: 0.1,
            w_mean: vec![0.0, 100.0],
            w_precision_scale: 10.0,
            w_jitter: 1.0,
            regressor: None,
            ising_burnin: default_ising_burnin(),
            warmup_factor: default_warmup_factor(),
            retry_cap: default_retry_cap(),
            kind: SimKind::HomogeneousAr1 { ar_precision_scale: 400.0, ar_jitter: 400.0 },
        }
    }
}

/// Default ridge for one-off GMRF draws when the caller has no better choice.
pub fn default_jitter(precision_scale: f64) -> f64 {
    1e-4 * precision_scale
}

/// Draws from `N(mean * 1, (precision_scale * S^T S + jitter * I)^{-1})`.
///
/// The factorization is dense, which is fine at the slice sizes the
/// generators target.
pub fn sample_gmrf<R: Rng>(
    mean: f64,
    precision_scale: f64,
    lap: &LaplacianOperator,
    jitter: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if precision_scale <= 0.0 {
        return Err(Error::NonPositive { what: "precision_scale", value: precision_scale });
    }
    if jitter < 0.0 {
        return Err(Error::NonPositive { what: "jitter", value: jitter });
    }
    let q = lap.dense_sts(precision_scale, jitter);
    let chol = Cholesky::new(q).ok_or_else(|| {
        Error::SingularPrecision(
            "the graph Laplacian is rank deficient; pass a positive jitter".into(),
        )
    })?;
    // An unpivoted factorization can slip through a numerically singular
    // matrix; reject factors with a collapsed diagonal.
    let diag = chol.l_dirty().diagonal();
    let max_d = diag.iter().fold(0.0f64, |m, &v| m.max(v));
    let min_d = diag.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min_d > 1e-7 * max_d) {
        return Err(Error::SingularPrecision(
            "the graph Laplacian is rank deficient; pass a positive jitter".into(),
        ));
    }
    let z = DVector::from_fn(lap.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed in GMRF draw".into()))?;
    Ok(x.iter().map(|v| v + mean).collect())
}

/// True iff the AR polynomial `1 - sum_p a_p z^p` has all roots outside the
/// unit circle, tested through the companion matrix spectrum.
pub fn check_stationarity(a: &[f64]) -> bool {
    // Trailing zero coefficients do not change the process.
    let p = a.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1);
    if p == 0 {
        return true;
    }
    let mut companion = DMatrix::zeros(p, p);
    for (j, &coef) in a.iter().take(p).enumerate() {
        companion[(0, j)] = coef;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().all(|ev| ev.norm() < 1.0)
}

/// Block stimulus convolved with a double-gamma impulse response, peak
/// normalized to one.
pub fn hrf_regressor(t_len: usize) -> Vec<f64> {
    let gamma_pdf = |t: f64, shape: f64| -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            ((shape - 1.0) * t.ln() - t - statrs::function::gamma::ln_gamma(shape)).exp()
        }
    };
    let kernel_len = 32.min(t_len.max(1));
    let kernel: Vec<f64> =
        (0..kernel_len).map(|i| {
            let t = i as f64;
            gamma_pdf(t, 6.0) - gamma_pdf(t, 16.0) / 6.0
        }).collect();
    let boxcar: Vec<f64> = (0..t_len).map(|t| if t % 20 < 10 { 1.0 } else { 0.0 }).collect();
    let mut out = vec![0.0; t_len];
    for (t, o) in out.iter_mut().enumerate() {
        for (j, &k) in kernel.iter().enumerate() {
            if j <= t {
                *o += boxcar[t - j] * k;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        for o in &mut out {
            *o /= peak;
        }
    }
    out
}

/// AR recursion for one voxel: innovations with precision `lambda`, warm-up
/// discarded, returning a length-`t_len` residual series.
fn ar_series<R: Rng>(a: &[f64], lambda: f64, t_len: usize, warmup: usize, rng: &mut R) -> Vec<f64> {
    let sd = (1.0 / lambda).sqrt();
    let total = t_len + warmup;
    let mut r = Vec::with_capacity(total);
    for t in 0..total {
        let mut v = sd * rng.sample::<f64, _>(StandardNormal);
        for (lag, &coef) in a.iter().enumerate() {
            if t > lag {
                v += coef * r[t - lag - 1];
            }
        }
        r.push(v);
    }
    r.split_off(warmup)
}

/// Seeded AR series generator shared by unit tests elsewhere in the crate.
#[doc(hidden)]
pub fn ar_series_for_tests(
    a: &[f64],
    lambda: f64,
    t_len: usize,
    warmup: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = stream(seed, [PHASE_SIM, 99, 0]);
    ar_series(a, lambda, t_len, warmup, &mut rng)
}

fn design_matrix(cfg: &SimConfig) -> Result<Array2<f64>> {
    let stim = match &cfg.regressor {
        Some(r) => {
            if r.len() != cfg.t_len {
                return Err(Error::DimensionMismatch(format!(
                    "regressor length {} != series length {}",
                    r.len(),
                    cfg.t_len
                )));
            }
            r.clone()
        }
        None => hrf_regressor(cfg.t_len),
    };
    let mut x = Array2::zeros((cfg.t_len, 2));
    for t in 0..cfg.t_len {
        x[(t, 0)] = stim[t];
        x[(t, 1)] = 1.0;
    }
    Ok(x)
}

fn truth_activation(w: &Array2<f64>, contrast: &[f64]) -> (f64, f64, Vec<bool>, Vec<bool>) {
    let n = w.ncols();
    let values: Vec<f64> = (0..n)
        .map(|voxel| contrast.iter().enumerate().map(|(k, c)| c * w[(k, voxel)]).sum::<f64>())
        .collect();
    let mut magnitudes: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    magnitudes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut = |frac: f64| -> f64 {
        let idx = ((n as f64) * (1.0 - frac)).floor() as usize;
        magnitudes[idx.min(n - 1)]
    };
    let d10 = cut(0.10);
    let d5 = cut(0.05);
    let active10 = values.iter().map(|v| v.abs() > d10).collect();
    let active5 = values.iter().map(|v| v.abs() > d5).collect();
    (d10, d5, active10, active5)
}

/// Generates a dataset under the varying-order model: indicator fields from
/// the Ising prior, slab coefficients where included, exact zeros elsewhere,
/// per-voxel stationarity enforced by resampling the slab coefficients.
pub fn simulate_svaro(cfg: &SimConfig, seed: u64) -> Result<(Dataset, GroundTruth)> {
    simulate_with(cfg, seed, false)
}

/// Generates a dataset under the homogeneous AR(1) model: the lag-one
/// coefficient field is one smooth GMRF draw, all higher orders exactly zero.
pub fn simulate_glmar(cfg: &SimConfig, seed: u64) -> Result<(Dataset, GroundTruth)> {
    simulate_with(cfg, seed, true)
}

/// Dispatches on `cfg.kind`.
pub fn simulate(cfg: &SimConfig, seed: u64) -> Result<(Dataset, GroundTruth)> {
    match cfg.kind {
        SimKind::VaryingOrder => simulate_svaro(cfg, seed),
        SimKind::HomogeneousAr1 { .. } => simulate_glmar(cfg, seed),
    }
}

fn simulate_with(cfg: &SimConfig, seed: u64, homogeneous: bool) -> Result<(Dataset, GroundTruth)> {
    if cfg.tau.len() != cfg.p_max {
        return Err(Error::Config(format!(
            "tau must have one entry per order ({}), got {}",
            cfg.p_max,
            cfg.tau.len()
        )));
    }
    if cfg.lambda_prec <= 0.0 {
        return Err(Error::NonPositive { what: "lambda_prec", value: cfg.lambda_prec });
    }
    let mask = cfg.mask.clone().unwrap_or_else(|| vec![true; cfg.dims.iter().product()]);
    let graph = build_lattice(&cfg.dims, &mask)?;
    let lap = laplacian(&graph);
    let n = graph.n_voxels;
    let p = cfg.p_max;

    // Regression coefficient fields.
    if cfg.w_mean.len() != 2 {
        return Err(Error::Config("w_mean must hold a slope mean and an intercept mean".into()));
    }
    let mut w = Array2::zeros((2, n));
    for (k, &mean) in cfg.w_mean.iter().enumerate() {
        let mut rng = stream(seed, [PHASE_SIM, 3, k as u64]);
        let field = sample_gmrf(mean, cfg.w_precision_scale, &lap, cfg.w_jitter, &mut rng)?;
        for (voxel, &v) in field.iter().enumerate() {
            w[(k, voxel)] = v;
        }
    }

    // AR structure.
    let mut gamma = Array2::zeros((p, n));
    let mut a = Array2::zeros((p, n));
    if homogeneous {
        let (scale, jitter) = match cfg.kind {
            SimKind::HomogeneousAr1 { ar_precision_scale, ar_jitter } => {
                (ar_precision_scale, ar_jitter)
            }
            // Reasonable fallback when called directly on a varying-order config.
            SimKind::VaryingOrder => (cfg.tau.first().copied().unwrap_or(400.0), 400.0),
        };
        if p == 0 {
            return Err(Error::Config("homogeneous AR(1) needs p_max >= 1".into()));
        }
        let mut rng = stream(seed, [PHASE_SIM, 5, 0]);
        let mut field = sample_gmrf(0.0, scale, &lap, jitter, &mut rng)?;
        // Per-voxel rejection through the GMRF full conditional.
        let q_diag: Vec<f64> = (0..n).map(|v| scale * lap.sts_diag(v) + jitter).collect();
        for voxel in 0..n {
            let mut tries = 0usize;
            while field[voxel].abs() >= 1.0 {
                tries += 1;
                if tries > cfg.retry_cap {
                    return Err(Error::StationarityRetry { voxel, cap: cfg.retry_cap });
                }
                let mut rng_v = stream(seed, [PHASE_SIM, 6, (voxel * cfg.retry_cap + tries) as u64]);
                let cross: f64 = lap
                    .sts_offdiag_row(voxel)
                    .iter()
                    .map(|&(j, v)| scale * v * field[j])
                    .sum();
                let mu = -cross / q_diag[voxel];
                let sd = (1.0 / q_diag[voxel]).sqrt();
                field[voxel] = mu + sd * rng_v.sample::<f64, _>(StandardNormal);
            }
        }
        for voxel in 0..n {
            gamma[(0, voxel)] = 1;
            a[(0, voxel)] = field[voxel];
        }
    } else {
        for order in 0..p {
            let mut rng = stream(seed, [PHASE_SIM, 1, order as u64]);
            let field = sample_ising_prior(
                &graph,
                cfg.beta0,
                cfg.beta1,
                PriorSampleConfig { burnin: cfg.ising_burnin, ..PriorSampleConfig::default() },
                &mut rng,
            )?;
            for (voxel, &g) in field[0].iter().enumerate() {
                gamma[(order, voxel)] = g;
            }
        }
        for voxel in 0..n {
            let mut rng = stream(seed, [PHASE_SIM, 2, voxel as u64]);
            let active: Vec<usize> = (0..p).filter(|&o| gamma[(o, voxel)] == 1).collect();
            let mut coefs = vec![0.0; p];
            let mut tries = 0usize;
            loop {
                for &o in &active {
                    coefs[o] = rng.sample::<f64, _>(StandardNormal) / cfg.tau[o].sqrt();
                }
                if check_stationarity(&coefs) {
                    break;
                }
                tries += 1;
                if tries > cfg.retry_cap {
                    return Err(Error::StationarityRetry { voxel, cap: cfg.retry_cap });
                }
            }
            for (o, &c) in coefs.iter().enumerate() {
                a[(o, voxel)] = c;
            }
        }
    }

    // Observations: GLM mean plus a warmed-up AR residual stream.
    let x_full = design_matrix(cfg)?;
    let warmup = cfg.warmup_factor * p.max(1);
    let mut y = Array2::zeros((cfg.t_len, n));
    for voxel in 0..n {
        let mut rng = stream(seed, [PHASE_SIM, 4, voxel as u64]);
        let coefs: Vec<f64> = (0..p).map(|o| a[(o, voxel)]).collect();
        let r = ar_series(&coefs, cfg.lambda_prec, cfg.t_len, warmup, &mut rng);
        for t in 0..cfg.t_len {
            let mean: f64 = (0..2).map(|k| x_full[(t, k)] * w[(k, voxel)]).sum();
            y[(t, voxel)] = mean + r[t];
        }
    }

    let contrast = vec![1.0, 0.0];
    let (d10, d5, active10, active5) = truth_activation(&w, &contrast);
    let truth = GroundTruth {
        w,
        a,
        gamma,
        lambda: vec![cfg.lambda_prec; n],
        contrast,
        delta_e_top10: d10,
        delta_e_top5: d5,
        active_top10: active10,
        active_top5: active5,
    };
    let dataset = Dataset::new(y, x_full, graph, p)?;
    Ok((dataset, truth))
}
