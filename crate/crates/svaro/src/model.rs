//! The statistical model: data containers, latent state, hyperparameters,
//! log-likelihood, and log-prior densities as pure functions of state.
//!
//! Conventions used throughout the crate:
//!
//! * Gamma distributions are shape/scale (mean = shape * scale). A prior
//!   written `Gamma(q1, q2)` has density proportional to
//!   `x^(q1-1) exp(-x / q2)`.
//! * `tau_p` is the slab precision: an included AR coefficient has prior
//!   `N(0, 1/tau_p)`; an excluded one has the spike prior `N(0, 1/(eps tau_p))`
//!   with `eps >> 1`, so it is never forced to exactly zero.
//! * The likelihood conditions on the first `P` observations of each series;
//!   residual embeddings use the full-length residual so all lags are defined.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, s};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LaplacianOperator, LatticeGraph};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Observed data: time-by-voxel measurements, design matrix, and the lattice.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Observations, `T x N`.
    pub y: Array2<f64>,
    /// Full design including the first `P` rows, `T x K`.
    pub x_full: Array2<f64>,
    pub graph: LatticeGraph,
    pub t: usize,
    pub n: usize,
    pub k: usize,
    pub p: usize,
}

impl Dataset {
    pub fn new(y: Array2<f64>, x_full: Array2<f64>, graph: LatticeGraph, p: usize) -> Result<Self> {
        let (t, n) = y.dim();
        let (xt, k) = x_full.dim();
        if xt != t {
            return Err(Error::DimensionMismatch(format!(
                "design has {xt} rows but observations have {t}"
            )));
        }
        if n != graph.n_voxels {
            return Err(Error::DimensionMismatch(format!(
                "observations cover {n} voxels but the lattice has {}",
                graph.n_voxels
            )));
        }
        if k == 0 {
            return Err(Error::DimensionMismatch("design needs at least one column".into()));
        }
        if t <= p {
            return Err(Error::DimensionMismatch(format!(
                "series length {t} must exceed the maximum AR order {p}"
            )));
        }
        Ok(Self { y, x_full, graph, t, n, k, p })
    }

    /// Design rows used by the conditional likelihood (rows `P..T` of the
    /// full design).
    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.x_full.slice(s![self.p.., ..])
    }
}

/// Fixed prior constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Maximum AR order.
    pub p: usize,
    /// Ising sparsity parameter per order.
    pub beta0: Vec<f64>,
    /// Ising smoothness parameter per order (non-negative for Swendsen-Wang).
    pub beta1: Vec<f64>,
    /// Spatial precision prior shape/scale.
    pub q1: f64,
    pub q2: f64,
    /// Slab precision prior shape/scale.
    pub u1: f64,
    pub u2: f64,
    /// Innovation precision prior shape/scale.
    pub r1: f64,
    pub r2: f64,
    /// Spike precision multiplier.
    pub epsilon: f64,
    /// Activation contrast over regression coefficients.
    pub contrast: Vec<f64>,
    /// Activation threshold on the contrast.
    pub delta_e: f64,
    /// Probability threshold for declaring activation.
    pub delta_p: f64,
    /// Optional ridge added to `S^T S` in the spatial prior. Zero keeps the
    /// intrinsic prior; a positive value makes the prior proper, which joint
    /// validation tests rely on.
    #[serde(default)]
    pub spatial_jitter: f64,
}

impl Hyperparams {
    /// Diffuse defaults for a model with max order `p` and `k` regressors.
    pub fn new(p: usize, k: usize) -> Self {
        let mut contrast = vec![0.0; k];
        if k > 0 {
            contrast[0] = 1.0;
        }
        Self {
            p,
            beta0: vec![-0.2; p],
            beta1: vec![0.3; p],
            q1: 1.0,
            q2: 100.0,
            u1: 1.0,
            u2: 100.0,
            r1: 1.0,
            r2: 100.0,
            epsilon: 1e6,
            contrast,
            delta_e: 0.0,
            delta_p: 0.95,
            spatial_jitter: 0.0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        for (what, value) in [
            ("q1", self.q1),
            ("q2", self.q2),
            ("u1", self.u1),
            ("u2", self.u2),
            ("r1", self.r1),
            ("r2", self.r2),
        ] {
            if value <= 0.0 {
                return Err(Error::NonPositive { what, value });
            }
        }
        if self.epsilon <= 1.0 {
            return Err(Error::Config(format!(
                "epsilon must exceed 1 (spike tighter than slab), got {}",
                self.epsilon
            )));
        }
        if !(self.delta_p > 0.5 && self.delta_p < 1.0) {
            return Err(Error::Config(format!(
                "delta_p must lie in (0.5, 1), got {}",
                self.delta_p
            )));
        }
        if self.beta0.len() != self.p || self.beta1.len() != self.p {
            return Err(Error::Config(format!(
                "beta0/beta1 must have one entry per order ({})",
                self.p
            )));
        }
        if self.contrast.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "contrast has {} entries but the design has {} columns",
                self.contrast.len(),
                k
            )));
        }
        if self.spatial_jitter < 0.0 {
            return Err(Error::NonPositive { what: "spatial_jitter", value: self.spatial_jitter });
        }
        Ok(())
    }

    /// Spike/slab precision multiplier `delta(gamma)`.
    pub fn spike_factor(&self, gamma: u8) -> f64 {
        if gamma == 0 {
            self.epsilon
        } else {
            1.0
        }
    }
}

/// One full set of latent variables at a sampler iteration.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Regression coefficients, `K x N` (row k holds coefficient k across voxels).
    pub w: Array2<f64>,
    /// AR coefficients, `P x N`.
    pub a: Array2<f64>,
    /// Inclusion indicators, `P x N`.
    pub gamma: Array2<u8>,
    /// Spatial precisions, length `K`.
    pub alpha: Vec<f64>,
    /// Slab precisions, length `P`.
    pub tau: Vec<f64>,
    /// Innovation precisions, length `N`.
    pub lambda: Vec<f64>,
}

impl ModelState {
    pub fn zeros(k: usize, p: usize, n: usize) -> Self {
        Self {
            w: Array2::zeros((k, n)),
            a: Array2::zeros((p, n)),
            gamma: Array2::zeros((p, n)),
            alpha: vec![1.0; k],
            tau: vec![1.0; p],
            lambda: vec![1.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("alpha", &self.alpha), ("tau", &self.tau), ("lambda", &self.lambda)] {
            if let Some(&bad) = v.iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::NonPositive { what, value: bad });
            }
        }
        Ok(())
    }
}

/// Lagged-residual matrix of one voxel, `(T - P) x P`; column `p` holds the
/// residual series shifted by `p + 1` lags.
pub type EmbeddedErrors = Array2<f64>;

/// Full-length residual `y_n - X_full w_n` of voxel `n`.
pub fn residuals(dataset: &Dataset, w: &Array2<f64>, n: usize) -> Array1<f64> {
    let w_n = w.column(n);
    let mut r = dataset.y.column(n).to_owned();
    for t in 0..dataset.t {
        r[t] -= dataset.x_full.row(t).dot(&w_n);
    }
    r
}

/// Lagged-residual embedding of voxel `n`: entry `(i, p)` is the residual at
/// time `P + i - (p + 1)` (zero-based), i.e. lag `p + 1` of the conditioned
/// block. Empty when `P = 0`.
pub fn embed_errors(dataset: &Dataset, w: &Array2<f64>, n: usize) -> EmbeddedErrors {
    let r = residuals(dataset, w, n);
    embed_series(&r, dataset.t, dataset.p)
}

/// Embedding of an arbitrary full-length series (shared with the oracle tests).
pub fn embed_series(r: &Array1<f64>, t: usize, p: usize) -> Array2<f64> {
    let rows = t - p;
    let mut e = Array2::zeros((rows, p));
    for i in 0..rows {
        for lag in 1..=p {
            e[(i, lag - 1)] = r[p + i - lag];
        }
    }
    e
}

/// Whitened-residual sum of squares of voxel `n`:
/// `sum_t [(y_tn - x_t w_n) - e~_tn a_n]^2` over the conditioned block.
pub fn ssr(dataset: &Dataset, w: &Array2<f64>, a: &Array2<f64>, n: usize) -> f64 {
    let r = residuals(dataset, w, n);
    let a_n = a.column(n);
    let mut acc = 0.0;
    for i in 0..(dataset.t - dataset.p) {
        let mut z = r[dataset.p + i];
        for lag in 1..=dataset.p {
            z -= e_lag(&r, dataset.p, i, lag) * a_n[lag - 1];
        }
        acc += z * z;
    }
    acc
}

#[inline]
fn e_lag(r: &Array1<f64>, p: usize, i: usize, lag: usize) -> f64 {
    r[p + i - lag]
}

/// Per-voxel conditional Gaussian log-density of the observed block given the
/// state, `(T-P)/2 (ln lambda_n - ln 2 pi) - lambda_n/2 * SSR_n`.
pub fn log_likelihood_voxel(dataset: &Dataset, state: &ModelState, n: usize) -> Result<f64> {
    let lam = state.lambda[n];
    if !(lam > 0.0) {
        return Err(Error::NonPositive { what: "lambda", value: lam });
    }
    let m = (dataset.t - dataset.p) as f64;
    Ok(0.5 * m * (lam.ln() - LN_2PI) - 0.5 * lam * ssr(dataset, &state.w, &state.a, n))
}

/// Total conditional log-likelihood across voxels. The additive constant is
/// fixed at `-N (T-P)/2 ln(2 pi)` so the value is a proper Gaussian log-density.
pub fn log_likelihood(dataset: &Dataset, state: &ModelState) -> Result<f64> {
    let mut acc = 0.0;
    for n in 0..dataset.n {
        acc += log_likelihood_voxel(dataset, state, n)?;
    }
    Ok(acc)
}

/// Spatial log-prior of the regression coefficients,
/// `sum_k [ (N/2) ln alpha_k - (alpha_k / 2) W_k (S^T S + jitter I) W_k^T ]`.
///
/// The pseudo-determinant of `S^T S` is constant across the sampler and is
/// dropped here.
pub fn log_prior_w(
    w: &Array2<f64>,
    alpha: &[f64],
    lap: &LaplacianOperator,
    jitter: f64,
) -> Result<f64> {
    let (k, n) = w.dim();
    assert_eq!(n, lap.n());
    assert_eq!(k, alpha.len());
    let mut acc = 0.0;
    for (ki, &a_k) in alpha.iter().enumerate() {
        if !(a_k > 0.0) {
            return Err(Error::NonPositive { what: "alpha", value: a_k });
        }
        let row: Vec<f64> = w.row(ki).to_vec();
        let mut q = lap.quadratic_form(&row);
        if jitter > 0.0 {
            q += jitter * row.iter().map(|x| x * x).sum::<f64>();
        }
        acc += 0.5 * (n as f64) * a_k.ln() - 0.5 * a_k * q;
    }
    Ok(acc)
}

/// Spike-and-slab log-prior of the AR coefficients,
/// `sum_{p,n} [ -(tau_p / 2) a_pn^2 delta(gamma_pn) + (ln tau_p)/2 + (ln delta(gamma_pn))/2 ]`
/// with `delta(0) = eps`, `delta(1) = 1`; the Gaussian constant is dropped.
pub fn log_prior_a(a: &Array2<f64>, gamma: &Array2<u8>, tau: &[f64], epsilon: f64) -> f64 {
    let (p, n) = a.dim();
    let mut acc = 0.0;
    for pi in 0..p {
        let tau_p = tau[pi];
        for ni in 0..n {
            let delta = if gamma[(pi, ni)] == 0 { epsilon } else { 1.0 };
            let x = a[(pi, ni)];
            acc += -0.5 * tau_p * delta * x * x + 0.5 * tau_p.ln() + 0.5 * delta.ln();
        }
    }
    acc
}

/// Unnormalized Ising log-mass of one indicator field:
/// `beta0 * sum_n gamma_n + beta1 * sum_{n1 ~ n2} I(gamma_n1 = gamma_n2)`.
pub fn log_ising(gamma_p: ArrayView1<'_, u8>, beta0: f64, beta1: f64, graph: &LatticeGraph) -> f64 {
    let ones = gamma_p.iter().filter(|&&g| g == 1).count() as f64;
    let agree = graph
        .adjacency
        .iter()
        .filter(|&&(a, b)| gamma_p[a] == gamma_p[b])
        .count() as f64;
    beta0 * ones + beta1 * agree
}

/// Gamma(shape, scale) log-density.
pub fn log_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - statrs::function::gamma::ln_gamma(shape)
}

/// Log of the joint density of data and state: likelihood plus all log-priors,
/// including the Gamma hyperpriors. Unnormalized only by the Ising partition
/// functions and the spatial pseudo-determinant, both constant in the sampler.
pub fn log_joint(
    dataset: &Dataset,
    state: &ModelState,
    hyper: &Hyperparams,
    lap: &LaplacianOperator,
) -> Result<f64> {
    state.validate()?;
    let mut acc = log_likelihood(dataset, state)?;
    acc += log_prior_w(&state.w, &state.alpha, lap, hyper.spatial_jitter)?;
    acc += log_prior_a(&state.a, &state.gamma, &state.tau, hyper.epsilon);
    for p in 0..hyper.p {
        acc += log_ising(state.gamma.row(p), hyper.beta0[p], hyper.beta1[p], &dataset.graph);
    }
    for &a_k in &state.alpha {
        acc += log_gamma_pdf(a_k, hyper.q1, hyper.q2);
    }
    for &t_p in &state.tau {
        acc += log_gamma_pdf(t_p, hyper.u1, hyper.u2);
    }
    for &l_n in &state.lambda {
        acc += log_gamma_pdf(l_n, hyper.r1, hyper.r2);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, laplacian};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn toy_dataset(t: usize, n_voxels: usize, k: usize, p: usize) -> Dataset {
        let dims = [n_voxels, 1];
        let graph = build_lattice(&dims, &vec![true; n_voxels]).unwrap();
        let y = Array2::from_shape_fn((t, n_voxels), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let x = Array2::from_shape_fn((t, k), |(i, j)| if j == k - 1 { 1.0 } else { (i as f64 * 0.3).sin() });
        Dataset::new(y, x, graph, p).unwrap()
    }

    #[test]
    fn residuals_zero_coefficients() {
        let ds = toy_dataset(6, 2, 2, 1);
        let w = Array2::zeros((2, 2));
        let r = residuals(&ds, &w, 0);
        for t in 0..6 {
            assert_eq!(r[t], ds.y[(t, 0)]);
        }
    }

    #[test]
    fn residuals_exact_fit_and_constant_shift() {
        // y = X w exactly -> zero residuals.
        let graph = build_lattice(&[1, 1], &[true]).unwrap();
        let x = array![[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]];
        let w = array![[2.0], [1.0]];
        let y = {
            let mut y = Array2::zeros((3, 1));
            for t in 0..3 {
                y[(t, 0)] = x.row(t).dot(&w.column(0));
            }
            y
        };
        let ds = Dataset::new(y, x, graph, 0).unwrap();
        let r = residuals(&ds, &w, 0);
        for t in 0..3 {
            assert_eq!(r[t], 0.0);
        }

        // Intercept-only with w = 3 and y = 5 -> residual 2 everywhere.
        let graph = build_lattice(&[1, 1], &[true]).unwrap();
        let ds = Dataset::new(
            Array2::from_elem((3, 1), 5.0),
            Array2::from_elem((3, 1), 1.0),
            graph,
            0,
        )
        .unwrap();
        let r = residuals(&ds, &array![[3.0]], 0);
        for t in 0..3 {
            assert_eq!(r[t], 2.0);
        }
    }

    #[test]
    fn embedding_unrolled() {
        // T=3, P=1: a 2x1 column (r1, r2).
        let r = array![10.0, 20.0, 30.0];
        let e = embed_series(&r, 3, 1);
        assert_eq!(e, array![[10.0], [20.0]]);

        // T=4, P=2: rows (r2, r1), (r3, r2).
        let r = array![1.0, 2.0, 3.0, 4.0];
        let e = embed_series(&r, 4, 2);
        assert_eq!(e, array![[2.0, 1.0], [3.0, 2.0]]);
    }

    #[test]
    fn embedding_matches_index_arithmetic() {
        let ds = toy_dataset(12, 3, 2, 3);
        let w = Array2::from_shape_fn((2, 3), |(i, j)| 0.1 * (i as f64) - 0.2 * (j as f64));
        for n in 0..3 {
            let r = residuals(&ds, &w, n);
            let e = embed_errors(&ds, &w, n);
            assert_eq!(e.dim(), (9, 3));
            for i in 0..9 {
                for lag in 1..=3usize {
                    assert_eq!(e[(i, lag - 1)], r[3 + i - lag]);
                }
            }
        }
    }

    #[test]
    fn log_likelihood_constant_only() {
        // One voxel, zero residuals, lambda = 1, T - P = 2 -> -ln(2 pi).
        let graph = build_lattice(&[1, 1], &[true]).unwrap();
        let ds = Dataset::new(Array2::zeros((3, 1)), Array2::from_elem((3, 1), 1.0), graph, 1).unwrap();
        let state = ModelState::zeros(1, 1, 1);
        let ll = log_likelihood(&ds, &state).unwrap();
        assert_relative_eq!(ll, -LN_2PI, max_relative = 1e-12);
    }

    #[test]
    fn log_likelihood_lambda_scaling() {
        let graph = build_lattice(&[1, 1], &[true]).unwrap();
        let ds = Dataset::new(Array2::zeros((5, 1)), Array2::from_elem((5, 1), 1.0), graph, 1).unwrap();
        let mut state = ModelState::zeros(1, 1, 1);
        let base = log_likelihood(&ds, &state).unwrap();
        state.lambda[0] = 2.0;
        let doubled = log_likelihood(&ds, &state).unwrap();
        assert_relative_eq!(doubled - base, 0.5 * 4.0 * 2.0_f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn log_likelihood_rejects_bad_lambda() {
        let ds = toy_dataset(5, 1, 1, 0);
        let mut state = ModelState::zeros(1, 0, 1);
        state.lambda[0] = 0.0;
        assert!(log_likelihood(&ds, &state).is_err());
    }

    #[test]
    fn log_likelihood_p0_matches_independent_gaussian_oracle() {
        // Independent implementation of the weighted least-squares density.
        let ds = toy_dataset(15, 4, 2, 0);
        let mut state = ModelState::zeros(2, 0, 4);
        state.w = Array2::from_shape_fn((2, 4), |(i, j)| 0.3 * i as f64 - 0.15 * j as f64);
        for n in 0..4 {
            state.lambda[n] = 0.2 + 0.1 * n as f64;
        }
        let mut oracle = 0.0;
        for n in 0..4 {
            let lam = state.lambda[n];
            for t in 0..15 {
                let mean: f64 = (0..2).map(|k| ds.x_full[(t, k)] * state.w[(k, n)]).sum();
                let resid: f64 = ds.y[(t, n)] - mean;
                oracle += 0.5 * (lam / (2.0 * std::f64::consts::PI)).ln() - 0.5 * lam * resid * resid;
            }
        }
        let ll = log_likelihood(&ds, &state).unwrap();
        assert_relative_eq!(ll, oracle, max_relative = 1e-10);
    }

    #[test]
    fn prior_w_null_space_and_scaling() {
        let graph = build_lattice(&[2, 2], &[true; 4]).unwrap();
        let lap = laplacian(&graph);
        // Constant row: quadratic form zero, only the (N/2) ln alpha term remains.
        let w = Array2::from_elem((1, 4), 3.7);
        let lp = log_prior_w(&w, &[2.0], &lap, 0.0).unwrap();
        assert_relative_eq!(lp, 2.0 * 2.0_f64.ln(), max_relative = 1e-12);

        // Two-voxel graph, W = (1, -1), alpha = 1: quadratic form 8, contribution -4.
        let graph2 = build_lattice(&[2, 1], &[true, true]).unwrap();
        let lap2 = laplacian(&graph2);
        let w2 = array![[1.0, -1.0]];
        let lp2 = log_prior_w(&w2, &[1.0], &lap2, 0.0).unwrap();
        assert_relative_eq!(lp2, 1.0 * 1.0_f64.ln() - 4.0, max_relative = 1e-12);

        // Scaling W by 2 multiplies the quadratic form by 4.
        let w4 = array![[2.0, -2.0]];
        let lp4 = log_prior_w(&w4, &[1.0], &lap2, 0.0).unwrap();
        assert_relative_eq!(lp4, -16.0, max_relative = 1e-12);
    }

    #[test]
    fn prior_w_rejects_bad_alpha() {
        let graph = build_lattice(&[2, 1], &[true, true]).unwrap();
        let lap = laplacian(&graph);
        assert!(log_prior_w(&Array2::zeros((1, 2)), &[0.0], &lap, 0.0).is_err());
    }

    #[test]
    fn prior_a_plugins() {
        // All coefficients zero.
        let a = Array2::zeros((2, 3));
        let gamma = Array2::from_shape_fn((2, 3), |(p, n)| ((p + n) % 2) as u8);
        let tau: [f64; 2] = [2.0, 5.0];
        let eps = 10.0;
        let expected: f64 = (0..2)
            .flat_map(|p| (0..3).map(move |n| (p, n)))
            .map(|(p, n)| {
                let delta: f64 = if gamma[(p, n)] == 0 { eps } else { 1.0 };
                0.5 * tau[p].ln() + 0.5 * delta.ln()
            })
            .sum();
        assert_relative_eq!(log_prior_a(&a, &gamma, &tau, eps), expected, max_relative = 1e-12);

        // Single entry, gamma = 1, tau = 2, a = 1 -> -1 + (ln 2)/2.
        let a = array![[1.0]];
        let gamma = array![[1u8]];
        assert_relative_eq!(
            log_prior_a(&a, &gamma, &[2.0], eps),
            -1.0 + 0.5 * 2.0_f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn prior_a_flip_delta_is_gibbs_kernel() {
        // Flipping gamma 1 -> 0 at fixed a changes the log-prior by
        // -(eps - 1) tau a^2 / 2 + (ln eps)/2.
        let eps = 50.0;
        let tau = [3.0];
        let a = array![[0.4]];
        let on = log_prior_a(&a, &array![[1u8]], &tau, eps);
        let off = log_prior_a(&a, &array![[0u8]], &tau, eps);
        let expected = -(eps - 1.0) * tau[0] * 0.16 / 2.0 + 0.5 * eps.ln();
        assert_relative_eq!(off - on, expected, max_relative = 1e-12);
    }

    #[test]
    fn ising_plugins() {
        let graph = build_lattice(&[2, 2], &[true; 4]).unwrap();
        assert_eq!(graph.adjacency.len(), 4);
        let zeros = Array1::from_elem(4, 0u8);
        assert_relative_eq!(
            log_ising(zeros.view(), -0.2, 0.3, &graph),
            0.3 * 4.0,
            max_relative = 1e-12
        );
        let ones = Array1::from_elem(4, 1u8);
        assert_relative_eq!(
            log_ising(ones.view(), -0.2, 0.3, &graph),
            -0.2 * 4.0 + 0.3 * 4.0,
            max_relative = 1e-12
        );
        let single = build_lattice(&[1, 1], &[true]).unwrap();
        let one = Array1::from_elem(1, 1u8);
        assert_relative_eq!(log_ising(one.view(), 0.7, 9.9, &single), 0.7, max_relative = 1e-12);
    }

    #[test]
    fn log_joint_is_sum_of_components_and_finite() {
        let ds = toy_dataset(10, 4, 2, 2);
        let lap = laplacian(&ds.graph);
        let hyper = Hyperparams::new(2, 2);
        let mut state = ModelState::zeros(2, 2, 4);
        state.w = Array2::from_shape_fn((2, 4), |(i, j)| 0.5 * i as f64 + 0.1 * j as f64);
        state.a = Array2::from_shape_fn((2, 4), |(i, j)| 0.05 * (i + j) as f64);
        state.gamma = Array2::from_shape_fn((2, 4), |(i, j)| ((i + j) % 2) as u8);
        state.alpha = vec![1.5, 0.7];
        state.tau = vec![12.0, 30.0];
        state.lambda = vec![0.5, 1.0, 2.0, 0.1];

        let mut expected = log_likelihood(&ds, &state).unwrap()
            + log_prior_w(&state.w, &state.alpha, &lap, hyper.spatial_jitter).unwrap()
            + log_prior_a(&state.a, &state.gamma, &state.tau, hyper.epsilon);
        for p in 0..2 {
            expected += log_ising(state.gamma.row(p), hyper.beta0[p], hyper.beta1[p], &ds.graph);
        }
        for &x in &state.alpha {
            expected += log_gamma_pdf(x, hyper.q1, hyper.q2);
        }
        for &x in &state.tau {
            expected += log_gamma_pdf(x, hyper.u1, hyper.u2);
        }
        for &x in &state.lambda {
            expected += log_gamma_pdf(x, hyper.r1, hyper.r2);
        }
        let got = log_joint(&ds, &state, &hyper, &lap).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        assert!(got.is_finite());
    }

    #[test]
    fn log_joint_invariant_under_lattice_automorphism() {
        // 2x2 lattice, 90-degree rotation: cells (0,1,2,3) -> (1,3,0,2).
        let graph = build_lattice(&[2, 2], &[true; 4]).unwrap();
        let lap = laplacian(&graph);
        let perm = [1usize, 3, 0, 2];

        let t = 8;
        let y = Array2::from_shape_fn((t, 4), |(i, j)| ((i * 5 + j * 13) % 7) as f64 * 0.5 - 1.0);
        let x = Array2::from_shape_fn((t, 2), |(i, j)| if j == 1 { 1.0 } else { (i as f64).cos() });
        let ds = Dataset::new(y.clone(), x.clone(), graph.clone(), 1).unwrap();

        let hyper = Hyperparams::new(1, 2);
        let mut state = ModelState::zeros(2, 1, 4);
        state.w = Array2::from_shape_fn((2, 4), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64);
        state.a = Array2::from_shape_fn((1, 4), |(_, j)| 0.1 * j as f64);
        state.gamma = Array2::from_shape_fn((1, 4), |(_, j)| (j % 2) as u8);
        state.lambda = vec![0.5, 1.5, 2.5, 3.5];

        // Permute voxels in data and state.
        let y_p = Array2::from_shape_fn((t, 4), |(i, j)| y[(i, perm[j])]);
        let ds_p = Dataset::new(y_p, x, graph, 1).unwrap();
        let mut state_p = state.clone();
        for j in 0..4 {
            for i in 0..2 {
                state_p.w[(i, j)] = state.w[(i, perm[j])];
            }
            state_p.a[(0, j)] = state.a[(0, perm[j])];
            state_p.gamma[(0, j)] = state.gamma[(0, perm[j])];
            state_p.lambda[j] = state.lambda[perm[j]];
        }

        let a = log_joint(&ds, &state, &hyper, &lap).unwrap();
        let b = log_joint(&ds_p, &state_p, &hyper, &lap).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}
