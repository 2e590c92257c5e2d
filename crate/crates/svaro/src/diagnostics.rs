//! Posterior inference products and model-comparison metrics: probability
//! maps, activation thresholds, LPML, MSE summaries, sensitivity curves, and
//! AR-order maps.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ChainOutput;
use crate::simulate::GroundTruth;

/// Per-voxel posterior probability that the contrast exceeds the activation
/// threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ppm {
    pub values: Vec<f64>,
    pub contrast: Vec<f64>,
    pub delta_e: f64,
    pub n_draws: usize,
}

/// Sensitivity against a grid of probability thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub grid: Vec<f64>,
    pub sensitivity: Vec<f64>,
    /// Which activation definition the truth set used (for example
    /// "top10" or "top5").
    pub definition: String,
}

/// Monte-Carlo exceedance probabilities for the contrast/threshold the chain
/// accumulated, or recomputed from stored draws when a different pair is asked
/// for.
pub fn ppm(chain: &ChainOutput, contrast: &[f64], delta_e: f64) -> Result<Ppm> {
    let k = chain.w_mean.nrows();
    if contrast.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "contrast has {} entries but the model has {k} coefficients",
            contrast.len()
        )));
    }
    let same_counter = contrast == chain.contrast.as_slice() && delta_e == chain.delta_e;
    let values = if same_counter {
        chain.exceed_probability()
    } else if let Some(draws) = &chain.draws {
        let n = chain.w_mean.ncols();
        let mut counts = vec![0u64; n];
        for state in draws {
            for (voxel, c) in counts.iter_mut().enumerate() {
                let v: f64 = (0..k).map(|ki| contrast[ki] * state.w[(ki, voxel)]).sum();
                if v > delta_e {
                    *c += 1;
                }
            }
        }
        counts.iter().map(|&c| c as f64 / draws.len().max(1) as f64).collect()
    } else {
        return Err(Error::Config(
            "chain stored no draws and its exceedance counter used a different contrast/threshold"
                .into(),
        ));
    };
    Ok(Ppm { values, contrast: contrast.to_vec(), delta_e, n_draws: chain.n_draws })
}

/// Thresholds a probability map at `delta_p` (strict inequality).
pub fn threshold_ppm(ppm: &Ppm, delta_p: f64) -> Result<Vec<bool>> {
    if !(delta_p > 0.0 && delta_p < 1.0) {
        return Err(Error::Config(format!("delta_p must lie in (0, 1), got {delta_p}")));
    }
    Ok(ppm.values.iter().map(|&v| v > delta_p).collect())
}

/// Log pseudo-marginal likelihood via conditional predictive ordinates:
/// `CPO_n = [mean_m 1/f(y_n | theta_m)]^{-1}`, `LPML = sum_n ln CPO_n`,
/// evaluated with a log-sum-exp over the stored per-draw log densities.
pub fn lpml(chain: &ChainOutput) -> Result<f64> {
    let loglik = chain.loglik.as_ref().ok_or(Error::MissingDensities)?;
    let (m, n) = loglik.dim();
    if m == 0 {
        return Err(Error::MissingDensities);
    }
    let mut total = 0.0;
    for voxel in 0..n {
        let col = loglik.column(voxel);
        let max_neg = col.iter().map(|&v| -v).fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = col.iter().map(|&v| (-v - max_neg).exp()).sum();
        // ln CPO = ln M - ln sum_m exp(-ll_m)
        total += (m as f64).ln() - (max_neg + sum_exp.ln());
    }
    Ok(total)
}

/// Mean squared error of a posterior-mean map against the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseTable {
    /// Per regression coefficient row.
    pub w: Vec<f64>,
    /// Per AR order.
    pub a: Vec<f64>,
}

pub fn mse_table(chain: &ChainOutput, truth: &GroundTruth) -> Result<MseTable> {
    if chain.w_mean.dim() != truth.w.dim() || chain.a_mean.dim() != truth.a.dim() {
        return Err(Error::DimensionMismatch(
            "posterior summaries and truth have different shapes".into(),
        ));
    }
    let (k, n) = chain.w_mean.dim();
    let p = chain.a_mean.nrows();
    let w = (0..k)
        .map(|ki| {
            (0..n)
                .map(|voxel| (chain.w_mean[(ki, voxel)] - truth.w[(ki, voxel)]).powi(2))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let a = (0..p)
        .map(|pi| {
            (0..n)
                .map(|voxel| (chain.a_mean[(pi, voxel)] - truth.a[(pi, voxel)]).powi(2))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    Ok(MseTable { w, a })
}

/// Mean squared error between two flat maps (replicate averaging is the
/// harness's job).
pub fn mse_flat(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch("map lengths differ".into()));
    }
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum::<f64>()
        / estimate.len() as f64)
}

/// Sensitivity of the thresholded map against the truth set over a grid of
/// probability thresholds: `#(active and ppm > delta_p) / #active`.
pub fn sensitivity_curve(
    ppm: &Ppm,
    truth_active: &[bool],
    grid: &[f64],
    definition: &str,
) -> Result<SensitivityCurve> {
    if truth_active.len() != ppm.values.len() {
        return Err(Error::DimensionMismatch("truth set length differs from map".into()));
    }
    let n_active = truth_active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Err(Error::EmptyActiveSet);
    }
    if grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::Config("sensitivity grid must lie inside (0, 1)".into()));
    }
    let sensitivity = grid
        .iter()
        .map(|&dp| {
            let hits = truth_active
                .iter()
                .zip(&ppm.values)
                .filter(|&(&act, &prob)| act && prob > dp)
                .count();
            hits as f64 / n_active as f64
        })
        .collect();
    Ok(SensitivityCurve { grid: grid.to_vec(), sensitivity, definition: definition.into() })
}

/// Rule for turning inclusion frequencies into a per-voxel order estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    /// Largest order whose inclusion frequency reaches one half.
    #[default]
    MedianFrequency,
    /// Rounded posterior mean of the maximum included order.
    RoundedMean,
}

/// Per-voxel AR-order estimates plus an order histogram.
pub fn ar_order_map(chain: &ChainOutput, rule: OrderRule) -> (Vec<usize>, Vec<usize>) {
    let (p, n) = chain.gamma_freq.dim();
    let orders: Vec<usize> = (0..n)
        .map(|voxel| match rule {
            OrderRule::MedianFrequency => (0..p)
                .rev()
                .find(|&order| chain.gamma_freq[(order, voxel)] >= 0.5)
                .map_or(0, |o| o + 1),
            OrderRule::RoundedMean => chain.mean_max_order[voxel].round() as usize,
        })
        .collect();
    let mut histogram = vec![0usize; p + 1];
    for &o in &orders {
        histogram[o.min(p)] += 1;
    }
    (orders, histogram)
}

/// Convenience wrapper used in tests: builds a chain-shaped frequency matrix.
#[doc(hidden)]
pub fn order_from_frequencies(freq: &Array2<f64>) -> Vec<usize> {
    let (p, n) = freq.dim();
    (0..n)
        .map(|voxel| {
            (0..p).rev().find(|&order| freq[(order, voxel)] >= 0.5).map_or(0, |o| o + 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelState;
    use crate::sampler::SamplerConfig;
    use ndarray::array;

    fn chain_stub(k: usize, p: usize, n: usize) -> ChainOutput {
        ChainOutput {
            n_draws: 4,
            w_mean: Array2::zeros((k, n)),
            w_var: Array2::zeros((k, n)),
            a_mean: Array2::zeros((p, n)),
            a_var: Array2::zeros((p, n)),
            lambda_mean: vec![1.0; n],
            lambda_var: vec![0.0; n],
            gamma_freq: Array2::zeros((p, n)),
            mean_max_order: vec![0.0; n],
            exceed_count: vec![0; n],
            contrast: {
                let mut c = vec![0.0; k];
                c[0] = 1.0;
                c
            },
            delta_e: 0.0,
            loglik: None,
            draws: None,
            seed: 0,
            config: SamplerConfig::new(0, 4, 0),
        }
    }

    #[test]
    fn ppm_from_counters_and_draws() {
        let mut chain = chain_stub(1, 0, 3);
        chain.exceed_count = vec![4, 2, 0];
        let map = ppm(&chain, &[1.0], 0.0).unwrap();
        assert_eq!(map.values, vec![1.0, 0.5, 0.0]);

        // A different threshold needs stored draws.
        assert!(ppm(&chain, &[1.0], 0.2).is_err());

        let mut draws = Vec::new();
        for v in [0.1, 0.3, 0.9] {
            let mut st = ModelState::zeros(1, 0, 3);
            st.w[(0, 0)] = v;
            draws.push(st);
        }
        chain.draws = Some(draws);
        let map = ppm(&chain, &[1.0], 0.2).unwrap();
        assert!((map.values[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ppm_rejects_bad_contrast() {
        let chain = chain_stub(2, 0, 1);
        assert!(ppm(&chain, &[1.0], 0.0).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let map = Ppm { values: vec![0.94, 0.95, 0.96], contrast: vec![1.0], delta_e: 0.0, n_draws: 100 };
        let act = threshold_ppm(&map, 0.95).unwrap();
        assert_eq!(act, vec![false, false, true]);

        let ones = Ppm { values: vec![1.0, 1.0], contrast: vec![1.0], delta_e: 0.0, n_draws: 10 };
        assert_eq!(threshold_ppm(&ones, 0.999999).unwrap(), vec![true, true]);
        assert!(threshold_ppm(&ones, 1.0).is_err());
    }

    #[test]
    fn lpml_single_draw_and_reorder_invariance() {
        let mut chain = chain_stub(1, 0, 2);
        chain.loglik = Some(array![[-2.0, -3.0]]);
        assert!((lpml(&chain).unwrap() - -5.0).abs() < 1e-12);

        let mut chain2 = chain_stub(1, 0, 2);
        chain2.loglik = Some(array![[-3.0, -2.0]]);
        assert!((lpml(&chain2).unwrap() - lpml(&chain).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lpml_decreases_under_density_degradation() {
        let mut chain = chain_stub(1, 0, 2);
        chain.loglik = Some(array![[-2.0, -3.0], [-2.5, -2.8], [-1.9, -3.3]]);
        let base = lpml(&chain).unwrap();
        let degraded = chain.loglik.as_ref().unwrap().mapv(|v| v - 0.7);
        chain.loglik = Some(degraded);
        let worse = lpml(&chain).unwrap();
        assert!((worse - (base - 2.0 * 0.7)).abs() < 1e-10);
        assert!(worse < base);
    }

    #[test]
    fn lpml_requires_densities() {
        let chain = chain_stub(1, 0, 2);
        assert!(matches!(lpml(&chain), Err(Error::MissingDensities)));
    }

    #[test]
    fn mse_trivia() {
        let mut chain = chain_stub(1, 1, 3);
        let truth = GroundTruth {
            w: array![[1.0, 2.0, 3.0]],
            a: array![[0.1, 0.2, 0.3]],
            gamma: array![[1, 1, 1]],
            lambda: vec![1.0; 3],
            contrast: vec![1.0],
            delta_e_top10: 0.0,
            delta_e_top5: 0.0,
            active_top10: vec![true, false, false],
            active_top5: vec![true, false, false],
        };
        chain.w_mean = truth.w.clone();
        chain.a_mean = truth.a.clone();
        let t = mse_table(&chain, &truth).unwrap();
        assert_eq!(t.w, vec![0.0]);
        assert_eq!(t.a, vec![0.0]);

        chain.w_mean = truth.w.mapv(|v| v + 1.0);
        let t = mse_table(&chain, &truth).unwrap();
        assert!((t.w[0] - 1.0).abs() < 1e-12);

        assert!((mse_flat(&[2.0, 2.0], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(mse_flat(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sensitivity_perfect_and_degenerate() {
        let grid = [0.9, 0.95, 0.99];
        let active = vec![true, true, false, false];
        let perfect = Ppm { values: vec![1.0, 1.0, 0.0, 0.0], contrast: vec![1.0], delta_e: 0.0, n_draws: 10 };
        let c = sensitivity_curve(&perfect, &active, &grid, "top10").unwrap();
        assert_eq!(c.sensitivity, vec![1.0, 1.0, 1.0]);

        let zero = Ppm { values: vec![0.0; 4], contrast: vec![1.0], delta_e: 0.0, n_draws: 10 };
        let c = sensitivity_curve(&zero, &active, &grid, "top10").unwrap();
        assert_eq!(c.sensitivity, vec![0.0, 0.0, 0.0]);

        assert!(matches!(
            sensitivity_curve(&zero, &[false; 4], &grid, "top10"),
            Err(Error::EmptyActiveSet)
        ));
    }

    #[test]
    fn sensitivity_uniform_ppm_expectation() {
        // Uniform probabilities: expected sensitivity at threshold d is 1 - d.
        let n = 20_000;
        let mut values = Vec::with_capacity(n);
        let mut x = 0.5f64;
        for _ in 0..n {
            // Weyl sequence: equidistributed on (0,1).
            x = (x + std::f64::consts::FRAC_1_SQRT_2) % 1.0;
            values.push(x);
        }
        let active = vec![true; n];
        let map = Ppm { values, contrast: vec![1.0], delta_e: 0.0, n_draws: 1 };
        let c = sensitivity_curve(&map, &active, &[0.9], "top10").unwrap();
        assert!((c.sensitivity[0] - 0.1).abs() < 0.01);
    }

    #[test]
    fn sensitivity_monotone_in_threshold() {
        let map = Ppm {
            values: (0..50).map(|i| (i as f64) / 50.0).collect(),
            contrast: vec![1.0],
            delta_e: 0.0,
            n_draws: 1,
        };
        let active = vec![true; 50];
        let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let c = sensitivity_curve(&map, &active, &grid, "top10").unwrap();
        for w in c.sensitivity.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn order_map_rules() {
        let mut chain = chain_stub(1, 4, 3);
        chain.gamma_freq = array![
            [1.0, 0.0, 0.9],
            [1.0, 0.0, 0.4],
            [0.0, 0.0, 0.6],
            [0.0, 0.0, 0.2],
        ];
        chain.mean_max_order = vec![2.2, 0.0, 3.4];
        let (orders, hist) = ar_order_map(&chain, OrderRule::MedianFrequency);
        assert_eq!(orders, vec![2, 0, 3]);
        assert_eq!(hist, vec![1, 0, 1, 1, 0]);
        let (orders, _) = ar_order_map(&chain, OrderRule::RoundedMean);
        assert_eq!(orders, vec![2, 0, 3]);
    }
}
