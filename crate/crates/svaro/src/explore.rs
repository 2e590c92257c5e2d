//! Exploratory per-voxel analysis: ordinary least squares, Yule-Walker AR
//! fitting with AIC order selection, and the resulting order map.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// One fitted AR model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub innovation_variance: f64,
    pub aic: f64,
    /// Set when the input series was constant (zero variance).
    pub degenerate: bool,
}

/// Least-squares fit of one voxel's series against the full design.
///
/// Returns the coefficient vector and the full-length residual. Rank
/// deficiency is detected column by column so the offending column can be
/// named.
pub fn ols_fit(y: &Array1<f64>, x_full: &Array2<f64>) -> Result<(Vec<f64>, Array1<f64>)> {
    let (t, k) = x_full.dim();
    if y.len() != t {
        return Err(Error::DimensionMismatch(format!(
            "series length {} != design rows {t}",
            y.len()
        )));
    }
    if t <= k {
        return Err(Error::DimensionMismatch(format!(
            "need more rows ({t}) than columns ({k})"
        )));
    }

    // Sequential Gram-Schmidt rank check.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for col in 0..k {
        let mut v: Vec<f64> = (0..t).map(|i| x_full[(i, col)]).collect();
        let norm0: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0.max(1.0) {
            return Err(Error::RankDeficient { column: col });
        }
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }

    let xm = nalgebra::DMatrix::from_fn(t, k, |i, j| x_full[(i, j)]);
    let yv = nalgebra::DVector::from_fn(t, |i, _| y[i]);
    let qr = xm.clone().qr();
    let qty = qr.q().transpose() * &yv;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("QR solve failed in least squares".into()))?;
    let fitted = xm * &beta;
    let residuals = Array1::from_iter((0..t).map(|i| y[i] - fitted[i]));
    Ok((beta.as_slice().to_vec(), residuals))
}

/// Levinson-Durbin recursion over sample autocovariances for orders
/// `0..=p_max`; returns coefficients and innovation variances per order.
pub fn levinson_durbin(autocov: &[f64], p_max: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut coeffs: Vec<Vec<f64>> = vec![Vec::new()];
    let mut variances = vec![autocov[0]];
    let mut phi = vec![0.0; p_max + 1];
    let mut prev = vec![0.0; p_max + 1];
    let mut var = autocov[0];
    for order in 1..=p_max {
        let mut acc = autocov[order];
        for j in 1..order {
            acc -= prev[j] * autocov[order - j];
        }
        let k = if var > 0.0 { acc / var } else { 0.0 };
        phi[order] = k;
        for j in 1..order {
            phi[j] = prev[j] - k * prev[order - j];
        }
        var *= 1.0 - k * k;
        var = var.max(0.0);
        prev[..=order].copy_from_slice(&phi[..=order]);
        coeffs.push(phi[1..=order].to_vec());
        variances.push(var);
    }
    (coeffs, variances)
}

/// Fits AR models of order `0..=p_max` by Yule-Walker and picks the AIC
/// minimizer, `AIC(p) = T ln(sigma^2_p) + 2 p`, ties broken toward the
/// smaller order.
pub fn fit_ar_aic(residuals: &Array1<f64>, p_max: usize) -> Result<ArFit> {
    let t = residuals.len();
    if t <= p_max + 1 {
        return Err(Error::DimensionMismatch(format!(
            "series length {t} too short for order {p_max}"
        )));
    }
    let mean = residuals.sum() / t as f64;
    let mut autocov = vec![0.0; p_max + 1];
    for (lag, c) in autocov.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in lag..t {
            acc += (residuals[i] - mean) * (residuals[i - lag] - mean);
        }
        *c = acc / t as f64;
    }
    if autocov[0] <= 0.0 {
        return Ok(ArFit {
            order: 0,
            coefficients: Vec::new(),
            innovation_variance: 0.0,
            aic: f64::NEG_INFINITY,
            degenerate: true,
        });
    }

    let (coeffs, variances) = levinson_durbin(&autocov, p_max);
    let tf = t as f64;
    let mut best = 0usize;
    let mut best_aic = f64::INFINITY;
    let mut aics = vec![f64::INFINITY; p_max + 1];
    for (order, &var) in variances.iter().enumerate() {
        if var <= 0.0 {
            // Numerically degenerate beyond this order; earlier orders stand.
            break;
        }
        let aic = tf * var.ln() + 2.0 * order as f64;
        aics[order] = aic;
        if aic < best_aic {
            best_aic = aic;
            best = order;
        }
    }
    Ok(ArFit {
        order: best,
        coefficients: coeffs[best].clone(),
        innovation_variance: variances[best],
        aic: aics[best],
        degenerate: false,
    })
}

/// Per-voxel AIC-selected AR order on least-squares residuals.
pub fn ar_order_map_exploratory(dataset: &Dataset, p_max: usize) -> Result<Vec<usize>> {
    let mut orders = Vec::with_capacity(dataset.n);
    for voxel in 0..dataset.n {
        let y = dataset.y.column(voxel).to_owned();
        let (_, resid) = ols_fit(&y, &dataset.x_full)?;
        orders.push(fit_ar_aic(&resid, p_max)?.order);
    }
    Ok(orders)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::simulate::{ar_series_for_tests, SimConfig};
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn ols_exact_and_intercept_only() {
        let x = array![[1.0, 1.0], [2.0, 1.0], [3.0, 1.0], [4.0, 1.0]];
        let y = array![3.0, 5.0, 7.0, 9.0]; // 2 x + 1
        let (beta, resid) = ols_fit(&y, &x).unwrap();
        assert_relative_eq!(beta[0], 2.0, max_relative = 1e-10);
        assert_relative_eq!(beta[1], 1.0, max_relative = 1e-10);
        for r in resid.iter() {
            assert!(r.abs() < 1e-10);
        }

        // Intercept only: residuals are the centered series.
        let x1 = Array2::from_elem((4, 1), 1.0);
        let y1 = array![1.0, 2.0, 3.0, 6.0];
        let (_, resid) = ols_fit(&y1, &x1).unwrap();
        let mean = 3.0;
        for (r, v) in resid.iter().zip(y1.iter()) {
            assert_relative_eq!(*r, v - mean, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let t = 40;
        let x = Array2::from_shape_fn((t, 3), |(i, j)| ((i * (j + 2) + 3) % 13) as f64 * 0.37 - 1.0);
        let y = Array1::from_shape_fn(t, |i| ((i * 7) % 5) as f64 - 1.3);
        let (beta, _) = ols_fit(&y, &x).unwrap();

        let mut xtx: nalgebra::DMatrix<f64> = nalgebra::DMatrix::zeros(3, 3);
        let mut xty: nalgebra::DVector<f64> = nalgebra::DVector::zeros(3);
        for i in 0..t {
            for a in 0..3 {
                for b in 0..3 {
                    xtx[(a, b)] += x[(i, a)] * x[(i, b)];
                }
                xty[a] += x[(i, a)] * y[i];
            }
        }
        let oracle = xtx.lu().solve(&xty).unwrap();
        for i in 0..3 {
            assert!((beta[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn ols_names_rank_deficient_column() {
        let mut x = Array2::zeros((6, 3));
        for i in 0..6 {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = i as f64;
            x[(i, 2)] = 2.0 * i as f64 + 3.0; // dependent on columns 0 and 1
        }
        let y = Array1::zeros(6);
        match ols_fit(&y, &x) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn levinson_matches_direct_yule_walker() {
        // Random-ish stationary series; compare against a direct Toeplitz solve.
        let t = 600;
        let series = ar_series_for_tests(&[0.6, -0.3, 0.1], 1.0, t, 50, 1234);
        let arr = Array1::from_vec(series);
        let mean = arr.sum() / t as f64;
        let p_max = 12;
        let mut autocov = vec![0.0; p_max + 1];
        for (lag, c) in autocov.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in lag..t {
                acc += (arr[i] - mean) * (arr[i - lag] - mean);
            }
            *c = acc / t as f64;
        }
        let (coeffs, variances) = levinson_durbin(&autocov, p_max);
        for order in 1..=p_max {
            let mut toeplitz = nalgebra::DMatrix::zeros(order, order);
            let mut rhs = nalgebra::DVector::zeros(order);
            for i in 0..order {
                for j in 0..order {
                    toeplitz[(i, j)] = autocov[i.abs_diff(j)];
                }
                rhs[i] = autocov[i + 1];
            }
            let direct = toeplitz.lu().solve(&rhs).unwrap();
            for i in 0..order {
                assert!(
                    (coeffs[order][i] - direct[i]).abs() < 1e-8,
                    "order {order}, coefficient {i}"
                );
            }
            // Innovation variance is non-increasing in order.
            assert!(variances[order] <= variances[order - 1] + 1e-12);
        }
    }

    #[test]
    fn aic_selects_white_noise_and_strong_ar2() {
        let mut zero_picks = 0;
        let reps = 60;
        for rep in 0..reps {
            let series = ar_series_for_tests(&[], 1.0, 500, 0, 1000 + rep);
            let fit = fit_ar_aic(&Array1::from_vec(series), 12).unwrap();
            if fit.order == 0 {
                zero_picks += 1;
            }
        }
        assert!(zero_picks * 2 > reps, "white noise picked order 0 only {zero_picks}/{reps}");

        let mut two_picks = 0;
        for rep in 0..reps {
            let series = ar_series_for_tests(&[1.2, -0.5], 1.0, 500, 100, 2000 + rep);
            let fit = fit_ar_aic(&Array1::from_vec(series), 12).unwrap();
            if fit.order == 2 {
                two_picks += 1;
            }
        }
        assert!(two_picks * 2 > reps, "AR(2) picked order 2 only {two_picks}/{reps}");
    }

    #[test]
    fn aic_p_max_zero_and_degenerate() {
        let series = Array1::from_vec(vec![1.0, -0.4, 0.3, 0.9, -1.2, 0.1]);
        let fit = fit_ar_aic(&series, 0).unwrap();
        assert_eq!(fit.order, 0);
        assert!(!fit.degenerate);

        let flat = Array1::from_elem(30, 2.5);
        let fit = fit_ar_aic(&flat, 5).unwrap();
        assert_eq!(fit.order, 0);
        assert!(fit.degenerate);
        assert_eq!(fit.innovation_variance, 0.0);
    }

    #[test]
    fn aic_selection_scale_invariant() {
        let series = ar_series_for_tests(&[0.7], 1.0, 400, 50, 7);
        let arr = Array1::from_vec(series.clone());
        let scaled = Array1::from_vec(series.iter().map(|v| v * 1000.0).collect());
        let a = fit_ar_aic(&arr, 8).unwrap();
        let b = fit_ar_aic(&scaled, 8).unwrap();
        assert_eq!(a.order, b.order);
    }

    #[test]
    fn exploratory_map_white_noise_mostly_zero() {
        let graph = build_lattice(&[4, 4], &[true; 16]).unwrap();
        let t = 300;
        let x = Array2::from_shape_fn((t, 2), |(i, j)| if j == 1 { 1.0 } else { (i as f64 * 0.21).sin() });
        let mut y = Array2::zeros((t, 16));
        for voxel in 0..16 {
            let noise = ar_series_for_tests(&[], 4.0, t, 0, 500 + voxel as u64);
            for i in 0..t {
                y[(i, voxel)] = 3.0 + noise[i];
            }
        }
        let ds = Dataset::new(y, x, graph, 0).unwrap();
        let orders = ar_order_map_exploratory(&ds, 6).unwrap();
        let zeros = orders.iter().filter(|&&o| o == 0).count();
        assert!(zeros * 2 > orders.len(), "only {zeros}/16 voxels at order zero");
    }

    #[test]
    fn exploratory_map_correlates_with_truth() {
        let cfg = SimConfig { dims: vec![8, 8], t_len: 220, p_max: 2, tau: vec![15.0; 2], ..SimConfig::sim1() };
        let (ds, truth) = crate::simulate::simulate_svaro(&cfg, 40).unwrap();
        let orders = ar_order_map_exploratory(&ds, 4).unwrap();
        let truth_orders = truth.max_order();
        // Positive rank association via a simple concordance count.
        let mut concordant = 0i64;
        let mut discordant = 0i64;
        for i in 0..orders.len() {
            for j in (i + 1)..orders.len() {
                let d1 = orders[i] as i64 - orders[j] as i64;
                let d2 = truth_orders[i] as i64 - truth_orders[j] as i64;
                if d1 * d2 > 0 {
                    concordant += 1;
                } else if d1 * d2 < 0 {
                    discordant += 1;
                }
            }
        }
        assert!(concordant > discordant, "{concordant} vs {discordant}");
    }
}
