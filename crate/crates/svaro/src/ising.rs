//! Ising-prior utilities: the hyperparameter bound construction, an exact
//! enumeration oracle for small graphs, and prior-only field samplers.
//!
//! The binary field mass is
//! `P(g) ~ exp(beta0 * sum_n g_n + beta1 * sum_{n1~n2} I(g_n1 = g_n2))`.
//! Both the single-site Gibbs kernel and the Swendsen-Wang cluster kernel are
//! shared with the posterior sampler, which supplies a per-site log-likelihood
//! ratio; prior-only sampling passes a zero ratio.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{cube_neighbor_pair_count, LatticeGraph};

/// Largest voxel count for which exact enumeration is attempted.
pub const ENUMERATION_LIMIT: usize = 20;

/// Inputs to the hyperparameter bound construction.
#[derive(Debug, Clone, Copy)]
pub struct IsingBoundInput {
    /// Total voxel count.
    pub n: usize,
    /// Expected inclusion proportion for the order, in (0, 1).
    pub pi_p: f64,
    /// Assumed per-order coefficient of determination, in [0, 1).
    pub r2: f64,
    /// Time-series length entering the bound.
    pub t_len: f64,
}

/// Feasibility region for one order's `(beta0, beta1)` pair.
///
/// Low orders should satisfy `beta0 + coef * beta1 >= rhs`; high orders should
/// additionally satisfy `beta0 + 3 beta1 < 0` (sparsity of high-order fields).
#[derive(Debug, Clone, Copy)]
pub struct IsingBound {
    /// Edge length of the cube holding the expected included voxels.
    pub v_p: f64,
    /// Multiplier on `beta1` in the low-order constraint, `3 (V_p - 1) / V_p`.
    pub coef: f64,
    /// Lower bound value, `-T R^2 / (2 (1 - R^2))`.
    pub rhs: f64,
    /// Multiplier on `beta1` in the high-order sparsity constraint.
    pub high_order_coef: f64,
}

impl IsingBound {
    pub fn feasible_low_order(&self, beta0: f64, beta1: f64) -> bool {
        beta0 + self.coef * beta1 >= self.rhs
    }

    pub fn feasible_high_order(&self, beta0: f64, beta1: f64) -> bool {
        beta0 + self.high_order_coef * beta1 < 0.0
    }
}

/// Constructs the anti-phase-transition bound for one order.
///
/// The included voxels are idealized as a cube with edge `V_p = (pi_p N)^(1/3)`
/// and `3 V_p^2 (V_p - 1)` internal neighbor pairs; requiring the included
/// configuration to carry at least as much posterior mass as the empty one
/// yields `beta0 V_p^3 + 3 beta1 V_p^2 (V_p - 1) >= -T R^2 / (2 (1 - R^2)) * pi_p N`,
/// and dividing by `V_p^3 = pi_p N` gives the returned linear constraint.
pub fn ising_bounds(input: IsingBoundInput) -> Result<IsingBound> {
    if input.n == 0 {
        return Err(Error::NoVoxels);
    }
    if !(input.pi_p > 0.0 && input.pi_p < 1.0) {
        return Err(Error::Config(format!("pi_p must lie in (0, 1), got {}", input.pi_p)));
    }
    if !(input.r2 >= 0.0 && input.r2 < 1.0) {
        return Err(Error::Config(format!("R^2 must lie in [0, 1), got {}", input.r2)));
    }
    if input.t_len <= 0.0 {
        return Err(Error::NonPositive { what: "t_len", value: input.t_len });
    }
    let v_p = (input.pi_p * input.n as f64).cbrt();
    // Same cube convention as cube_neighbor_pair_count: 3 V^2 (V-1) pairs
    // over V^3 sites.
    let coef = cube_neighbor_pair_count(v_p) / (v_p * v_p * v_p);
    let rhs = -0.5 * input.t_len * input.r2 / (1.0 - input.r2);
    Ok(IsingBound { v_p, coef, rhs, high_order_coef: 3.0 })
}

/// Exact per-site marginals and log partition function by full enumeration.
#[derive(Debug, Clone)]
pub struct IsingExact {
    pub marginals: Vec<f64>,
    pub log_z: f64,
}

/// Enumerates all `2^N` configurations of the field mass over `graph`.
pub fn exact_ising(graph: &LatticeGraph, beta0: f64, beta1: f64) -> Result<IsingExact> {
    let n = graph.n_voxels;
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationInfeasible { n, limit: ENUMERATION_LIMIT });
    }
    let states: u64 = 1u64 << n;
    // Two passes: a stable log-sum-exp needs the maximum first.
    let log_mass = |state: u64| -> f64 {
        let ones = state.count_ones() as f64;
        let agree = graph
            .adjacency
            .iter()
            .filter(|&&(a, b)| ((state >> a) & 1) == ((state >> b) & 1))
            .count() as f64;
        beta0 * ones + beta1 * agree
    };
    let mut max_lm = f64::NEG_INFINITY;
    for s in 0..states {
        max_lm = max_lm.max(log_mass(s));
    }
    let mut z = 0.0;
    let mut site_mass = vec![0.0; n];
    for s in 0..states {
        let m = (log_mass(s) - max_lm).exp();
        z += m;
        for site in site_mass.iter_mut().enumerate().filter(|(i, _)| (s >> i) & 1 == 1) {
            *site.1 += m;
        }
    }
    Ok(IsingExact {
        marginals: site_mass.iter().map(|&m| m / z).collect(),
        log_z: z.ln() + max_lm,
    })
}

/// Draws one configuration exactly by enumeration (used by validation
/// harnesses that need independent prior draws).
pub fn exact_ising_draw<R: Rng>(
    graph: &LatticeGraph,
    beta0: f64,
    beta1: f64,
    rng: &mut R,
) -> Result<Vec<u8>> {
    let n = graph.n_voxels;
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationInfeasible { n, limit: ENUMERATION_LIMIT });
    }
    let states: u64 = 1u64 << n;
    let log_mass = |state: u64| -> f64 {
        let ones = state.count_ones() as f64;
        let agree = graph
            .adjacency
            .iter()
            .filter(|&&(a, b)| ((state >> a) & 1) == ((state >> b) & 1))
            .count() as f64;
        beta0 * ones + beta1 * agree
    };
    let mut max_lm = f64::NEG_INFINITY;
    for s in 0..states {
        max_lm = max_lm.max(log_mass(s));
    }
    let total: f64 = (0..states).map(|s| (log_mass(s) - max_lm).exp()).sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = states - 1;
    for s in 0..states {
        acc += (log_mass(s) - max_lm).exp();
        if u < acc {
            chosen = s;
            break;
        }
    }
    Ok((0..n).map(|i| ((chosen >> i) & 1) as u8).collect())
}

/// Neighbor-agreement form of the single-site conditional. The exact
/// conditional of the agreement-indicator mass gives each neighbor a vote of
/// `+1` when it is labeled one and `-1` when labeled zero; the shorthand form
/// counts only the ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GibbsForm {
    /// `beta1 * sum_{n'~n} [I(g_n' = 1) - I(g_n' = 0)]` (exact conditional).
    #[default]
    Agreement,
    /// `beta1 * sum_{n'~n} g_n'` (compatibility shorthand).
    OnesOnly,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One fixed-raster-order Gibbs sweep of a binary field. `llr(n)` is the
/// per-site log-likelihood ratio `ln L(g_n = 1) - ln L(g_n = 0)`; pass zero
/// for prior-only sampling.
pub fn gibbs_sweep_field<R: Rng>(
    gamma: &mut [u8],
    graph: &LatticeGraph,
    beta0: f64,
    beta1: f64,
    llr: &dyn Fn(usize) -> f64,
    form: GibbsForm,
    rng: &mut R,
) {
    for n in 0..graph.n_voxels {
        let neighbor_term: f64 = match form {
            GibbsForm::Agreement => graph.neighbors[n]
                .iter()
                .map(|&m| if gamma[m] == 1 { 1.0 } else { -1.0 })
                .sum(),
            GibbsForm::OnesOnly => {
                graph.neighbors[n].iter().filter(|&&m| gamma[m] == 1).count() as f64
            }
        };
        let log_odds = llr(n) + beta0 + beta1 * neighbor_term;
        gamma[n] = u8::from(rng.random::<f64>() < sigmoid(log_odds));
    }
}

/// One Swendsen-Wang update of a binary field: bonds form between equal-label
/// neighbors with probability `1 - exp(-beta1)`, and each resulting cluster is
/// relabeled jointly from its Bernoulli conditional.
pub fn sw_update_field<R: Rng>(
    gamma: &mut [u8],
    graph: &LatticeGraph,
    beta0: f64,
    beta1: f64,
    llr: &dyn Fn(usize) -> f64,
    rng: &mut R,
) -> Result<()> {
    if beta1 < 0.0 {
        return Err(Error::NegativeCoupling(beta1));
    }
    let n = graph.n_voxels;
    let p_bond = 1.0 - (-beta1).exp();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in &graph.adjacency {
        if gamma[a] == gamma[b] && rng.random::<f64>() < p_bond {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    // Accumulate cluster log-odds, then flip each cluster once.
    let mut cluster_odds: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    for v in 0..n {
        let root = find(&mut parent, v);
        *cluster_odds.entry(root).or_insert(0.0) += beta0 + llr(v);
    }
    let mut roots: Vec<usize> = cluster_odds.keys().copied().collect();
    roots.sort_unstable();
    let mut new_label = vec![0u8; n];
    let mut label_of_root: std::collections::HashMap<usize, u8> = std::collections::HashMap::new();
    for root in roots {
        let odds = cluster_odds[&root];
        label_of_root.insert(root, u8::from(rng.random::<f64>() < sigmoid(odds)));
    }
    for v in 0..n {
        let root = find(&mut parent, v);
        new_label[v] = label_of_root[&root];
    }
    gamma.copy_from_slice(&new_label);
    Ok(())
}

/// Configuration for prior-only field sampling.
#[derive(Debug, Clone, Copy)]
pub struct PriorSampleConfig {
    pub burnin: usize,
    pub n_draws: usize,
    /// Sweeps between stored draws.
    pub sweeps_per_draw: usize,
    /// Every `sw_period`-th sweep uses Swendsen-Wang; 0 disables SW entirely.
    pub sw_period: usize,
}

impl Default for PriorSampleConfig {
    fn default() -> Self {
        Self { burnin: 500, n_draws: 1, sweeps_per_draw: 1, sw_period: 5 }
    }
}

/// Samples fields from the prior mass via the SW/Gibbs hybrid.
pub fn sample_ising_prior<R: Rng>(
    graph: &LatticeGraph,
    beta0: f64,
    beta1: f64,
    config: PriorSampleConfig,
    rng: &mut R,
) -> Result<Vec<Vec<u8>>> {
    let n = graph.n_voxels;
    let mut gamma: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
    let zero = |_: usize| 0.0;
    let mut sweep_idx: usize = 0;
    let mut advance = |gamma: &mut Vec<u8>, rng: &mut R| -> Result<()> {
        sweep_idx += 1;
        if config.sw_period > 0 && sweep_idx % config.sw_period == 0 {
            sw_update_field(gamma, graph, beta0, beta1, &zero, rng)?;
        } else {
            gibbs_sweep_field(gamma, graph, beta0, beta1, &zero, GibbsForm::Agreement, rng);
        }
        Ok(())
    };

    for _ in 0..config.burnin {
        advance(&mut gamma, rng)?;
    }
    let mut draws = Vec::with_capacity(config.n_draws);
    for _ in 0..config.n_draws {
        for _ in 0..config.sweeps_per_draw.max(1) {
            advance(&mut gamma, rng)?;
        }
        draws.push(gamma.clone());
    }
    Ok(draws)
}
