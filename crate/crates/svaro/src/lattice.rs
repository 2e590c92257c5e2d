//! Voxel lattice graphs, the Laplacian smoothing operator, and sweep colorings.
//!
//! The spatial domain is a masked rectangular grid in two or three dimensions
//! with first-order (axis-aligned, unit-distance) adjacency. The Laplacian `S`
//! has the voxel degree on the diagonal and `-1` for each neighbor pair; the
//! spatial prior acts through `S^T S`, whose sparsity pattern reaches
//! second-order neighbors. Sweep colorings partition voxels so that no two
//! voxels of one color interact through `S^T S`, which lets a Gibbs sweep
//! update a whole color class in parallel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masked rectangular voxel grid with first-order adjacency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeGraph {
    /// Grid extent per axis (2 or 3 axes).
    pub dims: Vec<usize>,
    /// In-mask flag per grid cell, row-major over `dims`.
    pub mask: Vec<bool>,
    /// Dense voxel index per grid cell; `None` for masked-out cells.
    pub voxel_index: Vec<Option<usize>>,
    /// Grid cell of each voxel (inverse of `voxel_index`).
    pub grid_cell: Vec<usize>,
    /// Neighbor pairs `(n1, n2)` with `n1 < n2`, both endpoints in-mask.
    pub adjacency: Vec<(usize, usize)>,
    /// Neighbor list per voxel.
    pub neighbors: Vec<Vec<usize>>,
    /// Number of in-mask voxels.
    pub n_voxels: usize,
}

impl LatticeGraph {
    /// Degree (number of in-mask first-order neighbors) of voxel `n`.
    pub fn degree(&self, n: usize) -> usize {
        self.neighbors[n].len()
    }

    /// Grid coordinates of voxel `n`.
    pub fn coords(&self, n: usize) -> Vec<usize> {
        let mut cell = self.grid_cell[n];
        let mut out = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            out[axis] = cell % self.dims[axis];
            cell /= self.dims[axis];
        }
        out
    }
}

/// Builds the lattice graph over the masked-in cells of a `dims` grid.
///
/// Adjacency is axis-aligned at unit distance; masked-out cells are excluded
/// entirely, so boundary voxels simply have smaller degrees.
pub fn build_lattice(dims: &[usize], mask: &[bool]) -> Result<LatticeGraph> {
    if dims.len() < 2 || dims.len() > 3 {
        return Err(Error::DimensionMismatch(format!(
            "expected 2 or 3 grid axes, got {}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::DimensionMismatch("grid axes must all be >= 1".into()));
    }
    let n_cells: usize = dims.iter().product();
    if mask.len() != n_cells {
        return Err(Error::DimensionMismatch(format!(
            "mask length {} != grid size {}",
            mask.len(),
            n_cells
        )));
    }

    let mut voxel_index = vec![None; n_cells];
    let mut grid_cell = Vec::new();
    for (cell, &inside) in mask.iter().enumerate() {
        if inside {
            voxel_index[cell] = Some(grid_cell.len());
            grid_cell.push(cell);
        }
    }
    let n_voxels = grid_cell.len();
    if n_voxels == 0 {
        return Err(Error::NoVoxels);
    }

    // Strides for row-major linearization.
    let mut strides = vec![1usize; dims.len()];
    for axis in (0..dims.len() - 1).rev() {
        strides[axis] = strides[axis + 1] * dims[axis + 1];
    }

    let mut adjacency = Vec::new();
    let mut neighbors = vec![Vec::new(); n_voxels];
    for (n, &cell) in grid_cell.iter().enumerate() {
        let mut rem = cell;
        for axis in 0..dims.len() {
            let coord = rem / strides[axis];
            rem %= strides[axis];
            // Only look "forward" along each axis so each pair appears once.
            if coord + 1 < dims[axis] {
                let other_cell = cell + strides[axis];
                if let Some(m) = voxel_index[other_cell] {
                    let (lo, hi) = if n < m { (n, m) } else { (m, n) };
                    adjacency.push((lo, hi));
                    neighbors[n].push(m);
                    neighbors[m].push(n);
                }
            }
        }
    }
    adjacency.sort_unstable();
    for list in &mut neighbors {
        list.sort_unstable();
    }

    Ok(LatticeGraph {
        dims: dims.to_vec(),
        mask: mask.to_vec(),
        voxel_index,
        grid_cell,
        adjacency,
        neighbors,
        n_voxels,
    })
}

/// Number of first-order neighbor pairs in a full cube of edge length `v`,
/// `3 v^2 (v - 1)`. Accepts fractional edge lengths as used by the Ising
/// hyperparameter bound construction.
pub fn cube_neighbor_pair_count(v: f64) -> f64 {
    3.0 * v * v * (v - 1.0)
}

/// Sparse Laplacian `S` of a lattice graph together with a precomputed `S^T S`.
///
/// `S` has voxel degree on the diagonal and `-1` in entry `(n, j)` when `j` is
/// a neighbor of `n`, so every row sums to zero. `S^T S = S^2` couples voxels
/// up to graph distance two; the sampler needs its diagonal and off-diagonal
/// rows explicitly, so they are stored once (the mask is static).
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    n: usize,
    degree: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    sts_diag: Vec<f64>,
    sts_offdiag: Vec<Vec<(usize, f64)>>,
}

/// Builds the Laplacian operator of `graph`.
pub fn laplacian(graph: &LatticeGraph) -> LaplacianOperator {
    LaplacianOperator::new(graph)
}

impl LaplacianOperator {
    pub fn new(graph: &LatticeGraph) -> Self {
        let n = graph.n_voxels;
        let degree: Vec<f64> = (0..n).map(|v| graph.degree(v) as f64).collect();
        let neighbors = graph.neighbors.clone();

        // S^T S = S^2 since S is symmetric. Row n: accumulate S_{nk} S_{kj}.
        let mut sts_diag = vec![0.0; n];
        let mut sts_offdiag = vec![Vec::new(); n];
        let mut row: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for v in 0..n {
            row.clear();
            // k = v term: S_vv * S_vj
            *row.entry(v).or_insert(0.0) += degree[v] * degree[v];
            for &j in &neighbors[v] {
                *row.entry(j).or_insert(0.0) += degree[v] * -1.0;
            }
            // k = neighbor terms: S_vk = -1
            for &k in &neighbors[v] {
                *row.entry(k).or_insert(0.0) += -1.0 * degree[k];
                for &j in &neighbors[k] {
                    *row.entry(j).or_insert(0.0) += 1.0;
                }
            }
            for (&j, &val) in row.iter() {
                if val == 0.0 {
                    continue;
                }
                if j == v {
                    sts_diag[v] = val;
                } else {
                    sts_offdiag[v].push((j, val));
                }
            }
        }

        Self { n, degree, neighbors, sts_diag, sts_offdiag }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Applies `S` to a vector.
    pub fn apply_s(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = self.degree[i] * v[i];
                for &j in &self.neighbors[i] {
                    acc -= v[j];
                }
                acc
            })
            .collect()
    }

    /// Applies `S^T S` to a vector.
    pub fn apply_sts(&self, v: &[f64]) -> Vec<f64> {
        self.apply_s(&self.apply_s(v))
    }

    /// Diagonal entry `(S^T S)_{nn}`.
    pub fn sts_diag(&self, n: usize) -> f64 {
        self.sts_diag[n]
    }

    /// Off-diagonal entries of row `n` of `S^T S` as `(column, value)` pairs.
    pub fn sts_offdiag_row(&self, n: usize) -> &[(usize, f64)] {
        &self.sts_offdiag[n]
    }

    /// Quadratic form `v^T S^T S v = ||S v||^2`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.apply_s(v).iter().map(|x| x * x).sum()
    }

    /// Dense copy of `S`, for small-problem factorizations and tests.
    pub fn dense_s(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.degree[i];
            for &j in &self.neighbors[i] {
                m[(i, j)] = -1.0;
            }
        }
        m
    }

    /// Dense `scale * S^T S + jitter * I`.
    pub fn dense_sts(&self, scale: f64, jitter: f64) -> nalgebra::DMatrix<f64> {
        let s = self.dense_s();
        let mut q = &s * &s * scale;
        for i in 0..self.n {
            q[(i, i)] += jitter;
        }
        q
    }
}

/// Assignment of voxels to colors such that same-colored voxels do not
/// interact through `S^T S`.
#[derive(Debug, Clone)]
pub struct SweepColoring {
    /// Color id per voxel.
    pub color: Vec<usize>,
    /// Number of colors used.
    pub n_colors: usize,
    /// Voxel lists per color, in ascending voxel order.
    pub groups: Vec<Vec<usize>>,
}

/// Greedy proper coloring of the distance-2 interaction graph.
///
/// Voxels within graph distance two of each other are coupled by the
/// `w`-conditional (through `S^T S`), so they must receive distinct colors.
pub fn color_for_sweep(graph: &LatticeGraph) -> SweepColoring {
    let n = graph.n_voxels;
    let mut color = vec![usize::MAX; n];
    let mut n_colors = 0;
    let mut blocked: Vec<bool> = Vec::new();
    for v in 0..n {
        blocked.clear();
        blocked.resize(n_colors, false);
        for &u in &graph.neighbors[v] {
            if color[u] != usize::MAX {
                blocked[color[u]] = true;
            }
            for &w in &graph.neighbors[u] {
                if w != v && color[w] != usize::MAX {
                    blocked[color[w]] = true;
                }
            }
        }
        let c = blocked.iter().position(|&b| !b).unwrap_or(n_colors);
        if c == n_colors {
            n_colors += 1;
        }
        color[v] = c;
    }
    let mut groups = vec![Vec::new(); n_colors];
    for (v, &c) in color.iter().enumerate() {
        groups[c].push(v);
    }
    SweepColoring { color, n_colors, groups }
}
