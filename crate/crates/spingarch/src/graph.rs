//! Neighborhood graphs and their adjacency spectra.
//!
//! Every CAR computation in this crate: log-determinants, exact sampling,
//! whitening inside HMC: reduces to the eigendecomposition of the 0/1
//! adjacency matrix (and, for the degree-weighted variant, of the
//! degree-normalized adjacency). Both spectra are computed once at graph
//! construction and cached immutably, so a fitted model never touches an
//! `n x n` matrix factorization in its inner loop.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Hard cap on graph size: spectra are computed by dense eigendecomposition
/// at construction, which is quadratic in memory.
pub const MAX_SITES: usize = 4096;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("torus dimension `{name}` is {value}, must be at least 3")]
    TorusTooSmall { name: &'static str, value: usize },
    #[error("graph needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("graph has {0} sites; dense spectral construction is capped at {MAX_SITES}")]
    TooManySites(usize),
    #[error("edge ({0}, {1}) references a site index out of range (n_sites = {2})")]
    IndexOutOfRange(usize, usize, usize),
    #[error("self-loop ({0}, {0}) is not allowed")]
    SelfLoop(usize),
    #[error("graph is disconnected: site {0} is not reachable from site 0")]
    Disconnected(usize),
}

/// Admissible interval for the spatial-dependence parameter of a standard
/// CAR model on a given graph: the open interval between the reciprocals of
/// the extreme adjacency eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ZetaBounds {
    pub fn contains(&self, zeta: f64) -> bool {
        zeta > self.lower && zeta < self.upper
    }
}

/// Immutable neighborhood structure with precomputed spectra.
///
/// Sites are positional indices `0..n_sites`; no geometric embedding is
/// stored. The graph is undirected, has no self-loops, and is required to be
/// connected at construction.
#[derive(Debug, Clone)]
pub struct NeighborhoodGraph {
    n_sites: usize,
    /// Unordered edges, stored as (low, high), sorted, deduplicated.
    edges: Vec<(usize, usize)>,
    /// Neighbor lists, ascending within each site.
    neighbors: Vec<Vec<usize>>,
    degree: Vec<usize>,
    /// Adjacency eigenvalues, ascending.
    eigenvalues: DVector<f64>,
    /// Matching eigenvector columns.
    eigenvectors: DMatrix<f64>,
    /// Eigenvalues of D^{-1/2} A D^{-1/2}, ascending.
    weighted_eigenvalues: DVector<f64>,
    /// Matching eigenvector columns.
    weighted_eigenvectors: DMatrix<f64>,
    inv_sqrt_degree: DVector<f64>,
}

impl NeighborhoodGraph {
    /// Four-nearest-neighbor grid wrapped on a torus.
    ///
    /// Site index is `row * cols + col`; neighbors are the vertical and
    /// horizontal steps with wraparound. Dimensions below 3 would collapse
    /// wrapped neighbors onto each other and are rejected.
    pub fn torus_grid(rows: usize, cols: usize) -> Result<Self, GraphError> {
        if rows < 3 {
            return Err(GraphError::TorusTooSmall { name: "rows", value: rows });
        }
        if cols < 3 {
            return Err(GraphError::TorusTooSmall { name: "cols", value: cols });
        }
        let n = rows * cols;
        let mut pairs = Vec::with_capacity(2 * n);
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let right = r * cols + (c + 1) % cols;
                let down = ((r + 1) % rows) * cols + c;
                pairs.push((i, right));
                pairs.push((i, down));
            }
        }
        Self::from_edge_list(n, &pairs)
    }

    /// Build from an explicit pair list. Takes the symmetric closure and
    /// collapses duplicates; the spectrum is computed eagerly.
    pub fn from_edge_list(n_sites: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n_sites < 2 {
            return Err(GraphError::TooFewSites(n_sites));
        }
        if n_sites > MAX_SITES {
            return Err(GraphError::TooManySites(n_sites));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= n_sites || b >= n_sites {
                return Err(GraphError::IndexOutOfRange(a, b, n_sites));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut neighbors = vec![Vec::new(); n_sites];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        check_connected(n_sites, &neighbors)?;

        let degree: Vec<usize> = neighbors.iter().map(Vec::len).collect();

        let mut adj = DMatrix::<f64>::zeros(n_sites, n_sites);
        for &(a, b) in &edges {
            adj[(a, b)] = 1.0;
            adj[(b, a)] = 1.0;
        }
        let (eigenvalues, eigenvectors) = sorted_symmetric_eigen(&adj);

        // Generalized spectrum for the degree-weighted CAR: the similarity
        // transform D^{-1/2} A D^{-1/2} shares its eigenvalues with the
        // pencil (A, D), and its eigenvalues lie in [-1, 1] for a connected
        // graph, which is what makes |zeta| < 1 a valid parameter space.
        let inv_sqrt_degree =
            DVector::from_iterator(n_sites, degree.iter().map(|&d| 1.0 / (d as f64).sqrt()));
        let mut wadj = adj;
        for &(a, b) in &edges {
            let w = inv_sqrt_degree[a] * inv_sqrt_degree[b];
            wadj[(a, b)] = w;
            wadj[(b, a)] = w;
        }
        let (weighted_eigenvalues, weighted_eigenvectors) = sorted_symmetric_eigen(&wadj);

        Ok(Self {
            n_sites,
            edges,
            neighbors,
            degree,
            eigenvalues,
            eigenvectors,
            weighted_eigenvalues,
            weighted_eigenvectors,
            inv_sqrt_degree,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Unordered edges as (low, high) pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.degree[site]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    /// Adjacency eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvector columns matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Eigenvalues of the degree-normalized adjacency, ascending.
    pub fn weighted_eigenvalues(&self) -> &DVector<f64> {
        &self.weighted_eigenvalues
    }

    pub fn weighted_eigenvectors(&self) -> &DMatrix<f64> {
        &self.weighted_eigenvectors
    }

    /// Per-site 1/sqrt(degree), used by the degree-weighted CAR factor.
    pub fn inv_sqrt_degree(&self) -> &DVector<f64> {
        &self.inv_sqrt_degree
    }

    /// Open interval of valid standard-CAR dependence parameters.
    pub fn zeta_bounds(&self) -> ZetaBounds {
        let min = self.eigenvalues[0];
        let max = self.eigenvalues[self.n_sites - 1];
        ZetaBounds { lower: 1.0 / min, upper: 1.0 / max }
    }

    /// Dense 0/1 adjacency matrix (for oracles and small-graph checks).
    pub fn adjacency_dense(&self) -> DMatrix<f64> {
        let mut adj = DMatrix::<f64>::zeros(self.n_sites, self.n_sites);
        for &(a, b) in &self.edges {
            adj[(a, b)] = 1.0;
            adj[(b, a)] = 1.0;
        }
        adj
    }

    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }
}

fn check_connected(n: usize, neighbors: &[Vec<usize>]) -> Result<(), GraphError> {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &neighbors[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(GraphError::Disconnected(i)),
        None => Ok(()),
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and
/// eigenvector columns permuted to match.
fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}
