//! The clustering pipeline: trim high-degree nodes, eigendecompose the
//! trimmed adjacency, weight eigenvectors by eigenvalues, k-means the rows.

use nalgebra::DMatrix;

use crate::eigen::{eig_top_k, EigOpts, EigenPairs, SymOp};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kmeans::{kmeans, KMeansResult};
use crate::sbm::CommunityAssignment;

/// Default trimming constant: tau = 20 n p.
pub const TAU_CONST_DEFAULT: f64 = 20.0;

/// A graph with rows and columns of high-degree nodes zeroed out.
#[derive(Clone, Debug)]
pub struct TrimmedGraph<'a> {
    base: &'a Graph,
    tau: f64,
    removed: Vec<bool>,
    removed_count: usize,
}

/// Trim with threshold tau = tau_const * n * p; removes exactly the nodes
/// with degree >= tau.
pub fn trim_with_const(g: &Graph, p: f64, tau_const: f64) -> Result<TrimmedGraph<'_>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::parameter(format!("p must be in (0, 1] (got {p})")));
    }
    if !(tau_const > 0.0) {
        return Err(Error::parameter("tau constant must be positive"));
    }
    let tau = tau_const * g.n() as f64 * p;
    let mut removed = vec![false; g.n()];
    let mut removed_count = 0;
    for v in 0..g.n() {
        if g.degree(v) as f64 >= tau {
            removed[v] = true;
            removed_count += 1;
        }
    }
    Ok(TrimmedGraph {
        base: g,
        tau,
        removed,
        removed_count,
    })
}

pub fn trim(g: &Graph, p: f64) -> Result<TrimmedGraph<'_>> {
    trim_with_const(g, p, TAU_CONST_DEFAULT)
}

impl<'a> TrimmedGraph<'a> {
    pub fn base(&self) -> &'a Graph {
        self.base
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn removed_mask(&self) -> &[bool] {
        &self.removed
    }

    pub fn removed_count(&self) -> usize {
        self.removed_count
    }

    pub fn is_removed(&self, v: usize) -> bool {
        self.removed[v]
    }

    /// Entry of the trimmed adjacency.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.removed[i] || self.removed[j] {
            0.0
        } else if self.base.has_edge(i, j) {
            1.0
        } else {
            0.0
        }
    }
}

impl SymOp for TrimmedGraph<'_> {
    fn dim(&self) -> usize {
        self.base.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for yi in y.iter_mut() {
            *yi = 0.0;
        }
        for v in 0..self.base.n() {
            if self.removed[v] {
                continue;
            }
            let mut acc = 0.0;
            for &u in self.base.neighbors(v) {
                let u = u as usize;
                if !self.removed[u] {
                    acc += x[u];
                }
            }
            y[v] = acc;
        }
    }

    fn to_dense(&self) -> Option<DMatrix<f64>> {
        if self.base.n() > crate::graph::MAX_DENSE {
            return None;
        }
        let n = self.base.n();
        let mut m = DMatrix::zeros(n, n);
        for &(i, j) in self.base.edges() {
            let (i, j) = (i as usize, j as usize);
            if !self.removed[i] && !self.removed[j] {
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
        }
        Some(m)
    }
}

/// Adjacency of the subgraph induced on the kept nodes.
struct SubGraphOp {
    m: usize,
    xadj: Vec<usize>,
    adj: Vec<u32>,
}

impl SymOp for SubGraphOp {
    fn dim(&self) -> usize {
        self.m
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (v, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &u in &self.adj[self.xadj[v]..self.xadj[v + 1]] {
                acc += x[u as usize];
            }
            *yi = acc;
        }
    }

    fn to_dense(&self) -> Option<DMatrix<f64>> {
        if self.m > crate::graph::MAX_DENSE {
            return None;
        }
        let mut d = DMatrix::zeros(self.m, self.m);
        for v in 0..self.m {
            for &u in &self.adj[self.xadj[v]..self.xadj[v + 1]] {
                d[(v, u as usize)] = 1.0;
            }
        }
        Some(d)
    }
}

/// Top-k eigenpairs of the trimmed adjacency, weighted rows U Lambda.
#[derive(Clone, Debug)]
pub struct SpectralEmbedding {
    pub eig: EigenPairs,
    /// n x k rows of U Lambda.
    pub weighted: DMatrix<f64>,
    /// Set when the requested k exceeded the numerically detectable rank
    /// and zero eigenvalues with an orthonormal completion were returned.
    pub rank_deficient: bool,
}

impl SpectralEmbedding {
    pub fn k(&self) -> usize {
        self.eig.values.len()
    }

    pub fn lambda_k(&self) -> f64 {
        *self.eig.values.last().unwrap()
    }
}

/// Eigendecomposition restricted to nodes outside `removed`, re-expanded to
/// full dimension. Removed rows of U are exactly zero unless a zero
/// eigenvalue forces completion vectors supported on removed nodes.
pub fn embed_masked(
    g: &Graph,
    removed: &[bool],
    k: usize,
    opts: &EigOpts,
) -> Result<SpectralEmbedding> {
    let n = g.n();
    if k > n {
        return Err(Error::parameter(format!("k = {k} exceeds n = {n}")));
    }
    let kept: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
    let m = kept.len();
    let mut full_index = vec![usize::MAX; n];
    for (sub, &v) in kept.iter().enumerate() {
        full_index[v] = sub;
    }

    // Sub-CSR over kept nodes only.
    let mut xadj = Vec::with_capacity(m + 1);
    let mut adj = Vec::new();
    xadj.push(0);
    for &v in &kept {
        for &u in g.neighbors(v) {
            let u = u as usize;
            if full_index[u] != usize::MAX {
                adj.push(full_index[u] as u32);
            }
        }
        xadj.push(adj.len());
    }
    let sub = SubGraphOp { m, xadj, adj };

    let k_sub = k.min(m);
    let sub_eig = if k_sub > 0 {
        Some(eig_top_k(&sub, k_sub, opts)?)
    } else {
        None
    };

    // Merge the sub-spectrum with the |removed| exact zero eigenvalues whose
    // eigenvectors are unit vectors on removed nodes.
    let removed_nodes: Vec<usize> = (0..n).filter(|&v| removed[v]).collect();
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    let mut si = 0usize;
    let mut zi = 0usize;
    let mut padded = false;
    for col in 0..k {
        let sub_val = sub_eig.as_ref().and_then(|e| e.values.get(si)).copied();
        let take_sub = match sub_val {
            Some(v) => zi >= removed_nodes.len() || v >= 0.0,
            None => false,
        };
        if take_sub {
            let e = sub_eig.as_ref().unwrap();
            values.push(e.values[si]);
            for (sub_row, &v) in kept.iter().enumerate() {
                vectors[(v, col)] = e.vectors[(sub_row, si)];
            }
            si += 1;
        } else {
            values.push(0.0);
            vectors[(removed_nodes[zi], col)] = 1.0;
            zi += 1;
            padded = true;
        }
    }

    let scale = values.first().map(|v| v.abs()).unwrap_or(0.0).max(1.0);
    let rank_deficient = padded || values.last().map(|v| v.abs()).unwrap_or(0.0) <= 1e-12 * scale;

    let mut weighted = vectors.clone();
    for (col, &lam) in values.iter().enumerate() {
        for row in 0..n {
            weighted[(row, col)] *= lam;
        }
    }
    Ok(SpectralEmbedding {
        eig: EigenPairs { values, vectors },
        weighted,
        rank_deficient,
    })
}

/// Spectral embedding of a trimmed graph.
pub fn embed(tg: &TrimmedGraph, k: usize, opts: &EigOpts) -> Result<SpectralEmbedding> {
    embed_masked(tg.base(), tg.removed_mask(), k, opts)
}

/// Embedding of an arbitrary symmetric operator (no trimming); used for
/// population-matrix inputs.
pub fn embed_op(op: &dyn SymOp, k: usize, opts: &EigOpts) -> Result<SpectralEmbedding> {
    let eig = eig_top_k(op, k, opts)?;
    let scale = eig.values.first().map(|v| v.abs()).unwrap_or(0.0).max(1.0);
    let rank_deficient = eig.values.last().map(|v| v.abs()).unwrap_or(0.0) <= 1e-12 * scale;
    let n = op.dim();
    let mut weighted = eig.vectors.clone();
    for (col, &lam) in eig.values.iter().enumerate() {
        for row in 0..n {
            weighted[(row, col)] *= lam;
        }
    }
    Ok(SpectralEmbedding {
        eig,
        weighted,
        rank_deficient,
    })
}

#[derive(Clone, Debug)]
pub struct ClusterOpts {
    pub tau_const: f64,
    pub restarts: usize,
    pub seed: u64,
    pub eig: EigOpts,
    /// Replace the supplied p by p_hat = 2|E| / (n(n-1)).
    pub estimate_p: bool,
}

impl Default for ClusterOpts {
    fn default() -> Self {
        ClusterOpts {
            tau_const: TAU_CONST_DEFAULT,
            restarts: 20,
            seed: 0,
            eig: EigOpts::default(),
            estimate_p: false,
        }
    }
}

/// Edge-density estimate of p for the `estimate_p` mode.
pub fn estimate_edge_probability(g: &Graph) -> f64 {
    let n = g.n() as f64;
    if g.n() < 2 {
        return 1.0;
    }
    2.0 * g.num_edges() as f64 / (n * (n - 1.0))
}

pub struct SpectralClusterResult<'a> {
    pub assignment: CommunityAssignment,
    pub kmeans: KMeansResult,
    pub embedding: SpectralEmbedding,
    pub trimmed: TrimmedGraph<'a>,
}

/// Full pipeline: trim -> embed -> k-means on rows of U Lambda.
pub fn spectral_cluster<'a>(
    g: &'a Graph,
    k: usize,
    p: f64,
    opts: &ClusterOpts,
) -> Result<SpectralClusterResult<'a>> {
    if k < 2 {
        return Err(Error::parameter(format!("k must be >= 2 (got {k})")));
    }
    let p_used = if opts.estimate_p {
        estimate_edge_probability(g)
    } else {
        p
    };
    let trimmed = trim_with_const(g, p_used, opts.tau_const)?;
    let embedding = embed(&trimmed, k, &opts.eig)?;
    let km = kmeans(&embedding.weighted, k, opts.restarts, opts.seed)?;
    Ok(SpectralClusterResult {
        assignment: km.labels.clone(),
        kmeans: km,
        embedding,
        trimmed,
    })
}
