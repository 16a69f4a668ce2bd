//! Perturbation-theory diagnostics around the trimmed adjacency: operator
//! norm of the deviation from E A, truncated row mass of the eigenspace,
//! eigenvalue floors, leave-one-out eigenspace stability, and trimming
//! statistics.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::eigen::{EigOpts, SymOp};
use crate::error::{Error, Result};
use crate::pipeline::{embed, embed_masked, SpectralEmbedding, TrimmedGraph};
use crate::procrustes::procrustes_distance;
use crate::rng::{derive_seed, stream_u01, Domain};
use crate::sbm::{PopulationModel, SbmInstance};

/// Power-iteration estimate of the operator norm of a symmetric operator,
/// iterating on M^2 so both spectrum ends are captured. Stops after
/// `max_iter` rounds or when the estimate stagnates to `tol` relative.
pub fn operator_norm_estimate(op: &dyn SymOp, max_iter: usize, tol: f64, seed: u64) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let s = derive_seed(seed, Domain::Start, 0);
    let mut v: Vec<f64> = (0..n).map(|i| stream_u01(s, i as u64) - 0.5).collect();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv == 0.0 {
        return 0.0;
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut w = vec![0.0f64; n];
    let mut estimate = 0.0f64;
    for _ in 0..max_iter {
        op.apply(&v, &mut w);
        let sigma = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if sigma == 0.0 {
            return 0.0;
        }
        op.apply(&w, &mut v);
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv == 0.0 {
            return sigma;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }
        if (sigma - estimate).abs() <= tol * sigma {
            return sigma;
        }
        estimate = sigma;
    }
    estimate
}

/// The deviation operator A~ - E A, with E A = P - p I applied through the
/// population block structure.
pub struct DeviationOp<'a> {
    pub trimmed: &'a TrimmedGraph<'a>,
    pub pop: &'a PopulationModel,
}

impl SymOp for DeviationOp<'_> {
    fn dim(&self) -> usize {
        self.trimmed.base().n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.trimmed.apply(x, y);
        let mut ea = vec![0.0f64; x.len()];
        self.pop.ea_matvec(x, &mut ea);
        for (yi, e) in y.iter_mut().zip(&ea) {
            *yi -= e;
        }
    }
}

/// Operator-norm estimate of A~ - E A.
pub fn spectral_deviation(tg: &TrimmedGraph, pop: &PopulationModel, seed: u64) -> f64 {
    let op = DeviationOp { trimmed: tg, pop };
    operator_norm_estimate(&op, 100, 1e-8, seed)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TruncatedL2 {
    /// sum_i ||U_i.||^2 1{||U_i.|| >= t}
    pub mass: f64,
    /// Number of rows with ||U_i.|| >= t.
    pub count: usize,
    /// ||U - U_bar||_F^2 for the row map that rescales rows with norm > t
    /// onto the radius-t sphere; always <= mass.
    pub fro_diff_sq: f64,
}

/// Truncated row mass of U at threshold t, together with the Frobenius gap
/// to the row-truncated matrix.
pub fn truncated_l2_mass(u: &DMatrix<f64>, t: f64) -> Result<TruncatedL2> {
    if !(t >= 0.0) {
        return Err(Error::parameter(format!("threshold must be >= 0 (got {t})")));
    }
    let mut mass = 0.0;
    let mut count = 0usize;
    let mut fro = 0.0;
    for i in 0..u.nrows() {
        let norm = u.row(i).norm();
        if norm >= t {
            mass += norm * norm;
            count += 1;
        }
        if norm > t {
            // f_t scales the row onto radius t: the row moves by norm - t.
            let moved = norm - t;
            fro += moved * moved;
        }
    }
    Ok(TruncatedL2 {
        mass,
        count,
        fro_diff_sq: fro,
    })
}

/// The threshold t0 = (160 k^2 / beta) sqrt(k / (beta n)); above 1 for
/// desk-scale n, which makes the truncated mass vacuously zero there.
pub fn t0_threshold(k: usize, beta: f64, n: usize) -> f64 {
    160.0 * (k * k) as f64 / beta * ((k as f64) / (beta * n as f64)).sqrt()
}

/// Exploratory threshold 3 sqrt(k / (beta n)): three times the row-norm
/// baseline of the population eigenspace.
pub fn exploratory_threshold(k: usize, beta: f64, n: usize) -> f64 {
    3.0 * ((k as f64) / (beta * n as f64)).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LooCheck {
    /// Procrustes distance between the eigenspaces with and without node i.
    pub distance: f64,
    /// ||U_i.||
    pub row_norm: f64,
    /// 6 k^{1.5} ||U_i.||
    pub bound: f64,
    /// distance / bound; 0 when the row is zero and the distance vanishes.
    pub ratio: f64,
    /// Set when the row norm is zero but the eigenspaces still differ.
    pub degenerate: bool,
}

/// Compare the leading eigenspace against the one obtained after zeroing
/// node i's row and column, reusing a precomputed base embedding.
pub fn leave_one_out_check_with_base(
    tg: &TrimmedGraph,
    base: &SpectralEmbedding,
    node: usize,
    opts: &EigOpts,
) -> Result<LooCheck> {
    let n = tg.base().n();
    if node >= n {
        return Err(Error::parameter(format!("node {node} out of range")));
    }
    let k = base.k();
    let mut mask = tg.removed_mask().to_vec();
    mask[node] = true;
    let loo = embed_masked(tg.base(), &mask, k, opts)?;
    let (distance, _) = procrustes_distance(&base.eig.vectors, &loo.eig.vectors)?;
    let row_norm = base.eig.vectors.row(node).norm();
    let bound = 6.0 * (k as f64).powf(1.5) * row_norm;
    if row_norm == 0.0 || bound == 0.0 {
        let degenerate = distance > 1e-8;
        return Ok(LooCheck {
            distance,
            row_norm,
            bound,
            ratio: 0.0,
            degenerate,
        });
    }
    Ok(LooCheck {
        distance,
        row_norm,
        bound,
        ratio: distance / bound,
        degenerate: false,
    })
}

/// Convenience form computing the base embedding internally.
pub fn leave_one_out_check(
    tg: &TrimmedGraph,
    k: usize,
    node: usize,
    opts: &EigOpts,
) -> Result<LooCheck> {
    let base = embed(tg, k, opts)?;
    leave_one_out_check_with_base(tg, &base, node, opts)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapCheck {
    /// lambda_k of the trimmed adjacency.
    pub lambda_k: f64,
    /// Population floor beta n (p - q) / k = min_size (p - q).
    pub floor: f64,
    /// Whether lambda_k >= floor / 2, the regime where ||Lambda^{-1}|| is
    /// controlled.
    pub half_floor_ok: bool,
}

pub fn eigenvalue_gap_check(embedding: &SpectralEmbedding, instance: &SbmInstance) -> GapCheck {
    let lambda_k = embedding.lambda_k();
    let floor = instance.min_size() as f64 * (instance.p() - instance.q());
    GapCheck {
        lambda_k,
        floor,
        half_floor_ok: lambda_k >= floor / 2.0,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrimmingStats {
    /// |S|: how many nodes the degree threshold removed.
    pub removed: usize,
    /// n exp(-128 n p): the expected-size bound (usually underflows to 0).
    pub bound: f64,
}

pub fn trimming_stats(tg: &TrimmedGraph, instance: &SbmInstance) -> TrimmingStats {
    let n = instance.n() as f64;
    TrimmingStats {
        removed: tg.removed_count(),
        bound: (n.ln() - 128.0 * n * instance.p()).exp(),
    }
}

/// One trial's diagnostics row.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub spectral_dev: f64,
    /// spectral_dev / sqrt(n p)
    pub spectral_dev_ratio: f64,
    pub trunc_mass: f64,
    pub exceed_count: usize,
    pub t_used: f64,
    pub t0: f64,
    pub lambda_k: f64,
    pub lambda_floor: f64,
    pub lambda_half_floor_ok: bool,
    pub loo_ratios: Vec<f64>,
    /// loss * n (p - q)^2 / (k^2 beta^{-1} p); reported without a pass/fail
    /// threshold since the polynomial bound's constant is unspecified.
    pub poly_bound_ratio: f64,
    pub trimmed_count: usize,
}
