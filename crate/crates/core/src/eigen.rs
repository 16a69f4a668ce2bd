//! Top-k symmetric eigensolver.
//!
//! Dense inputs up to the crossover size go through tridiagonalization with
//! implicit-shift iteration (nalgebra's `SymmetricEigen`). Larger operators
//! use Lanczos with full reorthogonalization, residual-verified Ritz pairs,
//! and deflated restarts so repeated eigenvalues and exhausted Krylov
//! spaces are handled.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_u01, Domain};

/// Matrix sizes at or below this use the dense eigensolver path.
pub const DENSE_CROSSOVER: usize = 2048;

/// Abstract symmetric operator: everything the solver needs is `y = M x`.
pub trait SymOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Dense form when cheap to produce; enables the dense path.
    fn to_dense(&self) -> Option<DMatrix<f64>> {
        None
    }
}

impl SymOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self[(i, j)] * x[j];
            }
            *yi = acc;
        }
    }

    fn to_dense(&self) -> Option<DMatrix<f64>> {
        Some(self.clone())
    }
}

/// The k algebraically largest eigenvalues (descending) with an orthonormal
/// set of eigenvectors, signs canonicalized.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// n x k, column j pairs with values[j].
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    /// Max residual ||M u_j - lambda_j u_j|| / max(1, |lambda_j|) over columns.
    pub fn max_relative_residual(&self, op: &dyn SymOp) -> f64 {
        let n = self.vectors.nrows();
        let mut worst: f64 = 0.0;
        let mut y = vec![0.0; n];
        for (j, &lam) in self.values.iter().enumerate() {
            let x: Vec<f64> = self.vectors.column(j).iter().copied().collect();
            op.apply(&x, &mut y);
            let mut r2 = 0.0;
            for i in 0..n {
                let d = y[i] - lam * x[i];
                r2 += d * d;
            }
            worst = worst.max(r2.sqrt() / lam.abs().max(1.0));
        }
        worst
    }

    /// Max-norm departure of U^T U from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let k = g.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - want).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigMethod {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct EigOpts {
    /// Residual tolerance, relative to max(1, |lambda|).
    pub tol: f64,
    /// Matrix-vector product budget; defaults to 50 n.
    pub max_matvecs: Option<usize>,
    pub method: EigMethod,
    /// Seed for Lanczos start vectors.
    pub seed: u64,
}

impl Default for EigOpts {
    fn default() -> Self {
        EigOpts {
            tol: 1e-8,
            max_matvecs: None,
            method: EigMethod::Auto,
            seed: 0x5bec_7100_21d4_9e3b,
        }
    }
}

/// Flip column signs so the largest-magnitude entry of each column is
/// positive (ties broken by lowest row index).
pub fn canonicalize_signs(u: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let mut best = 0.0f64;
        let mut best_val = 0.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best {
                best = a;
                best_val = u[(i, j)];
            }
        }
        if best_val < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Top-k eigenpairs by algebraic value.
pub fn eig_top_k(op: &dyn SymOp, k: usize, opts: &EigOpts) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::parameter(format!(
            "k must satisfy 1 <= k <= n (k = {k}, n = {n})"
        )));
    }
    let dense = match opts.method {
        EigMethod::Dense => true,
        EigMethod::Lanczos => false,
        EigMethod::Auto => n <= DENSE_CROSSOVER,
    };
    let mut pairs = if dense {
        match op.to_dense() {
            Some(m) => dense_top_k(m, k)?,
            None if opts.method == EigMethod::Dense => {
                return Err(Error::parameter(
                    "dense eigensolver requested for an operator without a dense form",
                ))
            }
            None => lanczos_top_k(op, k, opts)?,
        }
    } else {
        lanczos_top_k(op, k, opts)?
    };
    canonicalize_signs(&mut pairs.vectors);
    Ok(pairs)
}

fn dense_top_k(m: DMatrix<f64>, k: usize) -> Result<EigenPairs> {
    let n = m.nrows();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-12 {
        return Err(Error::parameter(format!(
            "matrix is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order[..k].iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &j) in order[..k].iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(j));
    }
    Ok(EigenPairs { values, vectors })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn lanczos_top_k(op: &dyn SymOp, k: usize, opts: &EigOpts) -> Result<EigenPairs> {
    let n = op.dim();
    let tol = opts.tol;
    let budget = opts.max_matvecs.unwrap_or(50 * n).max(64);
    let mut used = 0usize;

    let mut conv_vals: Vec<f64> = Vec::new();
    let mut conv_vecs: Vec<Vec<f64>> = Vec::new();
    let mut best_residual = f64::INFINITY;

    let max_restarts = 4 * k + 16;
    'restart: for restart in 0..max_restarts {
        if conv_vals.len() >= k {
            break;
        }
        let k_rem = k - conv_vals.len();

        // Seeded random start, deflated against converged pairs.
        let seed = derive_seed(opts.seed, Domain::Start, restart as u64);
        let mut v: Vec<f64> = (0..n)
            .map(|i| stream_u01(seed, i as u64) - 0.5)
            .collect();
        for _ in 0..2 {
            for q in &conv_vecs {
                let c = dot(q, &v);
                axpy(&mut v, -c, q);
            }
        }
        let nv = norm(&v);
        if nv < 1e-12 {
            continue 'restart;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }

        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0f64; n];
        let max_dim = n.min(budget.saturating_sub(used).max(4));
        let mut exhausted = false;

        loop {
            let m = basis.len();
            if used >= budget || m > max_dim {
                // Budget salvage below.
                break;
            }
            op.apply(&basis[m - 1], &mut w);
            used += 1;
            if m >= 2 {
                let b = betas[m - 2];
                let prev = basis[m - 2].clone();
                axpy(&mut w, -b, &prev);
            }
            let alpha = dot(&basis[m - 1], &w);
            {
                let last = basis[m - 1].clone();
                axpy(&mut w, -alpha, &last);
            }
            // Full reorthogonalization, two passes, against both the current
            // basis and already-converged vectors.
            for _ in 0..2 {
                for q in conv_vecs.iter().chain(basis.iter()) {
                    let c = dot(q, &w);
                    if c != 0.0 {
                        axpy(&mut w, -c, q);
                    }
                }
            }
            alphas.push(alpha);
            let beta = norm(&w);
            let scale = alphas
                .iter()
                .map(|a| a.abs())
                .chain(betas.iter().map(|b: &f64| b.abs()))
                .fold(1.0f64, f64::max);
            if beta <= 1e-12 * scale {
                exhausted = true;
            } else {
                betas.push(beta);
            }

            let check_now = exhausted
                || (m >= k_rem && (m % 4 == 0 || m >= max_dim || used >= budget));
            if check_now {
                let (theta, s) = tridiag_eigen(&alphas, &betas);
                let take = if exhausted { m } else { k_rem.min(m) };
                // Cheap bound first: residual of Ritz pair i is
                // beta_m |s[m-1, i]|.
                let mut promising = exhausted;
                if !promising {
                    promising = (0..take).all(|i| {
                        let bound = betas.last().copied().unwrap_or(0.0) * s[(m - 1, i)].abs();
                        bound <= tol * theta[i].abs().max(1.0)
                    });
                }
                if promising {
                    let accepted = accept_ritz(
                        op,
                        &basis,
                        &theta,
                        &s,
                        take,
                        tol,
                        &mut conv_vals,
                        &mut conv_vecs,
                        &mut used,
                        &mut best_residual,
                    );
                    if exhausted || conv_vals.len() >= k {
                        continue 'restart;
                    }
                    if accepted > 0 {
                        continue 'restart;
                    }
                }
                if exhausted {
                    continue 'restart;
                }
            }

            if exhausted {
                continue 'restart;
            }
            let mut next = w.clone();
            let b = *betas.last().unwrap();
            for x in next.iter_mut() {
                *x /= b;
            }
            basis.push(next);
        }

        // Budget or size cap hit: salvage whatever passes the true residual
        // test, then stop growing.
        if !alphas.is_empty() {
            let (theta, s) = tridiag_eigen(&alphas, &betas);
            accept_ritz(
                op,
                &basis,
                &theta,
                &s,
                k_rem.min(alphas.len()),
                tol,
                &mut conv_vals,
                &mut conv_vecs,
                &mut used,
                &mut best_residual,
            );
        }
        if used >= budget {
            break;
        }
    }

    if conv_vals.len() < k {
        return Err(Error::NonConvergence {
            context: format!(
                "Lanczos converged {} of {k} eigenpairs within {used} matvecs",
                conv_vals.len()
            ),
            residual: if best_residual.is_finite() {
                best_residual
            } else {
                f64::NAN
            },
        });
    }

    // Keep the k algebraically largest among everything converged.
    let mut order: Vec<usize> = (0..conv_vals.len()).collect();
    order.sort_by(|&a, &b| conv_vals[b].partial_cmp(&conv_vals[a]).unwrap());
    let values: Vec<f64> = order[..k].iter().map(|&i| conv_vals[i]).collect();
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &i) in order[..k].iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = conv_vecs[i][r];
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// Form the leading `take` Ritz pairs, verify true residuals, and push the
/// ones that pass into the converged set. Returns how many were accepted.
#[allow(clippy::too_many_arguments)]
fn accept_ritz(
    op: &dyn SymOp,
    basis: &[Vec<f64>],
    theta: &[f64],
    s: &DMatrix<f64>,
    take: usize,
    tol: f64,
    conv_vals: &mut Vec<f64>,
    conv_vecs: &mut Vec<Vec<f64>>,
    used: &mut usize,
    best_residual: &mut f64,
) -> usize {
    let n = basis[0].len();
    let m = basis.len().min(theta.len());
    let mut accepted = 0;
    let mut ay = vec![0.0f64; n];
    for i in 0..take.min(m) {
        let mut y = vec![0.0f64; n];
        for (j, b) in basis.iter().enumerate().take(m) {
            axpy(&mut y, s[(j, i)], b);
        }
        for q in conv_vecs.iter() {
            let c = dot(q, &y);
            axpy(&mut y, -c, q);
        }
        let ny = norm(&y);
        if ny < 1e-10 {
            continue;
        }
        for x in y.iter_mut() {
            *x /= ny;
        }
        op.apply(&y, &mut ay);
        *used += 1;
        let lam = dot(&y, &ay);
        let mut r2 = 0.0;
        for r in 0..n {
            let d = ay[r] - lam * y[r];
            r2 += d * d;
        }
        let res = r2.sqrt();
        *best_residual = best_residual.min(res / lam.abs().max(1.0));
        if res <= tol * lam.abs().max(1.0) {
            conv_vals.push(lam);
            conv_vecs.push(y);
            accepted += 1;
        }
    }
    accepted
}

/// Eigendecomposition of the symmetric tridiagonal (alphas, betas),
/// eigenvalues descending. Returns (values, eigenvector matrix).
fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vecs = DMatrix::zeros(m, m);
    for (col, &j) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(j));
    }
    (vals, vecs)
}
