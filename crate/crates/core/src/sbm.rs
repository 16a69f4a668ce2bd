//! Stochastic block model: instances, edge sampling, population
//! eigenstructure, and the misclustering loss.

use nalgebra::DMatrix;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream_u01, Domain, derive_seed};

/// Community labels, 0-based, entries in [0, k).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunityAssignment {
    pub labels: Vec<usize>,
}

impl CommunityAssignment {
    pub fn new(labels: Vec<usize>) -> Self {
        CommunityAssignment { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= k) {
            Some(l) => Err(Error::parameter(format!("label {l} out of range for k = {k}"))),
            None => Ok(()),
        }
    }

    /// Read one 0-based label per line.
    pub fn read<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut labels = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            labels.push(
                t.parse::<usize>()
                    .map_err(|_| Error::parameter(format!("malformed label line {t:?}")))?,
            );
        }
        Ok(CommunityAssignment { labels })
    }

    pub fn write<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }
}

/// An SBM parameterization together with its ground-truth assignment.
///
/// Within-community edges appear with probability `p`, cross-community
/// edges with probability `q`, 0 <= q < p <= 1.
#[derive(Clone, Debug)]
pub struct SbmInstance {
    n: usize,
    k: usize,
    p: f64,
    q: f64,
    z_star: CommunityAssignment,
    sizes: Vec<usize>,
    min_size: usize,
}

impl SbmInstance {
    pub fn new(k: usize, p: f64, q: f64, z_star: CommunityAssignment) -> Result<Self> {
        if k < 2 {
            return Err(Error::parameter(format!("k must be >= 2 (got {k})")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::parameter(format!("p must be in (0, 1] (got {p})")));
        }
        if !(q >= 0.0 && q < p) {
            return Err(Error::parameter(format!(
                "q must satisfy 0 <= q < p (got q = {q}, p = {p})"
            )));
        }
        z_star.validate(k)?;
        let n = z_star.len();
        let mut sizes = vec![0usize; k];
        for &l in &z_star.labels {
            sizes[l] += 1;
        }
        if let Some(a) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::parameter(format!("community {a} is empty")));
        }
        let min_size = *sizes.iter().min().unwrap();
        Ok(SbmInstance {
            n,
            k,
            p,
            q,
            z_star,
            sizes,
            min_size,
        })
    }

    /// Balanced instance with block-contiguous ground truth; requires k | n.
    pub fn balanced(n: usize, k: usize, p: f64, q: f64) -> Result<Self> {
        if k == 0 || n % k != 0 {
            return Err(Error::parameter(format!(
                "balanced instance requires k | n (got n = {n}, k = {k})"
            )));
        }
        Self::with_sizes(&vec![n / k; k], p, q)
    }

    /// Block-contiguous ground truth with the given community sizes.
    pub fn with_sizes(sizes: &[usize], p: f64, q: f64) -> Result<Self> {
        let mut labels = Vec::with_capacity(sizes.iter().sum());
        for (a, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(a).take(s));
        }
        Self::new(sizes.len(), p, q, CommunityAssignment::new(labels))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn z_star(&self) -> &CommunityAssignment {
        &self.z_star
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Smallest community size, i.e. beta * n / k exactly.
    pub fn min_size(&self) -> usize {
        self.min_size
    }

    /// Imbalance beta = min_a n_a / (n / k), in (0, 1].
    pub fn beta(&self) -> f64 {
        self.min_size as f64 * self.k as f64 / self.n as f64
    }
}

/// Draw one graph. Each unordered pair (i, j), i < j, is included
/// independently with probability p or q depending on whether the endpoints
/// share a community; the draw is a pure function of `(instance, seed)`.
pub fn sample_sbm(instance: &SbmInstance, seed: u64) -> Graph {
    let n = instance.n;
    let z = &instance.z_star.labels;
    let edge_seed = derive_seed(seed, Domain::Edges, 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if z[i] == z[j] { instance.p } else { instance.q };
            let idx = (i * n + j) as u64;
            if stream_u01(edge_seed, idx) < prob {
                edges.push((i as u32, j as u32));
            }
        }
    }
    Graph::from_edges(n, edges).expect("sampled pairs are valid by construction")
}

/// Population eigenstructure of the rank-k matrix P (P_ij = p when the
/// communities match, q otherwise, diagonal included).
///
/// Built from the k x k reduced form: with Delta = diag(sqrt(n_a)) and
/// B = q + (p - q) I, the eigendecomposition Delta B Delta = W L W^T gives
/// U* = Z* Delta^{-1} W, Lambda* = L (descending), and the k distinct rows
/// of U* Lambda* are theta*_a = B_a. Delta W.
#[derive(Clone, Debug)]
pub struct PopulationModel {
    instance: SbmInstance,
    /// n x k, orthonormal columns.
    u_star: DMatrix<f64>,
    /// Descending positive eigenvalues of P.
    lambda_star: Vec<f64>,
    /// k x k; row a is theta*_a.
    theta_star: DMatrix<f64>,
}

pub fn population_model(instance: &SbmInstance) -> PopulationModel {
    let k = instance.k;
    let (p, q) = (instance.p, instance.q);
    let sqrt_sizes: Vec<f64> = instance.sizes.iter().map(|&s| (s as f64).sqrt()).collect();

    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let bab = if a == b { p } else { q };
            m[(a, b)] = sqrt_sizes[a] * sqrt_sizes[b] * bab;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lambda_star: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut w = DMatrix::zeros(k, k);
    for (col, &j) in order.iter().enumerate() {
        w.set_column(col, &eig.eigenvectors.column(j));
    }
    crate::eigen::canonicalize_signs(&mut w);

    let mut u_star = DMatrix::zeros(instance.n, k);
    for (i, &zi) in instance.z_star.labels.iter().enumerate() {
        for c in 0..k {
            u_star[(i, c)] = w[(zi, c)] / sqrt_sizes[zi];
        }
    }

    // theta*_a = B_a. Delta W = sum_b B_ab sqrt(n_b) W_b.
    let mut theta_star = DMatrix::zeros(k, k);
    for a in 0..k {
        for c in 0..k {
            let mut acc = 0.0;
            for b in 0..k {
                let bab = if a == b { p } else { q };
                acc += bab * sqrt_sizes[b] * w[(b, c)];
            }
            theta_star[(a, c)] = acc;
        }
    }

    PopulationModel {
        instance: instance.clone(),
        u_star,
        lambda_star,
        theta_star,
    }
}

impl PopulationModel {
    pub fn instance(&self) -> &SbmInstance {
        &self.instance
    }

    pub fn u_star(&self) -> &DMatrix<f64> {
        &self.u_star
    }

    pub fn lambda_star(&self) -> &[f64] {
        &self.lambda_star
    }

    /// Row a is theta*_a (1 x k).
    pub fn theta_star(&self) -> &DMatrix<f64> {
        &self.theta_star
    }

    /// Dense P (diagonal entries are p, unlike E A).
    pub fn p_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.instance.n;
        if n > crate::graph::MAX_DENSE {
            return Err(Error::parameter(format!(
                "dense materialization capped at n = {} (got {n})",
                crate::graph::MAX_DENSE
            )));
        }
        let z = &self.instance.z_star.labels;
        let (p, q) = (self.instance.p, self.instance.q);
        let mut m = DMatrix::from_element(n, n, q);
        for i in 0..n {
            for j in 0..n {
                if z[i] == z[j] {
                    m[(i, j)] = p;
                }
            }
        }
        Ok(m)
    }

    /// y = P x in O(n k) using the block structure.
    pub fn p_matvec(&self, x: &[f64], y: &mut [f64]) {
        let z = &self.instance.z_star.labels;
        let (p, q) = (self.instance.p, self.instance.q);
        let mut block_sum = vec![0.0; self.instance.k];
        let mut total = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            block_sum[z[i]] += xi;
            total += xi;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = q * total + (p - q) * block_sum[z[i]];
        }
    }

    /// y = (E A) x where E A = P - p I (zero diagonal).
    pub fn ea_matvec(&self, x: &[f64], y: &mut [f64]) {
        self.p_matvec(x, y);
        let p = self.instance.p;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi -= p * xi;
        }
    }
}

/// Fraction of nodes mislabeled under the best bijective relabeling:
/// (1/n) min over bijections phi of #\{i : z_i != phi(z*_i)\}.
///
/// Exhaustive search over the k! bijections for k <= 6, optimal assignment
/// on the k x k confusion matrix beyond that; the two agree exactly.
pub fn misclustering_loss(
    z: &CommunityAssignment,
    z_star: &CommunityAssignment,
    k: usize,
) -> Result<f64> {
    if z.len() != z_star.len() {
        return Err(Error::parameter(format!(
            "assignment lengths differ ({} vs {})",
            z.len(),
            z_star.len()
        )));
    }
    z.validate(k)?;
    z_star.validate(k)?;
    let n = z.len();
    if n == 0 {
        return Err(Error::parameter("empty assignments"));
    }

    // confusion[c][d] = #{i : z_i = c, z*_i = d}
    let mut confusion = vec![vec![0i64; k]; k];
    for (&c, &d) in z.labels.iter().zip(&z_star.labels) {
        confusion[c][d] += 1;
    }

    let matched = if k <= 6 {
        max_trace_exhaustive(&confusion)
    } else {
        max_trace_assignment(&confusion)
    };
    Ok((n as i64 - matched) as f64 / n as f64)
}

/// Max over bijections phi of sum_d confusion[phi(d)][d], by enumeration.
fn max_trace_exhaustive(confusion: &[Vec<i64>]) -> i64 {
    let k = confusion.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = i64::MIN;
    heaps(&mut perm, k, &mut |p| {
        let t: i64 = (0..k).map(|d| confusion[p[d]][d]).sum();
        if t > best {
            best = t;
        }
    });
    best
}

fn heaps(perm: &mut Vec<usize>, m: usize, f: &mut impl FnMut(&[usize])) {
    if m <= 1 {
        f(perm);
        return;
    }
    for i in 0..m {
        heaps(perm, m - 1, f);
        if m % 2 == 0 {
            perm.swap(i, m - 1);
        } else {
            perm.swap(0, m - 1);
        }
    }
}

/// Same maximum via min-cost assignment on negated counts.
fn max_trace_assignment(confusion: &[Vec<i64>]) -> i64 {
    let k = confusion.len();
    let cost: Vec<Vec<i64>> = (0..k)
        .map(|c| (0..k).map(|d| -confusion[c][d]).collect())
        .collect();
    let (neg, _) = min_cost_assignment(&cost);
    -neg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mix64;

    fn ca(v: &[usize]) -> CommunityAssignment {
        CommunityAssignment::new(v.to_vec())
    }

    #[test]
    fn instance_validation() {
        assert!(SbmInstance::balanced(10, 2, 0.5, 0.1).is_ok());
        assert!(SbmInstance::balanced(10, 2, 0.5, 0.5).is_err()); // q < p strict
        assert!(SbmInstance::balanced(10, 2, 0.0, 0.0).is_err());
        assert!(SbmInstance::balanced(10, 3, 0.5, 0.1).is_err()); // 3 does not divide 10
        assert!(SbmInstance::new(2, 0.5, 0.1, ca(&[0, 0, 0])).is_err()); // empty community
        assert!(SbmInstance::new(1, 0.5, 0.1, ca(&[0, 0])).is_err());
    }

    #[test]
    fn beta_times_n_over_k_is_min_size() {
        let inst = SbmInstance::with_sizes(&[50, 70, 80], 0.3, 0.1).unwrap();
        assert_eq!(inst.min_size(), 50);
        let recovered = inst.beta() * inst.n() as f64 / inst.k() as f64;
        assert!((recovered - 50.0).abs() < 1e-9);
        assert!(inst.beta() > 0.0 && inst.beta() <= 1.0);
    }

    #[test]
    fn sample_degenerate_probabilities() {
        // p = 1, q ~ 0: union of complete graphs on each community.
        let inst = SbmInstance::with_sizes(&[3, 4], 1.0, 0.0).unwrap();
        let g = sample_sbm(&inst, 7);
        let z = &inst.z_star().labels;
        for i in 0..inst.n() {
            for j in (i + 1)..inst.n() {
                assert_eq!(g.has_edge(i, j), z[i] == z[j], "pair ({i}, {j})");
            }
        }
    }

    #[test]
    fn sample_near_empty_and_reproducible() {
        let inst = SbmInstance::balanced(50, 2, 1e-9, 0.0).unwrap();
        let mut empty = 0;
        for seed in 0..100 {
            if sample_sbm(&inst, seed).num_edges() == 0 {
                empty += 1;
            }
        }
        assert!(empty >= 99, "{empty}/100 empty");
        let a = sample_sbm(&inst, 3);
        let b = sample_sbm(&inst, 3);
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn sampled_graphs_satisfy_invariants() {
        let inst = SbmInstance::with_sizes(&[13, 8, 9], 0.4, 0.1).unwrap();
        for seed in 0..20 {
            let g = sample_sbm(&inst, seed);
            for &(i, j) in g.edges() {
                assert!(i < j && (j as usize) < inst.n());
            }
            for i in 0..inst.n() {
                assert!(!g.has_edge(i, i));
            }
        }
    }

    #[test]
    fn within_community_edge_counts_match_binomial_interval() {
        // Central 99.9% interval of Binomial(sum_a C(n_a, 2), p); over 100
        // seeds about 0.1 excursions are expected.
        use statrs::distribution::{Binomial, DiscreteCDF};
        let inst = SbmInstance::balanced(1000, 2, 0.05, 0.01).unwrap();
        let m: u64 = inst.sizes().iter().map(|&s| (s * (s - 1) / 2) as u64).sum();
        let bin = Binomial::new(0.05, m).unwrap();
        let lo = bin.inverse_cdf(0.0005) as i64;
        let hi = bin.inverse_cdf(0.9995) as i64;
        let z = &inst.z_star().labels;
        let mut excursions = 0;
        for seed in 0..100 {
            let g = sample_sbm(&inst, seed);
            let within = g
                .edges()
                .iter()
                .filter(|&&(i, j)| z[i as usize] == z[j as usize])
                .count() as i64;
            if within < lo || within > hi {
                excursions += 1;
            }
        }
        assert!(excursions <= 2, "{excursions} excursions outside [{lo}, {hi}]");
    }

    #[test]
    fn population_eigenvalues_balanced_two_communities() {
        // Balanced k = 2: Lambda* = (n(p+q)/2, n(p-q)/2).
        let inst = SbmInstance::balanced(100, 2, 0.3, 0.1).unwrap();
        let pop = population_model(&inst);
        let l = pop.lambda_star();
        assert!((l[0] - 20.0).abs() < 1e-9, "{l:?}");
        assert!((l[1] - 10.0).abs() < 1e-9, "{l:?}");
    }

    #[test]
    fn population_theta_distance_closed_form() {
        // ||theta*_1 - theta*_2|| = sqrt(n_1 + n_2) (p - q) = sqrt(120) * 0.2.
        let inst = SbmInstance::with_sizes(&[50, 70, 80], 0.3, 0.1).unwrap();
        let pop = population_model(&inst);
        let d = (pop.theta_star().row(0) - pop.theta_star().row(1)).norm();
        assert!((d - 2.190890) < 1e-5 && (d - 2.190890) > -1e-5, "{d}");
        for a in 0..3 {
            for b in 0..3 {
                if a == b {
                    continue;
                }
                let want = ((inst.sizes()[a] + inst.sizes()[b]) as f64).sqrt() * 0.2;
                let got = (pop.theta_star().row(a) - pop.theta_star().row(b)).norm();
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn population_invariants_random_instances() {
        let mut state = 5u64;
        let mut next = || {
            state = mix64(state);
            state
        };
        for _ in 0..25 {
            let k = 2 + (next() % 3) as usize;
            let sizes: Vec<usize> = (0..k).map(|_| 10 + (next() % 40) as usize).collect();
            let q = 0.02 + (next() % 100) as f64 / 400.0;
            let p = q + 0.05 + (next() % 100) as f64 / 300.0;
            if p >= 1.0 {
                continue;
            }
            let inst = SbmInstance::with_sizes(&sizes, p, q).unwrap();
            let pop = population_model(&inst);
            let n = inst.n();

            // P = U* Lambda* U*^T
            let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
                pop.lambda_star().to_vec(),
            ));
            let rebuilt = pop.u_star() * l * pop.u_star().transpose();
            let pm = pop.p_matrix().unwrap();
            assert!((&rebuilt - &pm).abs().max() < 1e-9);

            // ||theta*_a||^2 = (p^2 - q^2) n_a + q^2 n
            for a in 0..k {
                let want = (p * p - q * q) * sizes[a] as f64 + q * q * n as f64;
                let got = pop.theta_star().row(a).norm_squared();
                assert!((got - want).abs() < 1e-9, "a={a} got={got} want={want}");
            }

            // ||U*_i.|| = 1 / sqrt(n_{z*_i})
            for i in 0..n {
                let want = 1.0 / (sizes[inst.z_star().labels[i]] as f64).sqrt();
                let got = pop.u_star().row(i).norm();
                assert!((got - want).abs() < 1e-10);
            }

            // lambda_k^* >= beta n (p - q) / k
            let floor = inst.min_size() as f64 * (p - q);
            assert!(pop.lambda_star()[k - 1] >= floor - 1e-9);
        }
    }

    #[test]
    fn p_matvec_matches_dense() {
        let inst = SbmInstance::with_sizes(&[7, 5, 8], 0.6, 0.2).unwrap();
        let pop = population_model(&inst);
        let n = inst.n();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let mut y = vec![0.0; n];
        pop.p_matvec(&x, &mut y);
        let pm = pop.p_matrix().unwrap();
        let xd = nalgebra::DVector::from_vec(x.clone());
        let yd = &pm * &xd;
        for i in 0..n {
            assert!((y[i] - yd[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_basics() {
        let z = ca(&[0, 0, 1, 1]);
        assert_eq!(misclustering_loss(&z, &z, 2).unwrap(), 0.0);
        // Relabeling by a bijection costs nothing.
        let flipped = ca(&[1, 1, 0, 0]);
        assert_eq!(misclustering_loss(&flipped, &z, 2).unwrap(), 0.0);
        // z* = (0,0,1,1), z = (0,1,1,1) -> 0.25
        let z1 = ca(&[0, 1, 1, 1]);
        assert_eq!(misclustering_loss(&z1, &z, 2).unwrap(), 0.25);
    }

    #[test]
    fn loss_errors() {
        assert!(misclustering_loss(&ca(&[0, 1]), &ca(&[0]), 2).is_err());
        assert!(misclustering_loss(&ca(&[0, 2]), &ca(&[0, 1]), 2).is_err());
    }

    #[test]
    fn loss_exhaustive_matches_assignment() {
        let mut state = 17u64;
        let mut next = || {
            state = mix64(state);
            state
        };
        for k in 2..=5usize {
            for _ in 0..1000 {
                let n = 3 + (next() % 20) as usize;
                let mut z = Vec::with_capacity(n);
                let mut zs = Vec::with_capacity(n);
                for _ in 0..n {
                    z.push((next() % k as u64) as usize);
                    zs.push((next() % k as u64) as usize);
                }
                let mut confusion = vec![vec![0i64; k]; k];
                for (&c, &d) in z.iter().zip(&zs) {
                    confusion[c][d] += 1;
                }
                assert_eq!(
                    max_trace_exhaustive(&confusion),
                    max_trace_assignment(&confusion)
                );
            }
        }
    }

    #[test]
    fn loss_bounds_and_symmetry() {
        let mut state = 23u64;
        let mut next = || {
            state = mix64(state);
            state
        };
        for _ in 0..200 {
            let k = 2 + (next() % 4) as usize;
            let n = k + (next() % 30) as usize;
            let mut z = vec![0usize; n];
            let mut zs = vec![0usize; n];
            for i in 0..n {
                z[i] = (next() % k as u64) as usize;
                zs[i] = (next() % k as u64) as usize;
            }
            // Ensure in-range labels only; emptiness is fine for the loss.
            let z = ca(&z);
            let zs = ca(&zs);
            let l = misclustering_loss(&z, &zs, k).unwrap();
            assert!((0.0..=1.0).contains(&l));
            let l2 = misclustering_loss(&zs, &z, k).unwrap();
            assert!((l - l2).abs() < 1e-15, "loss symmetric under swap");
        }
    }
}
