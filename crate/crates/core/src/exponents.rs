//! Error exponents for community-pair confusion.
//!
//! J_{m1,m2,p,q} is the maximum over t of
//!   (m1 - m2) t (p + q)/2 - m1 log(q e^t + 1 - q) - m2 log(p e^{-t} + 1 - p),
//! the Chernoff exponent of the event
//!   Binomial(m1, q) - Binomial(m2, p) >= (m1 - m2)(p + q)/2.
//! J_min minimizes J over ordered community pairs and governs the
//! exponential clustering error rate e^{-(1 +- o(1)) J_min}.
//!
//! This module also carries the exact distribution of the binomial
//! difference as a brute-force oracle for the Chernoff bounds.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::sbm::SbmInstance;

/// Result of a 1-D exponent maximization.
#[derive(Clone, Debug)]
pub struct ExponentResult {
    /// J >= 0.
    pub value: f64,
    /// Maximizer of the objective.
    pub t_star: f64,
    /// For J_min: the ordered (a, b) community pair attaining the minimum.
    pub pair: Option<(usize, usize)>,
    /// Final golden-section interval width.
    pub bracket_width: f64,
}

fn validate_pq(p: f64, q: f64) -> Result<()> {
    if !(q > 0.0 && p > q && p < 1.0) {
        return Err(Error::parameter(format!(
            "exponent computation needs 0 < q < p < 1 (got p = {p}, q = {q})"
        )));
    }
    Ok(())
}

fn validate_counts(m1: u64, m2: u64) -> Result<()> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::parameter("counts m1, m2 must be >= 1"));
    }
    Ok(())
}

/// log(a e^t + 1 - a) evaluated without overflow for any real t.
#[inline]
fn ln_mix(a: f64, t: f64) -> f64 {
    if t > 500.0 {
        t + (a + (1.0 - a) * (-t).exp()).ln()
    } else {
        (a * t.exp_m1()).ln_1p()
    }
}

/// The concave objective f(t); f(0) = 0 and f is finite for all real t.
pub fn j_objective(t: f64, m1: u64, m2: u64, p: f64, q: f64) -> f64 {
    let (m1, m2) = (m1 as f64, m2 as f64);
    (m1 - m2) * t * (p + q) / 2.0 - m1 * ln_mix(q, t) - m2 * ln_mix(p, -t)
}

/// Stationary point of the q-side term; the maximizer satisfies
/// t* <= max(t1, t2) for all 0 < q < p < 1, and t* <= (p - q)/q when
/// p <= 1/2.
fn t1_bound(p: f64, q: f64) -> f64 {
    ((p - q) / ((2.0 - p - q) * q)).ln_1p()
}

fn t2_bound(p: f64, q: f64) -> f64 {
    ((p - q) / ((1.0 - p) * (p + q))).ln_1p()
}

/// Golden-section maximization of J_{m1,m2,p,q} over its proven bracket.
pub fn compute_j(m1: u64, m2: u64, p: f64, q: f64) -> Result<ExponentResult> {
    validate_pq(p, q)?;
    validate_counts(m1, m2)?;
    let hi = ((p - q) / q).max(t1_bound(p, q)).max(t2_bound(p, q));
    let width_tol = 1e-12 * (1.0 + (p - q) / q);
    let f = |t: f64| j_objective(t, m1, m2, p, q);

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0f64, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > width_tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let (t_star, value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Ok(ExponentResult {
        value,
        t_star,
        pair: None,
        bracket_width: b - a,
    })
}

/// J_min = min over ordered pairs a != b of J_{n_a, n_b, p, q}; ties keep
/// the lexicographically smallest pair.
pub fn compute_j_min(instance: &SbmInstance) -> Result<ExponentResult> {
    let sizes = instance.sizes();
    let (p, q) = (instance.p(), instance.q());
    let mut best: Option<ExponentResult> = None;
    for a in 0..sizes.len() {
        for b in 0..sizes.len() {
            if a == b {
                continue;
            }
            let mut r = compute_j(sizes[a] as u64, sizes[b] as u64, p, q)?;
            r.pair = Some((a, b));
            let better = match &best {
                None => true,
                Some(cur) => r.value < cur.value,
            };
            if better {
                best = Some(r);
            }
        }
    }
    Ok(best.expect("k >= 2 communities give at least one ordered pair"))
}

/// Closed form for the balanced exponent:
/// I_{p,q} = -2 log(sqrt(p q) + sqrt((1-p)(1-q))); J(m, m, p, q) = m I_{p,q}.
pub fn closed_form_i(p: f64, q: f64) -> Result<f64> {
    validate_pq(p, q)?;
    Ok(-2.0 * ((p * q).sqrt() + ((1.0 - p) * (1.0 - q)).sqrt()).ln())
}

/// The lemma's Chernoff upper bound, in log space: for slack rho in [0, 1],
/// P(D >= threshold(rho)) <= exp(-J + (rho/2)(m1 + m2)(p - q)^2 / q), where
/// D is the centered binomial difference and the centered threshold is
/// (1 - rho)/2 (m1 + m2)(p - q).
pub fn chernoff_upper(m1: u64, m2: u64, p: f64, q: f64, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::parameter(format!("rho must be in [0, 1] (got {rho})")));
    }
    let j = compute_j(m1, m2, p, q)?.value;
    Ok(-j + (rho / 2.0) * (m1 + m2) as f64 * (p - q).powi(2) / q)
}

/// Threshold for the uncentered difference Binomial(m1, q) - Binomial(m2, p)
/// matching the lemma's centered event at slack rho. At rho = 0 this is
/// (m1 - m2)(p + q)/2.
pub fn chernoff_threshold(m1: u64, m2: u64, p: f64, q: f64, rho: f64) -> f64 {
    (m1 as f64 - m2 as f64) * (p + q) / 2.0 - rho * (m1 + m2) as f64 * (p - q) / 2.0
}

/// Exact probability mass of D = Binomial(m1, q) - Binomial(m2, p), kept in
/// log space over the support {-m2, ..., m1}.
#[derive(Clone, Debug)]
pub struct TailDistribution {
    pub m1: u64,
    pub m2: u64,
    pub p: f64,
    pub q: f64,
    /// log_pmf[d + m2] = log P(D = d).
    log_pmf: Vec<f64>,
}

/// Convolution size guard.
pub const MAX_TAIL_COUNT: u64 = 5000;

fn ln_binom_pmf(m: u64, x: u64, prob: f64) -> f64 {
    debug_assert!(x <= m);
    let (mf, xf) = (m as f64, x as f64);
    let choose = ln_gamma(mf + 1.0) - ln_gamma(xf + 1.0) - ln_gamma(mf - xf + 1.0);
    let succ = if x == 0 { 0.0 } else { xf * prob.ln() };
    let fail = if x == m { 0.0 } else { (mf - xf) * (1.0 - prob).ln() };
    choose + succ + fail
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + s.ln()
}

impl TailDistribution {
    pub fn new(m1: u64, m2: u64, p: f64, q: f64) -> Result<Self> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::parameter("counts m1, m2 must be >= 1"));
        }
        if m1 > MAX_TAIL_COUNT || m2 > MAX_TAIL_COUNT {
            return Err(Error::parameter(format!(
                "exact tail limited to m1, m2 <= {MAX_TAIL_COUNT} (got {m1}, {m2})"
            )));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parameter(format!("{name} must be in [0, 1] (got {v})")));
            }
        }
        let lp_x: Vec<f64> = (0..=m1).map(|x| ln_binom_pmf(m1, x, q)).collect();
        let lp_y: Vec<f64> = (0..=m2).map(|y| ln_binom_pmf(m2, y, p)).collect();
        let support = (m1 + m2 + 1) as usize;
        let mut log_pmf = vec![f64::NEG_INFINITY; support];
        let mut scratch = Vec::with_capacity((m1.min(m2) + 1) as usize);
        for (slot, lp) in log_pmf.iter_mut().enumerate() {
            let d = slot as i64 - m2 as i64;
            scratch.clear();
            let x_lo = d.max(0) as u64;
            let x_hi = m1.min((d + m2 as i64) as u64);
            for x in x_lo..=x_hi {
                let y = (x as i64 - d) as u64;
                scratch.push(lp_x[x as usize] + lp_y[y as usize]);
            }
            *lp = log_sum_exp(&scratch);
        }
        Ok(TailDistribution { m1, m2, p, q, log_pmf })
    }

    /// Support is {-m2, ..., m1}.
    pub fn support(&self) -> (i64, i64) {
        (-(self.m2 as i64), self.m1 as i64)
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    pub fn pmf(&self) -> Vec<f64> {
        self.log_pmf.iter().map(|&l| l.exp()).collect()
    }

    pub fn mean(&self) -> f64 {
        self.log_pmf
            .iter()
            .enumerate()
            .map(|(slot, &l)| (slot as f64 - self.m2 as f64) * l.exp())
            .sum()
    }

    /// log P(D >= threshold) for a real threshold.
    pub fn log_tail(&self, threshold: f64) -> f64 {
        let (lo, hi) = self.support();
        if threshold <= lo as f64 {
            return 0.0;
        }
        if threshold > hi as f64 {
            return f64::NEG_INFINITY;
        }
        let d0 = threshold.ceil() as i64;
        let start = (d0 + self.m2 as i64) as usize;
        log_sum_exp(&self.log_pmf[start..])
    }
}

/// P(D >= threshold) from the exact pmf.
pub fn exact_tail(dist: &TailDistribution, threshold: f64) -> f64 {
    dist.log_tail(threshold).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mix64;

    #[test]
    fn objective_zero_at_origin() {
        for &(m1, m2, p, q) in &[(10u64, 10u64, 0.2, 0.1), (3, 7, 0.9, 0.2), (100, 1, 0.5, 0.01)] {
            assert_eq!(j_objective(0.0, m1, m2, p, q), 0.0);
        }
    }

    #[test]
    fn objective_is_strictly_concave() {
        let mut state = 3u64;
        let mut next = || {
            state = mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let q = 0.01 + 0.4 * next();
            let p = q + (0.98 - q) * next().max(0.05);
            if p >= 1.0 {
                continue;
            }
            let m1 = 1 + (next() * 50.0) as u64;
            let m2 = 1 + (next() * 50.0) as u64;
            let t1 = -3.0 + 6.0 * next();
            let t2 = -3.0 + 6.0 * next();
            if (t1 - t2).abs() < 1e-3 {
                continue;
            }
            let mid = j_objective((t1 + t2) / 2.0, m1, m2, p, q);
            let chord = (j_objective(t1, m1, m2, p, q) + j_objective(t2, m1, m2, p, q)) / 2.0;
            assert!(mid > chord, "concavity violated at p={p} q={q}");
        }
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        // Direct formula in plain arithmetic; safe at these magnitudes.
        let (t, m1, m2, p, q) = (0.1, 10u64, 10u64, 0.2, 0.1);
        let direct = (m1 as f64 - m2 as f64) * t * (p + q) / 2.0
            - m1 as f64 * (q * t.exp() + 1.0 - q).ln()
            - m2 as f64 * (p * (-t).exp() + 1.0 - p).ln();
        let got = j_objective(t, m1, m2, p, q);
        assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn balanced_j_equals_closed_form() {
        let i = closed_form_i(0.05, 0.01).unwrap();
        assert!((i - 0.01575280).abs() < 1e-7, "{i}");
        let r = compute_j(300, 300, 0.05, 0.01).unwrap();
        assert!((r.value - 4.725840).abs() < 1e-5, "{}", r.value);
        assert!((r.value - 300.0 * i).abs() <= 1e-8 * r.value);
    }

    #[test]
    fn closed_form_vanishes_as_p_approaches_q() {
        let i = closed_form_i(0.3 + 1e-12, 0.3).unwrap();
        assert!(i.abs() <= 1e-10, "{i}");
        assert!(closed_form_i(0.5, 0.2).unwrap() > 0.0);
    }

    #[test]
    fn closed_form_upper_bound_small_p() {
        let mut state = 77u64;
        let mut next = || {
            state = mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let p = 0.005 + next() * 0.095; // p <= 1/10
            let q = p * (0.05 + 0.9 * next());
            let i = closed_form_i(p, q).unwrap();
            assert!(
                i <= 4.0 * (p - q).powi(2) / (3.0 * p) + 1e-12,
                "I bound violated at p={p} q={q}"
            );
        }
    }

    #[test]
    fn j_bounds_and_maximizer_bracket() {
        let mut state = 41u64;
        let mut next = || {
            state = mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let q = 0.005 + 0.45 * next();
            let p = (q + 0.02 + (0.5 - q) * next()).min(0.5);
            if p <= q {
                continue;
            }
            let m1 = 1 + (next() * 400.0) as u64;
            let m2 = 1 + (next() * 400.0) as u64;
            let r = compute_j(m1, m2, p, q).unwrap();
            assert!(r.value >= 0.0);
            let lo = m2 as f64 * (p - q).powi(2) / (8.0 * p);
            let hi = (m1 + m2) as f64 * (p - q).powi(2) / (4.0 * q);
            assert!(r.value >= lo - 1e-9, "J = {} below {lo}", r.value);
            assert!(r.value <= hi + 1e-9, "J = {} above {hi}", r.value);
            assert!(r.t_star > 0.0 && r.t_star <= (p - q) / q + 1e-9);
        }
    }

    #[test]
    fn j_min_balanced_and_unbalanced() {
        let inst = SbmInstance::balanced(600, 2, 0.05, 0.01).unwrap();
        let r = compute_j_min(&inst).unwrap();
        assert!((r.value - 4.725840).abs() < 1e-5);

        let inst = SbmInstance::with_sizes(&[200, 400], 0.05, 0.01).unwrap();
        let r = compute_j_min(&inst).unwrap();
        let j_ab = compute_j(200, 400, 0.05, 0.01).unwrap().value;
        let j_ba = compute_j(400, 200, 0.05, 0.01).unwrap().value;
        assert!(r.value <= j_ab && r.value <= j_ba);
        assert!(r.value == j_ab || r.value == j_ba);
        assert_eq!(r.pair, Some(if j_ab <= j_ba { (0, 1) } else { (1, 0) }));
    }

    #[test]
    fn j_rejects_degenerate_probabilities() {
        assert!(compute_j(10, 10, 1e-9, 0.0).is_err());
        assert!(compute_j(10, 10, 0.5, 0.5).is_err());
        assert!(compute_j(10, 10, 1.0, 0.5).is_err());
        assert!(compute_j(0, 10, 0.5, 0.1).is_err());
    }

    #[test]
    fn tail_support_bounds() {
        let d = TailDistribution::new(4, 3, 0.5, 0.25).unwrap();
        assert_eq!(exact_tail(&d, -3.0), 1.0);
        assert_eq!(exact_tail(&d, -10.0), 1.0);
        assert_eq!(exact_tail(&d, 4.5), 0.0);
    }

    #[test]
    fn tail_hand_enumeration() {
        // m1 = 2, m2 = 1, q = 0.25, p = 0.5, threshold 0.375 -> 0.25.
        let d = TailDistribution::new(2, 1, 0.5, 0.25).unwrap();
        let thr = (2.0 - 1.0) * (0.5 + 0.25) / 2.0;
        assert!((exact_tail(&d, thr) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tail_pmf_normalization_and_mean() {
        for &(m1, m2, p, q) in &[(5u64, 9u64, 0.5, 0.2), (200, 160, 0.05, 0.01), (40, 40, 0.9, 0.3)] {
            let d = TailDistribution::new(m1, m2, p, q).unwrap();
            let total: f64 = d.pmf().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "sum {total}");
            assert!(d.pmf().iter().all(|&x| x >= 0.0));
            let want = m1 as f64 * q - m2 as f64 * p;
            assert!((d.mean() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn chernoff_dominates_exact_tail() {
        let d = TailDistribution::new(200, 200, 0.05, 0.01).unwrap();
        let j = compute_j(200, 200, 0.05, 0.01).unwrap().value;
        assert!(d.log_tail(0.0) <= -j + 1e-12);
    }

    #[test]
    fn chernoff_upper_properties() {
        let j = compute_j(50, 60, 0.2, 0.05).unwrap().value;
        let b0 = chernoff_upper(50, 60, 0.2, 0.05, 0.0).unwrap();
        assert!((b0 + j).abs() < 1e-12);
        let mut prev = b0;
        for i in 1..=10 {
            let rho = i as f64 / 10.0;
            let b = chernoff_upper(50, 60, 0.2, 0.05, rho).unwrap();
            assert!(b >= prev - 1e-12, "bound not monotone in rho");
            prev = b;
        }
        assert!(chernoff_upper(50, 60, 0.2, 0.05, 1.5).is_err());
    }

    #[test]
    fn chernoff_rho_grid_dominance() {
        let mut state = 4242u64;
        let mut next = || {
            state = mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..25 {
            let q = 0.01 + 0.2 * next();
            let p = (q + 0.02 + 0.3 * next()).min(0.5);
            if p <= q {
                continue;
            }
            let m1 = 2 + (next() * 120.0) as u64;
            let m2 = 2 + (next() * 120.0) as u64;
            let d = TailDistribution::new(m1, m2, p, q).unwrap();
            for &rho in &[0.0, 0.2, 0.5, 1.0] {
                let thr = chernoff_threshold(m1, m2, p, q, rho);
                let bound = chernoff_upper(m1, m2, p, q, rho).unwrap();
                assert!(
                    d.log_tail(thr) <= bound + 1e-12,
                    "dominance fails m1={m1} m2={m2} p={p} q={q} rho={rho}"
                );
            }
        }
    }

    #[test]
    fn tail_guard_rejects_large_counts() {
        assert!(TailDistribution::new(5001, 10, 0.5, 0.1).is_err());
        assert!(TailDistribution::new(10, 0, 0.5, 0.1).is_err());
    }

    #[test]
    fn balanced_grid_matches_closed_form() {
        for &m in &[10u64, 100, 1000] {
            for &p in &[0.05, 0.2, 0.4] {
                for &frac in &[0.2, 0.5, 0.8] {
                    let q = p * frac;
                    let r = compute_j(m, m, p, q).unwrap();
                    let want = m as f64 * closed_form_i(p, q).unwrap();
                    assert!(
                        (r.value - want).abs() <= 1e-8 * want.max(1e-30),
                        "m={m} p={p} q={q}: {} vs {want}",
                        r.value
                    );
                }
            }
        }
    }

    #[test]
    fn high_precision_objective_value() {
        // Reference value for f(0.1; 10, 10, 0.2, 0.1) from 50-digit
        // evaluation: (see tools in tests) frozen here.
        let got = j_objective(0.1, 10, 10, 0.2, 0.1);
        let want = -0.000480329358058054303582421;
        assert!(
            (got - want).abs() <= 1e-12 * want.abs(),
            "got {got:.21e}, want {want:.21e}"
        );
    }
}
