//! Oracle classifier: nearest population center theta*_a to the projected
//! row A_i. U*. It uses the unobserved population eigenstructure, so it is a
//! classification baseline rather than a practical estimator; its per-node
//! error is an exact binomial-difference tail.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sbm::{CommunityAssignment, PopulationModel, SbmInstance};

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub labels: CommunityAssignment,
    /// Per node: distance to the true community's center minus distance to
    /// the chosen (nearest) center; 0 when classified correctly.
    pub per_node_margin: Vec<f64>,
}

/// Classify every node to the nearest theta*_a in the projected space,
/// ties broken toward the lowest community index.
pub fn oracle_classify(g: &Graph, pop: &PopulationModel) -> Result<OracleResult> {
    let inst = pop.instance();
    if g.n() != inst.n() {
        return Err(Error::parameter(format!(
            "graph has {} nodes but the population model expects {}",
            g.n(),
            inst.n()
        )));
    }
    let k = inst.k();
    let u = pop.u_star();
    let theta = pop.theta_star();
    let n = g.n();
    let mut labels = Vec::with_capacity(n);
    let mut margins = Vec::with_capacity(n);
    let mut x = vec![0.0f64; k];
    for i in 0..n {
        for xc in x.iter_mut() {
            *xc = 0.0;
        }
        for &j in g.neighbors(i) {
            for (c, xc) in x.iter_mut().enumerate() {
                *xc += u[(j as usize, c)];
            }
        }
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        let mut d2 = vec![0.0f64; k];
        for a in 0..k {
            let mut acc = 0.0;
            for c in 0..k {
                let diff = x[c] - theta[(a, c)];
                acc += diff * diff;
            }
            d2[a] = acc;
            if acc < best_d2 {
                best_d2 = acc;
                best = a;
            }
        }
        labels.push(best);
        let true_a = inst.z_star().labels[i];
        margins.push(d2[true_a].sqrt() - best_d2.sqrt());
    }
    Ok(OracleResult {
        labels: CommunityAssignment::new(labels),
        per_node_margin: margins,
    })
}

/// Counting form of the k = 2 misclassification event for node i:
/// sum of edges into the other community minus edges into the node's own
/// community (excluding i) at least (n_other - n_own)(p + q)/2.
///
/// On exact ties this matches nearest-center classification for nodes in
/// community 1 (where the tie assigns community 0, a misclassification) and
/// diverges for community-0 nodes, whose tie keeps the correct label.
pub fn oracle_threshold_form(g: &Graph, instance: &SbmInstance, i: usize) -> Result<bool> {
    if instance.k() != 2 {
        return Err(Error::Unsupported(format!(
            "threshold form requires k = 2 (got k = {})",
            instance.k()
        )));
    }
    if g.n() != instance.n() {
        return Err(Error::parameter("graph and instance node counts differ"));
    }
    if i >= g.n() {
        return Err(Error::parameter(format!("node {i} out of range")));
    }
    let z = &instance.z_star().labels;
    let own = z[i];
    let other = 1 - own;
    let mut cnt_other = 0i64;
    let mut cnt_own = 0i64;
    for &j in g.neighbors(i) {
        if z[j as usize] == own {
            cnt_own += 1;
        } else {
            cnt_other += 1;
        }
    }
    let rhs = (instance.sizes()[other] as f64 - instance.sizes()[own] as f64)
        * (instance.p() + instance.q())
        / 2.0;
    Ok((cnt_other - cnt_own) as f64 >= rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{exact_tail, TailDistribution};
    use crate::sbm::{population_model, sample_sbm, SbmInstance};

    #[test]
    fn empty_graph_unbalanced_goes_to_smaller_norm_center() {
        // With no edges every projected row is zero, so all nodes pick the
        // theta*_a of smallest norm; by ||theta*_a||^2 = (p^2 - q^2) n_a +
        // q^2 n that is the smallest community.
        let inst = SbmInstance::with_sizes(&[30, 50], 0.4, 0.1).unwrap();
        let pop = population_model(&inst);
        let g = Graph::empty(inst.n());
        let r = oracle_classify(&g, &pop).unwrap();
        assert!(r.labels.labels.iter().all(|&l| l == 0));
        assert!(pop.theta_star().row(0).norm() < pop.theta_star().row(1).norm());
    }

    #[test]
    fn empty_graph_balanced_is_constant_label() {
        let inst = SbmInstance::balanced(40, 2, 0.4, 0.1).unwrap();
        let pop = population_model(&inst);
        let g = Graph::empty(inst.n());
        let r = oracle_classify(&g, &pop).unwrap();
        let first = r.labels.labels[0];
        assert!(r.labels.labels.iter().all(|&l| l == first));
    }

    #[test]
    fn noiseless_adjacency_recovers_truth() {
        // A = P with zeroed diagonal for p = 1, q = 0: the projected rows sit
        // essentially on the centers.
        let inst = SbmInstance::with_sizes(&[8, 13], 1.0, 0.0).unwrap();
        let pop = population_model(&inst);
        let g = sample_sbm(&inst, 0);
        let r = oracle_classify(&g, &pop).unwrap();
        assert_eq!(r.labels.labels, inst.z_star().labels);
        assert!(r.per_node_margin.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn adversarial_flip_changes_label() {
        // Rewire node 0 to look exactly like a member of community 1.
        let inst = SbmInstance::with_sizes(&[5, 5], 1.0, 0.0).unwrap();
        let pop = population_model(&inst);
        let mut edges: Vec<(u32, u32)> = Vec::new();
        // Community 1's clique (nodes 5..10).
        for i in 5..10u32 {
            for j in (i + 1)..10 {
                edges.push((i, j));
            }
        }
        // Community 0's clique without node 0.
        for i in 1..5u32 {
            for j in (i + 1)..5 {
                edges.push((i, j));
            }
        }
        // Node 0 connects to all of community 1 instead.
        for j in 5..10u32 {
            edges.push((0, j));
        }
        let g = Graph::from_edges(10, edges).unwrap();
        let r = oracle_classify(&g, &pop).unwrap();
        assert_eq!(r.labels.labels[0], 1);
        assert!(r.labels.labels[1..5].iter().all(|&l| l == 0));
        assert!(r.labels.labels[5..].iter().all(|&l| l == 1));
    }

    #[test]
    fn threshold_form_requires_two_communities() {
        let inst = SbmInstance::with_sizes(&[4, 4, 4], 0.5, 0.1).unwrap();
        let g = Graph::empty(12);
        assert!(matches!(
            oracle_threshold_form(&g, &inst, 0),
            Err(crate::error::Error::Unsupported(_))
        ));
    }

    #[test]
    fn threshold_form_empty_balanced_graph_fires_everywhere() {
        let inst = SbmInstance::balanced(10, 2, 0.5, 0.25).unwrap();
        let g = Graph::empty(10);
        for i in 0..10 {
            assert!(oracle_threshold_form(&g, &inst, i).unwrap());
        }
    }

    #[test]
    fn threshold_form_matches_classifier_on_seeded_graphs() {
        let inst = SbmInstance::with_sizes(&[12, 8], 0.5, 0.2).unwrap();
        let pop = population_model(&inst);
        for seed in 0..100 {
            let g = sample_sbm(&inst, seed);
            let cls = oracle_classify(&g, &pop).unwrap();
            for i in 0..inst.n() {
                let event = oracle_threshold_form(&g, &inst, i).unwrap();
                let mis = cls.labels.labels[i] != inst.z_star().labels[i];
                assert_eq!(event, mis, "seed {seed}, node {i}");
            }
        }
    }

    #[test]
    fn five_node_hand_computation() {
        // sizes (3, 2), p = 0.5, q = 0.25. Node 3 (community 1) with edges
        // to nodes 0, 1 (other community) and none to node 4:
        // lhs = 2 - 0 = 2 >= (3 - 2) * 0.375 = 0.375 -> event true.
        let inst = SbmInstance::with_sizes(&[3, 2], 0.5, 0.25).unwrap();
        let g = Graph::from_edges(5, vec![(0, 3), (1, 3), (2, 4)]).unwrap();
        assert!(oracle_threshold_form(&g, &inst, 3).unwrap());
        // Node 4 has one other-community edge (node 2), none to node 3:
        // 1 - 0 = 1 >= 0.375 -> true.
        assert!(oracle_threshold_form(&g, &inst, 4).unwrap());
        // Node 0 (community 0): other = community 1; edge to 3 only:
        // 1 - 0 = 1 >= (2 - 3) * 0.375 = -0.375 -> true.
        assert!(oracle_threshold_form(&g, &inst, 0).unwrap());
        // Node 2: one edge to node 4 (other), none within:
        // 1 >= -0.375 -> true.
        assert!(oracle_threshold_form(&g, &inst, 2).unwrap());
        // Isolated-within node with no edges at all: make node 1's only
        // edge within its own community instead.
        let g2 = Graph::from_edges(5, vec![(1, 2)]).unwrap();
        // lhs = 0 - 1 = -1 >= -0.375 is false.
        assert!(!oracle_threshold_form(&g2, &inst, 1).unwrap());
        // Node 3 in g2 has no edges: 0 >= 0.375 false.
        assert!(!oracle_threshold_form(&g2, &inst, 3).unwrap());
        // Node 0 in g2 has no edges: 0 >= -0.375 true.
        assert!(oracle_threshold_form(&g2, &inst, 0).unwrap());
    }

    #[test]
    fn per_node_error_equals_exact_tail_by_enumeration() {
        // Exhaustive over all 2^10 graphs on sizes (3, 2): the probability
        // of the misclassification event for a community-1 node equals the
        // exact tail with m2 = n_2 - 1, and differs from the m2 = n_2 tail.
        let (p, q) = (0.5, 0.25);
        let inst = SbmInstance::with_sizes(&[3, 2], p, q).unwrap();
        let pop = population_model(&inst);
        let z = &inst.z_star().labels;
        let pairs: Vec<(usize, usize)> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))
            .collect();
        let mut prob_event = vec![0.0f64; 5];
        let mut prob_mis = vec![0.0f64; 5];
        for mask in 0..(1u32 << pairs.len()) {
            let mut edges = Vec::new();
            let mut weight = 1.0;
            for (b, &(i, j)) in pairs.iter().enumerate() {
                let pr = if z[i] == z[j] { p } else { q };
                if (mask >> b) & 1 == 1 {
                    edges.push((i as u32, j as u32));
                    weight *= pr;
                } else {
                    weight *= 1.0 - pr;
                }
            }
            let g = Graph::from_edges(5, edges).unwrap();
            let cls = oracle_classify(&g, &pop).unwrap();
            for i in 0..5 {
                if oracle_threshold_form(&g, &inst, i).unwrap() {
                    prob_event[i] += weight;
                }
                if cls.labels.labels[i] != z[i] {
                    prob_mis[i] += weight;
                }
            }
        }
        // Community-1 nodes (indices 3, 4): event ~ Bin(3, q) - Bin(1, p)
        // >= (3 - 2)(p + q)/2.
        let thr = (3.0 - 2.0) * (p + q) / 2.0;
        let tail_off = exact_tail(&TailDistribution::new(3, 1, p, q).unwrap(), thr);
        let tail_full = exact_tail(&TailDistribution::new(3, 2, p, q).unwrap(), thr);
        for i in 3..5 {
            assert!((prob_event[i] - tail_off).abs() < 1e-12, "node {i}");
            assert!((prob_event[i] - tail_full).abs() > 1e-6);
            assert!((prob_mis[i] - prob_event[i]).abs() < 1e-12);
        }
        // Community-0 nodes: event ~ Bin(2, q) - Bin(2, p) >= -0.375.
        let thr = (2.0 - 3.0) * (p + q) / 2.0;
        let tail_off = exact_tail(&TailDistribution::new(2, 2, p, q).unwrap(), thr);
        for i in 0..3 {
            assert!((prob_event[i] - tail_off).abs() < 1e-12, "node {i}");
            assert!((prob_mis[i] - prob_event[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_rate_matches_exponent_band() {
        // Balanced 300/300 at p = 0.05, q = 0.01: J = 300 I ~ 4.726. The
        // band needs >= 100 expected errors before the rate is trusted.
        let inst = SbmInstance::balanced(600, 2, 0.05, 0.01).unwrap();
        let pop = population_model(&inst);
        let j = crate::exponents::compute_j_min(&inst).unwrap().value;
        let trials = 150u64;
        let mut errors = 0usize;
        for t in 0..trials {
            let g = sample_sbm(&inst, 1000 + t);
            let r = oracle_classify(&g, &pop).unwrap();
            errors += r
                .labels
                .labels
                .iter()
                .zip(&inst.z_star().labels)
                .filter(|(a, b)| a != b)
                .count();
        }
        assert!(errors >= 100, "only {errors} errors; enlarge the run");
        let rate = errors as f64 / (trials as f64 * inst.n() as f64);
        let ratio = -rate.ln() / j;
        assert!(
            (0.8..=1.5).contains(&ratio),
            "-log(rate)/J = {ratio} outside [0.8, 1.5] (rate {rate})"
        );
    }
}
