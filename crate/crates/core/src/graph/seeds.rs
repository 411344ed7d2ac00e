//! Disjoint clique seeds and the minimal threshold that yields enough of them.

use std::time::Instant;

use super::cliques::{largest_clique, EnumerationLimits};
use super::{build_epsilon_graph, CliqueSet, CorrelationGraph, NodeSet};
use crate::error::{Error, Result};
use crate::timeseries::CorrelationMatrix;

/// Greedy disjoint clique packing on node indices. Returns the cliques and
/// whether the time budget cut a search short.
fn greedy_disjoint(adjacency: &[NodeSet], k_min: usize, limits: EnumerationLimits) -> (Vec<Vec<usize>>, bool) {
    let mut trace = GreedyTrace::new(adjacency.len(), k_min, limits);
    trace.replay_from(adjacency, 0);
    (trace.picks, trace.truncated)
}

/// The greedy packing of a graph that only gains edges, kept up to date one
/// edge at a time.
///
/// `remaining[s]` holds the nodes still available before pick `s`; the last
/// entry is what is left after the final pick. The time and work budgets
/// cover the whole life of the trace; once either runs out `truncated` is
/// set and the picks are no longer exact.
struct GreedyTrace {
    k_min: usize,
    deadline: Option<Instant>,
    work: Option<u64>,
    picks: Vec<Vec<usize>>,
    remaining: Vec<NodeSet>,
    truncated: bool,
}

impl GreedyTrace {
    fn new(n: usize, k_min: usize, limits: EnumerationLimits) -> Self {
        GreedyTrace {
            k_min,
            deadline: limits.time_budget.map(|b| Instant::now() + b),
            work: limits.max_work,
            picks: Vec::new(),
            remaining: vec![NodeSet::full(n)],
            truncated: false,
        }
    }

    /// Recomputes every pick from step `s` on.
    fn replay_from(&mut self, adjacency: &[NodeSet], s: usize) {
        self.picks.truncate(s);
        self.remaining.truncate(s + 1);
        let mut left = self.remaining[s].clone();
        loop {
            let (best, trunc) = largest_clique(adjacency, left.clone(), self.k_min, self.deadline, &mut self.work);
            if trunc.is_some() {
                self.truncated = true;
                break;
            }
            match best {
                Some(c) if c.len() >= self.k_min => {
                    for &v in &c {
                        left.remove(v);
                    }
                    self.picks.push(c);
                    self.remaining.push(left.clone());
                }
                _ => break,
            }
        }
    }

    /// Updates the packing after edge `(i, j)` was added to `adjacency`.
    ///
    /// The maximum cliques of the enlarged graph are the old ones plus those
    /// through the new edge, so each step only has to compare its old pick
    /// with the best clique through `(i, j)`. Once a pick removes `i` or `j`
    /// the rest of the trace no longer sees the edge.
    fn add_edge(&mut self, adjacency: &[NodeSet], i: usize, j: usize) {
        for s in 0..self.remaining.len() {
            let left = &self.remaining[s];
            if !left.contains(i) || !left.contains(j) {
                return;
            }
            let within = adjacency[i].intersection(&adjacency[j]).intersection(left);
            // a core below this size cannot match the current pick
            let floor = self.picks.get(s).map_or(self.k_min, Vec::len).saturating_sub(2);
            let (core, trunc) = largest_clique(adjacency, within, floor, self.deadline, &mut self.work);
            if trunc.is_some() {
                self.truncated = true;
                return;
            }
            let Some(core) = core else {
                match self.picks.get(s) {
                    Some(old) if !old.contains(&i) && !old.contains(&j) => continue,
                    _ => return,
                }
            };
            let mut through = core;
            through.extend([i, j]);
            through.sort_unstable();
            let Some(old) = self.picks.get(s) else {
                if through.len() >= self.k_min {
                    self.replay_from(adjacency, s);
                }
                return;
            };
            if through.len() > old.len() || (through.len() == old.len() && through < *old) {
                self.replay_from(adjacency, s);
                return;
            }
            if old.contains(&i) || old.contains(&j) {
                return;
            }
        }
    }
}

/// Pairwise-disjoint cliques of size at least `k_min`, taken greedily:
/// repeatedly the largest maximal clique of the remaining nodes (ties go to
/// the lexicographically smallest member list), whose nodes are then removed.
pub fn disjoint_cliques(g: &CorrelationGraph, k_min: usize, limits: EnumerationLimits) -> Result<CliqueSet> {
    if k_min < 2 {
        return Err(Error::InvalidArgument(format!("k_min must be >= 2, got {k_min}")));
    }
    let (picked, truncated) = greedy_disjoint(g.adjacency(), k_min, limits);
    CliqueSet::from_indices(g, &picked, true, truncated)
}

/// Result of the threshold scan.
#[derive(Debug, Clone)]
pub struct EpsilonStar {
    pub epsilon: f64,
    pub graph: CorrelationGraph,
    pub seeds: CliqueSet,
    /// Distinct thresholds scanned, the returned one included.
    pub thresholds_evaluated: usize,
}

/// Smallest observed `rho^2` at which the greedy packing finds at least
/// `n_coal` disjoint cliques of size `>= k_min`.
///
/// Thresholds are the distinct squared coefficients in ascending order. The
/// packing is updated edge by edge rather than recomputed per threshold; it
/// is always identical to a fresh greedy run on the current graph.
///
/// `limits.time_budget` and `limits.max_work` bound the whole scan. Dense
/// graphs near `rho^2 = 1` make the clique searches expensive, so proving
/// infeasibility can take long; when a budget runs out first the scan fails
/// with [`Error::ScanBudget`].
pub fn epsilon_star(
    corr: &CorrelationMatrix,
    n_coal: usize,
    k_min: usize,
    limits: EnumerationLimits,
) -> Result<EpsilonStar> {
    if n_coal == 0 {
        return Err(Error::InvalidArgument("n_coal must be >= 1".into()));
    }
    if k_min < 2 {
        return Err(Error::InvalidArgument(format!("k_min must be >= 2, got {k_min}")));
    }
    let n = corr.n();
    if n_coal * k_min > n {
        return Err(Error::Infeasible {
            requested: n_coal,
            max_achievable: n / k_min,
        });
    }

    let mut pairs: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let r = corr.get(i, j);
            (r * r, i, j)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut adjacency = vec![NodeSet::empty(n); n];
    let mut trace = GreedyTrace::new(n, k_min, limits);
    let mut max_seen = 0;
    let mut evaluated = 0;

    let mut k = 0;
    while k < pairs.len() {
        let threshold = pairs[k].0;
        while k < pairs.len() && pairs[k].0 == threshold {
            let (_, i, j) = pairs[k];
            adjacency[i].insert(j);
            adjacency[j].insert(i);
            trace.add_edge(&adjacency, i, j);
            k += 1;
        }
        if trace.truncated {
            return Err(Error::ScanBudget {
                requested: n_coal,
                found: max_seen,
                epsilon: threshold,
            });
        }
        evaluated += 1;
        max_seen = max_seen.max(trace.picks.len());
        if trace.picks.len() >= n_coal {
            let graph = build_epsilon_graph(corr, threshold)?;
            debug_assert_eq!(graph.adjacency(), adjacency.as_slice());
            let seeds = CliqueSet::from_indices(&graph, &trace.picks, true, false)?;
            return Ok(EpsilonStar {
                epsilon: threshold,
                graph,
                seeds,
                thresholds_evaluated: evaluated,
            });
        }
    }
    Err(Error::Infeasible {
        requested: n_coal,
        max_achievable: max_seen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::AgentId;

    fn ids(v: &[u32]) -> Vec<AgentId> {
        v.iter().copied().map(AgentId).collect()
    }

    fn matrix(rho2: &[((usize, usize), f64)], n: usize, fill: f64) -> CorrelationMatrix {
        let mut v = vec![fill.sqrt(); n * n];
        for &((i, j), r2) in rho2 {
            v[i * n + j] = r2.sqrt();
            v[j * n + i] = r2.sqrt();
        }
        CorrelationMatrix::from_values((0..n as u32).map(AgentId).collect(), v).unwrap()
    }

    #[test]
    fn two_disjoint_triangles() {
        let g = CorrelationGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let s = disjoint_cliques(&g, 2, EnumerationLimits::default()).unwrap();
        assert_eq!(s.cliques, vec![ids(&[0, 1, 2]), ids(&[3, 4, 5])]);
        assert!(s.disjoint);
    }

    #[test]
    fn triangles_sharing_a_node() {
        // {0,1,2} and {2,3,4}: tie on size, lexicographic pick, then edge {3,4}
        let g = CorrelationGraph::from_edges(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]).unwrap();
        let s = disjoint_cliques(&g, 2, EnumerationLimits::default()).unwrap();
        assert_eq!(s.cliques, vec![ids(&[0, 1, 2]), ids(&[3, 4])]);
        let s3 = disjoint_cliques(&g, 3, EnumerationLimits::default()).unwrap();
        assert_eq!(s3.cliques, vec![ids(&[0, 1, 2])]);
    }

    #[test]
    fn empty_graph_has_no_seeds() {
        let g = CorrelationGraph::from_edges(4, &[]).unwrap();
        assert!(disjoint_cliques(&g, 2, EnumerationLimits::default()).unwrap().is_empty());
        assert!(disjoint_cliques(&g, 1, EnumerationLimits::default()).is_err());
    }

    #[test]
    fn single_coalition_uses_smallest_rho2() {
        let m = matrix(&[((1, 3), 0.02), ((0, 2), 0.3)], 4, 0.6);
        let e = epsilon_star(&m, 1, 2, EnumerationLimits::default()).unwrap();
        let r = 0.02f64.sqrt();
        assert_eq!(e.epsilon, r * r);
        assert_eq!(e.seeds.cliques, vec![ids(&[1, 3])]);
    }

    #[test]
    fn two_disjoint_edges_among_four() {
        // all rho^2 <= 0.05; the second disjoint edge appears at 0.02
        let m = matrix(
            &[((0, 1), 0.01), ((2, 3), 0.02), ((0, 2), 0.03), ((1, 2), 0.04), ((1, 3), 0.045), ((0, 3), 0.05)],
            4,
            0.0,
        );
        let e = epsilon_star(&m, 2, 2, EnumerationLimits::default()).unwrap();
        let r = 0.02f64.sqrt();
        assert_eq!(e.epsilon, r * r);
        assert_eq!(e.seeds.cliques, vec![ids(&[0, 1]), ids(&[2, 3])]);
        // seeds stay disjoint cliques at every larger threshold
        for eps in [0.03, 0.045, 1.0] {
            let g = build_epsilon_graph(&m, eps).unwrap();
            for c in &e.seeds.cliques {
                let idx: Vec<usize> = c.iter().map(|id| g.index_of(*id).unwrap()).collect();
                assert!(g.is_clique(&idx));
            }
        }
    }

    #[test]
    fn greedy_can_fall_short_of_true_packing() {
        // star first, then a triangle swallows the centre: greedy never sees 2
        let m = matrix(
            &[((0, 1), 0.01), ((0, 2), 0.02), ((0, 3), 0.03), ((1, 2), 0.04), ((1, 3), 0.045), ((2, 3), 0.05)],
            4,
            0.0,
        );
        match epsilon_star(&m, 2, 2, EnumerationLimits::default()) {
            Err(Error::Infeasible {
                requested: 2,
                max_achievable: 1,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incremental_trace_matches_fresh_greedy() {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        for _ in 0..60 {
            let n = rng.random_range(2..14);
            let k_min = rng.random_range(2..4);
            let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            // random insertion order
            for a in (1..pairs.len()).rev() {
                pairs.swap(a, rng.random_range(0..=a));
            }
            let mut adjacency = vec![NodeSet::empty(n); n];
            let mut trace = GreedyTrace::new(n, k_min, EnumerationLimits::default());
            for (i, j) in pairs {
                adjacency[i].insert(j);
                adjacency[j].insert(i);
                trace.add_edge(&adjacency, i, j);
                let (fresh, _) = greedy_disjoint(&adjacency, k_min, EnumerationLimits::default());
                assert_eq!(trace.picks, fresh);
            }
        }
    }

    #[test]
    fn pigeonhole_infeasibility() {
        let m = matrix(&[], 5, 0.0);
        assert!(matches!(
            epsilon_star(&m, 3, 2, EnumerationLimits::default()),
            Err(Error::Infeasible {
                requested: 3,
                max_achievable: 2
            })
        ));
    }
}
