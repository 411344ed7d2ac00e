//! Decorrelation graphs and their cliques.
//!
//! In an epsilon-graph two agents are adjacent when the square of their
//! Pearson correlation is at most epsilon, so edges join agents whose
//! fluctuations are nearly unrelated. Cliques of that graph are sets of
//! mutually decorrelated agents and serve as coalition seeds.

mod cliques;
mod nodeset;
mod seeds;

use std::io::Write;

use serde::Serialize;

pub use cliques::{maximal_cliques, CliqueEnumeration, EnumerationLimits, Truncation};
pub use nodeset::NodeSet;
pub use seeds::{disjoint_cliques, epsilon_star, EpsilonStar};

use crate::error::{Error, Result};
use crate::timeseries::CorrelationMatrix;
use crate::AgentId;

/// Undirected graph over agents with edge weights `rho^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGraph {
    ids: Vec<AgentId>,
    epsilon: f64,
    rho2: Vec<f64>,
    adjacency: Vec<NodeSet>,
    excluded: Vec<AgentId>,
}

impl CorrelationGraph {
    /// Graph with the given edges on agents `0..n`; edges get weight 0 and
    /// non-edges weight 1, with epsilon 0.5.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rho2 = vec![1.0; n * n];
        for i in 0..n {
            rho2[i * n + i] = 0.0;
        }
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidArgument(format!("bad edge ({a}, {b})")));
            }
            rho2[a * n + b] = 0.0;
            rho2[b * n + a] = 0.0;
        }
        Ok(Self::from_weights(
            (0..n as u32).map(AgentId).collect(),
            rho2,
            0.5,
            Vec::new(),
        ))
    }

    fn from_weights(ids: Vec<AgentId>, rho2: Vec<f64>, epsilon: f64, excluded: Vec<AgentId>) -> Self {
        let n = ids.len();
        let adjacency = (0..n)
            .map(|i| NodeSet::from_indices(n, (0..n).filter(|&j| j != i && rho2[i * n + j] <= epsilon)))
            .collect();
        CorrelationGraph {
            ids,
            epsilon,
            rho2,
            adjacency,
            excluded,
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Agents left out of the graph because their series are degenerate.
    pub fn excluded(&self) -> &[AgentId] {
        &self.excluded
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].contains(j)
    }

    pub fn neighbors(&self, i: usize) -> &NodeSet {
        &self.adjacency[i]
    }

    pub fn adjacency(&self) -> &[NodeSet] {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rho2[i * self.n() + j]
    }

    /// Edges `(i, j, rho^2)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.adjacency[i]
                .iter()
                .filter(move |&j| j > i)
                .map(move |j| (i, j, self.weight(i, j)))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(NodeSet::len).sum::<usize>() / 2
    }

    /// True when every pair of `members` (node indices) is adjacent.
    pub fn is_clique(&self, members: &[usize]) -> bool {
        members.iter().enumerate().all(|(k, &a)| {
            members[k + 1..]
                .iter()
                .all(|&b| a != b && self.is_adjacent(a, b))
        })
    }

    /// Writes one `i j weight` line per edge, using agent ids.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, j, w) in self.edges() {
            writeln!(out, "{} {} {}", self.ids[i], self.ids[j], w)?;
        }
        Ok(())
    }
}

/// The epsilon-graph of a correlation matrix: an edge wherever `rho^2 <= epsilon`.
pub fn build_epsilon_graph(corr: &CorrelationMatrix, epsilon: f64) -> Result<CorrelationGraph> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    let n = corr.n();
    let mut rho2 = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let r = corr.get(i, j);
            rho2.push(r * r);
        }
    }
    Ok(CorrelationGraph::from_weights(
        corr.ids().to_vec(),
        rho2,
        epsilon,
        corr.degenerate().to_vec(),
    ))
}

/// Pairwise-checked set of cliques, expressed in agent ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliqueSet {
    pub cliques: Vec<Vec<AgentId>>,
    pub disjoint: bool,
    /// Some enumeration behind this set hit its count or time cap.
    pub truncated: bool,
}

impl CliqueSet {
    /// Builds a set from node-index cliques of `g`, checking every clique
    /// for completeness and, when `disjoint`, the absence of shared nodes.
    pub fn from_indices(
        g: &CorrelationGraph,
        cliques: &[Vec<usize>],
        disjoint: bool,
        truncated: bool,
    ) -> Result<Self> {
        let mut seen = NodeSet::empty(g.n());
        for c in cliques {
            if !g.is_clique(c) {
                return Err(Error::InvalidArgument(format!("{c:?} is not a clique")));
            }
            if disjoint {
                for &v in c {
                    if seen.contains(v) {
                        return Err(Error::InvalidArgument(format!(
                            "node {} appears in two cliques",
                            g.ids()[v]
                        )));
                    }
                    seen.insert(v);
                }
            }
        }
        Ok(CliqueSet {
            cliques: cliques
                .iter()
                .map(|c| c.iter().map(|&v| g.ids()[v]).collect())
                .collect(),
            disjoint,
            truncated,
        })
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rho2: &[((usize, usize), f64)], n: usize) -> CorrelationMatrix {
        let mut v = vec![0.0; n * n];
        for &((i, j), r2) in rho2 {
            let r = f64::sqrt(r2);
            v[i * n + j] = r;
            v[j * n + i] = r;
        }
        CorrelationMatrix::from_values((0..n as u32).map(AgentId).collect(), v).unwrap()
    }

    #[test]
    fn epsilon_one_is_complete_and_zero_is_generic_empty() {
        let m = matrix(&[((0, 1), 0.3), ((0, 2), 0.9), ((1, 2), 0.01)], 3);
        let full = build_epsilon_graph(&m, 1.0).unwrap();
        assert_eq!(full.edge_count(), 3);
        let none = build_epsilon_graph(&m, 0.0).unwrap();
        assert_eq!(none.edge_count(), 0);
        assert!(build_epsilon_graph(&m, 1.5).is_err());
    }

    #[test]
    fn threshold_counts_edges() {
        let m = matrix(&[((0, 1), 0.1), ((0, 2), 0.2), ((1, 2), 0.5)], 3);
        let g = build_epsilon_graph(&m, 0.25).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.is_adjacent(0, 1) && g.is_adjacent(0, 2) && !g.is_adjacent(1, 2));
        assert!(!g.is_adjacent(0, 0));
    }

    #[test]
    fn edge_list_export() {
        let m = matrix(&[((0, 1), 0.25), ((0, 2), 0.9), ((1, 2), 0.9)], 3);
        let g = build_epsilon_graph(&m, 0.5).unwrap();
        let mut out = Vec::new();
        g.write_edge_list(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let fields: Vec<&str> = text.trim().split(' ').collect();
        assert_eq!(&fields[..2], &["0", "1"]);
        assert!((fields[2].parse::<f64>().unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn clique_set_validation() {
        let g = CorrelationGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(CliqueSet::from_indices(&g, &[vec![0, 1], vec![2, 3]], true, false).is_ok());
        assert!(CliqueSet::from_indices(&g, &[vec![0, 2]], true, false).is_err());
        assert!(CliqueSet::from_indices(&g, &[vec![0, 1], vec![1, 2]], true, false).is_err());
        assert!(CliqueSet::from_indices(&g, &[vec![0, 1], vec![1, 2]], false, false).is_ok());
        let json = CliqueSet::from_indices(&g, &[vec![0, 1]], true, false)
            .unwrap()
            .to_json()
            .unwrap();
        assert!(json.contains("\"disjoint\": true"));
    }
}
