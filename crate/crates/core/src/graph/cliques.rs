use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{CorrelationGraph, NodeSet};
use crate::AgentId;

/// Safety caps on maximal-clique enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationLimits {
    pub max_count: usize,
    pub time_budget: Option<Duration>,
    /// Search nodes a greedy packing or threshold scan may visit in total.
    /// Unlike the time budget this does not depend on machine speed.
    pub max_work: Option<u64>,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            max_count: 100_000,
            time_budget: None,
            max_work: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    MaxCount,
    TimeBudget,
    WorkBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliqueEnumeration {
    /// Each clique sorted ascending; the list sorted lexicographically.
    pub cliques: Vec<Vec<AgentId>>,
    pub truncated: Option<Truncation>,
}

/// All maximal cliques of `g` (Bron-Kerbosch with Tomita pivoting).
pub fn maximal_cliques(g: &CorrelationGraph, limits: EnumerationLimits) -> CliqueEnumeration {
    let (cliques, truncated) = enumerate(g.adjacency(), NodeSet::full(g.n()), limits);
    CliqueEnumeration {
        cliques: cliques
            .into_iter()
            .map(|c| c.into_iter().map(|v| g.ids()[v]).collect())
            .collect(),
        truncated,
    }
}

/// Maximal cliques of the subgraph induced by `within`, as node indices.
pub(crate) fn enumerate(
    adjacency: &[NodeSet],
    within: NodeSet,
    limits: EnumerationLimits,
) -> (Vec<Vec<usize>>, Option<Truncation>) {
    let mut search = Search {
        adjacency,
        limits,
        deadline: limits.time_budget.map(|b| Instant::now() + b),
        calls: 0,
        found: Vec::new(),
        truncated: None,
    };
    let capacity = adjacency.len();
    let mut r = Vec::new();
    let _ = search.expand(&mut r, within, NodeSet::empty(capacity));
    let mut found = search.found;
    found.sort();
    (found, search.truncated)
}

/// The largest clique (possibly empty) of the subgraph induced by `within`
/// with at least `floor` members, ties broken towards the lexicographically smallest
/// sorted member list; `None` when every clique is smaller than `floor`.
///
/// Branch and bound over ascending vertex order: the search visits cliques
/// in lexicographic order, so only strict improvements need to be kept and
/// a greedy colouring bound can prune every branch that cannot beat them.
/// `work` is decremented by the number of search nodes visited.
pub(crate) fn largest_clique(
    adjacency: &[NodeSet],
    within: NodeSet,
    floor: usize,
    deadline: Option<Instant>,
    work: &mut Option<u64>,
) -> (Option<Vec<usize>>, Option<Truncation>) {
    let mut search = MaxSearch {
        adjacency,
        deadline,
        calls: 0,
        work: *work,
        target: floor,
        best: None,
        truncated: None,
    };
    let mut r = Vec::new();
    let _ = search.expand(&mut r, within);
    *work = search.work;
    (search.best, search.truncated)
}

struct MaxSearch<'a> {
    adjacency: &'a [NodeSet],
    deadline: Option<Instant>,
    calls: u64,
    work: Option<u64>,
    /// Size a clique must reach to be recorded.
    target: usize,
    best: Option<Vec<usize>>,
    truncated: Option<Truncation>,
}

impl MaxSearch<'_> {
    fn expand(&mut self, r: &mut Vec<usize>, mut p: NodeSet) -> ControlFlow<()> {
        self.calls += 1;
        if let Some(w) = &mut self.work {
            if *w == 0 {
                self.truncated = Some(Truncation::WorkBudget);
                return ControlFlow::Break(());
            }
            *w -= 1;
        }
        if self.calls.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.truncated = Some(Truncation::TimeBudget);
            return ControlFlow::Break(());
        }
        if r.len() >= self.target {
            self.best = Some(r.clone());
            self.target = r.len() + 1;
        }
        let need = self.target.saturating_sub(r.len());
        if p.len() < need || colour_bound(self.adjacency, &p, need) < need {
            return ControlFlow::Continue(());
        }
        loop {
            let Some(v) = p.iter().next() else { break };
            p.remove(v);
            r.push(v);
            let flow = self.expand(r, p.intersection(&self.adjacency[v]));
            r.pop();
            flow?;
            let need = self.target.saturating_sub(r.len());
            if p.len() < need {
                break;
            }
        }
        ControlFlow::Continue(())
    }
}

/// Number of colour classes of a greedy colouring of `p`, an upper bound on
/// its clique number. Counting stops at `enough`.
fn colour_bound(adjacency: &[NodeSet], p: &NodeSet, enough: usize) -> usize {
    let mut uncoloured = p.clone();
    let mut colours = 0;
    while !uncoloured.is_empty() && colours < enough {
        colours += 1;
        let mut open = uncoloured.clone();
        loop {
            let Some(v) = open.iter().next() else { break };
            open.remove(v);
            open.difference_with(&adjacency[v]);
            uncoloured.remove(v);
        }
    }
    colours
}

struct Search<'a> {
    adjacency: &'a [NodeSet],
    limits: EnumerationLimits,
    deadline: Option<Instant>,
    calls: u64,
    found: Vec<Vec<usize>>,
    truncated: Option<Truncation>,
}

impl Search<'_> {
    fn expand(&mut self, r: &mut Vec<usize>, mut p: NodeSet, mut x: NodeSet) -> ControlFlow<()> {
        self.calls += 1;
        if self.calls.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.truncated = Some(Truncation::TimeBudget);
            return ControlFlow::Break(());
        }
        if p.is_empty() {
            if x.is_empty() && !r.is_empty() {
                let mut clique = r.clone();
                clique.sort_unstable();
                self.found.push(clique);
                if self.found.len() >= self.limits.max_count {
                    self.truncated = Some(Truncation::MaxCount);
                    return ControlFlow::Break(());
                }
            }
            return ControlFlow::Continue(());
        }
        // pivot: the vertex of P ∪ X with most neighbours in P
        let pivot = p
            .iter()
            .chain(x.iter())
            .max_by_key(|&u| (p.intersection_len(&self.adjacency[u]), std::cmp::Reverse(u)))
            .expect("P is non-empty");
        let branch = p.difference(&self.adjacency[pivot]);
        for v in branch.iter() {
            let nv = &self.adjacency[v];
            r.push(v);
            let flow = self.expand(r, p.intersection(nv), x.intersection(nv));
            r.pop();
            flow?;
            p.remove(v);
            x.insert(v);
        }
        ControlFlow::Continue(())
    }
}
