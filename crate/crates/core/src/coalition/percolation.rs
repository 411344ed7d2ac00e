//! Seed growth on the epsilon-graph and overlap resolution.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{contract, Coalition, CoalitionStructure, ContractMode, Evaluator, GridRequirements, Moments, Provenance};
use crate::error::{Error, Result};
use crate::graph::{epsilon_star, CorrelationGraph, EnumerationLimits, EpsilonStar, NodeSet};
use crate::timeseries::{correlation_matrix_excluding_degenerate, CorrelationMatrix, SeriesSet};
use crate::AgentId;

/// Order in which seeds see each other's growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Seeds grow one after another; a seed cannot absorb agents already
    /// placed in an earlier grown coalition.
    #[default]
    Sequential,
    /// Every seed grows against an empty assignment (in parallel); all
    /// conflicts are left to overlap resolution.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationOptions {
    /// Smallest clique size accepted as a seed.
    pub k_min: usize,
    pub limits: EnumerationLimits,
    pub schedule: Schedule,
}

impl Default for FormationOptions {
    fn default() -> Self {
        FormationOptions {
            k_min: 2,
            limits: EnumerationLimits::default(),
            schedule: Schedule::Sequential,
        }
    }
}

/// Outcome of growing one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Grown {
    /// Sorted ascending.
    pub members: Vec<AgentId>,
    /// Agents in the order they were added.
    pub added: Vec<AgentId>,
    /// Max contract after the seed and after each addition.
    pub p_phi: Vec<f64>,
    /// Utility after the seed and after each addition.
    pub utilities: Vec<f64>,
}

/// Incrementally updated aggregate statistics of a growing member set.
struct Growth<'e, 'a> {
    ev: &'e Evaluator<'a>,
    members: Vec<usize>,
    mu: f64,
    var: f64,
    /// For analytic mode: sum over members of cov(member, u), per series index u.
    cross: Vec<f64>,
    /// For empirical mode: the aggregate series.
    aggregate: Vec<f64>,
}

impl<'e, 'a> Growth<'e, 'a> {
    fn new(ev: &'e Evaluator<'a>) -> Self {
        let (n, len) = (ev.series().n_agents(), ev.series().len());
        let analytic = ev.mode() == ContractMode::Analytic;
        Growth {
            ev,
            members: Vec::new(),
            mu: 0.0,
            var: 0.0,
            cross: if analytic { vec![0.0; n] } else { Vec::new() },
            aggregate: if analytic { Vec::new() } else { vec![0.0; len] },
        }
    }

    fn p_phi_with(&self, u: usize) -> f64 {
        let m = self.ev.moments();
        match self.ev.mode() {
            ContractMode::Analytic => self
                .ev
                .analytic_p_phi(self.mu + m.mean(u), self.var + m.cov(u, u) + 2.0 * self.cross[u]),
            ContractMode::Empirical => {
                let mut buf: Vec<f64> = self
                    .aggregate
                    .iter()
                    .zip(self.ev.series().values(u))
                    .map(|(a, b)| a + b)
                    .collect();
                contract::select_quantile(&mut buf, self.ev.requirements().phi)
            }
        }
    }

    fn add(&mut self, u: usize) {
        let m = self.ev.moments();
        match self.ev.mode() {
            ContractMode::Analytic => {
                self.var += m.cov(u, u) + 2.0 * self.cross[u];
                for (v, c) in self.cross.iter_mut().enumerate() {
                    *c += m.cov(u, v);
                }
            }
            ContractMode::Empirical => {
                for (a, b) in self.aggregate.iter_mut().zip(self.ev.series().values(u)) {
                    *a += b;
                }
            }
        }
        self.mu += m.mean(u);
        self.members.push(u);
    }

    fn p_phi(&self) -> f64 {
        match self.ev.mode() {
            ContractMode::Analytic => self.ev.analytic_p_phi(self.mu, self.var),
            ContractMode::Empirical => {
                let mut buf = self.aggregate.clone();
                contract::select_quantile(&mut buf, self.ev.requirements().phi)
            }
        }
    }
}

/// Grows `seed` greedily over the neighbourhood of its members in `g`.
///
/// Each step scores every agent adjacent to at least one member (and not in
/// `assigned`) by the max contract of the enlarged set, and adds the best one
/// if it strictly improves the utility. While the coalition is still below
/// `p_min` its utility is flat at zero, so the step instead requires a strict
/// increase of the max contract. Ties go to the smallest agent id.
pub fn grow_seed(seed: &[AgentId], g: &CorrelationGraph, ev: &Evaluator, assigned: &BTreeSet<AgentId>) -> Result<Grown> {
    if seed.is_empty() {
        return Err(Error::InvalidArgument("empty seed".into()));
    }
    let gidx = seed
        .iter()
        .map(|&id| {
            g.index_of(id)
                .ok_or_else(|| Error::InvalidArgument(format!("seed agent {id} is not in the graph")))
        })
        .collect::<Result<Vec<_>>>()?;
    if !g.is_clique(&gidx) {
        return Err(Error::InvalidArgument(format!("seed {seed:?} is not a clique")));
    }
    // series index of every graph node
    let sidx = g.ids().iter().map(|&id| ev.index_of(id)).collect::<Result<Vec<_>>>()?;
    let blocked = NodeSet::from_indices(g.n(), g.ids().iter().enumerate().filter(|(_, id)| assigned.contains(id)).map(|(i, _)| i));

    let req = *ev.requirements();
    let mut growth = Growth::new(ev);
    let mut in_set = NodeSet::empty(g.n());
    let mut frontier = NodeSet::empty(g.n());
    for &v in &gidx {
        growth.add(sidx[v]);
        in_set.insert(v);
        frontier.union_with(g.neighbors(v));
    }
    let mut p = growth.p_phi();
    let mut out = Grown {
        members: Vec::new(),
        added: Vec::new(),
        p_phi: vec![p],
        utilities: vec![req.utility(p, gidx.len())],
    };

    loop {
        let candidates: Vec<usize> = frontier.difference(&in_set).difference(&blocked).iter().collect();
        let scored: Vec<f64> = match ev.mode() {
            ContractMode::Analytic => candidates.iter().map(|&v| growth.p_phi_with(sidx[v])).collect(),
            ContractMode::Empirical => candidates.par_iter().map(|&v| growth.p_phi_with(sidx[v])).collect(),
        };
        let best = candidates
            .iter()
            .zip(&scored)
            .fold(None, |best: Option<(usize, f64)>, (&v, &q)| match best {
                Some((_, bq)) if q <= bq => best,
                _ => Some((v, q)),
            });
        let Some((v, q)) = best else { break };
        let k = growth.members.len();
        let improves = if p >= req.p_min {
            req.utility(q, k + 1) > req.utility(p, k)
        } else {
            q > p
        };
        if !improves {
            break;
        }
        growth.add(sidx[v]);
        in_set.insert(v);
        frontier.union_with(g.neighbors(v));
        p = q;
        out.added.push(g.ids()[v]);
        out.p_phi.push(p);
        out.utilities.push(req.utility(p, k + 1));
    }
    out.members = in_set.iter().map(|v| g.ids()[v]).collect();
    Ok(out)
}

/// Result of making overlapping candidates disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    /// Non-empty, pairwise disjoint, in candidate order.
    pub coalitions: Vec<Coalition>,
    /// Decisions that used the contract-based fallback for a zero-utility
    /// candidate.
    pub zero_utility_tau: usize,
}

/// Relative loss `tau_i(s)` of `s` when agent `i` leaves; the second value
/// reports whether the zero-utility fallback was used.
///
/// For `U(s) > 0` this is `(U(s) - U(s - i)) / U(s)`. At `U(s) = 0` the ratio
/// is undefined and the relative drop in max contract,
/// `(p(s) - p(s - i)) / |p(s)|` clamped to [-1, 1], stands in.
fn tau(ev: &Evaluator, members: &[usize], i: usize) -> (f64, bool) {
    let req = ev.requirements();
    let rest: Vec<usize> = members.iter().copied().filter(|&m| m != i).collect();
    let p = ev.p_phi_of(members);
    let p_rest = ev.p_phi_of(&rest);
    let u = req.utility(p, members.len());
    if u > 0.0 {
        let u_rest = req.utility(p_rest, rest.len());
        ((u - u_rest) / u, false)
    } else if p != 0.0 {
        (((p - p_rest) / p.abs()).clamp(-1.0, 1.0), true)
    } else {
        ((p - p_rest).signum() * f64::from(u8::from(p != p_rest)), true)
    }
}

/// Makes candidate coalitions disjoint. Agents in several candidates are
/// handled one at a time in ascending id order and stay only in the
/// candidate with the largest `tau` (ties: fewer members, then the
/// lexicographically smaller member list). Candidates left empty are
/// dropped.
pub fn resolve_overlaps(candidates: &[Vec<AgentId>], ev: &Evaluator) -> Result<Resolved> {
    let mut sets: Vec<Vec<usize>> = candidates
        .iter()
        .map(|c| {
            let mut v = c.iter().map(|&id| ev.index_of(id)).collect::<Result<Vec<_>>>()?;
            v.sort_unstable();
            v.dedup();
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut owners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, s) in sets.iter().enumerate() {
        for &i in s {
            owners.entry(i).or_default().push(k);
        }
    }
    let mut fallback = 0;
    for (&i, holders) in owners.iter().filter(|(_, h)| h.len() > 1) {
        let scored: Vec<(usize, f64, bool)> = holders
            .iter()
            .map(|&k| {
                let (t, fb) = tau(ev, &sets[k], i);
                (k, t, fb)
            })
            .collect();
        let (keep, _, fb) = *scored
            .iter()
            .max_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then_with(|| sets[b.0].len().cmp(&sets[a.0].len()))
                    .then_with(|| sets[b.0].cmp(&sets[a.0]))
            })
            .expect("at least two holders");
        if fb {
            fallback += 1;
        }
        for &k in holders {
            if k != keep {
                sets[k].retain(|&m| m != i);
            }
        }
    }
    let ids = ev.series().ids();
    let coalitions = sets
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| ev.coalition(&s.iter().map(|&i| ids[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Resolved {
        coalitions,
        zero_utility_tau: fallback,
    })
}

/// Correlations and moments of a series set, shared by every formation run
/// on it.
#[derive(Debug, Clone)]
pub struct FormationContext<'a> {
    series: &'a SeriesSet,
    corr: CorrelationMatrix,
    moments: Moments,
}

impl<'a> FormationContext<'a> {
    pub fn new(series: &'a SeriesSet) -> Result<Self> {
        Ok(FormationContext {
            series,
            corr: correlation_matrix_excluding_degenerate(series)?,
            moments: Moments::compute(series)?,
        })
    }

    pub fn series(&self) -> &'a SeriesSet {
        self.series
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.corr
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn evaluator(&self, req: GridRequirements, mode: ContractMode) -> Result<Evaluator<'_>> {
        Evaluator::new(self.series, &self.moments, req, mode)
    }

    /// Threshold scan for `n_coal` seeds; depends only on the correlations.
    pub fn seeds(&self, n_coal: usize, opts: &FormationOptions) -> Result<EpsilonStar> {
        epsilon_star(&self.corr, n_coal, opts.k_min, opts.limits)
    }
}

/// Grows and resolves the first `req.n_coal` seeds of `eps`.
///
/// Seeds grow in descending order of their own utility (then max contract,
/// then member list).
pub fn form_from_seeds(
    ctx: &FormationContext,
    eps: &EpsilonStar,
    req: GridRequirements,
    mode: ContractMode,
    opts: &FormationOptions,
) -> Result<CoalitionStructure> {
    let ev = ctx.evaluator(req, mode)?;
    if eps.seeds.len() < req.n_coal {
        return Err(Error::Infeasible {
            requested: req.n_coal,
            max_achievable: eps.seeds.len(),
        });
    }
    let seeds = &eps.seeds.cliques[..req.n_coal];
    let mut order: Vec<(&Vec<AgentId>, f64, f64)> = seeds
        .iter()
        .map(|s| {
            let idx = s.iter().map(|&id| ev.index_of(id)).collect::<Result<Vec<_>>>()?;
            let p = ev.p_phi_of(&idx);
            Ok((s, req.utility(p, s.len()), p))
        })
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| b.2.total_cmp(&a.2))
            .then_with(|| a.0.cmp(b.0))
    });

    let candidates: Vec<Vec<AgentId>> = match opts.schedule {
        Schedule::Sequential => {
            let mut assigned = BTreeSet::new();
            let mut out = Vec::with_capacity(order.len());
            for (seed, _, _) in &order {
                let grown = grow_seed(seed, &eps.graph, &ev, &assigned)?;
                assigned.extend(grown.members.iter().copied());
                out.push(grown.members);
            }
            out
        }
        Schedule::Independent => {
            let empty = BTreeSet::new();
            order
                .par_iter()
                .map(|(seed, _, _)| grow_seed(seed, &eps.graph, &ev, &empty).map(|g| g.members))
                .collect::<Result<_>>()?
        }
    };
    let resolved = resolve_overlaps(&candidates, &ev)?;
    let placed: BTreeSet<AgentId> = resolved
        .coalitions
        .iter()
        .flat_map(|c| c.members.iter().copied())
        .collect();
    Ok(CoalitionStructure {
        unassigned: ctx.series.ids().iter().copied().filter(|id| !placed.contains(id)).collect(),
        coalitions: resolved.coalitions,
        requirements: req,
        mode,
        provenance: Provenance::Percolation {
            epsilon_star: eps.epsilon,
            k_min: opts.k_min,
            seeds: order.iter().map(|(s, _, _)| (*s).clone()).collect(),
            schedule: opts.schedule,
            truncated: eps.seeds.truncated,
            zero_utility_tau: resolved.zero_utility_tau,
        },
    })
}

/// Full pipeline on one series set: correlations, threshold scan, growth,
/// overlap resolution.
pub fn form_coalitions(
    series: &SeriesSet,
    req: GridRequirements,
    mode: ContractMode,
    opts: &FormationOptions,
) -> Result<CoalitionStructure> {
    let ctx = FormationContext::new(series)?;
    let eps = ctx.seeds(req.n_coal, opts)?;
    form_from_seeds(&ctx, &eps, req, mode, opts)
}
