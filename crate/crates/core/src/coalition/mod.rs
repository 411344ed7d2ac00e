//! Coalition validity, utility and formation algorithms.
//!
//! A coalition announces the largest contract `p_phi` whose shortfall
//! probability stays at or below `phi`; it may enter the market when that
//! contract reaches `p_min`. Its utility is `p_phi / |s|` when valid and 0
//! otherwise, and a structure's social welfare is the sum of utilities.

mod baseline;
mod contract;
mod metrics;
mod percolation;
pub mod special;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baseline::{correlated_partition, random_labels, random_partition};
pub use contract::{empirical_max_contract, max_contract, shortfall_probability};
pub use metrics::{acceptance_percentage, empirical_reliability, mean_within_rho2, social_welfare};
pub use percolation::{
    form_coalitions, form_from_seeds, grow_seed, resolve_overlaps, FormationContext, FormationOptions, Grown,
    Resolved, Schedule,
};

use crate::error::{Error, Result};
use crate::timeseries::{covariance_matrix, stats, SeriesSet};
use crate::AgentId;

/// Grid-side constraints on coalitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRequirements {
    /// Maximum allowed shortfall probability.
    pub phi: f64,
    /// Minimum contract in watts.
    pub p_min: f64,
    pub n_coal: usize,
}

impl GridRequirements {
    pub fn new(phi: f64, p_min: f64, n_coal: usize) -> Result<Self> {
        let req = GridRequirements { phi, p_min, n_coal };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::InvalidArgument(format!("phi must be in [0, 1], got {}", self.phi)));
        }
        if !(self.p_min >= 0.0 && self.p_min.is_finite()) {
            return Err(Error::InvalidArgument(format!("p_min must be finite and >= 0, got {}", self.p_min)));
        }
        if self.n_coal == 0 {
            return Err(Error::InvalidArgument("n_coal must be >= 1".into()));
        }
        Ok(())
    }

    /// Utility of a coalition of `size` members with max contract `p_phi`.
    pub fn utility(&self, p_phi: f64, size: usize) -> f64 {
        if size > 0 && p_phi >= self.p_min {
            p_phi / size as f64
        } else {
            0.0
        }
    }
}

/// How the max contract is computed from a coalition's aggregate series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContractMode {
    /// Gaussian closed form from mean and standard deviation.
    #[default]
    Analytic,
    /// Lower `phi`-quantile of the aggregate series.
    Empirical,
}

impl fmt::Display for ContractMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractMode::Analytic => "analytic",
            ContractMode::Empirical => "empirical",
        })
    }
}

impl FromStr for ContractMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(ContractMode::Analytic),
            "empirical" => Ok(ContractMode::Empirical),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected analytic or empirical)"
            ))),
        }
    }
}

/// Formation algorithm that produced a structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Percolation,
    Random,
    Correlated,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Percolation => "percolation",
            Algorithm::Random => "random",
            Algorithm::Correlated => "correlated",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percolation" => Ok(Algorithm::Percolation),
            "random" => Ok(Algorithm::Random),
            "correlated" => Ok(Algorithm::Correlated),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coalition {
    /// Sorted ascending.
    pub members: Vec<AgentId>,
    pub mu: f64,
    pub sigma: f64,
    pub p_phi: f64,
    pub valid: bool,
    pub utility: f64,
    /// Announced contract; present only for valid coalitions.
    pub contract: Option<f64>,
}

impl Coalition {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    fn from_aggregate(members: Vec<AgentId>, aggregate: &[f64], req: &GridRequirements, mode: ContractMode) -> Result<Self> {
        let st = stats(aggregate)?;
        let p_phi = match mode {
            ContractMode::Analytic => max_contract(st.mean, st.std_dev, req.phi)?,
            ContractMode::Empirical => empirical_max_contract(aggregate, req.phi)?,
        };
        let valid = p_phi >= req.p_min;
        Ok(Coalition {
            utility: req.utility(p_phi, members.len()),
            contract: valid.then_some(p_phi),
            members,
            mu: st.mean,
            sigma: st.std_dev,
            p_phi,
            valid,
        })
    }
}

/// Where a structure came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Provenance {
    Percolation {
        epsilon_star: f64,
        k_min: usize,
        seeds: Vec<Vec<AgentId>>,
        schedule: Schedule,
        /// Some clique enumeration hit its cap.
        truncated: bool,
        /// Overlap decisions that fell back to the contract-based ratio
        /// because the coalition had zero utility.
        zero_utility_tau: usize,
    },
    Random {
        seed: u64,
    },
    Correlated,
}

impl Provenance {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Provenance::Percolation { .. } => Algorithm::Percolation,
            Provenance::Random { .. } => Algorithm::Random,
            Provenance::Correlated => Algorithm::Correlated,
        }
    }
}

/// Disjoint coalitions plus the agents left out of all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionStructure {
    pub coalitions: Vec<Coalition>,
    pub unassigned: Vec<AgentId>,
    pub requirements: GridRequirements,
    pub mode: ContractMode,
    pub provenance: Provenance,
}

impl CoalitionStructure {
    /// Checks disjointness, non-emptiness, and that coalitions and
    /// unassigned agents together are exactly `pool`.
    pub fn check_partition(&self, pool: &[AgentId]) -> Result<()> {
        let mut seen: Vec<AgentId> = Vec::with_capacity(pool.len());
        for c in &self.coalitions {
            if c.members.is_empty() {
                return Err(Error::InvalidArgument("empty coalition".into()));
            }
            seen.extend(&c.members);
        }
        seen.extend(&self.unassigned);
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("agent {} assigned twice", w[0])));
        }
        let mut want = pool.to_vec();
        want.sort_unstable();
        if seen != want {
            return Err(Error::InvalidArgument("structure does not cover the pool exactly".into()));
        }
        Ok(())
    }

    pub fn welfare(&self) -> f64 {
        social_welfare(self)
    }

    pub fn valid_count(&self) -> usize {
        self.coalitions.iter().filter(|c| c.valid).count()
    }
}

/// Per-agent means and the covariance matrix of a series set, reused by
/// every analytic evaluation on that set.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    ids: Vec<AgentId>,
    means: Vec<f64>,
    cov: Vec<f64>,
}

impl Moments {
    pub fn compute(series: &SeriesSet) -> Result<Self> {
        let st = series.stats()?;
        Ok(Moments {
            ids: series.ids().to_vec(),
            means: st.iter().map(|s| s.mean).collect(),
            cov: covariance_matrix(series)?,
        })
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.ids.len() + j]
    }
}

/// Evaluates coalitions of one series set under fixed requirements.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    series: &'a SeriesSet,
    moments: &'a Moments,
    req: GridRequirements,
    mode: ContractMode,
    /// `sqrt(2) * erfcinv(2 phi)`, so that `p_phi = mu - z sigma`.
    z: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(series: &'a SeriesSet, moments: &'a Moments, req: GridRequirements, mode: ContractMode) -> Result<Self> {
        req.validate()?;
        if moments.ids() != series.ids() {
            return Err(Error::InvalidArgument("moments were computed on a different series set".into()));
        }
        let z = match mode {
            ContractMode::Analytic => -max_contract(0.0, 1.0, req.phi)?,
            ContractMode::Empirical => {
                let needed = if req.phi > 0.0 { (1.0 / req.phi).ceil() as usize } else { 1 };
                if series.len() < needed {
                    return Err(Error::Length {
                        needed,
                        actual: series.len(),
                    });
                }
                f64::NAN
            }
        };
        Ok(Evaluator {
            series,
            moments,
            req,
            mode,
            z,
        })
    }

    pub fn series(&self) -> &'a SeriesSet {
        self.series
    }

    pub fn moments(&self) -> &'a Moments {
        self.moments
    }

    pub fn requirements(&self) -> &GridRequirements {
        &self.req
    }

    pub fn mode(&self) -> ContractMode {
        self.mode
    }

    pub(crate) fn index_of(&self, id: AgentId) -> Result<usize> {
        self.series.index_of(id).ok_or(Error::MissingSeries(id))
    }

    /// Analytic max contract from aggregate mean and variance.
    pub(crate) fn analytic_p_phi(&self, mu: f64, var: f64) -> f64 {
        mu - self.z * var.max(0.0).sqrt()
    }

    /// Max contract of the members given as series indices; 0 for the
    /// empty set.
    pub(crate) fn p_phi_of(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        match self.mode {
            ContractMode::Analytic => {
                let mu: f64 = members.iter().map(|&i| self.moments.mean(i)).sum();
                let var: f64 = members
                    .iter()
                    .map(|&i| members.iter().map(|&j| self.moments.cov(i, j)).sum::<f64>())
                    .sum();
                self.analytic_p_phi(mu, var)
            }
            ContractMode::Empirical => {
                let mut agg = self.aggregate(members);
                contract::select_quantile(&mut agg, self.req.phi)
            }
        }
    }

    pub(crate) fn aggregate(&self, members: &[usize]) -> Vec<f64> {
        let mut agg = vec![0.0; self.series.len()];
        for &i in members {
            for (a, v) in agg.iter_mut().zip(self.series.values(i)) {
                *a += v;
            }
        }
        agg
    }

    /// Full evaluation from the aggregated series.
    pub fn coalition(&self, members: &[AgentId]) -> Result<Coalition> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("coalition has no members".into()));
        }
        let mut ids = members.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let idx = ids.iter().map(|&id| self.index_of(id)).collect::<Result<Vec<_>>>()?;
        Coalition::from_aggregate(ids, &self.aggregate(&idx), &self.req, self.mode)
    }
}

/// Aggregates the members' series and evaluates validity and utility.
pub fn evaluate(members: &[AgentId], series: &SeriesSet, req: &GridRequirements, mode: ContractMode) -> Result<Coalition> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("coalition has no members".into()));
    }
    req.validate()?;
    let mut ids = members.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let agg = crate::timeseries::aggregate(&ids, series)?;
    Coalition::from_aggregate(ids, &agg.values, req, mode)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::seed;
    use chrono::NaiveDate;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn set(series: Vec<Vec<f64>>) -> SeriesSet {
        let t0 = NaiveDate::from_ymd_opt(2006, 2, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        SeriesSet::new(
            t0,
            series
                .into_iter()
                .enumerate()
                .map(|(i, v)| (AgentId(i as u32), v))
                .collect(),
        )
        .unwrap()
    }

    pub(crate) fn gaussian_set(params: &[(f64, f64)], len: usize, seed_value: u64) -> SeriesSet {
        let mut rng = seed::rng(seed_value);
        set(params
            .iter()
            .map(|&(mu, sd)| (0..len).map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect())
    }

    fn ids(v: &[u32]) -> Vec<AgentId> {
        v.iter().copied().map(AgentId).collect()
    }

    #[test]
    fn contract_eighty_utility_twenty() {
        // a shared +-1 pattern with amplitudes 4, 4, 1, 1: aggregate 100 +- 10
        let n = 1000;
        let pattern: Vec<f64> = (0..n).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = set(vec![
            pattern.iter().map(|p| 25.0 + 4.0 * p).collect(),
            pattern.iter().map(|p| 25.0 + 4.0 * p).collect(),
            pattern.iter().map(|p| 25.0 + 1.0 * p).collect(),
            pattern.iter().map(|p| 25.0 + 1.0 * p).collect(),
        ]);
        let req = GridRequirements::new(0.0227501319481792072, 50.0, 1).unwrap();
        let c = evaluate(&ids(&[0, 1, 2, 3]), &s, &req, ContractMode::Analytic).unwrap();
        assert!((c.mu - 100.0).abs() < 1e-9 && (c.sigma - 10.0).abs() < 1e-9);
        assert!((c.contract.unwrap() - 80.0).abs() < 1e-6);
        assert!((c.utility - 20.0).abs() < 1e-6);
    }

    #[test]
    fn validity_boundary_is_inclusive() {
        let s = set(vec![vec![7.0, 9.0, 7.0, 9.0]]);
        let req = GridRequirements::new(0.5, 8.0, 1).unwrap();
        let c = evaluate(&ids(&[0]), &s, &req, ContractMode::Analytic).unwrap();
        assert_eq!(c.p_phi, 8.0);
        assert!(c.valid);
        assert_eq!(c.utility, 8.0);
        let strict = GridRequirements::new(0.5, 8.0 + 1e-9, 1).unwrap();
        let c = evaluate(&ids(&[0]), &s, &strict, ContractMode::Analytic).unwrap();
        assert!(!c.valid);
        assert_eq!(c.utility, 0.0);
        assert_eq!(c.contract, None);
    }

    #[test]
    fn empty_members_rejected() {
        let s = set(vec![vec![1.0, 2.0]]);
        let req = GridRequirements::new(0.5, 0.0, 1).unwrap();
        assert!(matches!(
            evaluate(&[], &s, &req, ContractMode::Analytic),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn evaluator_agrees_with_direct_evaluation() {
        let s = gaussian_set(&[(10.0, 3.0), (5.0, 1.0), (-2.0, 4.0), (8.0, 2.0)], 500, 3);
        let m = Moments::compute(&s).unwrap();
        for mode in [ContractMode::Analytic, ContractMode::Empirical] {
            let req = GridRequirements::new(0.1, 5.0, 2).unwrap();
            let ev = Evaluator::new(&s, &m, req, mode).unwrap();
            for members in [vec![0], vec![1, 3], vec![0, 1, 2, 3]] {
                let id_list: Vec<AgentId> = members.iter().map(|&i| AgentId(i as u32)).collect();
                let direct = evaluate(&id_list, &s, &req, mode).unwrap();
                let via = ev.coalition(&id_list).unwrap();
                assert_eq!(direct, via);
                assert!((ev.p_phi_of(&members) - direct.p_phi).abs() < 1e-9 * (1.0 + direct.p_phi.abs()));
            }
        }
    }

    #[test]
    fn analytic_mode_rejects_boundary_phi() {
        let s = set(vec![vec![1.0, 2.0]]);
        let m = Moments::compute(&s).unwrap();
        let req = GridRequirements::new(0.0, 0.0, 1).unwrap();
        assert!(matches!(
            Evaluator::new(&s, &m, req, ContractMode::Analytic),
            Err(Error::PhiBoundary(_))
        ));
        let ev = Evaluator::new(&s, &m, req, ContractMode::Empirical).unwrap();
        assert_eq!(ev.coalition(&ids(&[0])).unwrap().p_phi, 1.0);
    }

    #[test]
    fn mode_and_algorithm_parse() {
        assert_eq!("empirical".parse::<ContractMode>().unwrap(), ContractMode::Empirical);
        assert!("gaussian".parse::<ContractMode>().is_err());
        assert_eq!("random".parse::<Algorithm>().unwrap(), Algorithm::Random);
        assert_eq!(Algorithm::Correlated.to_string(), "correlated");
    }
}
