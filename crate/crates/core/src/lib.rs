//! Coalition formation for renewable energy prosumers.
//!
//! The crate simulates hourly available-power traces for a pool of
//! prosumers from (synthetic or ingested) climate fields, removes their
//! seasonal cycles, and groups them into coalitions whose aggregate
//! production is both large and stable. Coalition seeds are disjoint
//! cliques of a decorrelation graph (edges join agents whose squared
//! Pearson correlation is at most a threshold); seeds grow greedily on a
//! utility that rewards a high reliable contract per member.
//!
//! Module map:
//!
//! * [`climate`]: climate-vector lattices, synthetic generation, CSV ingestion
//! * [`prosumer`]: wind / PV / consumption models and pool simulation
//! * [`timeseries`]: deseasonalisation, aggregation, Pearson statistics
//! * [`graph`]: epsilon-graphs, maximal cliques, disjoint seeds, threshold scan
//! * [`coalition`]: contract math, utility, growth, overlap resolution, baselines
//! * [`experiment`]: run configuration, sweeps and CSV/JSON reports

pub mod climate;
pub mod coalition;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod prosumer;
pub mod seed;
pub mod timeseries;

pub use error::{Error, Result};

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a prosumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for AgentId {
    fn from(v: u32) -> Self {
        AgentId(v)
    }
}
