use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::climate::{CellCoord, ColumnMap, SyntheticClimate};
use crate::coalition::{ContractMode, GridRequirements, Schedule};
use crate::error::{Error, Result};
use crate::graph::EnumerationLimits;
use crate::prosumer::{ProsumerConfig, RandomPool};
use crate::seed;

/// Default cap on clique-search nodes per threshold scan.
const DEFAULT_SCAN_WORK: u64 = 200_000_000;

/// Everything a `simulate`, `form` or `sweep` run needs.
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every realization, pool and partition seed derives from it.
    pub seed: u64,
    pub climate: ClimateSection,
    pub pool: Option<PoolSection>,
    /// Precomputed available-power CSVs (one per realization) used instead
    /// of simulating.
    pub series: Vec<PathBuf>,
    pub requirements: RequirementsSection,
    pub algorithms: AlgorithmsSection,
    pub formation: FormationSection,
    /// Chronological fraction used for formation; the rest is held out.
    pub split: f64,
    pub deseasonalize_window_days: usize,
    pub realizations: usize,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            climate: ClimateSection::default(),
            pool: None,
            series: Vec::new(),
            requirements: RequirementsSection::default(),
            algorithms: AlgorithmsSection::default(),
            formation: FormationSection::default(),
            split: 0.8,
            deseasonalize_window_days: 30,
            realizations: 1,
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimateSection {
    pub synthetic: SyntheticClimate,
    /// Observed stations replacing the synthetic series of their cell.
    pub stations: Vec<StationCsv>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationCsv {
    pub path: PathBuf,
    pub cell: CellCoord,
    #[serde(default)]
    pub columns: ColumnMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSection {
    RandomPool(RandomPool),
    Agents(Vec<ProsumerConfig>),
}

/// Parameter lists; each field accepts a single number or an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequirementsSection {
    #[serde(deserialize_with = "one_or_many")]
    pub phi: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub p_min: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub n_coal: Vec<usize>,
}

impl Default for RequirementsSection {
    fn default() -> Self {
        RequirementsSection {
            phi: vec![0.1],
            p_min: vec![0.0],
            n_coal: vec![10],
        }
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmsSection {
    pub percolation: bool,
    pub random: Option<RandomSection>,
    pub correlated: bool,
}

impl Default for AlgorithmsSection {
    fn default() -> Self {
        AlgorithmsSection {
            percolation: true,
            random: Some(RandomSection::default()),
            correlated: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSection {
    pub repeats: usize,
}

impl Default for RandomSection {
    fn default() -> Self {
        RandomSection { repeats: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationSection {
    pub mode: ContractMode,
    pub k_min: usize,
    pub max_cliques: usize,
    pub clique_time_budget_secs: Option<f64>,
    /// Clique-search nodes one threshold scan may visit; `null` for no cap.
    pub scan_work_limit: Option<u64>,
    pub schedule: Schedule,
}

impl Default for FormationSection {
    fn default() -> Self {
        FormationSection {
            mode: ContractMode::Analytic,
            k_min: 2,
            max_cliques: EnumerationLimits::default().max_count,
            clique_time_budget_secs: None,
            scan_work_limit: Some(DEFAULT_SCAN_WORK),
            schedule: Schedule::Sequential,
        }
    }
}

impl FormationSection {
    pub fn limits(&self) -> EnumerationLimits {
        EnumerationLimits {
            max_count: self.max_cliques,
            time_budget: self.clique_time_budget_secs.map(std::time::Duration::from_secs_f64),
            max_work: self.scan_work_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Reports also carry `p_min / p_min_display_scale`, e.g. 1e5 for
    /// tenths of a megawatt.
    pub p_min_display_scale: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            p_min_display_scale: 1.0,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses JSON; type errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            invalid(if path == "." { String::from("(root)") } else { path }, inner.to_string())
        })
    }

    /// Reads, parses and resolves relative paths against the file's directory.
    /// Does not validate.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.series.iter_mut().for_each(fix);
        self.climate.stations.iter_mut().for_each(|s| fix(&mut s.path));
        if let Some(dir) = self.output.dir.as_mut() {
            fix(dir);
        }
    }

    /// Checks the invariants needed to simulate (climate and pool).
    pub fn validate_simulation(&self) -> Result<()> {
        let c = &self.climate.synthetic;
        for (name, v) in [
            ("width", c.width),
            ("height", c.height),
            ("duration_days", c.duration_days as usize),
            ("interval_hours", c.interval_hours as usize),
        ] {
            if v == 0 {
                return Err(invalid(format!("climate.synthetic.{name}"), "must be >= 1"));
            }
        }
        if !(c.spatial_corr_length >= 0.0) {
            return Err(invalid("climate.synthetic.spatial_corr_length", "must be >= 0"));
        }
        for (i, st) in self.climate.stations.iter().enumerate() {
            if st.cell.x >= c.width || st.cell.y >= c.height {
                return Err(invalid(format!("climate.stations[{i}].cell"), "outside the lattice"));
            }
        }
        match &self.pool {
            None => Err(invalid("pool", "missing pool section")),
            Some(PoolSection::RandomPool(p)) => p.validate(),
            Some(PoolSection::Agents(agents)) => {
                if agents.is_empty() {
                    return Err(invalid("pool.agents", "no agents"));
                }
                for (i, a) in agents.iter().enumerate() {
                    a.validate().map_err(|e| invalid(format!("pool.agents[{i}]"), e.to_string()))?;
                    if a.cell.x >= c.width || a.cell.y >= c.height {
                        return Err(invalid(format!("pool.agents[{i}].cell"), "outside the lattice"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Checks everything `form` and `sweep` need.
    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            self.validate_simulation()?;
        } else if self.realizations != 1 && self.realizations != self.series.len() {
            return Err(invalid(
                "realizations",
                format!("{} series files given, realizations must be 1 or match", self.series.len()),
            ));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be >= 1"));
        }
        if !(0.5..=1.0).contains(&self.split) {
            return Err(invalid("split", format!("must be in [0.5, 1], got {}", self.split)));
        }
        if self.deseasonalize_window_days == 0 {
            return Err(invalid("deseasonalize_window_days", "must be >= 1"));
        }
        let r = &self.requirements;
        for (name, empty) in [("phi", r.phi.is_empty()), ("p_min", r.p_min.is_empty()), ("n_coal", r.n_coal.is_empty())] {
            if empty {
                return Err(invalid(format!("requirements.{name}"), "needs at least one value"));
            }
        }
        for (i, &phi) in r.phi.iter().enumerate() {
            GridRequirements::new(phi, 0.0, 1)
                .map_err(|e| invalid(format!("requirements.phi[{i}]"), e.to_string()))?;
        }
        for (i, &p) in r.p_min.iter().enumerate() {
            if !p.is_finite() {
                return Err(invalid(format!("requirements.p_min[{i}]"), "must be finite"));
            }
        }
        for (i, &n) in r.n_coal.iter().enumerate() {
            if n == 0 {
                return Err(invalid(format!("requirements.n_coal[{i}]"), "must be >= 1"));
            }
        }
        let a = &self.algorithms;
        if !a.percolation && a.random.is_none() && !a.correlated {
            return Err(invalid("algorithms", "select at least one algorithm"));
        }
        if a.random.is_some_and(|r| r.repeats == 0) {
            return Err(invalid("algorithms.random.repeats", "must be >= 1"));
        }
        let f = &self.formation;
        if f.k_min < 2 {
            return Err(invalid("formation.k_min", "must be >= 2"));
        }
        if f.max_cliques == 0 {
            return Err(invalid("formation.max_cliques", "must be >= 1"));
        }
        if f.clique_time_budget_secs.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(invalid("formation.clique_time_budget_secs", "must be positive"));
        }
        if f.scan_work_limit == Some(0) {
            return Err(invalid("formation.scan_work_limit", "must be >= 1"));
        }
        if !(self.output.p_min_display_scale > 0.0 && self.output.p_min_display_scale.is_finite()) {
            return Err(invalid("output.p_min_display_scale", "must be positive"));
        }
        Ok(())
    }

    /// Number of realizations actually run.
    pub fn realization_count(&self) -> usize {
        if self.series.is_empty() {
            self.realizations
        } else {
            self.series.len()
        }
    }

    /// Identifies the experiment independently of seed and output location,
    /// so reports from different seeds can be pooled.
    pub fn config_id(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seed");
            obj.remove("output");
            obj.remove("series");
        }
        format!("{:016x}", seed::fnv1a(v.to_string().as_bytes()))
    }

    /// The total number of sweep points (phi x p_min x n_coal).
    pub fn point_count(&self) -> usize {
        let r = &self.requirements;
        r.phi.len() * r.p_min.len() * r.n_coal.len()
    }
}
