use std::fs::File;
use std::io::BufReader;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PoolSection, RunConfig};
use crate::climate::{generate_synthetic_climate, ingest_weather_csv, resample_hourly};
use crate::coalition::{
    acceptance_percentage, correlated_partition, empirical_reliability, form_from_seeds, random_partition, Algorithm,
    CoalitionStructure, FormationContext, FormationOptions, GridRequirements,
};
use crate::error::{Error, Result};
use crate::graph::EpsilonStar;
use crate::prosumer::{simulate_pool, ProsumerConfig};
use crate::seed;
use crate::timeseries::{deseasonalize, SeriesSet};

/// Seed of realization `r`.
pub fn realization_seed(master: u64, r: usize) -> u64 {
    seed::derive(master, r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationInfo {
    pub index: usize,
    pub seed: u64,
    /// Climate and pool seeds; absent when series were read from a file.
    pub climate_seed: Option<u64>,
    pub pool_seed: Option<u64>,
    pub source: String,
    pub n_agents: usize,
    pub hours: usize,
    pub train_hours: usize,
    pub test_hours: usize,
}

/// Raw hourly series of one realization together with its pool.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub info: RealizationInfo,
    pub pool: Vec<ProsumerConfig>,
    pub series: SeriesSet,
}

/// Simulates realization `r` from the climate and pool sections.
pub fn simulate_realization(cfg: &RunConfig, r: usize) -> Result<Simulated> {
    let rseed = realization_seed(cfg.seed, r);
    let mut spec = cfg.climate.synthetic.clone();
    let climate_seed = spec.seed.unwrap_or_else(|| seed::derive_named(rseed, "climate"));
    spec.seed = Some(climate_seed);
    let mut grid = generate_synthetic_climate(&spec)?;
    for st in &cfg.climate.stations {
        grid = ingest_weather_csv(&st.path, &st.columns, st.cell, &grid)?;
    }
    let grid = resample_hourly(&grid)?;
    let pool_seed = seed::derive_named(rseed, "pool");
    let pool = match &cfg.pool {
        Some(PoolSection::RandomPool(p)) => p.generate(spec.width, spec.height, pool_seed)?,
        Some(PoolSection::Agents(a)) => a.clone(),
        None => {
            return Err(Error::Validation {
                path: "pool".into(),
                message: "missing pool section".into(),
            })
        }
    };
    let series = simulate_pool(&pool, &grid)?;
    Ok(Simulated {
        info: RealizationInfo {
            index: r,
            seed: rseed,
            climate_seed: Some(climate_seed),
            pool_seed: Some(pool_seed),
            source: "simulated".into(),
            n_agents: series.n_agents(),
            hours: series.len(),
            train_hours: 0,
            test_hours: 0,
        },
        pool,
        series,
    })
}

/// Raw series of realization `r`: read from `cfg.series` when given,
/// simulated otherwise.
pub fn raw_series(cfg: &RunConfig, r: usize) -> Result<(SeriesSet, RealizationInfo)> {
    match cfg.series.get(r) {
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                Error::Configuration(format!("cannot open series file {}: {e}", path.display()))
            })?;
            let series = SeriesSet::read_csv(BufReader::new(file))?;
            let info = RealizationInfo {
                index: r,
                seed: realization_seed(cfg.seed, r),
                climate_seed: None,
                pool_seed: None,
                source: path.display().to_string(),
                n_agents: series.n_agents(),
                hours: series.len(),
                train_hours: 0,
                test_hours: 0,
            };
            Ok((series, info))
        }
        None => simulate_realization(cfg, r).map(|s| (s.series, s.info)),
    }
}

/// Formation and held-out series of one realization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub info: RealizationInfo,
    pub train: SeriesSet,
    pub test: Option<SeriesSet>,
}

/// Splits chronologically and deseasonalizes both parts.
///
/// Each agent's train-split mean is added back to both residual series, so
/// coalition contracts keep their physical level while the seasonal cycles
/// are gone. The held-out tail is deseasonalized on its own so no
/// information flows from it into formation.
pub fn prepare(raw: &SeriesSet, split: f64, window_days: usize) -> Result<(SeriesSet, Option<SeriesSet>)> {
    let needed = 2 * window_days * 24;
    let n_train = (raw.len() as f64 * split).floor() as usize;
    if n_train < needed {
        return Err(Error::Validation {
            path: "split".into(),
            message: format!(
                "train split has {n_train} hours, deseasonalizing with a {window_days}-day window needs {needed}"
            ),
        });
    }
    let train_raw = raw.slice(0..n_train)?;
    let means: Vec<f64> = train_raw.stats()?.iter().map(|s| s.mean).collect();
    let shift = |part: &SeriesSet| -> Result<SeriesSet> {
        let series = part
            .iter()
            .zip(&means)
            .map(|((id, v), m)| Ok((id, deseasonalize(v, window_days)?.into_iter().map(|x| x + m).collect())))
            .collect::<Result<Vec<_>>>()?;
        SeriesSet::new(part.start(), series)
    };
    let train = shift(&train_raw)?;
    let n_test = raw.len() - n_train;
    if n_test == 0 {
        return Ok((train, None));
    }
    if n_test < needed {
        return Err(Error::Validation {
            path: "split".into(),
            message: format!(
                "held-out split has {n_test} hours, deseasonalizing with a {window_days}-day window needs {needed}; \
                 raise the simulated duration or use split = 1"
            ),
        });
    }
    let test = shift(&raw.slice(n_train..raw.len())?)?;
    Ok((train, Some(test)))
}

pub fn prepare_realization(cfg: &RunConfig, r: usize) -> Result<Prepared> {
    let (raw, mut info) = raw_series(cfg, r)?;
    let (train, test) = prepare(&raw, cfg.split, cfg.deseasonalize_window_days)?;
    info.train_hours = train.len();
    info.test_hours = test.as_ref().map_or(0, SeriesSet::len);
    Ok(Prepared { info, train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// A clique enumeration hit its count or time cap.
    Degraded,
    Infeasible,
}

/// One algorithm run at one parameter point of one realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub realization: usize,
    pub seed: u64,
    pub phi: f64,
    pub p_min: f64,
    pub n_coal: usize,
    pub algorithm: Algorithm,
    pub repeat: Option<usize>,
    pub partition_seed: Option<u64>,
    pub status: Status,
    pub epsilon_star: Option<f64>,
    /// Largest feasible count when `status` is infeasible.
    pub max_achievable: Option<usize>,
    pub structure: Option<CoalitionStructure>,
    /// Held-out shortfall frequency of each coalition (valid ones only).
    pub reliability: Vec<Option<f64>>,
}

impl Record {
    pub fn acceptance(&self) -> Option<f64> {
        self.structure.as_ref().and_then(|s| acceptance_percentage(s).ok())
    }

    pub fn welfare(&self) -> Option<f64> {
        self.structure.as_ref().map(CoalitionStructure::welfare)
    }

    pub fn mean_reliability(&self) -> Option<f64> {
        let v: Vec<f64> = self.reliability.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Formation options derived from the config.
pub fn formation_options(cfg: &RunConfig) -> FormationOptions {
    FormationOptions {
        k_min: cfg.formation.k_min,
        limits: cfg.formation.limits(),
        schedule: cfg.formation.schedule,
    }
}

struct Point {
    phi: f64,
    p_min: f64,
    n_coal: usize,
}

/// Runs every selected algorithm at every parameter point of one realization.
///
/// The threshold scan depends only on `n_coal`, so it runs once per value and
/// is shared by all `(phi, p_min)` points.
pub fn run_realization(cfg: &RunConfig, prep: &Prepared) -> Result<Vec<Record>> {
    let ctx = FormationContext::new(&prep.train)?;
    let opts = formation_options(cfg);
    let req_cfg = &cfg.requirements;
    let n_agents = prep.train.n_agents();
    let scans: Vec<Option<Result<EpsilonStar>>> = req_cfg
        .n_coal
        .par_iter()
        .map(|&n| (cfg.algorithms.percolation && n <= n_agents).then(|| ctx.seeds(n, &opts)))
        .collect();

    let points: Vec<(usize, Point)> = req_cfg
        .n_coal
        .iter()
        .enumerate()
        .flat_map(|(k, &n_coal)| {
            req_cfg.phi.iter().flat_map(move |&phi| {
                req_cfg.p_min.iter().map(move |&p_min| (k, Point { phi, p_min, n_coal }))
            })
        })
        .collect();

    let per_point = points
        .par_iter()
        .map(|(k, pt)| run_point(cfg, prep, &ctx, &opts, scans[*k].as_ref(), pt))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

fn run_point(
    cfg: &RunConfig,
    prep: &Prepared,
    ctx: &FormationContext,
    opts: &FormationOptions,
    scan: Option<&Result<EpsilonStar>>,
    pt: &Point,
) -> Result<Vec<Record>> {
    let req = GridRequirements::new(pt.phi, pt.p_min, pt.n_coal)?;
    let mode = cfg.formation.mode;
    let rseed = prep.info.seed;
    let base = Record {
        realization: prep.info.index,
        seed: rseed,
        phi: pt.phi,
        p_min: pt.p_min,
        n_coal: pt.n_coal,
        algorithm: Algorithm::Percolation,
        repeat: None,
        partition_seed: None,
        status: Status::Ok,
        epsilon_star: None,
        max_achievable: None,
        structure: None,
        reliability: Vec::new(),
    };
    let finish = |mut rec: Record, cs: CoalitionStructure| -> Result<Record> {
        if let Some(test) = &prep.test {
            rec.reliability = cs
                .coalitions
                .iter()
                .map(|c| if c.valid { empirical_reliability(c, test).map(Some) } else { Ok(None) })
                .collect::<Result<_>>()?;
        } else {
            rec.reliability = vec![None; cs.coalitions.len()];
        }
        rec.structure = Some(cs);
        Ok(rec)
    };
    let infeasible = |algorithm, repeat, max_achievable| Record {
        algorithm,
        repeat,
        status: Status::Infeasible,
        max_achievable: Some(max_achievable),
        ..base.clone()
    };

    let n_agents = prep.train.n_agents();
    let mut out = Vec::new();
    let ev = ctx.evaluator(req, mode)?;
    if cfg.algorithms.percolation {
        match scan {
            Some(Ok(eps)) => {
                let cs = form_from_seeds(ctx, eps, req, mode, opts)?;
                let rec = Record {
                    status: if eps.seeds.truncated { Status::Degraded } else { Status::Ok },
                    epsilon_star: Some(eps.epsilon),
                    ..base.clone()
                };
                out.push(finish(rec, cs)?);
            }
            Some(Err(Error::Infeasible { max_achievable, .. })) => {
                out.push(infeasible(Algorithm::Percolation, None, *max_achievable));
            }
            Some(Err(Error::ScanBudget { found, .. })) => out.push(Record {
                status: Status::Degraded,
                max_achievable: Some(*found),
                ..base.clone()
            }),
            Some(Err(e)) => return Err(Error::Configuration(format!("threshold scan failed: {e}"))),
            None => out.push(infeasible(Algorithm::Percolation, None, n_agents / cfg.formation.k_min)),
        }
    }
    if let Some(random) = cfg.algorithms.random {
        let stream = seed::derive_named(rseed, "random");
        for repeat in 0..random.repeats {
            if pt.n_coal > n_agents {
                out.push(infeasible(Algorithm::Random, Some(repeat), n_agents));
                continue;
            }
            let partition_seed = seed::derive(stream, repeat as u64);
            let cs = random_partition(&ev, pt.n_coal, partition_seed)?;
            let rec = Record {
                algorithm: Algorithm::Random,
                repeat: Some(repeat),
                partition_seed: Some(partition_seed),
                ..base.clone()
            };
            out.push(finish(rec, cs)?);
        }
    }
    if cfg.algorithms.correlated {
        let usable = ctx.correlation().n();
        if pt.n_coal > usable {
            out.push(infeasible(Algorithm::Correlated, None, usable));
        } else {
            let cs = correlated_partition(&ev, ctx.correlation(), pt.n_coal)?;
            out.push(finish(
                Record {
                    algorithm: Algorithm::Correlated,
                    ..base.clone()
                },
                cs,
            )?);
        }
    }
    Ok(out)
}

/// Result of running a config end to end.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub config_id: String,
    pub realizations: Vec<RealizationInfo>,
    /// Sorted by realization, phi, p_min, n_coal, algorithm, repeat.
    pub records: Vec<Record>,
    pub warnings: Vec<String>,
}

impl SweepOutput {
    pub fn infeasible_count(&self) -> usize {
        self.records.iter().filter(|r| r.status == Status::Infeasible).count()
    }
}

/// Prepares every realization and runs every point on it.
pub fn run(cfg: &RunConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let per_realization = (0..cfg.realization_count())
        .into_par_iter()
        .map(|r| {
            let prep = prepare_realization(cfg, r)?;
            let records = run_realization(cfg, &prep)?;
            Ok((prep.info, records))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut realizations = Vec::new();
    let mut records = Vec::new();
    for (info, recs) in per_realization {
        realizations.push(info);
        records.extend(recs);
    }
    records.sort_by(|a, b| {
        a.realization
            .cmp(&b.realization)
            .then(a.phi.total_cmp(&b.phi))
            .then(a.p_min.total_cmp(&b.p_min))
            .then(a.n_coal.cmp(&b.n_coal))
            .then(a.algorithm.cmp(&b.algorithm))
            .then(a.repeat.cmp(&b.repeat))
    });
    let mut warnings: Vec<String> = records
        .iter()
        .filter(|r| r.algorithm == Algorithm::Percolation && r.status == Status::Degraded && r.structure.is_none())
        .map(|r| {
            format!(
                "threshold scan for n_coal {} (realization {}) ran out of its time budget with {} seeds found; no percolation structure",
                r.n_coal,
                r.realization,
                r.max_achievable.unwrap_or(0)
            )
        })
        .collect();
    warnings.dedup();
    warnings.extend(check_acceptance_monotone(&records)?);
    Ok(SweepOutput {
        config_id: cfg.config_id(),
        realizations,
        records,
        warnings,
    })
}

/// Acceptance must not rise with `p_min` when the partition itself does not
/// depend on it (random and correlated). Percolation re-forms coalitions at
/// every `p_min`, so increases there are reported as warnings only.
fn check_acceptance_monotone(records: &[Record]) -> Result<Vec<String>> {
    let mut groups: Vec<&Record> = records.iter().filter(|r| r.acceptance().is_some()).collect();
    groups.sort_by(|a, b| {
        (a.realization, a.n_coal, a.algorithm, a.repeat)
            .cmp(&(b.realization, b.n_coal, b.algorithm, b.repeat))
            .then(a.phi.total_cmp(&b.phi))
            .then(a.p_min.total_cmp(&b.p_min))
    });
    let mut warnings = Vec::new();
    for w in groups.windows(2) {
        let (a, b) = (w[0], w[1]);
        let same = (a.realization, a.n_coal, a.algorithm, a.repeat) == (b.realization, b.n_coal, b.algorithm, b.repeat)
            && a.phi == b.phi;
        if !same || b.acceptance() <= a.acceptance() {
            continue;
        }
        let msg = format!(
            "acceptance of {} rose from {} to {} between p_min {} and {} (realization {}, phi {}, n_coal {})",
            a.algorithm,
            a.acceptance().unwrap_or(f64::NAN),
            b.acceptance().unwrap_or(f64::NAN),
            a.p_min,
            b.p_min,
            a.realization,
            a.phi,
            a.n_coal
        );
        if a.algorithm == Algorithm::Percolation {
            warnings.push(msg);
        } else {
            return Err(Error::DataQuality(msg));
        }
    }
    Ok(warnings)
}
