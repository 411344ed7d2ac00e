use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::pipeline::{Record, RealizationInfo, Simulated, Status, SweepOutput};
use crate::coalition::{Algorithm, CoalitionStructure};
use crate::error::{Error, Result};

/// One long-format row per algorithm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_id: String,
    pub realization: usize,
    pub seed: u64,
    pub phi: f64,
    pub p_min: f64,
    pub p_min_display: f64,
    pub n_coal: usize,
    pub algorithm: Algorithm,
    pub repeat: Option<usize>,
    pub partition_seed: Option<u64>,
    pub status: Status,
    pub epsilon_star: Option<f64>,
    pub max_achievable: Option<usize>,
    pub n_coalitions: usize,
    pub n_valid: usize,
    pub welfare: Option<f64>,
    pub acceptance: Option<f64>,
    pub mean_reliability: Option<f64>,
    pub unassigned: usize,
}

/// One row per coalition, enough to recompute welfare and acceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionRow {
    pub config_id: String,
    pub realization: usize,
    pub phi: f64,
    pub p_min: f64,
    pub n_coal: usize,
    pub algorithm: Algorithm,
    pub repeat: Option<usize>,
    pub coalition: usize,
    pub size: usize,
    /// Space-separated agent ids.
    pub members: String,
    pub mu: f64,
    pub sigma: f64,
    pub p_phi: f64,
    pub contract: Option<f64>,
    pub valid: bool,
    pub utility: f64,
    pub reliability: Option<f64>,
}

pub fn summary_rows(out: &SweepOutput, display_scale: f64) -> Vec<SummaryRow> {
    out.records
        .iter()
        .map(|r| {
            let cs = r.structure.as_ref();
            SummaryRow {
                config_id: out.config_id.clone(),
                realization: r.realization,
                seed: r.seed,
                phi: r.phi,
                p_min: r.p_min,
                p_min_display: r.p_min / display_scale,
                n_coal: r.n_coal,
                algorithm: r.algorithm,
                repeat: r.repeat,
                partition_seed: r.partition_seed,
                status: r.status,
                epsilon_star: r.epsilon_star,
                max_achievable: r.max_achievable,
                n_coalitions: cs.map_or(0, |s| s.coalitions.len()),
                n_valid: cs.map_or(0, CoalitionStructure::valid_count),
                welfare: r.welfare(),
                acceptance: r.acceptance(),
                mean_reliability: r.mean_reliability(),
                unassigned: cs.map_or(0, |s| s.unassigned.len()),
            }
        })
        .collect()
}

pub fn coalition_rows(out: &SweepOutput) -> Vec<CoalitionRow> {
    let mut rows = Vec::new();
    for r in &out.records {
        let Some(cs) = &r.structure else { continue };
        for (k, c) in cs.coalitions.iter().enumerate() {
            rows.push(CoalitionRow {
                config_id: out.config_id.clone(),
                realization: r.realization,
                phi: r.phi,
                p_min: r.p_min,
                n_coal: r.n_coal,
                algorithm: r.algorithm,
                repeat: r.repeat,
                coalition: k,
                size: c.size(),
                members: c.members.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "),
                mu: c.mu,
                sigma: c.sigma,
                p_phi: c.p_phi,
                contract: c.contract,
                valid: c.valid,
                utility: c.utility,
                reliability: r.reliability.get(k).copied().flatten(),
            });
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Key that orders floats totally; used for grouping rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct F(u64);

impl F {
    fn of(x: f64) -> Self {
        // order-preserving bit pattern
        let b = x.to_bits();
        F(if b >> 63 == 1 { !b } else { b | (1 << 63) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct WelfareVsNCoal {
    phi: f64,
    p_min: f64,
    p_min_display: f64,
    n_coal: usize,
    percolation: Option<f64>,
    random: Option<f64>,
    correlated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AcceptanceVsPMin {
    phi: f64,
    n_coal: usize,
    p_min: f64,
    p_min_display: f64,
    percolation: Option<f64>,
    random: Option<f64>,
    correlated: Option<f64>,
}

/// Mean of `metric` per (phi, p_min, n_coal) and algorithm, skipping rows
/// without a value; ordered by phi, p_min, n_coal.
fn pivot(rows: &[SummaryRow], metric: impl Fn(&SummaryRow) -> Option<f64>) -> Vec<(f64, f64, usize, [Option<f64>; 3])> {
    let mut acc: BTreeMap<(F, F, usize), (f64, f64, [Vec<f64>; 3])> = BTreeMap::new();
    for r in rows {
        let slot = acc
            .entry((F::of(r.phi), F::of(r.p_min), r.n_coal))
            .or_insert_with(|| (r.phi, r.p_min, Default::default()));
        if let Some(v) = metric(r) {
            slot.2[r.algorithm as usize].push(v);
        }
    }
    acc.into_iter()
        .map(|((_, _, n), (phi, p_min, v))| (phi, p_min, n, v.map(|xs| (!xs.is_empty()).then(|| mean_std(&xs).0))))
        .collect()
}

fn write_pivots(dir: &Path, rows: &[SummaryRow], display_scale: f64) -> Result<()> {
    let by_n: Vec<WelfareVsNCoal> = pivot(rows, |r| r.welfare)
        .into_iter()
        .map(|(phi, p_min, n_coal, [p, r, c])| WelfareVsNCoal {
            phi,
            p_min,
            p_min_display: p_min / display_scale,
            n_coal,
            percolation: p,
            random: r,
            correlated: c,
        })
        .collect();
    write_csv(&dir.join("welfare_vs_n_coal.csv"), &by_n)?;

    let mut by_p: Vec<AcceptanceVsPMin> = pivot(rows, |r| r.acceptance)
        .into_iter()
        .map(|(phi, p_min, n_coal, [p, r, c])| AcceptanceVsPMin {
            phi,
            n_coal,
            p_min,
            p_min_display: p_min / display_scale,
            percolation: p,
            random: r,
            correlated: c,
        })
        .collect();
    by_p.sort_by(|a, b| {
        a.phi
            .total_cmp(&b.phi)
            .then(a.n_coal.cmp(&b.n_coal))
            .then(a.p_min.total_cmp(&b.p_min))
    });
    write_csv(&dir.join("acceptance_vs_p_min.csv"), &by_p)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_id: String,
    config: &'a RunConfig,
    realizations: &'a [RealizationInfo],
    files: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasible_rows: Option<usize>,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct StructureEntry<'a> {
    realization: usize,
    phi: f64,
    p_min: f64,
    n_coal: usize,
    algorithm: Algorithm,
    repeat: Option<usize>,
    partition_seed: Option<u64>,
    status: Status,
    structure: &'a Option<CoalitionStructure>,
}

/// What a formation run writes besides the summary and coalition tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extras {
    /// `form`: full structures as JSON.
    Structures,
    /// `sweep`: figure pivots.
    Pivots,
}

/// Writes `summary.csv`, `coalitions.csv`, `manifest.json` and the extras
/// into `dir`.
pub fn write_formation(dir: &Path, command: &str, cfg: &RunConfig, out: &SweepOutput, extras: Extras) -> Result<()> {
    fs::create_dir_all(dir)?;
    let scale = cfg.output.p_min_display_scale;
    let rows = summary_rows(out, scale);
    write_csv(&dir.join("summary.csv"), &rows)?;
    write_csv(&dir.join("coalitions.csv"), &coalition_rows(out))?;
    let mut files = vec!["summary.csv", "coalitions.csv"];
    match extras {
        Extras::Structures => {
            let entries: Vec<StructureEntry> = out
                .records
                .iter()
                .map(|r: &Record| StructureEntry {
                    realization: r.realization,
                    phi: r.phi,
                    p_min: r.p_min,
                    n_coal: r.n_coal,
                    algorithm: r.algorithm,
                    repeat: r.repeat,
                    partition_seed: r.partition_seed,
                    status: r.status,
                    structure: &r.structure,
                })
                .collect();
            write_json(&dir.join("structures.json"), &entries)?;
            files.push("structures.json");
        }
        Extras::Pivots => {
            write_pivots(dir, &rows, scale)?;
            files.extend(["welfare_vs_n_coal.csv", "acceptance_vs_p_min.csv"]);
        }
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_id: out.config_id.clone(),
            config: cfg,
            realizations: &out.realizations,
            files,
            points: Some(cfg.point_count()),
            infeasible_rows: Some(out.infeasible_count()),
            warnings: &out.warnings,
        },
    )
}

/// Writes `series_r{r}.csv` and `pool_r{r}.json` per realization plus a
/// manifest. Returns the series file paths.
pub fn write_simulation(dir: &Path, cfg: &RunConfig, sims: &[Simulated]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    let mut paths = Vec::new();
    for s in sims {
        let series = format!("series_r{}.csv", s.info.index);
        let pool = format!("pool_r{}.json", s.info.index);
        s.series.write_csv(BufWriter::new(File::create(dir.join(&series))?))?;
        write_json(&dir.join(&pool), &s.pool)?;
        paths.push(dir.join(&series));
        names.push(series);
        names.push(pool);
    }
    let infos: Vec<RealizationInfo> = sims.iter().map(|s| s.info.clone()).collect();
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command: "simulate",
            version: env!("CARGO_PKG_VERSION"),
            config_id: cfg.config_id(),
            config: cfg,
            realizations: &infos,
            files: names.iter().map(String::as_str).collect(),
            points: None,
            infeasible_rows: None,
            warnings: &[],
        },
    )?;
    Ok(paths)
}

/// Mean and sample standard deviation of one parameter point and algorithm
/// across realizations (and random repeats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub config_id: String,
    pub phi: f64,
    pub p_min: f64,
    pub p_min_display: f64,
    pub n_coal: usize,
    pub algorithm: Algorithm,
    /// Rows with a structure.
    pub runs: usize,
    pub infeasible: usize,
    pub welfare_mean: Option<f64>,
    pub welfare_std: Option<f64>,
    pub acceptance_mean: Option<f64>,
    pub acceptance_std: Option<f64>,
    pub reliability_mean: Option<f64>,
    pub reliability_std: Option<f64>,
    pub epsilon_star_mean: Option<f64>,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Aggregates summary rows; all rows must come from the same config.
pub fn aggregate(rows: &[SummaryRow]) -> Result<Vec<AggregateRow>> {
    let Some(first) = rows.first() else {
        return Err(Error::Aggregation("no rows to aggregate".into()));
    };
    if let Some(other) = rows.iter().find(|r| r.config_id != first.config_id) {
        return Err(Error::Aggregation(format!(
            "rows from different configs ({} and {})",
            first.config_id, other.config_id
        )));
    }
    let mut groups: BTreeMap<(F, F, usize, Algorithm), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((F::of(r.phi), F::of(r.p_min), r.n_coal, r.algorithm))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_values()
        .map(|g| {
            let stat = |f: &dyn Fn(&SummaryRow) -> Option<f64>| {
                let v: Vec<f64> = g.iter().filter_map(|r| f(r)).collect();
                if v.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&v);
                    (Some(m), Some(s))
                }
            };
            let (welfare_mean, welfare_std) = stat(&|r| r.welfare);
            let (acceptance_mean, acceptance_std) = stat(&|r| r.acceptance);
            let (reliability_mean, reliability_std) = stat(&|r| r.mean_reliability);
            let (epsilon_star_mean, _) = stat(&|r| r.epsilon_star);
            let r0 = g[0];
            AggregateRow {
                config_id: r0.config_id.clone(),
                phi: r0.phi,
                p_min: r0.p_min,
                p_min_display: r0.p_min_display,
                n_coal: r0.n_coal,
                algorithm: r0.algorithm,
                runs: g.iter().filter(|r| r.welfare.is_some()).count(),
                infeasible: g.iter().filter(|r| r.status == Status::Infeasible).count(),
                welfare_mean,
                welfare_std,
                acceptance_mean,
                acceptance_std,
                reliability_mean,
                reliability_std,
                epsilon_star_mean,
            }
        })
        .collect())
}

/// Reads summary files, aggregates them and writes `aggregate.csv`.
pub fn write_report(dir: &Path, inputs: &[PathBuf]) -> Result<Vec<AggregateRow>> {
    if inputs.is_empty() {
        return Err(Error::Aggregation("no summary files given".into()));
    }
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_summary(p)?);
    }
    let agg = aggregate(&rows)?;
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("aggregate.csv"), &agg)?;
    Ok(agg)
}
