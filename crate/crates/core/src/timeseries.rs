//! Hourly series, deseasonalisation and Pearson statistics.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use chrono::{NaiveDateTime, TimeDelta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climate::parse_timestamp;
use crate::error::{Error, Result};
use crate::AgentId;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// An hourly series of watts.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start: NaiveDateTime,
    pub values: Vec<f64>,
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub std_dev: f64,
    pub length: usize,
}

impl SeriesStats {
    /// True when the series is constant up to rounding.
    pub fn is_degenerate(&self) -> bool {
        self.std_dev <= 1e-12 * (1.0 + self.mean.abs())
    }
}

pub fn stats(values: &[f64]) -> Result<SeriesStats> {
    if values.len() < 2 {
        return Err(Error::Length {
            needed: 2,
            actual: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(SeriesStats {
        mean,
        std_dev: var.sqrt(),
        length: values.len(),
    })
}

/// Pearson correlation of two aligned series, clamped to [-1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let (sa, sb) = (stats(a)?, stats(b)?);
    if sa.is_degenerate() {
        return Err(Error::DegenerateSeries("first input".into()));
    }
    if sb.is_degenerate() {
        return Err(Error::DegenerateSeries("second input".into()));
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - sa.mean) * (y - sb.mean))
        .sum::<f64>()
        / a.len() as f64;
    Ok((cov / (sa.std_dev * sb.std_dev)).clamp(-1.0, 1.0))
}

/// Removes daily and seasonal cycles.
///
/// Values are stratified by hour of day; from each value the moving average
/// of its stratum over `window_days` consecutive days centred on it is
/// subtracted. Near the ends the window is truncated to the available days.
/// The result has mean close to zero for every hour of day.
pub fn deseasonalize(values: &[f64], window_days: usize) -> Result<Vec<f64>> {
    if window_days == 0 {
        return Err(Error::InvalidArgument("window must be >= 1 day".into()));
    }
    let needed = 2 * window_days * 24;
    if values.len() < needed {
        return Err(Error::Length {
            needed,
            actual: values.len(),
        });
    }
    let mut out = vec![0.0; values.len()];
    let back = (window_days - 1) / 2;
    let ahead = window_days / 2;
    for hour in 0..24 {
        let stratum: Vec<f64> = values.iter().skip(hour).step_by(24).copied().collect();
        let days = stratum.len();
        let mut prefix = Vec::with_capacity(days + 1);
        prefix.push(0.0);
        for v in &stratum {
            prefix.push(prefix.last().unwrap() + v);
        }
        for (d, v) in stratum.iter().enumerate() {
            let lo = d.saturating_sub(back);
            let hi = (d + ahead).min(days - 1);
            let avg = (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64;
            out[hour + 24 * d] = v - avg;
        }
    }
    Ok(out)
}

/// Sum of the given agents' series.
pub fn aggregate(members: &[AgentId], series: &SeriesSet) -> Result<TimeSeries> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty set".into()));
    }
    let mut values = vec![0.0; series.len()];
    for id in members {
        let s = series.get(*id).ok_or(Error::MissingSeries(*id))?;
        for (acc, v) in values.iter_mut().zip(s) {
            *acc += v;
        }
    }
    Ok(TimeSeries {
        start: series.start(),
        values,
    })
}

/// Aligned hourly series for a set of agents, ordered by agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    start: NaiveDateTime,
    ids: Vec<AgentId>,
    values: Vec<Vec<f64>>,
}

impl SeriesSet {
    pub fn new(start: NaiveDateTime, series: Vec<(AgentId, Vec<f64>)>) -> Result<Self> {
        let mut series = series;
        series.sort_by_key(|(id, _)| *id);
        if let Some(w) = series.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!("duplicate agent id {}", w[0].0)));
        }
        let len = series.first().map_or(0, |(_, v)| v.len());
        for (id, v) in &series {
            if v.len() != len {
                return Err(Error::InvalidArgument(format!(
                    "series of agent {id} has length {}, expected {len}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::DataQuality(format!(
                    "series of agent {id} has non-finite values"
                )));
            }
        }
        let (ids, values) = series.into_iter().unzip();
        Ok(SeriesSet { start, ids, values })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn n_agents(&self) -> usize {
        self.ids.len()
    }

    /// Samples per series.
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn get(&self, id: AgentId) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.values[i].as_slice())
    }

    pub fn values(&self, index: usize) -> &[f64] {
        &self.values[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, &[f64])> {
        self.ids.iter().copied().zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn time_series(&self, id: AgentId) -> Option<TimeSeries> {
        self.get(id).map(|v| TimeSeries {
            start: self.start,
            values: v.to_vec(),
        })
    }

    /// The samples in `range` for every agent.
    pub fn slice(&self, range: Range<usize>) -> Result<SeriesSet> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {range:?} out of bounds for length {}",
                self.len()
            )));
        }
        Ok(SeriesSet {
            start: self.start + TimeDelta::hours(range.start as i64),
            ids: self.ids.clone(),
            values: self.values.iter().map(|v| v[range.clone()].to_vec()).collect(),
        })
    }

    /// Applies `f` to every series in parallel.
    pub fn try_map<F>(&self, f: F) -> Result<SeriesSet>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        let values = self
            .values
            .par_iter()
            .map(|v| f(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(SeriesSet {
            start: self.start,
            ids: self.ids.clone(),
            values,
        })
    }

    pub fn stats(&self) -> Result<Vec<SeriesStats>> {
        self.values.iter().map(|v| stats(v)).collect()
    }

    /// Writes `timestamp,agent_id,watts` rows, agent-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "agent_id", "watts"])?;
        for (id, values) in self.iter() {
            let id = id.to_string();
            for (k, v) in values.iter().enumerate() {
                let ts = self.start + TimeDelta::hours(k as i64);
                w.write_record([ts.format(TIMESTAMP_FORMAT).to_string(), id.clone(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<SeriesSet> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let (ts_col, id_col, w_col) = (col("timestamp")?, col("agent_id")?, col("watts")?);
        let mut by_agent: BTreeMap<AgentId, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default().trim();
            let ts = parse_timestamp(field(ts_col))
                .ok_or_else(|| Error::DataQuality(format!("bad timestamp `{}`", field(ts_col))))?;
            let id = field(id_col)
                .parse::<u32>()
                .map_err(|_| Error::DataQuality(format!("bad agent id `{}`", field(id_col))))?;
            let watts = field(w_col)
                .parse::<f64>()
                .map_err(|_| Error::DataQuality(format!("bad watts `{}`", field(w_col))))?;
            by_agent.entry(AgentId(id)).or_default().push((ts, watts));
        }
        let mut start = None;
        let mut series = Vec::with_capacity(by_agent.len());
        for (id, mut rows) in by_agent {
            rows.sort_by_key(|(t, _)| *t);
            let first = rows[0].0;
            if *start.get_or_insert(first) != first {
                return Err(Error::DataQuality(format!(
                    "series of agent {id} starts at {first}, not aligned with the others"
                )));
            }
            for (k, (t, _)) in rows.iter().enumerate() {
                if *t != first + TimeDelta::hours(k as i64) {
                    return Err(Error::DataQuality(format!(
                        "series of agent {id} is not hourly at {t}"
                    )));
                }
            }
            series.push((id, rows.into_iter().map(|(_, v)| v).collect()));
        }
        let start = start.ok_or_else(|| Error::DataQuality("no series rows".into()))?;
        SeriesSet::new(start, series)
    }
}

/// Symmetric matrix of Pearson coefficients over non-degenerate agents.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    ids: Vec<AgentId>,
    values: Vec<f64>,
    degenerate: Vec<AgentId>,
}

impl CorrelationMatrix {
    /// Builds a matrix from a full row-major coefficient table.
    pub fn from_values(ids: Vec<AgentId>, values: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                n * n,
                values.len()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "agent ids must be strictly increasing".into(),
            ));
        }
        let mut values = values;
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in 0..i {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !a.is_finite() || a != b {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric/finite at ({i}, {j})"
                    )));
                }
                let c = a.clamp(-1.0, 1.0);
                values[i * n + j] = c;
                values[j * n + i] = c;
            }
        }
        Ok(CorrelationMatrix {
            ids,
            values,
            degenerate: Vec::new(),
        })
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// Agents left out because their series has zero variance.
    pub fn degenerate(&self) -> &[AgentId] {
        &self.degenerate
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["agent_id".to_string()];
        header.extend(self.ids.iter().map(ToString::to_string));
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.to_string()];
            row.extend((0..self.n()).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Centred series scaled so that dot products give Pearson coefficients.
fn standardized(series: &SeriesSet, keep: &[usize], st: &[SeriesStats]) -> Vec<Vec<f64>> {
    let n = series.len() as f64;
    keep.par_iter()
        .map(|&i| {
            let s = st[i];
            let scale = 1.0 / (s.std_dev * n.sqrt());
            series.values(i).iter().map(|x| (x - s.mean) * scale).collect()
        })
        .collect()
}

fn gram(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let mut m = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            let j = i + 1 + off;
            m[i * n + j] = *v;
            m[j * n + i] = *v;
        }
    }
    m
}

fn build_correlation(series: &SeriesSet, strict: bool) -> Result<CorrelationMatrix> {
    let st = series.stats()?;
    let mut keep = Vec::new();
    let mut degenerate = Vec::new();
    for (i, s) in st.iter().enumerate() {
        if s.is_degenerate() {
            if strict {
                return Err(Error::DegenerateSeries(format!("agent {}", series.ids()[i])));
            }
            degenerate.push(series.ids()[i]);
        } else {
            keep.push(i);
        }
    }
    let z = standardized(series, &keep, &st);
    let mut values = gram(&z);
    let n = keep.len();
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    for v in &mut values {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(CorrelationMatrix {
        ids: keep.iter().map(|&i| series.ids()[i]).collect(),
        values,
        degenerate,
    })
}

/// Pairwise Pearson coefficients; fails on any zero-variance series.
pub fn correlation_matrix(series: &SeriesSet) -> Result<CorrelationMatrix> {
    build_correlation(series, true)
}

/// Like [`correlation_matrix`], but leaves zero-variance agents out and
/// lists them in [`CorrelationMatrix::degenerate`].
pub fn correlation_matrix_excluding_degenerate(series: &SeriesSet) -> Result<CorrelationMatrix> {
    build_correlation(series, false)
}

/// Population covariance matrix, row-major, in the order of `series.ids()`.
pub fn covariance_matrix(series: &SeriesSet) -> Result<Vec<f64>> {
    let st = series.stats()?;
    let n = series.len() as f64;
    let centred: Vec<Vec<f64>> = (0..series.n_agents())
        .into_par_iter()
        .map(|i| {
            let scale = 1.0 / n.sqrt();
            series.values(i).iter().map(|x| (x - st[i].mean) * scale).collect()
        })
        .collect();
    let mut m = gram(&centred);
    let k = series.n_agents();
    for i in 0..k {
        m[i * k + i] = st[i].std_dev * st[i].std_dev;
    }
    Ok(m)
}
