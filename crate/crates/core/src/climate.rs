//! Climate-vector lattices.
//!
//! A [`ClimateGrid`] holds one time-ordered series of [`ClimateVector`]s per
//! lattice cell, all on a shared clock. Agents placed in the same cell see
//! identical vectors. Grids come from [`generate_synthetic_climate`] or from
//! weather-station CSVs via [`ingest_weather_csv`], and are brought to the
//! hourly simulation clock with [`resample_hourly`].

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeDelta, Timelike};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimateVector {
    /// m/s, non-negative.
    pub wind_speed: f64,
    /// Fraction of sky covered, in [0, 1].
    pub cloudiness: f64,
    /// Degrees Celsius.
    pub temperature: f64,
}

impl ClimateVector {
    pub fn new(wind_speed: f64, cloudiness: f64, temperature: f64) -> Result<Self> {
        let v = ClimateVector {
            wind_speed,
            cloudiness,
            temperature,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wind_speed.is_finite() && self.wind_speed >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wind speed must be finite and >= 0, got {}",
                self.wind_speed
            )));
        }
        if !(0.0..=1.0).contains(&self.cloudiness) {
            return Err(Error::InvalidArgument(format!(
                "cloudiness must be in [0, 1], got {}",
                self.cloudiness
            )));
        }
        if !self.temperature.is_finite() {
            return Err(Error::InvalidArgument("temperature must be finite".into()));
        }
        Ok(())
    }

    fn lerp(a: &ClimateVector, b: &ClimateVector, t: f64) -> ClimateVector {
        let mix = |x: f64, y: f64| x + (y - x) * t;
        ClimateVector {
            wind_speed: mix(a.wind_speed, b.wind_speed),
            cloudiness: mix(a.cloudiness, b.cloudiness),
            temperature: mix(a.temperature, b.temperature),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub x: usize,
    pub y: usize,
}

impl CellCoord {
    pub fn new(x: usize, y: usize) -> Self {
        CellCoord { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimateGrid {
    width: usize,
    height: usize,
    start: NaiveDateTime,
    interval: TimeDelta,
    latitude_of_origin: f64,
    // row-major, index = y * width + x
    cells: Vec<Vec<ClimateVector>>,
}

impl ClimateGrid {
    pub fn new(
        width: usize,
        height: usize,
        start: NaiveDateTime,
        interval: TimeDelta,
        latitude_of_origin: f64,
        cells: Vec<Vec<ClimateVector>>,
    ) -> Result<Self> {
        check_dimensions(width, height)?;
        check_interval(interval)?;
        if !(-90.0..=90.0).contains(&latitude_of_origin) {
            return Err(Error::InvalidArgument(format!(
                "latitude {latitude_of_origin} outside [-90, 90]"
            )));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} cell series, got {}",
                width * height,
                cells.len()
            )));
        }
        let len = cells.first().map_or(0, Vec::len);
        if cells.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidArgument(
                "all cells must have series of identical length".into(),
            ));
        }
        for v in cells.iter().flatten() {
            v.validate()?;
        }
        Ok(ClimateGrid {
            width,
            height,
            start,
            interval,
            latitude_of_origin,
            cells,
        })
    }

    /// A grid whose every cell holds `len` copies of `vector`.
    pub fn uniform(
        width: usize,
        height: usize,
        start: NaiveDateTime,
        interval: TimeDelta,
        len: usize,
        latitude_of_origin: f64,
        vector: ClimateVector,
    ) -> Result<Self> {
        check_dimensions(width, height)?;
        Self::new(
            width,
            height,
            start,
            interval,
            latitude_of_origin,
            vec![vec![vector; len]; width * height],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn interval(&self) -> TimeDelta {
        self.interval
    }

    pub fn latitude_of_origin(&self) -> f64 {
        self.latitude_of_origin
    }

    /// Number of samples per cell.
    pub fn len(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        self.start + self.interval * k as i32
    }

    pub fn contains(&self, cell: CellCoord) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn series(&self, cell: CellCoord) -> Option<&[ClimateVector]> {
        self.contains(cell)
            .then(|| self.cells[cell.y * self.width + cell.x].as_slice())
    }

    fn series_mut(&mut self, cell: CellCoord) -> &mut Vec<ClimateVector> {
        &mut self.cells[cell.y * self.width + cell.x]
    }

    pub fn is_hourly(&self) -> bool {
        self.interval == TimeDelta::hours(1)
    }
}

fn check_dimensions(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

fn check_interval(interval: TimeDelta) -> Result<()> {
    let secs = interval.num_seconds();
    if secs <= 0 {
        return Err(Error::InvalidArgument(
            "sampling interval must be positive".into(),
        ));
    }
    if 86_400 % secs != 0 || interval.subsec_nanos() != 0 {
        return Err(Error::InvalidArgument(format!(
            "sampling interval of {secs} s does not divide one day"
        )));
    }
    Ok(())
}

/// Fractional day of year (1-based, leap days included) and hour of day.
pub(crate) fn day_and_hour(t: NaiveDateTime) -> (f64, f64) {
    let hour = f64::from(t.hour()) + f64::from(t.minute()) / 60.0 + f64::from(t.second()) / 3600.0;
    (f64::from(t.ordinal()) + hour / 24.0, hour)
}

/// Parameters of the synthetic climate generator.
///
/// Defaults: a 5x5 lattice, 3-hourly, from 1 February 2006 to the end of
/// 2010, correlation length 1 cell, latitude 46.5°.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticClimate {
    pub width: usize,
    pub height: usize,
    pub start: NaiveDateTime,
    pub duration_days: u32,
    pub interval_hours: u32,
    /// Decay scale of inter-cell noise correlation, in cells.
    pub spatial_corr_length: f64,
    pub seed: Option<u64>,
    pub latitude: f64,
}

impl Default for SyntheticClimate {
    fn default() -> Self {
        SyntheticClimate {
            width: 5,
            height: 5,
            start: chrono::NaiveDate::from_ymd_opt(2006, 2, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            duration_days: 1795,
            interval_hours: 3,
            spatial_corr_length: 1.0,
            seed: None,
            latitude: 46.5,
        }
    }
}

// Temporal persistence of the latent noise, hours.
const WIND_TAU_H: f64 = 24.0;
const CLOUD_TAU_H: f64 = 18.0;
const TEMP_TAU_H: f64 = 72.0;

const WIND_NOISE: f64 = 2.3;
const CLOUD_NOISE: f64 = 1.6;
const TEMP_NOISE: f64 = 3.0;
const CLOUD_MEAN: f64 = 0.6;

fn temperature_template(doy: f64, hour: f64) -> f64 {
    // coldest around 20 January, warmest mid-afternoon
    11.0 - 8.0 * (TAU * (doy - 20.0) / 365.25).cos() + 4.0 * (TAU * (hour - 15.0) / 24.0).cos()
}

fn wind_template(doy: f64) -> f64 {
    5.5 + 1.2 * (TAU * (doy - 20.0) / 365.25).cos()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-normalised smoothing kernel from latent nodes to cells; sparse rows.
fn smoothing_kernel(width: usize, height: usize, corr_length: f64) -> Vec<Vec<(usize, f64)>> {
    let n = width * height;
    (0..n)
        .map(|c| {
            let (cx, cy) = ((c % width) as f64, (c / width) as f64);
            let mut row: Vec<(usize, f64)> = (0..n)
                .filter_map(|k| {
                    let (kx, ky) = ((k % width) as f64, (k / width) as f64);
                    let d2 = (cx - kx).powi(2) + (cy - ky).powi(2);
                    let w = if corr_length == 0.0 {
                        if d2 == 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        (-d2 / (2.0 * corr_length * corr_length)).exp()
                    };
                    (w > 1e-12).then_some((k, w))
                })
                .collect();
            let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            for (_, w) in &mut row {
                *w /= norm;
            }
            row
        })
        .collect()
}

/// Generates a spatially correlated synthetic climate.
///
/// Each field is a deterministic seasonal/diurnal template plus unit-variance
/// noise. The noise of a cell is a normalised Gaussian-kernel average of a
/// latent AR(1) field living on the lattice, so inter-cell correlation decays
/// with distance at scale `spatial_corr_length` (an infinite length makes all
/// cells share one noise realisation).
pub fn generate_synthetic_climate(spec: &SyntheticClimate) -> Result<ClimateGrid> {
    check_dimensions(spec.width, spec.height)?;
    if spec.interval_hours == 0 {
        return Err(Error::InvalidArgument("interval must be positive".into()));
    }
    let interval = TimeDelta::hours(i64::from(spec.interval_hours));
    check_interval(interval)?;
    if spec.duration_days == 0 {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    if spec.spatial_corr_length.is_nan() || spec.spatial_corr_length < 0.0 {
        return Err(Error::InvalidArgument(
            "spatial correlation length must be >= 0".into(),
        ));
    }

    let n_cells = spec.width * spec.height;
    let steps = (spec.duration_days as usize * 24) / spec.interval_hours as usize;
    let kernel = smoothing_kernel(spec.width, spec.height, spec.spatial_corr_length);
    let dt = f64::from(spec.interval_hours);
    let persistence = [
        (-dt / WIND_TAU_H).exp(),
        (-dt / CLOUD_TAU_H).exp(),
        (-dt / TEMP_TAU_H).exp(),
    ];

    let mut rng = seed::rng(spec.seed.unwrap_or(0));
    let mut latent: [Vec<f64>; 3] = std::array::from_fn(|_| {
        (0..n_cells)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    });

    let cloud_offset = (CLOUD_MEAN / (1.0 - CLOUD_MEAN)).ln();
    let mut cells = vec![Vec::with_capacity(steps); n_cells];
    for step in 0..steps {
        if step > 0 {
            for (field, &a) in latent.iter_mut().zip(&persistence) {
                let innov = (1.0 - a * a).sqrt();
                for z in field.iter_mut() {
                    *z = a * *z + innov * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let t = spec.start + interval * step as i32;
        let (doy, hour) = day_and_hour(t);
        let temp_base = temperature_template(doy, hour);
        let wind_base = wind_template(doy);
        for (c, row) in kernel.iter().enumerate() {
            let smooth = |field: &[f64]| row.iter().map(|&(k, w)| w * field[k]).sum::<f64>();
            let wind = (wind_base + WIND_NOISE * smooth(&latent[0])).max(0.0);
            let cloud = logistic(cloud_offset + CLOUD_NOISE * smooth(&latent[1]));
            let temp = temp_base + TEMP_NOISE * smooth(&latent[2]);
            cells[c].push(ClimateVector {
                wind_speed: wind,
                cloudiness: cloud,
                temperature: temp,
            });
        }
    }

    ClimateGrid::new(
        spec.width,
        spec.height,
        spec.start,
        interval,
        spec.latitude,
        cells,
    )
}

/// Linearly interpolates a grid onto an hourly clock.
///
/// A grid with `n` samples at interval `h` hours covers `[start, start + n*h)`,
/// so the hourly grid has `n*h` samples; the hours after the final sample
/// hold its value. Already-hourly grids are returned unchanged.
pub fn resample_hourly(grid: &ClimateGrid) -> Result<ClimateGrid> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("cannot resample an empty grid".into()));
    }
    if grid.interval < TimeDelta::hours(1) || grid.interval.num_seconds() % 3600 != 0 {
        return Err(Error::InvalidArgument(
            "sampling interval must be a whole number of hours".into(),
        ));
    }
    if grid.is_hourly() {
        return Ok(grid.clone());
    }
    let step = (grid.interval.num_seconds() / 3600) as usize;
    let cells = grid
        .cells
        .iter()
        .map(|series| {
            let n = series.len();
            (0..n * step)
                .map(|j| {
                    let (k, r) = (j / step, j % step);
                    if r == 0 || k + 1 >= n {
                        series[k]
                    } else {
                        ClimateVector::lerp(&series[k], &series[k + 1], r as f64 / step as f64)
                    }
                })
                .collect()
        })
        .collect();
    Ok(ClimateGrid {
        cells,
        interval: TimeDelta::hours(1),
        ..grid.clone()
    })
}

/// Header names of a weather CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub timestamp: String,
    pub wind_speed: String,
    /// Cloud cover in oktas (0-8); preferred when present.
    pub cloud_okta: Option<String>,
    /// Cloud cover as a fraction.
    pub cloud_frac: Option<String>,
    pub temperature: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            timestamp: "timestamp".into(),
            wind_speed: "wind_speed_ms".into(),
            cloud_okta: Some("cloud_okta".into()),
            cloud_frac: Some("cloud_frac".into()),
            temperature: "temp_c".into(),
        }
    }
}

pub(crate) fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

/// Longest run of consecutive missing samples that is interpolated.
pub const MAX_INTERPOLATED_GAP: usize = 2;

/// Replaces the series of `cell` with observations read from a weather CSV.
///
/// Rows outside the grid's time range are ignored; rows inside it must fall
/// on the grid clock. Runs of at most [`MAX_INTERPOLATED_GAP`] missing
/// samples (absent rows or empty fields) are linearly interpolated; longer
/// runs, or gaps touching either end of the range, are errors.
pub fn ingest_weather_csv(
    path: &Path,
    columns: &ColumnMap,
    cell: CellCoord,
    grid: &ClimateGrid,
) -> Result<ClimateGrid> {
    if !grid.contains(cell) {
        return Err(Error::InvalidArgument(format!(
            "cell ({}, {}) outside {}x{} grid",
            cell.x, cell.y, grid.width, grid.height
        )));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let ts_col = require(&columns.timestamp)?;
    let wind_col = require(&columns.wind_speed)?;
    let temp_col = require(&columns.temperature)?;
    let cloud_col = match (
        columns.cloud_okta.as_deref().and_then(find),
        columns.cloud_frac.as_deref().and_then(find),
    ) {
        (Some(i), _) => (i, 8.0),
        (None, Some(i)) => (i, 1.0),
        (None, None) => {
            return Err(Error::Schema(
                "missing cloud cover column (okta or fraction)".into(),
            ))
        }
    };

    let n = grid.len();
    let step = grid.interval.num_seconds();
    let mut observed: BTreeMap<usize, Option<ClimateVector>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let raw_ts = record.get(ts_col).unwrap_or_default();
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| Error::DataQuality(format!("unparseable timestamp `{raw_ts}`")))?;
        let offset = (ts - grid.start).num_seconds();
        if offset < 0 || offset >= step * n as i64 {
            continue;
        }
        if offset % step != 0 {
            return Err(Error::DataQuality(format!(
                "timestamp {ts} is off the {step} s sampling clock"
            )));
        }
        let k = (offset / step) as usize;
        let field = |col: usize| -> Result<Option<f64>> {
            let s = record.get(col).unwrap_or_default().trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::DataQuality(format!("non-numeric value `{s}` at {ts}")))
        };
        let vector = match (field(wind_col)?, field(cloud_col.0)?, field(temp_col)?) {
            (Some(w), Some(c), Some(t)) => {
                let cloudiness = c / cloud_col.1;
                let v = ClimateVector {
                    wind_speed: w,
                    cloudiness,
                    temperature: t,
                };
                v.validate()
                    .map_err(|e| Error::DataQuality(format!("at {ts}: {e}")))?;
                Some(v)
            }
            _ => None,
        };
        if observed.insert(k, vector).is_some() {
            return Err(Error::DataQuality(format!("duplicate timestamp {ts}")));
        }
    }

    let samples: Vec<Option<ClimateVector>> =
        (0..n).map(|k| observed.get(&k).copied().flatten()).collect();
    let filled = fill_gaps(&samples, |k| grid.timestamp(k))?;

    let mut out = grid.clone();
    *out.series_mut(cell) = filled;
    Ok(out)
}

fn fill_gaps(
    samples: &[Option<ClimateVector>],
    time_of: impl Fn(usize) -> NaiveDateTime,
) -> Result<Vec<ClimateVector>> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if let Some(v) = samples[k] {
            out.push(v);
            k += 1;
            continue;
        }
        let gap_start = k;
        while k < n && samples[k].is_none() {
            k += 1;
        }
        let missing = k - gap_start;
        let gap_err = || Error::Gap {
            from: time_of(gap_start),
            to: time_of(k - 1),
            missing,
        };
        if missing > MAX_INTERPOLATED_GAP || gap_start == 0 || k == n {
            return Err(gap_err());
        }
        let (before, after) = (out[gap_start - 1], samples[k].expect("gap ends on a sample"));
        for j in 1..=missing {
            out.push(ClimateVector::lerp(
                &before,
                &after,
                j as f64 / (missing + 1) as f64,
            ));
        }
    }
    Ok(out)
}
