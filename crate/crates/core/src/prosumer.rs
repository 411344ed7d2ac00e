//! Prosumer energy models.
//!
//! Converts climate vectors into an agent's hourly available power
//! `P_i(t) = production - consumption`, where production comes from wind
//! turbines (cubic power curve) and PV panels (clear-sky irradiance degraded
//! by cloud cover) and consumption follows a daily template plus a heating
//! term driven by temperature.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use chrono::NaiveDateTime;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climate::{day_and_hour, CellCoord, ClimateGrid, ClimateVector};
use crate::error::{Error, Result};
use crate::timeseries::SeriesSet;
use crate::{seed, AgentId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbineParams {
    /// m/s
    pub cut_in: f64,
    /// m/s
    pub rated_speed: f64,
    /// m/s
    pub cut_out: f64,
    /// W
    pub rated_power: f64,
}

impl Default for TurbineParams {
    fn default() -> Self {
        TurbineParams {
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            rated_power: 10_000.0,
        }
    }
}

impl TurbineParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.cut_in && self.cut_in < self.rated_speed && self.rated_speed < self.cut_out)
        {
            return Err(Error::InvalidArgument(format!(
                "turbine speeds must satisfy 0 < cut_in < rated < cut_out, got {} / {} / {}",
                self.cut_in, self.rated_speed, self.cut_out
            )));
        }
        if !(self.rated_power > 0.0) {
            return Err(Error::InvalidArgument("rated power must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvParams {
    /// m²
    pub panel_area: f64,
    pub efficiency: f64,
    #[serde(default = "default_degradation_exponent")]
    pub degradation_exponent: f64,
}

fn default_degradation_exponent() -> f64 {
    DEFAULT_DEGRADATION_EXPONENT
}

pub const DEFAULT_DEGRADATION_EXPONENT: f64 = 3.4;

impl Default for PvParams {
    fn default() -> Self {
        PvParams {
            panel_area: 1.6,
            efficiency: 0.18,
            degradation_exponent: DEFAULT_DEGRADATION_EXPONENT,
        }
    }
}

impl PvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.panel_area > 0.0) {
            return Err(Error::InvalidArgument("panel area must be > 0".into()));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidArgument("PV efficiency must be in (0, 1]".into()));
        }
        if !(self.degradation_exponent >= 0.0) {
            return Err(Error::InvalidArgument(
                "degradation exponent must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerConfig {
    pub id: AgentId,
    pub cell: CellCoord,
    #[serde(default)]
    pub n_turbines: u32,
    #[serde(default)]
    pub turbine: TurbineParams,
    #[serde(default)]
    pub n_pv: u32,
    #[serde(default)]
    pub pv: PvParams,
    /// W
    pub base_load: f64,
    #[serde(default = "one")]
    pub morning_peak_gain: f64,
    #[serde(default = "one")]
    pub evening_peak_gain: f64,
    /// °C
    #[serde(default = "default_comfort")]
    pub comfort_temperature: f64,
    /// W/°C
    #[serde(default)]
    pub heating_gain: f64,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_comfort() -> f64 {
    19.0
}

impl ProsumerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("agent {}: {msg}", self.id)));
        if self.n_turbines > 0 {
            self.turbine.validate()?;
        }
        if self.n_pv > 0 {
            self.pv.validate()?;
        }
        for (name, v) in [
            ("base_load", self.base_load),
            ("morning_peak_gain", self.morning_peak_gain),
            ("evening_peak_gain", self.evening_peak_gain),
            ("heating_gain", self.heating_gain),
            ("noise_level", self.noise_level),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !self.comfort_temperature.is_finite() {
            return bad("comfort temperature must be finite".into());
        }
        if self.n_turbines == 0 && self.n_pv == 0 && self.base_load == 0.0 && self.heating_gain == 0.0
        {
            return bad("agent has neither generators nor load".into());
        }
        Ok(())
    }
}

/// Power output of one turbine: cubic ramp between cut-in and rated speed,
/// flat at rated power up to (and including) cut-out, zero elsewhere.
pub fn wind_power(wind_speed: f64, params: &TurbineParams) -> f64 {
    let v = wind_speed;
    if v < params.cut_in || v > params.cut_out {
        0.0
    } else if v >= params.rated_speed {
        params.rated_power
    } else {
        params.rated_power * (v.powi(3) - params.cut_in.powi(3))
            / (params.rated_speed.powi(3) - params.cut_in.powi(3))
    }
}

pub const SOLAR_CONSTANT_SURFACE: f64 = 1000.0;
const AXIAL_TILT_DEG: f64 = 23.44;

/// Solar declination in degrees (Cooper's formula).
pub fn solar_declination(day_of_year: f64) -> f64 {
    AXIAL_TILT_DEG * (2.0 * PI * (284.0 + day_of_year) / 365.0).sin()
}

/// Clear-sky global irradiance on a horizontal surface, W/m².
///
/// The clock hour is taken as local solar time.
pub fn clear_sky_irradiance(time: NaiveDateTime, latitude: f64) -> f64 {
    let (doy, hour) = day_and_hour(time);
    // declination uses the integer day
    let decl = solar_declination(doy.floor()).to_radians();
    let lat = latitude.to_radians();
    let hour_angle = (15.0 * (hour - 12.0)).to_radians();
    let sin_elev = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    if sin_elev <= 0.0 {
        0.0
    } else {
        SOLAR_CONSTANT_SURFACE * sin_elev
    }
}

/// PV output of one panel under `cloudiness` cover.
pub fn pv_power(irradiance: f64, cloudiness: f64, params: &PvParams) -> f64 {
    let degradation = 1.0 - 0.75 * cloudiness.powf(params.degradation_exponent);
    irradiance * degradation * params.panel_area * params.efficiency
}

// Relative load per hour of day; night trough at 1-5 h.
const DAILY_BASE: [f64; 24] = [
    0.45, 0.40, 0.36, 0.34, 0.34, 0.36, 0.45, 0.60, 0.70, 0.65, 0.60, 0.60, //
    0.62, 0.60, 0.58, 0.58, 0.62, 0.70, 0.80, 0.85, 0.82, 0.75, 0.62, 0.52,
];
const MORNING_BUMP: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.30, 0.40, 0.25, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];
const EVENING_BUMP: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.30, 0.45, 0.45, 0.30, 0.0, 0.0,
];

/// Daily consumption template at `hour` (0-23).
pub fn daily_profile(hour: usize, morning_gain: f64, evening_gain: f64) -> f64 {
    let h = hour % 24;
    DAILY_BASE[h] + morning_gain * MORNING_BUMP[h] + evening_gain * EVENING_BUMP[h]
}

/// Consumption in watts; draws one uniform noise factor from `rng` whenever
/// `noise_level > 0`.
pub fn consumption<R: Rng + ?Sized>(
    time: NaiveDateTime,
    temperature: f64,
    cfg: &ProsumerConfig,
    rng: &mut R,
) -> f64 {
    let (_, hour) = day_and_hour(time);
    let load = cfg.base_load
        * daily_profile(hour as usize, cfg.morning_peak_gain, cfg.evening_peak_gain)
        + cfg.heating_gain * (cfg.comfort_temperature - temperature).max(0.0);
    if cfg.noise_level > 0.0 {
        load * rng.random_range(1.0 - cfg.noise_level..=1.0 + cfg.noise_level)
    } else {
        load
    }
}

/// Production minus consumption for one agent at one instant.
pub fn available_power<R: Rng + ?Sized>(
    cfg: &ProsumerConfig,
    climate: &ClimateVector,
    time: NaiveDateTime,
    latitude: f64,
    rng: &mut R,
) -> f64 {
    let wind = if cfg.n_turbines > 0 {
        f64::from(cfg.n_turbines) * wind_power(climate.wind_speed, &cfg.turbine)
    } else {
        0.0
    };
    let pv = if cfg.n_pv > 0 {
        let irradiance = clear_sky_irradiance(time, latitude);
        f64::from(cfg.n_pv) * pv_power(irradiance, climate.cloudiness, &cfg.pv)
    } else {
        0.0
    };
    wind + pv - consumption(time, climate.temperature, cfg, rng)
}

/// Simulates the hourly available-power series of every agent in `pool`.
///
/// The grid must already be hourly. Each agent draws its consumption noise
/// from its own stream seeded by `rng_seed`, so results do not depend on
/// how agents are scheduled across threads.
pub fn simulate_pool(pool: &[ProsumerConfig], grid: &ClimateGrid) -> Result<SeriesSet> {
    if !grid.is_hourly() {
        return Err(Error::Configuration(
            "climate grid must be resampled to hourly before simulation".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for cfg in pool {
        cfg.validate()?;
        if !grid.contains(cfg.cell) {
            return Err(Error::Configuration(format!(
                "agent {} placed in cell ({}, {}) outside the {}x{} grid",
                cfg.id,
                cfg.cell.x,
                cfg.cell.y,
                grid.width(),
                grid.height()
            )));
        }
        if !seen.insert(cfg.id) {
            return Err(Error::Configuration(format!("duplicate agent id {}", cfg.id)));
        }
    }
    let latitude = grid.latitude_of_origin();
    let series: Vec<(AgentId, Vec<f64>)> = pool
        .par_iter()
        .map(|cfg| {
            let climate = grid.series(cfg.cell).expect("cell checked above");
            let mut rng = seed::rng(cfg.rng_seed);
            let values = climate
                .iter()
                .enumerate()
                .map(|(k, v)| available_power(cfg, v, grid.timestamp(k), latitude, &mut rng))
                .collect();
            (cfg.id, values)
        })
        .collect();
    SeriesSet::new(grid.start(), series)
}

/// Inclusive `[min, max]` range for a randomly drawn parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let (lo, hi) = (self.min.round() as u32, self.max.round() as u32);
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max && self.min >= 0.0)
        {
            return Err(Error::Validation {
                path: format!("pool.random_pool.{name}"),
                message: format!("need 0 <= min <= max, got [{}, {}]", self.min, self.max),
            });
        }
        Ok(())
    }
}

/// Generator for a pool of agents with randomly drawn parameters.
///
/// Defaults describe farm-scale prosumers: up to two 20-100 kW turbines and
/// up to 150 panels of 1.6 m², with 1-6 kW base load and electric heating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomPool {
    pub count: usize,
    pub master_seed: Option<u64>,
    pub n_turbines: Range,
    pub turbine_rated_power: Range,
    pub n_pv: Range,
    pub base_load: Range,
    pub morning_peak_gain: Range,
    pub evening_peak_gain: Range,
    pub comfort_temperature: Range,
    pub heating_gain: Range,
    pub noise_level: Range,
}

impl Default for RandomPool {
    fn default() -> Self {
        RandomPool {
            count: 200,
            master_seed: None,
            n_turbines: Range::new(0.0, 2.0),
            turbine_rated_power: Range::new(20_000.0, 100_000.0),
            n_pv: Range::new(0.0, 150.0),
            base_load: Range::new(1_000.0, 6_000.0),
            morning_peak_gain: Range::new(0.5, 1.5),
            evening_peak_gain: Range::new(0.5, 1.5),
            comfort_temperature: Range::new(17.0, 21.0),
            heating_gain: Range::new(100.0, 500.0),
            noise_level: Range::new(0.05, 0.25),
        }
    }
}

impl RandomPool {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Validation {
                path: "pool.random_pool.count".into(),
                message: "must be >= 1".into(),
            });
        }
        for (name, r) in [
            ("n_turbines", &self.n_turbines),
            ("turbine_rated_power", &self.turbine_rated_power),
            ("n_pv", &self.n_pv),
            ("base_load", &self.base_load),
            ("morning_peak_gain", &self.morning_peak_gain),
            ("evening_peak_gain", &self.evening_peak_gain),
            ("comfort_temperature", &self.comfort_temperature),
            ("heating_gain", &self.heating_gain),
            ("noise_level", &self.noise_level),
        ] {
            r.validate(name)?;
        }
        if self.turbine_rated_power.min <= 0.0 && self.n_turbines.max > 0.0 {
            return Err(Error::Validation {
                path: "pool.random_pool.turbine_rated_power".into(),
                message: "rated power must be > 0".into(),
            });
        }
        Ok(())
    }

    /// Draws `count` agents placed uniformly on a `width` x `height` lattice.
    /// Agent `i` gets id `i` and its own noise seed derived from `master_seed`.
    pub fn generate(&self, width: usize, height: usize, master_seed: u64) -> Result<Vec<ProsumerConfig>> {
        self.validate()?;
        let base = self.master_seed.unwrap_or(master_seed);
        let mut rng = seed::rng(seed::derive_named(base, "random-pool"));
        let pool = (0..self.count)
            .map(|i| {
                let cell = CellCoord::new(rng.random_range(0..width), rng.random_range(0..height));
                let mut n_turbines = self.n_turbines.sample_count(&mut rng);
                let mut n_pv = self.n_pv.sample_count(&mut rng);
                if n_turbines == 0 && n_pv == 0 {
                    // every prosumer owns at least one generator
                    if rng.random_bool(0.5) && self.n_turbines.max >= 1.0 {
                        n_turbines = 1;
                    } else {
                        n_pv = self.n_pv.max.max(1.0).round() as u32 / 2 + 1;
                    }
                }
                let turbine = TurbineParams {
                    rated_power: self.turbine_rated_power.sample(&mut rng),
                    ..TurbineParams::default()
                };
                ProsumerConfig {
                    id: AgentId(i as u32),
                    cell,
                    n_turbines,
                    turbine,
                    n_pv,
                    pv: PvParams::default(),
                    base_load: self.base_load.sample(&mut rng),
                    morning_peak_gain: self.morning_peak_gain.sample(&mut rng),
                    evening_peak_gain: self.evening_peak_gain.sample(&mut rng),
                    comfort_temperature: self.comfort_temperature.sample(&mut rng),
                    heating_gain: self.heating_gain.sample(&mut rng),
                    noise_level: self.noise_level.sample(&mut rng),
                    rng_seed: seed::derive(base, i as u64),
                }
            })
            .collect();
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDate, TimeDelta};

    fn at(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, 0, 0)
            .unwrap()
    }

    fn big_turbine() -> TurbineParams {
        TurbineParams {
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            rated_power: 2e6,
        }
    }

    fn house(seed: u64) -> ProsumerConfig {
        ProsumerConfig {
            id: AgentId(1),
            cell: CellCoord::new(0, 0),
            n_turbines: 0,
            turbine: TurbineParams::default(),
            n_pv: 0,
            pv: PvParams::default(),
            base_load: 1000.0,
            morning_peak_gain: 1.0,
            evening_peak_gain: 1.0,
            comfort_temperature: 19.0,
            heating_gain: 100.0,
            noise_level: 0.0,
            rng_seed: seed,
        }
    }

    #[test]
    fn wind_curve_regions() {
        let p = big_turbine();
        assert_eq!(wind_power(0.0, &p), 0.0);
        assert_eq!(wind_power(3.0, &p), 0.0);
        assert_eq!(wind_power(12.0, &p), 2e6);
        assert_eq!(wind_power(25.0, &p), 2e6);
        assert_eq!(wind_power(25.01, &p), 0.0);
    }

    #[test]
    fn wind_ramp_value() {
        // 2e6 * (729 - 27) / (1728 - 27)
        let expected = 2e6 * 702.0 / 1701.0;
        assert!((wind_power(9.0, &big_turbine()) - expected).abs() < 1e-6);
        assert!((wind_power(9.0, &big_turbine()) - 825_396.825_396_825).abs() < 1e-3);
    }

    #[test]
    fn turbine_validation() {
        let mut p = big_turbine();
        p.cut_in = 13.0;
        assert!(p.validate().is_err());
        assert!(big_turbine().validate().is_ok());
    }

    #[test]
    fn irradiance_night_and_noon() {
        assert_eq!(clear_sky_irradiance(at(2007, 6, 21, 0), 45.0), 0.0);
        assert_eq!(clear_sky_irradiance(at(2007, 12, 21, 0), -30.0), 0.0);
        // March 22 = day 81 of a non-leap year: zero declination
        let equinox = clear_sky_irradiance(at(2007, 3, 22, 12), 0.0);
        assert!((equinox - 1000.0).abs() < 1e-6, "{equinox}");
    }

    #[test]
    fn irradiance_solstice_45n() {
        // June 21, 2007 = day 172; elevation = 90 - 45 + decl
        let decl = 23.44 * (2.0 * PI * (284.0 + 172.0) / 365.0).sin();
        let oracle = 1000.0 * (90.0 - 45.0 + decl).to_radians().sin();
        let got = clear_sky_irradiance(at(2007, 6, 21, 12), 45.0);
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 930.0).abs() < 0.5, "{got}");
    }

    #[test]
    fn pv_degradation() {
        let p = PvParams {
            panel_area: 10.0,
            efficiency: 0.2,
            degradation_exponent: 3.4,
        };
        assert!((pv_power(800.0, 0.0, &p) - 1600.0).abs() < 1e-9);
        assert_eq!(pv_power(0.0, 0.7, &p), 0.0);
        assert!((pv_power(800.0, 1.0, &p) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn pv_is_non_increasing_in_cloudiness() {
        let p = PvParams::default();
        let mut last = f64::INFINITY;
        for i in 0..=100 {
            let v = pv_power(700.0, i as f64 / 100.0, &p);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn consumption_profile_and_heating() {
        let mut rng = seed::rng(0);
        let cfg = house(0);
        let warm_night = consumption(at(2007, 1, 10, 3), 25.0, &cfg, &mut rng);
        let warm_evening = consumption(at(2007, 1, 10, 19), 25.0, &cfg, &mut rng);
        assert!(warm_evening > warm_night);
        assert_eq!(warm_night, 1000.0 * DAILY_BASE[3]);
        // 19 °C comfort, 9 °C outside, 100 W/°C
        let cold_night = consumption(at(2007, 1, 10, 3), 9.0, &cfg, &mut rng);
        assert!((cold_night - (warm_night + 1000.0)).abs() < 1e-9);
    }

    #[test]
    fn available_power_components() {
        let mut rng = seed::rng(0);
        let cfg = house(0);
        let calm = ClimateVector::new(0.0, 0.5, 25.0).unwrap();
        let night = at(2007, 1, 10, 3);
        assert!(available_power(&cfg, &calm, night, 45.0, &mut rng) < 0.0);

        let idle = ProsumerConfig {
            base_load: 0.0,
            heating_gain: 0.0,
            n_pv: 1,
            ..house(0)
        };
        assert_eq!(available_power(&idle, &calm, night, 45.0, &mut rng), 0.0);

        // one 2 MW turbine at 9 m/s, 10 m² panel at solstice noon, house load
        let combo = ProsumerConfig {
            n_turbines: 1,
            turbine: big_turbine(),
            n_pv: 1,
            pv: PvParams {
                panel_area: 10.0,
                efficiency: 0.2,
                degradation_exponent: 3.4,
            },
            ..house(0)
        };
        let v = ClimateVector::new(9.0, 0.0, 9.0).unwrap();
        let noon = at(2007, 6, 21, 12);
        let expected = 2e6 * 702.0 / 1701.0 + clear_sky_irradiance(noon, 45.0) * 10.0 * 0.2
            - (1000.0 * daily_profile(12, 1.0, 1.0) + 1000.0);
        let got = available_power(&combo, &v, noon, 45.0, &mut rng);
        assert!((got - expected).abs() < 1e-6);
    }

    fn tiny_grid(len_hours: usize) -> ClimateGrid {
        let spec = crate::climate::SyntheticClimate {
            width: 2,
            height: 1,
            start: at(2006, 2, 1, 0),
            duration_days: (len_hours / 24) as u32,
            interval_hours: 3,
            spatial_corr_length: 1.0,
            seed: Some(3),
            latitude: 46.5,
        };
        crate::climate::resample_hourly(&crate::climate::generate_synthetic_climate(&spec).unwrap())
            .unwrap()
    }

    #[test]
    fn identical_configs_identical_series() {
        let grid = tiny_grid(24 * 10);
        let a = ProsumerConfig {
            noise_level: 0.2,
            ..house(9)
        };
        let b = ProsumerConfig {
            id: AgentId(2),
            ..a.clone()
        };
        let s = simulate_pool(&[a, b], &grid).unwrap();
        assert_eq!(s.values(0), s.values(1));
        assert_eq!(s.len(), 240);
    }

    #[test]
    fn different_noise_seeds_high_but_imperfect_correlation() {
        let grid = tiny_grid(24 * 60);
        let a = ProsumerConfig {
            noise_level: 0.2,
            n_pv: 10,
            ..house(1)
        };
        let b = ProsumerConfig {
            id: AgentId(2),
            rng_seed: 2,
            ..a.clone()
        };
        let s = simulate_pool(&[a, b], &grid).unwrap();
        let r = crate::timeseries::pearson(s.values(0), s.values(1)).unwrap();
        assert!(r < 1.0 && r > 0.9, "{r}");
    }

    #[test]
    fn noiseless_pool_ignores_seed() {
        let grid = tiny_grid(24 * 5);
        let s1 = simulate_pool(&[house(1)], &grid).unwrap();
        let s2 = simulate_pool(&[house(99)], &grid).unwrap();
        assert_eq!(s1.values(0), s2.values(0));
    }

    #[test]
    fn out_of_range_cell_is_configuration_error() {
        let grid = tiny_grid(48);
        let cfg = ProsumerConfig {
            cell: CellCoord::new(5, 0),
            ..house(0)
        };
        assert!(matches!(
            simulate_pool(&[cfg], &grid),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn rejects_empty_agent() {
        let cfg = ProsumerConfig {
            base_load: 0.0,
            heating_gain: 0.0,
            ..house(0)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unresampled_grid_rejected() {
        let g = crate::climate::ClimateGrid::uniform(
            1,
            1,
            at(2006, 1, 1, 0),
            TimeDelta::hours(3),
            4,
            45.0,
            ClimateVector::new(1.0, 0.0, 10.0).unwrap(),
        )
        .unwrap();
        assert!(simulate_pool(&[house(0)], &g).is_err());
    }

    #[test]
    fn random_pool_is_deterministic_and_in_range() {
        let gen = RandomPool {
            count: 50,
            ..RandomPool::default()
        };
        let a = gen.generate(4, 3, 17).unwrap();
        assert_eq!(a, gen.generate(4, 3, 17).unwrap());
        assert_ne!(a, gen.generate(4, 3, 18).unwrap());
        for cfg in &a {
            cfg.validate().unwrap();
            assert!(cfg.cell.x < 4 && cfg.cell.y < 3);
            assert!(cfg.n_turbines + cfg.n_pv > 0);
            assert!((1000.0..=6000.0).contains(&cfg.base_load));
        }
    }
}
