use serde::{Deserialize, Serialize};

use super::{CaseSeries, DistrictRecord, Panel};
use crate::dataset::Population;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Final cases per inhabitant of a median district.
const BASE_ATTACK_RATE: f64 = 0.0015;
const MEDIAN_POPULATION: f64 = 150_000.0;
const MEDIAN_AREA: f64 = 700.0;
const MEDIAN_INCOME: f64 = 22_000.0;
const REFERENCE_DENSITY: f64 = 200.0;
const CASE_FATALITY: f64 = 0.03;
const DEATH_LAG: usize = 10;
const CASE_BAND_SHARES: [f64; 3] = [0.30, 0.60, 0.10];
const DEATH_BAND_SHARES: [f64; 3] = [0.02, 0.38, 0.60];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPanelConfig {
    pub n_districts: usize,
    pub n_days: usize,
    /// Relative increase of the final case count of labeled (B) districts.
    pub effect_size: f64,
    /// Share of districts labeled B.
    pub label_fraction: f64,
    pub seed: u64,
    /// Log-scale spread of the per-district case count noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.05
}

impl SyntheticPanelConfig {
    pub fn new(n_districts: usize, n_days: usize, effect_size: f64, label_fraction: f64, seed: u64) -> Self {
        Self {
            n_districts,
            n_days,
            effect_size,
            label_fraction,
            seed,
            noise: default_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_districts < 4 {
            return Err(Error::InvalidConfig(format!(
                "a synthetic panel needs at least 4 districts, got {}",
                self.n_districts
            )));
        }
        if !(self.effect_size > -1.0 && self.effect_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "effect_size must be finite and above -1, got {}",
                self.effect_size
            )));
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return Err(Error::InvalidConfig(format!(
                "label_fraction must lie in [0, 1], got {}",
                self.label_fraction
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise must be nonnegative, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Splits `n` into three parts proportional to `shares`, largest remainder first.
fn split3(n: u64, shares: &[f64; 3]) -> [u64; 3] {
    let raw = shares.map(|s| s * n as f64);
    let mut out = raw.map(|r| r.floor() as u64);
    let mut left = n - out.iter().sum::<u64>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for k in order {
        if left == 0 {
            break;
        }
        out[k] += 1;
        left -= 1;
    }
    out
}

fn differences(cum: &[u64]) -> Vec<u64> {
    let mut prev = 0;
    cum.iter()
        .map(|c| {
            let d = c - prev;
            prev = *c;
            d
        })
        .collect()
}

/// Districts with log-normal demographics and logistic cumulative case curves.
///
/// The final case count of a district scales with density, falls with income
/// and is multiplied by `1 + effect_size` when the district is labeled B.
/// Onset day and growth rate vary by district. Deaths follow cases with a lag;
/// every case not ending in death is counted as recovered on its report day.
pub fn generate_synthetic_panel(cfg: &SyntheticPanelConfig) -> Result<Panel> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let n = cfg.n_districts;

    let n_labeled = ((n as f64 * cfg.label_fraction).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut labeled = vec![false; n];
    for &i in &order[..n_labeled] {
        labeled[i] = true;
    }

    let mut panel = Panel::default();
    for (i, &is_b) in labeled.iter().enumerate() {
        let id = format!("D{:03}", i + 1);
        let population = (MEDIAN_POPULATION * rng.normal(0.0, 0.5).exp()).round().max(20_000.0) as u64;
        let area = MEDIAN_AREA * rng.normal(0.0, 0.6).exp();
        let income = MEDIAN_INCOME * rng.normal(0.0, 0.12).exp();
        let young = (0.36 + rng.normal(0.0, 0.03)).clamp(0.25, 0.45);
        let old = (0.06 + rng.normal(0.0, 0.01)).clamp(0.02, 0.12);
        let b1 = (population as f64 * young).round() as u64;
        let b3 = (population as f64 * old).round() as u64;
        let record = DistrictRecord {
            id: id.clone(),
            population_total: population,
            area_km2: area,
            income,
            age_group_pops: [b1, population - b1 - b3, b3],
            population_label: Some(if is_b { Population::B } else { Population::A }),
        };

        let dens = population as f64 / area;
        let effect = if is_b { 1.0 + cfg.effect_size } else { 1.0 };
        let rate = BASE_ATTACK_RATE
            * (dens / REFERENCE_DENSITY).powf(0.15)
            * (income / MEDIAN_INCOME).powf(-0.8)
            * effect
            * rng.normal(0.0, cfg.noise).exp();
        let capacity = population as f64 * rate;
        let growth = 0.10 * (dens / REFERENCE_DENSITY).powf(0.05) * rng.normal(0.0, 0.05).exp();
        let midpoint = rng.uniform_range(25.0, 40.0);

        let cum_cases: Vec<u64> = (0..cfg.n_days)
            .map(|d| (capacity / (1.0 + (-growth * (d as f64 - midpoint)).exp())).floor() as u64)
            .collect();
        let fatal = |c: u64| (CASE_FATALITY * c as f64).floor() as u64;
        let cum_deaths: Vec<u64> = (0..cfg.n_days)
            .map(|d| if d >= DEATH_LAG { fatal(cum_cases[d - DEATH_LAG]) } else { 0 })
            .collect();
        let cum_recovered: Vec<u64> = cum_cases.iter().map(|c| c - fatal(*c)).collect();

        let new_cases = differences(&cum_cases);
        let new_deaths = differences(&cum_deaths);
        let mut band_cases: [Vec<u64>; 3] = Default::default();
        let mut band_deaths: [Vec<u64>; 3] = Default::default();
        for (c, d) in new_cases.iter().zip(&new_deaths) {
            for (k, v) in split3(*c, &CASE_BAND_SHARES).into_iter().enumerate() {
                band_cases[k].push(v);
            }
            for (k, v) in split3(*d, &DEATH_BAND_SHARES).into_iter().enumerate() {
                band_deaths[k].push(v);
            }
        }
        panel.records.push(record);
        panel.series.push(CaseSeries {
            district_id: id,
            new_cases,
            new_deaths,
            new_recoveries: Some(differences(&cum_recovered)),
            band_cases: Some(band_cases),
            band_deaths: Some(band_deaths),
        });
    }
    Ok(panel)
}
