//! District panel data: ingestion, derived features, design matrices,
//! correlation analysis and a synthetic panel generator.
//!
//! A [`Panel`] pairs each [`DistrictRecord`] with its [`CaseSeries`]. Day 0 is
//! the first day of every series and all series in a panel share one length.

mod correlation;
mod design;
mod ingest;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::dataset::Population;
use crate::error::{Error, Result};

pub use correlation::{correlation_matrix, Correlation};
pub use design::{build_design, AgeBanding, FeatureStrategy, StrategyKind, TargetKind, LARGE_CITIES};
pub use ingest::{ingest_panel, IngestReport, RejectedRow};
pub use synthetic::{generate_synthetic_panel, SyntheticPanelConfig};

/// Shift, in days, between a recovery being counted and it leaving the active cases.
pub const RECOVERY_SHIFT: usize = 14;
/// Cumulative cases per inhabitant that mark the first day.
pub const FIRST_DAY_RATIO: f64 = 1e-5;
const FIRST_DAY_DENOMINATOR: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictRecord {
    pub id: String,
    pub population_total: u64,
    pub area_km2: f64,
    /// Disposable income per inhabitant.
    pub income: f64,
    /// Population of the three age bands, youngest first.
    pub age_group_pops: [u64; 3],
    pub population_label: Option<Population>,
}

impl DistrictRecord {
    /// Problems that make the record unusable.
    pub fn validate(&self) -> Result<()> {
        if !(self.area_km2 > 0.0 && self.area_km2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "district {}: area must be positive, got {}",
                self.id, self.area_km2
            )));
        }
        if !(self.income > 0.0 && self.income.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "district {}: income must be positive, got {}",
                self.id, self.income
            )));
        }
        Ok(())
    }

    /// Relative gap between the band sum and the total population.
    pub fn band_sum_deviation(&self) -> f64 {
        let sum: u64 = self.age_group_pops.iter().sum();
        if self.population_total == 0 {
            return if sum == 0 { 0.0 } else { f64::INFINITY };
        }
        (sum as f64 - self.population_total as f64).abs() / self.population_total as f64
    }
}

/// Daily counts of one district, indexed by day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseSeries {
    pub district_id: String,
    pub new_cases: Vec<u64>,
    pub new_deaths: Vec<u64>,
    /// `None` when the source has no recovery figures for the district.
    pub new_recoveries: Option<Vec<u64>>,
    /// New cases per age band.
    pub band_cases: Option<[Vec<u64>; 3]>,
    pub band_deaths: Option<[Vec<u64>; 3]>,
}

impl CaseSeries {
    pub fn len(&self) -> usize {
        self.new_cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_cases.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut lens = vec![("new_deaths", self.new_deaths.len())];
        if let Some(r) = &self.new_recoveries {
            lens.push(("new_recoveries", r.len()));
        }
        for b in self.band_cases.iter().chain(&self.band_deaths) {
            lens.extend(b.iter().map(|v| ("band", v.len())));
        }
        for (name, len) in lens {
            if len != n {
                return Err(Error::InvalidArgument(format!(
                    "series {}: {name} has {len} days, new_cases has {n}",
                    self.district_id
                )));
            }
        }
        Ok(())
    }

    pub fn cumulative_cases(&self) -> Vec<u64> {
        cumulative(&self.new_cases)
    }

    pub fn cumulative_deaths(&self) -> Vec<u64> {
        cumulative(&self.new_deaths)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    pub records: Vec<DistrictRecord>,
    /// `series[i]` belongs to `records[i]`.
    pub series: Vec<CaseSeries>,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_days(&self) -> usize {
        self.series.iter().map(CaseSeries::len).max().unwrap_or(0)
    }

    pub fn get(&self, id: &str) -> Option<(&DistrictRecord, &CaseSeries)> {
        let i = self.records.iter().position(|r| r.id == id)?;
        Some((&self.records[i], &self.series[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DistrictRecord, &CaseSeries)> {
        self.records.iter().zip(&self.series)
    }

    pub fn has_band_series(&self) -> bool {
        !self.series.is_empty() && self.series.iter().all(|s| s.band_cases.is_some() && s.band_deaths.is_some())
    }

    /// Writes `districts.csv` rows in the ingest schema.
    pub fn write_districts_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(ingest::DISTRICT_HEADER)?;
        for r in &self.records {
            out.write_record([
                r.id.clone(),
                r.population_total.to_string(),
                r.area_km2.to_string(),
                r.income.to_string(),
                r.age_group_pops[0].to_string(),
                r.age_group_pops[1].to_string(),
                r.age_group_pops[2].to_string(),
                r.population_label.map(|p| p.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `series.csv` rows in the ingest schema; band columns only when every series has them.
    pub fn write_series_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let bands = self.has_band_series();
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = ingest::SERIES_HEADER.to_vec();
        if bands {
            header.extend(ingest::SERIES_BAND_HEADER);
        }
        out.write_record(&header)?;
        for s in &self.series {
            for d in 0..s.len() {
                let mut row = vec![
                    s.district_id.clone(),
                    d.to_string(),
                    s.new_cases[d].to_string(),
                    s.new_deaths[d].to_string(),
                    s.new_recoveries.as_ref().map(|r| r[d].to_string()).unwrap_or_default(),
                ];
                if let (true, Some(bc), Some(bd)) = (bands, &s.band_cases, &s.band_deaths) {
                    row.extend(bc.iter().chain(bd).map(|v| v[d].to_string()));
                }
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, districts: impl AsRef<std::path::Path>, series: impl AsRef<std::path::Path>) -> Result<()> {
        self.write_districts_csv(std::fs::File::create(districts)?)?;
        self.write_series_csv(std::fs::File::create(series)?)?;
        Ok(())
    }
}

pub fn cumulative(daily: &[u64]) -> Vec<u64> {
    daily
        .iter()
        .scan(0u64, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Population per km².
pub fn density(r: &DistrictRecord) -> f64 {
    r.population_total as f64 / r.area_km2
}

/// Smallest day whose cumulative count reaches one per 100000 inhabitants.
///
/// The comparison is done in integers, so a count sitting exactly on the
/// threshold qualifies.
pub fn first_day_of(daily: &[u64], population: u64, district: &str) -> Result<usize> {
    if population == 0 {
        return Err(Error::InvalidArgument(format!("district {district} has zero population")));
    }
    let mut cum: u128 = 0;
    for (d, v) in daily.iter().enumerate() {
        cum += *v as u128;
        if cum * FIRST_DAY_DENOMINATOR as u128 >= population as u128 {
            return Ok(d);
        }
    }
    Err(Error::FirstDayNotReached(district.to_string()))
}

pub fn first_day(series: &CaseSeries, population: u64) -> Result<usize> {
    first_day_of(&series.new_cases, population, &series.district_id)
}

/// Cumulative cases minus cumulative deaths minus the recoveries counted up to
/// fourteen days earlier.
///
/// Negative values are clamped to zero and logged. Fails when the series has
/// no recovery figures.
pub fn active_cases(series: &CaseSeries) -> Result<Vec<u64>> {
    let rec = series.new_recoveries.as_ref().ok_or_else(|| Error::MissingField {
        strategy: "active cases".into(),
        field: "new_recoveries",
        district: series.district_id.clone(),
    })?;
    let cases = series.cumulative_cases();
    let deaths = series.cumulative_deaths();
    let recovered = cumulative(rec);
    let mut clamped = 0usize;
    let out = (0..series.len())
        .map(|d| {
            let r = if d >= RECOVERY_SHIFT { recovered[d - RECOVERY_SHIFT] } else { 0 };
            let v = cases[d] as i128 - deaths[d] as i128 - r as i128;
            if v < 0 {
                clamped += 1;
                0
            } else {
                v as u64
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!(
            "district {}: active cases negative on {clamped} days, clamped to 0",
            series.district_id
        );
    }
    Ok(out)
}

/// Mean of the seven values before day `d`; days before 0 count as 0.
pub fn trailing_mean7(series: &[f64], d: usize) -> f64 {
    let lo = d.saturating_sub(7);
    let hi = d.min(series.len());
    let sum: f64 = if lo < hi { series[lo..hi].iter().sum() } else { 0.0 };
    sum / 7.0
}

#[cfg(test)]
mod tests;
