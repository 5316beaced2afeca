use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CaseSeries, DistrictRecord, Panel};
use crate::dataset::Population;
use crate::error::{Error, Result};

pub(crate) const DISTRICT_HEADER: [&str; 8] = [
    "id",
    "population",
    "area_km2",
    "income",
    "pop_band1",
    "pop_band2",
    "pop_band3",
    "label",
];
pub(crate) const SERIES_HEADER: [&str; 5] = ["id", "day", "new_cases", "new_deaths", "new_recoveries"];
pub(crate) const SERIES_BAND_HEADER: [&str; 6] = [
    "band1_cases",
    "band2_cases",
    "band3_cases",
    "band1_deaths",
    "band2_deaths",
    "band3_deaths",
];

/// Band sums further than this from the total population draw a warning.
const BAND_SUM_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub file: PathBuf,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub warnings: Vec<String>,
    pub rejected: Vec<RejectedRow>,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty() && self.rejected.is_empty()
    }

    fn reject(&mut self, file: &Path, line: u64, reason: impl Into<String>) {
        let reason = reason.into();
        log::warn!("{}:{line}: {reason}", file.display());
        self.rejected.push(RejectedRow {
            file: file.to_path_buf(),
            line,
            reason,
        });
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Csv(e),
            _ => malformed(path, e.to_string()),
        })
}

fn header(reader: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Vec<String>> {
    Ok(reader
        .headers()
        .map_err(|e| malformed(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn parse_count(s: &str, field: &str) -> std::result::Result<u64, String> {
    s.parse::<u64>().map_err(|_| {
        if s.starts_with('-') {
            format!("{field} is negative: `{s}`")
        } else {
            format!("{field} is not a count: `{s}`")
        }
    })
}

fn parse_real(s: &str, field: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{field} is not a finite number: `{s}`")),
    }
}

fn parse_district(rec: &csv::StringRecord) -> std::result::Result<DistrictRecord, String> {
    let id = rec[0].to_string();
    if id.is_empty() {
        return Err("empty district id".into());
    }
    let label = match &rec[7] {
        "" => None,
        s => Some(s.parse::<Population>().map_err(|_| format!("district {id}: label must be A, B or empty, got `{s}`"))?),
    };
    let r = DistrictRecord {
        population_total: parse_count(&rec[1], "population")?,
        area_km2: parse_real(&rec[2], "area_km2")?,
        income: parse_real(&rec[3], "income")?,
        age_group_pops: [
            parse_count(&rec[4], "pop_band1")?,
            parse_count(&rec[5], "pop_band2")?,
            parse_count(&rec[6], "pop_band3")?,
        ],
        population_label: label,
        id,
    };
    r.validate().map_err(|e| e.to_string())?;
    Ok(r)
}

struct DayRow {
    cases: u64,
    deaths: u64,
    recoveries: Option<u64>,
    bands: Option<[u64; 6]>,
}

fn parse_series_row(rec: &csv::StringRecord, with_bands: bool) -> std::result::Result<(String, usize, DayRow), String> {
    let id = rec[0].to_string();
    if id.is_empty() {
        return Err("empty district id".into());
    }
    let day = parse_count(&rec[1], "day")? as usize;
    let recoveries = match &rec[4] {
        "" => None,
        s => Some(parse_count(s, "new_recoveries")?),
    };
    let bands = if with_bands && (5..11).all(|i| !rec[i].is_empty()) {
        let mut b = [0u64; 6];
        for (k, v) in b.iter_mut().enumerate() {
            *v = parse_count(&rec[5 + k], SERIES_BAND_HEADER[k])?;
        }
        Some(b)
    } else {
        None
    };
    Ok((
        id,
        day,
        DayRow {
            cases: parse_count(&rec[2], "new_cases")?,
            deaths: parse_count(&rec[3], "new_deaths")?,
            recoveries,
            bands,
        },
    ))
}

/// Reads `districts.csv` and `series.csv` into a panel.
///
/// Rows that fail validation are skipped and listed in the report with their
/// line numbers. Districts without any series rows are dropped with a warning.
/// Missing days inside a series are zero-filled, and every series is padded to
/// the last day seen anywhere in the file.
pub fn ingest_panel(district_csv: impl AsRef<Path>, series_csv: impl AsRef<Path>) -> Result<(Panel, IngestReport)> {
    let dpath = district_csv.as_ref();
    let spath = series_csv.as_ref();
    let mut report = IngestReport::default();

    let mut reader = open(dpath)?;
    let head = header(&mut reader, dpath)?;
    if head != DISTRICT_HEADER {
        return Err(malformed(
            dpath,
            format!("expected header `{}`, found `{}`", DISTRICT_HEADER.join(","), head.join(",")),
        ));
    }
    let mut records: Vec<DistrictRecord> = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let rec = row.map_err(|e| malformed(dpath, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        match parse_district(&rec) {
            Ok(r) => {
                if !seen.insert(r.id.clone()) {
                    return Err(Error::DuplicateId(r.id));
                }
                let dev = r.band_sum_deviation();
                if dev > BAND_SUM_TOLERANCE {
                    report.warn(format!(
                        "district {}: age bands sum {:.2}% away from the population",
                        r.id,
                        dev * 100.0
                    ));
                }
                records.push(r);
            }
            Err(reason) => report.reject(dpath, line, reason),
        }
    }

    let mut reader = open(spath)?;
    let head = header(&mut reader, spath)?;
    let with_bands = if head == SERIES_HEADER {
        false
    } else if head.len() == 11 && head[..5] == SERIES_HEADER && head[5..] == SERIES_BAND_HEADER {
        true
    } else {
        return Err(malformed(
            spath,
            format!(
                "expected header `{}` optionally followed by `{}`, found `{}`",
                SERIES_HEADER.join(","),
                SERIES_BAND_HEADER.join(","),
                head.join(",")
            ),
        ));
    };

    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut by_district: HashMap<String, BTreeMap<usize, DayRow>> = HashMap::new();
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_rows = 0usize;
    let mut max_day: Option<usize> = None;
    for row in reader.records() {
        let rec = row.map_err(|e| malformed(spath, e.to_string()))?;
        n_rows += 1;
        let line = rec.position().map_or(0, |p| p.line());
        let (id, day, d) = match parse_series_row(&rec, with_bands) {
            Ok(v) => v,
            Err(reason) => {
                report.reject(spath, line, reason);
                continue;
            }
        };
        if !known.contains(id.as_str()) {
            *unknown.entry(id).or_default() += 1;
            continue;
        }
        let days = by_district.entry(id.clone()).or_default();
        if days.contains_key(&day) {
            report.reject(spath, line, format!("district {id}: day {day} appears twice"));
            continue;
        }
        days.insert(day, d);
        max_day = Some(max_day.map_or(day, |m: usize| m.max(day)));
    }
    if n_rows == 0 {
        return Err(Error::NoSeriesRows(spath.to_path_buf()));
    }
    for (id, n) in unknown {
        report.warn(format!("{n} series rows for unknown district {id} ignored"));
    }

    let n_days = max_day.map_or(0, |m| m + 1);
    let mut panel = Panel::default();
    for r in records {
        let Some(days) = by_district.remove(&r.id) else {
            report.warn(format!("district {} has no series rows and was dropped", r.id));
            continue;
        };
        let mut s = CaseSeries {
            district_id: r.id.clone(),
            new_cases: vec![0; n_days],
            new_deaths: vec![0; n_days],
            new_recoveries: Some(vec![0; n_days]),
            band_cases: None,
            band_deaths: None,
        };
        let has_bands = with_bands && days.values().all(|d| d.bands.is_some());
        if with_bands && !has_bands {
            report.warn(format!("district {}: age band counts incomplete, bands unavailable", r.id));
        }
        let mut bc: [Vec<u64>; 3] = std::array::from_fn(|_| vec![0; n_days]);
        let mut bd: [Vec<u64>; 3] = std::array::from_fn(|_| vec![0; n_days]);
        let mut recoveries_missing = false;
        for (day, d) in &days {
            s.new_cases[*day] = d.cases;
            s.new_deaths[*day] = d.deaths;
            match (d.recoveries, s.new_recoveries.as_mut()) {
                (Some(v), Some(rec)) => rec[*day] = v,
                _ => recoveries_missing = true,
            }
            if let (true, Some(b)) = (has_bands, d.bands) {
                for k in 0..3 {
                    bc[k][*day] = b[k];
                    bd[k][*day] = b[3 + k];
                }
            }
        }
        if recoveries_missing {
            s.new_recoveries = None;
            report.warn(format!("district {}: recoveries missing, active cases unavailable", r.id));
        }
        if has_bands {
            s.band_cases = Some(bc);
            s.band_deaths = Some(bd);
        }
        panel.records.push(r);
        panel.series.push(s);
    }
    Ok((panel, report))
}
