use serde::{Deserialize, Serialize};

use super::{active_cases, cumulative, density, first_day, first_day_of, trailing_mean7, CaseSeries, DistrictRecord, Panel};
use crate::dataset::{Dataset, Population, SampleTags};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Districts commonly left out because their counts dwarf the rest.
pub const LARGE_CITIES: [&str; 3] = ["Berlin", "Hamburg", "Munich"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// income, density, 3 band populations -> total cases or deaths
    AccumulatedAgeGroups,
    /// income, density, 3 band populations -> cases per band; or band cases -> deaths per band
    AccumulatedInfectedAges,
    /// income, density, 3 band populations, day -> cumulative count
    TimeSeriesCumulative,
    /// adds the first day
    TimeSeriesFirstDay,
    /// adds the trailing 7-day mean of the active cases
    TimeSeriesPast7,
    /// first-day features -> ln cumulative cases
    TimeSeriesLogCases,
    /// income, density, mid-band population, band first day, day -> ln mid-band cases
    TimeSeriesLogMidAge,
    /// income, density, two band shares, first day, day -> ln cases per inhabitant
    RelativeProportions,
    /// income, density, mid-band share, band first day, day -> ln mid-band cases per inhabitant
    RelativeMidAge,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 9] = [
        StrategyKind::AccumulatedAgeGroups,
        StrategyKind::AccumulatedInfectedAges,
        StrategyKind::TimeSeriesCumulative,
        StrategyKind::TimeSeriesFirstDay,
        StrategyKind::TimeSeriesPast7,
        StrategyKind::TimeSeriesLogCases,
        StrategyKind::TimeSeriesLogMidAge,
        StrategyKind::RelativeProportions,
        StrategyKind::RelativeMidAge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::AccumulatedAgeGroups => "accumulated_age_groups",
            StrategyKind::AccumulatedInfectedAges => "accumulated_infected_ages",
            StrategyKind::TimeSeriesCumulative => "time_series_cumulative",
            StrategyKind::TimeSeriesFirstDay => "time_series_first_day",
            StrategyKind::TimeSeriesPast7 => "time_series_past7",
            StrategyKind::TimeSeriesLogCases => "time_series_log_cases",
            StrategyKind::TimeSeriesLogMidAge => "time_series_log_mid_age",
            StrategyKind::RelativeProportions => "relative_proportions",
            StrategyKind::RelativeMidAge => "relative_mid_age",
        }
    }

    pub fn is_time_series(self) -> bool {
        !matches!(self, StrategyKind::AccumulatedAgeGroups | StrategyKind::AccumulatedInfectedAges)
    }

    fn is_relative(self) -> bool {
        matches!(self, StrategyKind::RelativeProportions | StrategyKind::RelativeMidAge)
    }

    fn is_mid_age(self) -> bool {
        matches!(self, StrategyKind::TimeSeriesLogMidAge | StrategyKind::RelativeMidAge)
    }

    fn needs_bands(self, target: TargetKind) -> bool {
        self.is_mid_age() || (self == StrategyKind::AccumulatedInfectedAges && target != TargetKind::Active)
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Cases,
    Deaths,
    Active,
}

/// How the three `pop_band` columns are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBanding {
    /// 0-30, 30-65, 65+
    Vaccination,
    /// 0-34, 35-79, 80+
    Reporting,
}

impl AgeBanding {
    pub fn labels(self) -> [&'static str; 3] {
        match self {
            AgeBanding::Vaccination => ["0_30", "30_65", "65_plus"],
            AgeBanding::Reporting => ["0_34", "35_79", "80_plus"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureStrategy {
    pub kind: StrategyKind,
    pub target: TargetKind,
    /// Natural log of the target, with zeros replaced first.
    pub log_target: bool,
    /// Append the population label (A = 0, B = 1) as a feature.
    #[serde(default)]
    pub include_label: bool,
    /// District ids left out of the design.
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl FeatureStrategy {
    /// The strategy with its usual target and log setting.
    pub fn new(kind: StrategyKind) -> Self {
        let (target, log_target) = match kind {
            StrategyKind::TimeSeriesPast7 => (TargetKind::Active, false),
            StrategyKind::TimeSeriesLogCases
            | StrategyKind::TimeSeriesLogMidAge
            | StrategyKind::RelativeProportions
            | StrategyKind::RelativeMidAge => (TargetKind::Cases, true),
            _ => (TargetKind::Cases, false),
        };
        Self {
            kind,
            target,
            log_target,
            include_label: false,
            exclude: Vec::new(),
        }
    }

    pub fn with_target(mut self, target: TargetKind) -> Self {
        self.target = target;
        self
    }

    pub fn banding(&self) -> AgeBanding {
        match self.kind {
            StrategyKind::AccumulatedAgeGroups => AgeBanding::Vaccination,
            _ => AgeBanding::Reporting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use StrategyKind::*;
        use TargetKind::*;
        let ok = match self.kind {
            AccumulatedAgeGroups | AccumulatedInfectedAges | TimeSeriesCumulative => {
                matches!(self.target, Cases | Deaths)
            }
            TimeSeriesFirstDay => true,
            TimeSeriesPast7 => self.target == Active,
            TimeSeriesLogCases | TimeSeriesLogMidAge | RelativeProportions | RelativeMidAge => self.target == Cases,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "strategy {} cannot predict {:?}",
                self.kind, self.target
            )))
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        use StrategyKind::*;
        let b = self.banding().labels();
        let pops = || b.iter().map(|l| format!("pop_{l}"));
        let mut names: Vec<String> = vec!["income".into(), "density".into()];
        match self.kind {
            AccumulatedAgeGroups => names.extend(pops()),
            AccumulatedInfectedAges => match self.target {
                TargetKind::Deaths => names.extend(b.iter().map(|l| format!("cases_{l}"))),
                _ => names.extend(pops()),
            },
            TimeSeriesCumulative => {
                names.extend(pops());
                names.push("day".into());
            }
            TimeSeriesFirstDay | TimeSeriesLogCases => {
                names.extend(pops());
                names.extend(["first_day".into(), "day".into()]);
            }
            TimeSeriesPast7 => {
                names.extend(pops());
                names.extend(["first_day".into(), "active_mean7".into(), "day".into()]);
            }
            TimeSeriesLogMidAge => {
                names.push(format!("pop_{}", b[1]));
                names.extend(["first_day".into(), "day".into()]);
            }
            RelativeProportions => {
                names.extend([format!("share_{}", b[0]), format!("share_{}", b[1])]);
                names.extend(["first_day".into(), "day".into()]);
            }
            RelativeMidAge => {
                names.push(format!("share_{}", b[1]));
                names.extend(["first_day".into(), "day".into()]);
            }
        }
        if self.include_label {
            names.push("label".into());
        }
        names
    }

    pub fn target_names(&self) -> Vec<String> {
        use StrategyKind::*;
        let b = self.banding().labels();
        let base: Vec<String> = match (self.kind, self.target) {
            (AccumulatedInfectedAges, TargetKind::Deaths) => b.iter().map(|l| format!("deaths_{l}")).collect(),
            (AccumulatedInfectedAges, _) => b.iter().map(|l| format!("cases_{l}")).collect(),
            (AccumulatedAgeGroups, TargetKind::Deaths) => vec!["total_deaths".into()],
            (AccumulatedAgeGroups, _) => vec!["total_cases".into()],
            (TimeSeriesLogMidAge, _) => vec![format!("cases_{}", b[1])],
            (RelativeProportions, _) => vec!["relative_cases".into()],
            (RelativeMidAge, _) => vec![format!("relative_cases_{}", b[1])],
            (_, TargetKind::Cases) => vec!["cumulative_cases".into()],
            (_, TargetKind::Deaths) => vec!["cumulative_deaths".into()],
            (_, TargetKind::Active) => vec!["active_cases".into()],
        };
        if self.log_target {
            base.into_iter().map(|n| format!("ln_{n}")).collect()
        } else {
            base
        }
    }
}

fn bands<'a>(s: &'a CaseSeries, strategy: &FeatureStrategy, deaths: bool) -> Result<&'a [Vec<u64>; 3]> {
    let (field, v) = if deaths {
        ("band_deaths", &s.band_deaths)
    } else {
        ("band_cases", &s.band_cases)
    };
    v.as_ref().ok_or_else(|| Error::MissingField {
        strategy: strategy.kind.name().into(),
        field,
        district: s.district_id.clone(),
    })
}

fn label_value(r: &DistrictRecord, strategy: &FeatureStrategy) -> Result<f64> {
    match r.population_label {
        Some(Population::A) => Ok(0.0),
        Some(Population::B) => Ok(1.0),
        None => Err(Error::MissingField {
            strategy: strategy.kind.name().into(),
            field: "label",
            district: r.id.clone(),
        }),
    }
}

/// `ln` with zeros replaced by `fill`.
fn log_with_fill(v: f64, fill: f64) -> f64 {
    if v == 0.0 {
        fill.ln()
    } else {
        v.ln()
    }
}

struct Rows {
    x: Vec<f64>,
    y: Vec<f64>,
    tags: Vec<SampleTags>,
}

/// Builds the design matrix of `strategy` over every district of the panel.
///
/// Accumulated strategies give one row per district; time-series strategies
/// give one row per district and day, for every day of the series.
pub fn build_design(panel: &Panel, strategy: &FeatureStrategy) -> Result<Dataset> {
    strategy.validate()?;
    let feature_names = strategy.feature_names();
    let target_names = strategy.target_names();
    let mut rows = Rows {
        x: Vec::new(),
        y: Vec::new(),
        tags: Vec::new(),
    };
    for (r, s) in panel.iter() {
        if strategy.exclude.iter().any(|e| e == &r.id) {
            continue;
        }
        if strategy.kind.needs_bands(strategy.target) {
            bands(s, strategy, false)?;
        }
        if strategy.kind.is_time_series() {
            district_time_series(r, s, strategy, &mut rows)?;
        } else {
            district_accumulated(r, s, strategy, &mut rows)?;
        }
    }
    let n = rows.tags.len();
    let features = Matrix::new(n, feature_names.len(), rows.x)?;
    let targets = Matrix::new(n, target_names.len(), rows.y)?;
    Dataset::new(feature_names, target_names, features, targets, rows.tags)
}

fn district_accumulated(r: &DistrictRecord, s: &CaseSeries, st: &FeatureStrategy, rows: &mut Rows) -> Result<()> {
    let total = |v: &[u64]| v.iter().sum::<u64>() as f64;
    let pops = r.age_group_pops.map(|p| p as f64);
    let mut x = vec![r.income, density(r)];
    let y: Vec<f64> = match (st.kind, st.target) {
        (StrategyKind::AccumulatedAgeGroups, t) => {
            x.extend(pops);
            vec![if t == TargetKind::Deaths {
                total(&s.new_deaths)
            } else {
                total(&s.new_cases)
            }]
        }
        (_, TargetKind::Deaths) => {
            let bc = bands(s, st, false)?;
            let bd = bands(s, st, true)?;
            x.extend(bc.iter().map(|v| total(v)));
            bd.iter().map(|v| total(v)).collect()
        }
        _ => {
            x.extend(pops);
            bands(s, st, false)?.iter().map(|v| total(v)).collect()
        }
    };
    if st.include_label {
        x.push(label_value(r, st)?);
    }
    let y = if st.log_target {
        y.into_iter().map(|v| log_with_fill(v, 1.0)).collect()
    } else {
        y
    };
    rows.x.extend(x);
    rows.y.extend(y);
    rows.tags.push(SampleTags {
        district: Some(r.id.clone()),
        population_label: r.population_label,
        ..SampleTags::default()
    });
    Ok(())
}

fn district_time_series(r: &DistrictRecord, s: &CaseSeries, st: &FeatureStrategy, rows: &mut Rows) -> Result<()> {
    use StrategyKind::*;
    let n = s.len();
    if n == 0 {
        return Ok(());
    }
    let pop = r.population_total as f64;
    let pops = r.age_group_pops.map(|p| p as f64);
    let label = if st.include_label { Some(label_value(r, st)?) } else { None };

    let needs_active = st.target == TargetKind::Active || st.kind == TimeSeriesPast7;
    let active = if needs_active {
        Some(active_cases(s).map_err(|_| Error::MissingField {
            strategy: st.kind.name().into(),
            field: "new_recoveries",
            district: r.id.clone(),
        })?)
    } else {
        None
    };

    // first day and natural-space target per day
    let (first, target): (Option<usize>, Vec<f64>) = match st.kind {
        TimeSeriesLogMidAge | RelativeMidAge => {
            let band = &bands(s, st, false)?[1];
            let fd = first_day_of(band, r.age_group_pops[1], &r.id)?;
            let cum = cumulative(band);
            let scale = if st.kind == RelativeMidAge { pop } else { 1.0 };
            (Some(fd), cum.iter().map(|c| *c as f64 / scale).collect())
        }
        _ => {
            let fd = match st.kind {
                TimeSeriesCumulative => None,
                _ => Some(first_day(s, r.population_total)?),
            };
            let counts: Vec<f64> = match st.target {
                TargetKind::Cases => s.cumulative_cases().iter().map(|c| *c as f64).collect(),
                TargetKind::Deaths => s.cumulative_deaths().iter().map(|c| *c as f64).collect(),
                TargetKind::Active => active.as_ref().expect("active computed").iter().map(|c| *c as f64).collect(),
            };
            let scale = if st.kind == RelativeProportions { pop } else { 1.0 };
            (fd, counts.iter().map(|c| c / scale).collect())
        }
    };
    let fill = if st.kind.is_relative() {
        target[first.expect("relative strategies have a first day")]
    } else {
        1.0
    };
    let active_f: Vec<f64> = active.iter().flatten().map(|v| *v as f64).collect();

    for d in 0..n {
        let mut x = vec![r.income, density(r)];
        match st.kind {
            TimeSeriesCumulative => x.extend(pops),
            TimeSeriesFirstDay | TimeSeriesLogCases => {
                x.extend(pops);
                x.push(first.unwrap() as f64);
            }
            TimeSeriesPast7 => {
                x.extend(pops);
                x.push(first.unwrap() as f64);
                x.push(trailing_mean7(&active_f, d));
            }
            TimeSeriesLogMidAge => {
                x.push(pops[1]);
                x.push(first.unwrap() as f64);
            }
            RelativeProportions => {
                x.extend([pops[0] / pop, pops[1] / pop]);
                x.push(first.unwrap() as f64);
            }
            RelativeMidAge => {
                x.push(pops[1] / pop);
                x.push(first.unwrap() as f64);
            }
            AccumulatedAgeGroups | AccumulatedInfectedAges => unreachable!("accumulated strategy in time-series path"),
        }
        x.push(d as f64);
        if let Some(l) = label {
            x.push(l);
        }
        rows.x.extend(x);
        rows.y.push(if st.log_target {
            log_with_fill(target[d], fill)
        } else {
            target[d]
        });
        rows.tags.push(SampleTags {
            branch: None,
            district: Some(r.id.clone()),
            population_label: r.population_label,
            day: Some(d as u32),
        });
    }
    Ok(())
}
