//! Feature engineering on the bundled six-district panel against brute-force
//! oracles that read the CSV files directly.

use std::collections::BTreeMap;

use branchnet::features::{
    active_cases, build_design, density, first_day, ingest_panel, trailing_mean7, FeatureStrategy, Panel,
    StrategyKind, TargetKind,
};

const DISTRICTS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/districts.csv");
const SERIES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/series.csv");

struct Row {
    id: String,
    pop: u64,
    area: f64,
    income: f64,
    bands: [u64; 3],
}

/// Daily columns: cases, deaths, recoveries, band cases 1..3, band deaths 1..3.
type Days = Vec<[u64; 9]>;

fn read_fixture() -> (Vec<Row>, BTreeMap<String, Days>) {
    let rows: Vec<Row> = std::fs::read_to_string(DISTRICTS)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                id: f[0].to_string(),
                pop: f[1].parse().unwrap(),
                area: f[2].parse().unwrap(),
                income: f[3].parse().unwrap(),
                bands: [f[4].parse().unwrap(), f[5].parse().unwrap(), f[6].parse().unwrap()],
            }
        })
        .collect();
    let text = std::fs::read_to_string(SERIES).unwrap();
    let mut raw: Vec<(String, usize, [u64; 9])> = Vec::new();
    for l in text.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        let mut v = [0u64; 9];
        for (k, x) in f[2..].iter().enumerate() {
            v[k] = x.parse().unwrap();
        }
        raw.push((f[0].to_string(), f[1].parse().unwrap(), v));
    }
    let n_days = raw.iter().map(|r| r.1).max().unwrap() + 1;
    let mut series: BTreeMap<String, Days> = rows.iter().map(|r| (r.id.clone(), vec![[0; 9]; n_days])).collect();
    for (id, day, v) in raw {
        series.get_mut(&id).unwrap()[day] = v;
    }
    (rows, series)
}

fn panel() -> Panel {
    let (p, report) = ingest_panel(DISTRICTS, SERIES).unwrap();
    assert!(report.rejected.is_empty(), "{report:?}");
    p
}

fn total(days: &Days, col: usize, upto: usize) -> u64 {
    days[..=upto].iter().map(|d| d[col]).sum()
}

fn first_day_oracle(days: &Days, col: usize, pop: u64) -> usize {
    (0..days.len())
        .find(|&d| total(days, col, d) * 100_000 >= pop)
        .expect("fixture districts all reach the threshold")
}

fn active_oracle(days: &Days, d: usize) -> u64 {
    let rec = if d >= 14 { total(days, 2, d - 14) } else { 0 };
    (total(days, 0, d) as i64 - total(days, 1, d) as i64 - rec as i64).max(0) as u64
}

fn mean7_oracle(days: &Days, d: usize) -> f64 {
    let lo = d.saturating_sub(7);
    (lo..d).map(|k| active_oracle(days, k) as f64).sum::<f64>() / 7.0
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn ingest_zero_fills_gaps() {
    let p = panel();
    let (_, series) = read_fixture();
    assert_eq!(p.len(), 6);
    for s in &p.series {
        let days = &series[&s.district_id];
        assert_eq!(s.len(), days.len());
        assert_eq!(s.new_cases, days.iter().map(|d| d[0]).collect::<Vec<_>>());
    }
    let (_, aland) = p.get("Aland").unwrap();
    assert_eq!(aland.new_cases[2], 0);
}

#[test]
fn density_matches_spreadsheet() {
    let (rows, _) = read_fixture();
    for (r, row) in panel().records.iter().zip(&rows) {
        assert_eq!(r.id, row.id);
        assert_eq!(density(r), row.pop as f64 / row.area);
    }
}

#[test]
fn first_day_matches_brute_force() {
    let (rows, series) = read_fixture();
    let p = panel();
    for row in &rows {
        let (_, s) = p.get(&row.id).unwrap();
        assert_eq!(first_day(s, row.pop).unwrap(), first_day_oracle(&series[&row.id], 0, row.pop), "{}", row.id);
    }
    // Aland reaches one case per 100000 on its first positive day
    let (_, s) = p.get("Aland").unwrap();
    assert_eq!(first_day(s, 100_000).unwrap(), 5);
}

#[test]
fn active_cases_and_trailing_mean_match_brute_force() {
    let (_, series) = read_fixture();
    let p = panel();
    for s in &p.series {
        let days = &series[&s.district_id];
        let active = active_cases(s).unwrap();
        let af: Vec<f64> = active.iter().map(|v| *v as f64).collect();
        for d in 0..days.len() {
            assert_eq!(active[d], active_oracle(days, d), "{} day {d}", s.district_id);
            assert!(close(trailing_mean7(&af, d), mean7_oracle(days, d)), "{} day {d}", s.district_id);
        }
    }
}

/// Feature rows and targets of one district, written out per strategy.
fn design_oracle(kind: StrategyKind, target: TargetKind, row: &Row, days: &Days) -> Vec<(Vec<f64>, Vec<f64>)> {
    use StrategyKind::*;
    let n = days.len();
    let last = n - 1;
    let pop = row.pop as f64;
    let dens = row.pop as f64 / row.area;
    let bands = row.bands.map(|b| b as f64);
    let head = [row.income, dens];
    let with = |extra: &[f64]| head.iter().chain(extra).copied().collect::<Vec<f64>>();
    let band_tot = |first_col: usize| (0..3).map(|k| total(days, first_col + k, last) as f64).collect::<Vec<_>>();
    match kind {
        AccumulatedAgeGroups => {
            let col = if target == TargetKind::Deaths { 1 } else { 0 };
            vec![(with(&bands), vec![total(days, col, last) as f64])]
        }
        AccumulatedInfectedAges if target == TargetKind::Deaths => vec![(with(&band_tot(3)), band_tot(6))],
        AccumulatedInfectedAges => vec![(with(&bands), band_tot(3))],
        _ => {
            let fd_total = first_day_oracle(days, 0, row.pop) as f64;
            let fd_mid = first_day_oracle(days, 4, row.bands[1]) as f64;
            (0..n)
                .map(|d| {
                    let cum = |col| total(days, col, d) as f64;
                    let dd = d as f64;
                    let count = match target {
                        TargetKind::Cases => cum(0),
                        TargetKind::Deaths => cum(1),
                        TargetKind::Active => active_oracle(days, d) as f64,
                    };
                    let ln_or = |v: f64, fill: f64| if v == 0.0 { fill.ln() } else { v.ln() };
                    match kind {
                        TimeSeriesCumulative => (with(&[bands[0], bands[1], bands[2], dd]), vec![count]),
                        TimeSeriesFirstDay => (with(&[bands[0], bands[1], bands[2], fd_total, dd]), vec![count]),
                        TimeSeriesPast7 => (
                            with(&[bands[0], bands[1], bands[2], fd_total, mean7_oracle(days, d), dd]),
                            vec![count],
                        ),
                        TimeSeriesLogCases => {
                            (with(&[bands[0], bands[1], bands[2], fd_total, dd]), vec![ln_or(count, 1.0)])
                        }
                        TimeSeriesLogMidAge => (with(&[bands[1], fd_mid, dd]), vec![ln_or(cum(4), 1.0)]),
                        RelativeProportions => {
                            let fill = total(days, 0, fd_total as usize) as f64 / pop;
                            (
                                with(&[bands[0] / pop, bands[1] / pop, fd_total, dd]),
                                vec![ln_or(count / pop, fill)],
                            )
                        }
                        RelativeMidAge => {
                            let fill = total(days, 4, fd_mid as usize) as f64 / pop;
                            (with(&[bands[1] / pop, fd_mid, dd]), vec![ln_or(cum(4) / pop, fill)])
                        }
                        AccumulatedAgeGroups | AccumulatedInfectedAges => unreachable!(),
                    }
                })
                .collect()
        }
    }
}

fn check_design(strategy: &FeatureStrategy) {
    let (rows, series) = read_fixture();
    let d = build_design(&panel(), strategy).unwrap();
    let mut expected = Vec::new();
    for row in &rows {
        for (x, y) in design_oracle(strategy.kind, strategy.target, row, &series[&row.id]) {
            expected.push((row.id.clone(), x, y));
        }
    }
    assert_eq!(d.len(), expected.len(), "{}", strategy.kind);
    assert_eq!(d.feature_dim(), strategy.feature_names().len());
    for (i, (id, x, y)) in expected.iter().enumerate() {
        assert_eq!(d.tags[i].district.as_deref(), Some(id.as_str()));
        let got_x = d.features.row(i);
        let got_y = d.targets.row(i);
        assert_eq!(got_x.len(), x.len(), "{} row {i}", strategy.kind);
        assert_eq!(got_y.len(), y.len(), "{} row {i}", strategy.kind);
        for (g, e) in got_x.iter().zip(x).chain(got_y.iter().zip(y)) {
            assert!(close(*g, *e), "{} row {i} ({id}): {got_x:?} {got_y:?} vs {x:?} {y:?}", strategy.kind);
        }
    }
}

#[test]
fn every_strategy_matches_its_oracle() {
    for kind in StrategyKind::ALL {
        check_design(&FeatureStrategy::new(kind));
    }
    check_design(&FeatureStrategy::new(StrategyKind::AccumulatedInfectedAges).with_target(TargetKind::Deaths));
    check_design(&FeatureStrategy::new(StrategyKind::AccumulatedAgeGroups).with_target(TargetKind::Deaths));
    check_design(&FeatureStrategy::new(StrategyKind::TimeSeriesFirstDay).with_target(TargetKind::Deaths));
}

#[test]
fn integer_features_are_exact() {
    let (rows, series) = read_fixture();
    let d = build_design(&panel(), &FeatureStrategy::new(StrategyKind::TimeSeriesFirstDay)).unwrap();
    let mut i = 0;
    for row in &rows {
        let days = &series[&row.id];
        let fd = first_day_oracle(days, 0, row.pop) as f64;
        for day in 0..days.len() {
            let x = d.features.row(i);
            assert_eq!(&x[2..], &[row.bands[0] as f64, row.bands[1] as f64, row.bands[2] as f64, fd, day as f64]);
            assert_eq!(d.targets.get(i, 0), total(days, 0, day) as f64);
            i += 1;
        }
    }
}
