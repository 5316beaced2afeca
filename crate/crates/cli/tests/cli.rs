use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use branchnet::features::{build_design, ingest_panel, FeatureStrategy, StrategyKind};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

fn branchnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchnet")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}

fn gen_panel(dir: &Path, extra: &[&str]) -> (String, String) {
    let mut args = vec!["gen", "panel", "--seed", "2", "--out", s(dir)];
    args.extend_from_slice(extra);
    let o = branchnet(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (s(&dir.join("districts.csv")).to_string(), s(&dir.join("series.csv")).to_string())
}

#[test]
fn gen_1d_writes_split_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let o = branchnet(&["gen", "1d", "--fraction", "0.7", "--seed", "1", "--out", s(&d)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(lines(&d.join("train.csv")), 1601);
    assert_eq!(lines(&d.join("test.csv")), 401);
    let header = std::fs::read_to_string(d.join("train.csv")).unwrap();
    assert!(header.starts_with("x,y,branch"), "{}", &header[..20]);
    assert!(d.join("mixture.json").is_file());
}

#[test]
fn invalid_fraction_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = branchnet(&["gen", "1d", "--fraction", "1.5", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("[0, 1]"), "{}", stderr(&o));
}

#[test]
fn unknown_arguments_exit_2() {
    assert_eq!(code(&branchnet(&["gen", "3d"])), 2);
    assert_eq!(code(&branchnet(&["train", "--preset", "paper-3d"])), 2);
    assert_eq!(code(&branchnet(&["compare-losses", "--losses", "l2"])), 2);
    assert_eq!(code(&branchnet(&["--help"])), 0);
}

#[test]
fn gen_panel_writes_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    let (districts, series) = gen_panel(&dir, &["--effect", "0", "--districts", "40", "--days", "80"]);
    let dtext = std::fs::read_to_string(&districts).unwrap();
    assert!(dtext.starts_with("id,population,area_km2,income,pop_band1,pop_band2,pop_band3,label\n"));
    assert_eq!(dtext.lines().count(), 41);
    let stext = std::fs::read_to_string(&series).unwrap();
    assert!(stext.starts_with("id,day,new_cases,new_deaths,new_recoveries"));
    assert_eq!(stext.lines().count(), 1 + 40 * 80);
    assert!(dir.join("panel.json").is_file());
}

#[test]
fn missing_dataset_path_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = branchnet(&["train", "--data", s(&tmp.path().join("nowhere")), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
    let o = branchnet(&["correlate", "--districts", "nope.csv", "--series", "nope.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_1d_writes_model_trace_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let o = branchnet(&["train", "--preset", "paper-1d", "--epochs", "5", "--seed", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["model.json", "loss_trace.csv", "predictions.csv", "summary.json", "prediction.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(lines(&out.join("loss_trace.csv")), 1 + 10);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["preset"], "paper-1d");
    assert!(summary["final_loss"].as_f64().unwrap() < summary["initial_loss"].as_f64().unwrap());
    let model = branchnet::TrainedModel::load(out.join("model.json")).unwrap();
    assert_eq!(model.config.seed, 1);
    assert!(std::fs::read_to_string(out.join("prediction.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn train_2d_writes_slice_and_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let o = branchnet(&["gen", "2d", "--desk", "--samples", "2000", "--out", s(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = tmp.path().join("t");
    let o = branchnet(&["train", "--data", s(&data), "--epochs", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("slice.svg").is_file());
    assert!(out.join("surface.svg").is_file());
    assert!(std::fs::read_to_string(out.join("summary.json")).unwrap().contains("paper-2d"));
}

#[test]
fn train_time_series_writes_one_plot_per_district() {
    let tmp = tempfile::tempdir().unwrap();
    let (districts, series) = gen_panel(&tmp.path().join("p"), &["--districts", "8", "--days", "40"]);
    let out = tmp.path().join("t");
    let o = branchnet(&[
        "train", "--desk", "--districts", &districts, "--series", &series, "--epochs", "1", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(out.join("units")).unwrap().count(), 8);
    assert_eq!(lines(&out.join("loss_trace.csv")), 1 + 3);
}

#[test]
fn detect_writes_report_and_unit_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let (districts, series) = gen_panel(&tmp.path().join("p"), &["--districts", "12", "--days", "40"]);
    let out = tmp.path().join("r");
    let o = branchnet(&[
        "detect", "--desk", "--districts", &districts, "--series", &series, "--epochs", "1", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 6);
    let decision = report["decision"].as_str().unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), decision);
    assert!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains(decision));
    assert_eq!(std::fs::read_dir(out.join("units")).unwrap().count(), 12);
}

#[test]
fn detect_without_b_units_names_the_empty_class() {
    let tmp = tempfile::tempdir().unwrap();
    let (districts, series) = gen_panel(&tmp.path().join("p"), &["--districts", "8", "--days", "30"]);
    let relabeled: String = std::fs::read_to_string(&districts)
        .unwrap()
        .lines()
        .map(|l| match l.strip_suffix(",B") {
            Some(head) => format!("{head},A\n"),
            None => format!("{l}\n"),
        })
        .collect();
    std::fs::write(&districts, relabeled).unwrap();
    let o = branchnet(&["detect", "--districts", &districts, "--series", &series, "--out", s(&tmp.path().join("r"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("partition class B empty"), "{}", stderr(&o));
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn correlate_fixture_matches_pearson_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let (d, s_) = (format!("{FIXTURE}/districts.csv"), format!("{FIXTURE}/series.csv"));
    let o = branchnet(&["correlate", "--districts", &d, "--series", &s_, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (panel, _) = ingest_panel(&d, &s_).unwrap();
    let design = build_design(&panel, &FeatureStrategy::new(StrategyKind::AccumulatedAgeGroups)).unwrap();
    let mut cols: Vec<Vec<f64>> = (0..design.feature_dim()).map(|c| design.features.column(c)).collect();
    cols.push(design.targets.column(0));

    let text = std::fs::read_to_string(out.join("correlation.csv")).unwrap();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').skip(1).collect();
    assert_eq!(header, ["income", "density", "pop_0_30", "pop_30_65", "pop_65_plus", "total_cases"]);
    for (i, line) in rows.enumerate() {
        for (j, v) in line.split(',').skip(1).enumerate() {
            let got: f64 = v.parse().unwrap();
            assert!((got - pearson(&cols[i], &cols[j])).abs() <= 1e-12, "({i}, {j})");
        }
    }
    let svg = std::fs::read_to_string(out.join("heatmap.svg")).unwrap();
    assert!(svg.contains("total_cases") && svg.contains(">-1<") && svg.contains(">1<"));
}

#[test]
fn correlate_single_district_needs_two_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let keep = |f: &str| -> String {
        let text = std::fs::read_to_string(format!("{FIXTURE}/{f}")).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        std::iter::once(header)
            .chain(lines.filter(|l| l.starts_with("Aland,")))
            .map(|l| format!("{l}\n"))
            .collect()
    };
    let d = tmp.path().join("districts.csv");
    let se = tmp.path().join("series.csv");
    std::fs::write(&d, keep("districts.csv")).unwrap();
    std::fs::write(&se, keep("series.csv")).unwrap();
    let o = branchnet(&["correlate", "--districts", s(&d), "--series", s(&se), "--out", s(&tmp.path().join("c"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("≥ 2 rows required"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = branchnet(&["gen", "1d", "--out", s(&blocker.join("sub"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let ro = tmp.path().join("ro");
        std::fs::create_dir(&ro).unwrap();
        std::fs::set_permissions(&ro, std::fs::Permissions::from_mode(0o555)).unwrap();
        // privileged users can write anyway; only check when the mode is enforced
        if std::fs::write(ro.join("probe"), "x").is_err() {
            let o = branchnet(&["gen", "1d", "--out", s(&ro)]);
            assert_eq!(code(&o), 1, "{}", stderr(&o));
        }
    }
}

#[test]
fn output_path_that_is_a_file_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("file");
    std::fs::write(&f, "x").unwrap();
    let o = branchnet(&["gen", "1d", "--out", s(&f)]);
    assert_eq!(code(&o), 2);
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        } else {
            out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn seeded_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("gen", vec!["gen", "2d", "--desk", "--seed", "9", "--samples", "500"]),
        ("panel", vec!["gen", "panel", "--seed", "9", "--districts", "6", "--days", "30"]),
        ("compare", vec!["compare-losses", "--seed", "9", "--epochs", "2"]),
    ] {
        let (a, b) = (tmp.path().join(format!("{name}a")), tmp.path().join(format!("{name}b")));
        for dir in [&a, &b] {
            let mut full = args.clone();
            full.extend(["--out", s(dir)]);
            let o = branchnet(&full);
            assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        }
        let (ta, tb) = (tree(&a), tree(&b));
        assert!(!ta.is_empty());
        assert!(ta == tb, "{name} outputs differ");
    }
}

#[test]
fn compare_losses_reports_each_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = branchnet(&["compare-losses", "--losses", "mse,huber:2", "--epochs", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(v["fraction_first"], 0.5);
    let summaries = v["summaries"].as_array().unwrap();
    assert_eq!(summaries.len(), 2);
    assert_eq!(summaries[1]["loss"]["delta"], 2.0);
    assert_eq!(summaries[0]["variance_epochs"], 4);
    assert!(out.join("compare.svg").is_file());
    assert!(std::fs::read_to_string(out.join("compare.txt")).unwrap().contains("huber"));
}

#[test]
fn config_file_is_merged_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&branchnet(&["gen", "1d", "--samples", "200", "--out", s(&data)])), 0);
    let cfg = tmp.path().join("exp.json");
    std::fs::write(&cfg, r#"{"preset": "paper-1d", "data": "data", "out": "result"}"#).unwrap();
    let o = branchnet(&["train", "--config", s(&cfg), "--epochs", "1", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = branchnet::TrainedModel::load(tmp.path().join("result/model.json")).unwrap();
    assert_eq!((model.config.seed, model.config.epochs), (4, 1));

    std::fs::write(&cfg, r#"{"preset": "paper-1d", "epochs": 3}"#).unwrap();
    let o = branchnet(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
}
