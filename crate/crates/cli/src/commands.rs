use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use branchnet::branchclass::{
    classify_by_branch, compare_losses, evaluation_grid, partition_from_tags, run_protocol_with_models, LossSummary,

};
use branchnet::features::{
    build_design, correlation_matrix, generate_synthetic_panel, ingest_panel, FeatureStrategy, Panel,
    SyntheticPanelConfig, LARGE_CITIES,
};
use branchnet::network::{self, EpochReport};
use branchnet::setvalued::{generate_mixture, BranchSpec, MixtureConfig};
use branchnet::{Dataset, Matrix, NetworkConfig, Population, TrainedModel};
use serde::Serialize;

use crate::args::{Command, CompareArgs, CorrelateArgs, DetectArgs, GenCommand, MixtureArgs, PanelArgs, PanelGenArgs, TrainArgs};
use crate::config::{ExperimentConfig, PanelPaths, Preset};
use crate::svg::{self, Mark, Plot, PALETTE};
use crate::{Cli, CliError, UsageExt};

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(anyhow!(msg.into()))
}

/// Settings shared by every command after merging flags over the config file.
struct Ctx {
    config: ExperimentConfig,
    seed: u64,
    seed_flag: bool,
    out: PathBuf,
    desk: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> CliResult<Self> {
        let config = match &cli.config {
            Some(p) => ExperimentConfig::load(p).usage()?,
            None => ExperimentConfig::default(),
        };
        let seed = cli
            .seed
            .or_else(|| config.network.as_ref().map(|n| n.seed))
            .or_else(|| config.mixture.as_ref().map(|m| m.seed))
            .unwrap_or(0);
        let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        if out.exists() && !out.is_dir() {
            return Err(usage(format!("output path {} is not a directory", out.display())));
        }
        Ok(Self {
            config,
            seed,
            seed_flag: cli.seed.is_some(),
            out,
            desk: cli.desk,
        })
    }

    fn out_dir(&self) -> CliResult<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The config's network when given, else the preset's, with flag overrides.
    fn network(&self, preset: Preset, input_dim: usize, output_dim: usize, epochs: Option<usize>) -> CliResult<NetworkConfig> {
        let mut cfg = match &self.config.network {
            Some(n) => n.clone(),
            None => preset.network(input_dim, output_dim, self.desk, self.seed),
        };
        if self.seed_flag {
            cfg.seed = self.seed;
        }
        if let Some(e) = epochs {
            cfg.epochs = e;
        }
        if cfg.input_dim != input_dim || cfg.output_dim() != output_dim {
            return Err(usage(format!(
                "network expects {} input(s) and {} output(s), the data has {input_dim} and {output_dim}",
                cfg.input_dim,
                cfg.output_dim()
            )));
        }
        cfg.validate().usage()?;
        Ok(cfg)
    }

    fn panel_paths(&self, a: &PanelArgs) -> CliResult<Option<PanelPaths>> {
        match (&a.districts, &a.series) {
            (Some(d), Some(s)) => Ok(Some(PanelPaths {
                districts: d.clone(),
                series: s.clone(),
            })),
            (None, None) => Ok(self.config.panel.clone()),
            _ => Err(usage("--districts and --series must be given together")),
        }
    }

    fn strategy(&self, a: &PanelArgs, fallback: FeatureStrategy) -> CliResult<FeatureStrategy> {
        let mut s = match a.strategy {
            Some(kind) => FeatureStrategy::new(kind),
            None => self.config.strategy.clone().unwrap_or(fallback),
        };
        if let Some(t) = a.target {
            s.target = t;
        }
        if a.exclude_large_cities {
            s.exclude.extend(LARGE_CITIES.iter().map(|c| c.to_string()));
        }
        s.validate().usage()?;
        Ok(s)
    }
}

fn check_file(p: &Path) -> CliResult {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{} does not exist", p.display())))
    }
}

fn load_panel(paths: &PanelPaths) -> CliResult<Panel> {
    check_file(&paths.districts)?;
    check_file(&paths.series)?;
    let (panel, report) = ingest_panel(&paths.districts, &paths.series)?;
    if !report.rejected.is_empty() {
        log::warn!("{} input rows rejected", report.rejected.len());
    }
    Ok(panel)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, s: &str) -> CliResult {
    std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Gen { what } => match what {
            GenCommand::OneD(m) => gen_mixture(&ctx, Preset::Paper1d, m),
            GenCommand::TwoD(m) => gen_mixture(&ctx, Preset::Paper2d, m),
            GenCommand::Panel(p) => gen_panel(&ctx, p),
        },
        Command::Train(t) => train(&ctx, t),
        Command::Detect(d) => detect(&ctx, d),
        Command::Correlate(c) => correlate(&ctx, c),
        Command::CompareLosses(c) => compare(&ctx, c),
    }
}

fn mixture_config(ctx: &Ctx, preset: Preset, fraction: Option<f64>, default_fraction: f64) -> CliResult<MixtureConfig> {
    let mut m = match &ctx.config.mixture {
        Some(m) => m.clone(),
        None => preset
            .mixture(default_fraction, ctx.desk, ctx.seed)
            .ok_or_else(|| usage(format!("preset {preset} has no mixture")))?,
    };
    if let Some(f) = fraction {
        m.fraction_first = f;
    }
    if ctx.seed_flag {
        m.seed = ctx.seed;
    }
    Ok(m)
}

fn gen_mixture(ctx: &Ctx, preset: Preset, a: &MixtureArgs) -> CliResult {
    let mut m = mixture_config(ctx, preset, a.fraction, 0.7)?;
    if let Some(n) = a.samples {
        m.n_samples = n;
    }
    if let Some(s) = a.noise {
        m.noise_stddev = s;
    }
    m.validate().usage()?;
    let (train, test) = generate_mixture(&m)?;
    ctx.out_dir()?;
    train.save_csv(ctx.path("train.csv"))?;
    test.save_csv(ctx.path("test.csv"))?;
    write_json(&ctx.path("mixture.json"), &m)?;
    log::info!("wrote {} train and {} test rows to {}", train.len(), test.len(), ctx.out.display());
    Ok(())
}

fn gen_panel(ctx: &Ctx, a: &PanelGenArgs) -> CliResult {
    let cfg = SyntheticPanelConfig::new(a.districts, a.days, a.effect, a.label_fraction, ctx.seed);
    cfg.validate().usage()?;
    let panel = generate_synthetic_panel(&cfg)?;
    ctx.out_dir()?;
    panel.save(ctx.path("districts.csv"), ctx.path("series.csv"))?;
    write_json(&ctx.path("panel.json"), &cfg)?;
    Ok(())
}

fn train_logged(cfg: &NetworkConfig, data: &Dataset) -> CliResult<(TrainedModel, Vec<EpochReport>)> {
    let mut reports = Vec::new();
    let model = network::train_with_observer(cfg, data, |r, _| reports.push(*r))?;
    Ok((model, reports))
}

fn loss_trace_csv(reports: &[EpochReport]) -> String {
    let mut s = String::from("epoch,schedule_step,learn_rate,train_loss,validation_loss\n");
    for r in reports {
        let v = r.validation_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{v}", r.epoch, r.schedule_step, r.learn_rate, r.train_loss);
    }
    s
}

#[derive(Serialize)]
struct TrainSummary {
    preset: Preset,
    rows: usize,
    initial_loss: f64,
    final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    majority_branch: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    near_first: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    near_second: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    midpoint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assigned_counts: Option<[usize; 2]>,
}

fn train(ctx: &Ctx, a: &TrainArgs) -> CliResult {
    let panel_paths = ctx.panel_paths(&a.panel)?;
    let data_dir = a.data.clone().or_else(|| ctx.config.data.clone());
    let preset = a.preset.or(ctx.config.preset);
    if let Some(paths) = panel_paths {
        if data_dir.is_some() {
            return Err(usage("give either --data or a panel, not both"));
        }
        let preset = preset.unwrap_or(Preset::PaperTimeseries);
        if !preset.uses_panel() {
            return Err(usage(format!("preset {preset} trains on a mixture, not a panel")));
        }
        return train_panel(ctx, a, preset, &paths);
    }
    let (train, test, preset) = match data_dir {
        Some(dir) => {
            let (tp, sp) = (dir.join("train.csv"), dir.join("test.csv"));
            check_file(&tp)?;
            check_file(&sp)?;
            let train = Dataset::load_csv(&tp, 1).usage()?;
            let test = Dataset::load_csv(&sp, 1).usage()?;
            let preset = preset.unwrap_or(if train.feature_dim() == 2 { Preset::Paper2d } else { Preset::Paper1d });
            (train, test, preset)
        }
        None => {
            let preset = preset.unwrap_or(Preset::Paper1d);
            if preset.uses_panel() {
                return Err(usage(format!("preset {preset} needs --districts and --series")));
            }
            let m = mixture_config(ctx, preset, a.fraction, 0.7)?;
            m.validate().usage()?;
            let (train, test) = generate_mixture(&m)?;
            (train, test, preset)
        }
    };
    if preset.uses_panel() {
        return Err(usage(format!("preset {preset} needs --districts and --series")));
    }
    let cfg = ctx.network(preset, train.feature_dim(), 1, a.epochs)?;
    let (model, reports) = train_logged(&cfg, &train)?;

    let branches = match train.feature_dim() {
        1 => Some(BranchSpec::paper_1d()),
        2 => Some(BranchSpec::paper_2d()),
        _ => None,
    };
    let in_domain = |d: &Dataset, b: &[BranchSpec; 2]| d.features.iter_rows().all(|x| b[0].domain.contains(x));
    let assignment = match &branches {
        Some(b) if !test.is_empty() && in_domain(&test, b) => Some(classify_by_branch(&model, &test, b)?),
        _ => None,
    };
    let summary = TrainSummary {
        preset,
        rows: train.len(),
        initial_loss: reports.first().map_or(f64::NAN, |r| r.train_loss),
        final_loss: reports.last().map_or(f64::NAN, |r| r.train_loss),
        test_loss: (!test.is_empty()).then(|| model.mean_loss(&test.features, &test.targets)).transpose()?,
        majority_branch: assignment.as_ref().map(|a| a.majority_branch),
        near_first: assignment.as_ref().map(|a| a.proximity.near_first),
        near_second: assignment.as_ref().map(|a| a.proximity.near_second),
        midpoint: assignment.as_ref().map(|a| a.proximity.midpoint),
        assigned_counts: assignment.as_ref().map(|a| a.counts),
    };

    let pred = model.predict_batch(&test.features)?;
    let out = ctx.out_dir()?;
    model.save(out.join("model.json"))?;
    write_text(&out.join("loss_trace.csv"), &loss_trace_csv(&reports))?;
    let mut pred_csv = String::new();
    let _ = writeln!(pred_csv, "{},target,prediction,branch", test.feature_names.join(","));
    for i in 0..test.len() {
        let x: Vec<String> = test.features.row(i).iter().map(f64::to_string).collect();
        let b = test.tags[i].branch.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(pred_csv, "{},{},{},{b}", x.join(","), test.targets.get(i, 0), pred.get(i, 0));
    }
    write_text(&out.join("predictions.csv"), &pred_csv)?;
    write_json(&out.join("summary.json"), &summary)?;
    match train.feature_dim() {
        1 => plot_1d(&model, &test, out)?,
        2 => plot_2d(&model, &test, out)?,
        _ => {}
    }
    Ok(())
}

fn by_branch(d: &Dataset, id: Option<u8>, pick: impl Fn(&[f64], f64) -> Option<(f64, f64)>) -> Vec<(f64, f64)> {
    (0..d.len())
        .filter(|&i| d.tags[i].branch == id)
        .filter_map(|i| pick(d.features.row(i), d.targets.get(i, 0)))
        .collect()
}

fn plot_1d(model: &TrainedModel, test: &Dataset, out: &Path) -> CliResult {
    let xs: Vec<f64> = (0..=240).map(|i| -6.0 + 12.0 * i as f64 / 240.0).collect();
    let pred = model.predict_batch(&Matrix::new(xs.len(), 1, xs.clone())?)?;
    let mut p = Plot::new("test data and prediction", "x", "y");
    for (k, id) in [Some(1u8), Some(2), None].into_iter().enumerate() {
        let pts = by_branch(test, id, |x, y| Some((x[0], y)));
        if !pts.is_empty() {
            let name = id.map_or("untagged".to_string(), |b| format!("branch {b}"));
            p.add(name, PALETTE[k], Mark::Points, pts);
        }
    }
    p.add("prediction", PALETTE[3], Mark::Line, xs.iter().copied().zip(pred.data().iter().copied()).collect());
    p.save(&out.join("prediction.svg")).context("cannot write prediction.svg")?;
    Ok(())
}

/// Slice at a fixed y plus a color-mapped view of the predicted surface.
fn plot_2d(model: &TrainedModel, test: &Dataset, out: &Path) -> CliResult {
    const SLICE_Y: f64 = 0.75;
    let branches = BranchSpec::paper_2d();
    let xs: Vec<f64> = (0..=120).map(|i| -1.5 + 3.0 * i as f64 / 120.0).collect();
    let grid: Vec<f64> = xs.iter().flat_map(|x| [*x, SLICE_Y]).collect();
    let pred = model.predict_batch(&Matrix::new(xs.len(), 2, grid)?)?;
    let mut p = Plot::new(format!("slice at y = {SLICE_Y}"), "x", "z");
    for (k, id) in [Some(1u8), Some(2)].into_iter().enumerate() {
        let pts = by_branch(test, id, |x, z| ((x[1] - SLICE_Y).abs() < 0.05).then_some((x[0], z)));
        p.add(format!("branch {} (|y - {SLICE_Y}| < 0.05)", k + 1), PALETTE[k], Mark::Points, pts);
    }
    for (k, b) in branches.iter().enumerate() {
        let line = xs.iter().map(|x| (*x, b.eval(&[*x, SLICE_Y]).unwrap_or(f64::NAN))).collect();
        p.add(format!("f{}", k + 1), PALETTE[4 + k], Mark::Line, line);
    }
    p.add("prediction", PALETTE[3], Mark::Line, xs.iter().copied().zip(pred.data().iter().copied()).collect());
    p.save(&out.join("slice.svg")).context("cannot write slice.svg")?;

    let grid = evaluation_grid(&branches)?;
    let z = model.predict_batch(&grid)?;
    let pts: Vec<(f64, f64, f64)> = grid.iter_rows().zip(z.data()).map(|(x, v)| (x[0], x[1], *v)).collect();
    write_text(&out.join("surface.svg"), &svg::color_scatter("predicted surface", "x", "y", &pts, 0.0, 1.0))?;
    Ok(())
}

fn design_for(ctx: &Ctx, a: &PanelArgs, fallback: FeatureStrategy) -> CliResult<(Dataset, FeatureStrategy)> {
    let paths = ctx
        .panel_paths(a)?
        .ok_or_else(|| usage("a panel is required: pass --districts and --series"))?;
    let strategy = ctx.strategy(a, fallback)?;
    let panel = load_panel(&paths)?;
    Ok((build_design(&panel, &strategy)?, strategy))
}

fn safe_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Row indices per unit, in first-appearance order.
fn units_of(d: &Dataset) -> Vec<(String, Vec<usize>)> {
    let mut order: Vec<(String, Vec<usize>)> = Vec::new();
    let mut pos: BTreeMap<String, usize> = BTreeMap::new();
    for (i, t) in d.tags.iter().enumerate() {
        let u = t.district.clone().unwrap_or_default();
        let k = *pos.entry(u.clone()).or_insert_with(|| {
            order.push((u, Vec::new()));
            order.len() - 1
        });
        order[k].1.push(i);
    }
    order
}

fn x_of(d: &Dataset, i: usize) -> f64 {
    d.tags[i].day.map_or(i as f64, f64::from)
}

fn pop_color(p: Option<Population>) -> &'static str {
    match p {
        Some(Population::B) => PALETTE[1],
        _ => PALETTE[0],
    }
}

fn train_panel(ctx: &Ctx, a: &TrainArgs, preset: Preset, paths: &PanelPaths) -> CliResult {
    let strategy = ctx.strategy(&a.panel, preset.strategy().expect("panel presets have a strategy"))?;
    let panel = load_panel(paths)?;
    let d = build_design(&panel, &strategy)?;
    let cfg = ctx.network(preset, d.feature_dim(), d.target_dim(), a.epochs)?;
    let (model, reports) = train_logged(&cfg, &d)?;
    let pred = model.predict_batch(&d.features)?;

    let out = ctx.out_dir()?;
    model.save(out.join("model.json"))?;
    write_text(&out.join("loss_trace.csv"), &loss_trace_csv(&reports))?;
    let mut csv = String::from("district,day,output,target,prediction\n");
    for i in 0..d.len() {
        for (k, name) in d.target_names.iter().enumerate() {
            let t = &d.tags[i];
            let day = t.day.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{},{day},{name},{},{}",
                t.district.as_deref().unwrap_or(""),
                d.targets.get(i, k),
                pred.get(i, k)
            );
        }
    }
    write_text(&out.join("predictions.csv"), &csv)?;
    write_json(
        &out.join("summary.json"),
        &TrainSummary {
            preset,
            rows: d.len(),
            initial_loss: reports.first().map_or(f64::NAN, |r| r.train_loss),
            final_loss: reports.last().map_or(f64::NAN, |r| r.train_loss),
            test_loss: None,
            majority_branch: None,
            near_first: None,
            near_second: None,
            midpoint: None,
            assigned_counts: None,
        },
    )?;

    let ylabel = &d.target_names[0];
    if strategy.kind.is_time_series() {
        let dir = out.join("units");
        std::fs::create_dir_all(&dir)?;
        for (unit, rows) in units_of(&d) {
            let pop = d.tags[rows[0]].population_label;
            let mut p = Plot::new(format!("district {unit}"), "day", ylabel.clone());
            let label = pop.map_or("data".to_string(), |p| format!("population {p}"));
            p.add(label, pop_color(pop), Mark::Points, rows.iter().map(|&i| (x_of(&d, i), d.targets.get(i, 0))).collect());
            p.add("prediction", PALETTE[2], Mark::Line, rows.iter().map(|&i| (x_of(&d, i), pred.get(i, 0))).collect());
            p.save(&dir.join(format!("{}.svg", safe_name(&unit))))?;
        }
    } else {
        let mut p = Plot::new("prediction against target", format!("target {ylabel}"), "prediction");
        for pop in [Population::A, Population::B] {
            let pts: Vec<(f64, f64)> = (0..d.len())
                .filter(|&i| d.tags[i].population_label == Some(pop))
                .map(|i| (d.targets.get(i, 0), pred.get(i, 0)))
                .collect();
            if !pts.is_empty() {
                p.add(format!("population {pop}"), pop_color(Some(pop)), Mark::Points, pts);
            }
        }
        p.save(&out.join("prediction.svg"))?;
    }
    Ok(())
}

fn detect(ctx: &Ctx, a: &DetectArgs) -> CliResult {
    let preset = a.preset.or(ctx.config.preset).unwrap_or(Preset::PaperTimeseries);
    let fallback = preset
        .strategy()
        .ok_or_else(|| usage(format!("preset {preset} does not train on a panel")))?;
    let (d, strategy) = design_for(ctx, &a.panel, fallback)?;
    let partition = partition_from_tags(&d)?;
    let mut pcfg = ctx.config.protocol.clone().unwrap_or_default();
    pcfg.log_target = strategy.log_target;
    if let Some(b) = a.accuracy_band {
        pcfg.accuracy_band = b;
    }
    pcfg.validate().usage()?;
    let cfg = ctx.network(preset, d.feature_dim(), d.target_dim(), a.epochs)?;
    let (report, models) = run_protocol_with_models(&cfg, &d, &partition, &pcfg)?;
    let preds = models
        .iter()
        .map(|m| m.predict_batch(&d.features))
        .collect::<Result<Vec<_>, _>>()?;

    let out = ctx.out_dir()?;
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &report.to_table())?;
    let dir = out.join("units");
    std::fs::create_dir_all(&dir)?;
    for (unit, rows) in units_of(&d) {
        let pop = partition[&unit];
        let mut p = Plot::new(format!("district {unit} (population {pop})"), "day", d.target_names[0].clone());
        p.add("target", pop_color(Some(pop)), Mark::Points, rows.iter().map(|&i| (x_of(&d, i), d.targets.get(i, 0))).collect());
        for (k, name) in ["A network", "B network", "joint network"].into_iter().enumerate() {
            let line = rows.iter().map(|&i| (x_of(&d, i), preds[k].get(i, 0))).collect();
            p.add(name, PALETTE[2 + k], Mark::Line, line);
        }
        p.save(&dir.join(format!("{}.svg", safe_name(&unit))))?;
    }
    println!("{}", report.decision.name());
    Ok(())
}

fn correlate(ctx: &Ctx, a: &CorrelateArgs) -> CliResult {
    let fallback = Preset::PaperAccumulated.strategy().expect("accumulated preset has a strategy");
    let (d, strategy) = design_for(ctx, &a.panel, fallback)?;
    let c = correlation_matrix(&d)?;
    let out = ctx.out_dir()?;
    c.save_csv(out.join("correlation.csv"))?;
    let title = format!("correlation, {} strategy", strategy.kind);
    write_text(&out.join("heatmap.svg"), &svg::heatmap(&title, &c.labels, |i, j| c.matrix.get(i, j)))?;
    Ok(())
}

#[derive(Serialize)]
struct CompareReport<'a> {
    fraction_first: Option<f64>,
    summaries: &'a [LossSummary],
}

fn compare(ctx: &Ctx, a: &CompareArgs) -> CliResult {
    let data_dir = a.data.clone().or_else(|| ctx.config.data.clone());
    let preset = a.preset.or(ctx.config.preset);
    let (train, fraction) = match data_dir {
        Some(dir) => {
            let p = dir.join("train.csv");
            check_file(&p)?;
            (Dataset::load_csv(&p, 1).usage()?, None)
        }
        None => {
            let preset = preset.unwrap_or(Preset::Paper1d);
            let m = mixture_config(ctx, preset, a.fraction, 0.5)?;
            m.validate().usage()?;
            (generate_mixture(&m)?.0, Some(m.fraction_first))
        }
    };
    let (preset, branches) = match train.feature_dim() {
        1 => (preset.unwrap_or(Preset::Paper1d), BranchSpec::paper_1d()),
        2 => (preset.unwrap_or(Preset::Paper2d), BranchSpec::paper_2d()),
        n => return Err(usage(format!("loss comparison needs 1 or 2 feature columns, got {n}"))),
    };
    if a.losses.is_empty() {
        return Err(usage("no losses to compare"));
    }
    let base = ctx.network(preset, train.feature_dim(), 1, a.epochs)?;
    let cfgs: Vec<NetworkConfig> = a
        .losses
        .iter()
        .map(|l| {
            let mut c = base.clone();
            c.loss = *l;
            c
        })
        .collect();
    let summaries = compare_losses(&train, &cfgs, &branches)?;

    let out = ctx.out_dir()?;
    write_json(&out.join("compare.json"), &CompareReport { fraction_first: fraction, summaries: &summaries })?;
    let mut table = format!(
        "{:<10} {:>12} {:>10} {:>11} {:>9} {:>12}\n",
        "loss", "final loss", "near f1", "near f2", "midpoint", "pred var"
    );
    for s in &summaries {
        let _ = writeln!(
            table,
            "{:<10} {:>12.4} {:>10.3} {:>11.3} {:>9.3} {:>12.4}",
            s.loss.name(),
            s.final_loss,
            s.proximity.near_first,
            s.proximity.near_second,
            s.proximity.midpoint,
            s.prediction_variance
        );
    }
    write_text(&out.join("compare.txt"), &table)?;
    if train.feature_dim() == 1 {
        let grid = evaluation_grid(&branches)?;
        let xs = grid.data();
        let mut p = Plot::new("grid predictions by loss", "x", "y");
        for (k, b) in branches.iter().enumerate() {
            p.add(format!("f{}", k + 1), PALETTE[k], Mark::Line, xs.iter().map(|x| (*x, b.eval(&[*x]).unwrap_or(f64::NAN))).collect());
        }
        for (k, s) in summaries.iter().enumerate() {
            p.add(s.loss.name(), PALETTE[(2 + k) % PALETTE.len()], Mark::Line, xs.iter().copied().zip(s.grid_predictions.iter().copied()).collect());
        }
        p.save(&out.join("compare.svg"))?;
    }
    print!("{table}");
    Ok(())
}
