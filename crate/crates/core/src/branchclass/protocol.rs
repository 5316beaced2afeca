use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Population};
use crate::error::{Error, Result};
use crate::network::{self, NetworkConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Largest mean relative error of a unit still counted as accurate.
    pub accuracy_band: f64,
    /// Mixture fraction from which the first branch is expected to win.
    pub majority_threshold: f64,
    /// Share of one population the other population's network must over-predict.
    pub min_over_fraction: f64,
    /// Share of the other population the first population's network must under-predict.
    pub min_under_fraction: f64,
    /// Share of each population its own network must predict accurately.
    pub min_own_accuracy: f64,
    /// Targets are logarithms; errors are computed after exponentiating.
    pub log_target: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            accuracy_band: 0.15,
            majority_threshold: 0.6,
            min_over_fraction: 0.6,
            min_under_fraction: 0.6,
            min_own_accuracy: 0.6,
            log_target: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.accuracy_band.is_nan() || self.accuracy_band <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "accuracy_band must be positive, got {}",
                self.accuracy_band
            )));
        }
        if !(self.majority_threshold > 0.5 && self.majority_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "majority_threshold must lie in (0.5, 1], got {}",
                self.majority_threshold
            )));
        }
        for (name, v) in [
            ("min_over_fraction", self.min_over_fraction),
            ("min_under_fraction", self.min_under_fraction),
            ("min_own_accuracy", self.min_own_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    A,
    B,
    Joint,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::A, NetworkKind::B, NetworkKind::Joint];

    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::A => "A",
            NetworkKind::B => "B",
            NetworkKind::Joint => "joint",
        }
    }

    fn own(p: Population) -> Self {
        match p {
            Population::A => NetworkKind::A,
            Population::B => NetworkKind::B,
        }
    }

    fn swapped(self) -> Self {
        match self {
            NetworkKind::A => NetworkKind::B,
            NetworkKind::B => NetworkKind::A,
            NetworkKind::Joint => NetworkKind::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub over: usize,
    pub under: usize,
    pub accurate: usize,
}

impl CellCounts {
    pub fn total(&self) -> usize {
        self.over + self.under + self.accurate
    }

    fn share(n: usize, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            n as f64 / total as f64
        }
    }

    pub fn over_share(&self) -> f64 {
        Self::share(self.over, self.total())
    }

    pub fn under_share(&self) -> f64 {
        Self::share(self.under, self.total())
    }

    pub fn accurate_share(&self) -> f64 {
        Self::share(self.accurate, self.total())
    }
}

/// One population evaluated under one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub network: NetworkKind,
    pub population: Population,
    pub counts: CellCounts,
    /// Mean over the population's units of their relative errors.
    pub mean_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub unit: String,
    pub population: Population,
    pub rows: usize,
    /// Signed relative error under the A, B and joint networks.
    pub relative_error: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    ClustersDetected,
    NoClusters,
    Inconclusive,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::ClustersDetected => "clusters_detected",
            Decision::NoClusters => "no_clusters",
            Decision::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalReport {
    pub config: ProtocolConfig,
    /// Cells in network-major order: A, B, joint, each over populations A, B.
    pub cells: Vec<CellReport>,
    pub units: Vec<UnitReport>,
    pub decision: Decision,
    /// The rule that produced the decision, in words.
    pub rule: String,
    pub note: String,
}

const BAND_NOTE: &str = "over/under/accurate use a numeric relative error band chosen for this tool";

impl CrossEvalReport {
    pub fn cell(&self, network: NetworkKind, population: Population) -> &CellReport {
        self.cells
            .iter()
            .find(|c| c.network == network && c.population == population)
            .expect("every network and population has a cell")
    }

    pub fn n_units(&self, population: Population) -> usize {
        self.units.iter().filter(|u| u.population == population).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width text table of the cells followed by the decision.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:<10} {:>6} {:>6} {:>9} {:>6} {:>14}",
            "network", "population", "units", "over", "accurate", "under", "mean rel err"
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:<8} {:<10} {:>6} {:>6} {:>9} {:>6} {:>14.4}",
                c.network.name(),
                c.population.as_str(),
                c.counts.total(),
                c.counts.over,
                c.counts.accurate,
                c.counts.under,
                c.mean_relative_error
            );
        }
        let _ = writeln!(s, "accuracy band: +/-{}", self.config.accuracy_band);
        let _ = writeln!(s, "decision: {} ({})", self.decision.name(), self.rule);
        let _ = writeln!(s, "note: {}", self.note);
        s
    }

    /// The same report with the population labels exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.cells {
            c.network = c.network.swapped();
            c.population = c.population.other();
        }
        out.cells.sort_by_key(|c| (c.network, c.population));
        for u in &mut out.units {
            u.population = u.population.other();
            u.relative_error.swap(0, 1);
        }
        out
    }
}

/// Unit labels read from the `district` and `population_label` tags.
pub fn partition_from_tags(panel: &Dataset) -> Result<BTreeMap<String, Population>> {
    let mut out = BTreeMap::new();
    for t in &panel.tags {
        let (Some(d), Some(p)) = (&t.district, t.population_label) else {
            return Err(Error::Protocol("every row needs district and population_label tags".into()));
        };
        if let Some(prev) = out.insert(d.clone(), p) {
            if prev != p {
                return Err(Error::Protocol(format!("unit {d} carries both labels")));
            }
        }
    }
    Ok(out)
}

fn classify(e: f64, band: f64) -> std::cmp::Ordering {
    if e > band {
        std::cmp::Ordering::Greater
    } else if e < -band {
        std::cmp::Ordering::Less
    } else {
        std::cmp::Ordering::Equal
    }
}

/// Signed error of a unit's predictions relative to its targets:
/// the sum of (prediction - target) over the sum of |target|.
///
/// A unit whose targets are all zero keeps the absolute error sum.
pub(super) fn relative_error(pred: &[f64], target: &[f64], log_target: bool) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, y) in pred.iter().zip(target) {
        let (p, y) = if log_target { (p.exp(), y.exp()) } else { (*p, *y) };
        num += p - y;
        den += y.abs();
    }
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Trains networks on population A, population B and all units with the same
/// config and seed, evaluates every unit under each, and decides whether the
/// hidden label splits the panel.
///
/// Clusters are detected when one population's network over-predicts the
/// other population while the other population's network under-predicts the
/// first, and both own networks predict their own units accurately.
/// The asymmetry without own accuracy is inconclusive.
pub fn run_hidden_feature_protocol(
    cfg: &NetworkConfig,
    panel: &Dataset,
    partition: &BTreeMap<String, Population>,
    pcfg: &ProtocolConfig,
) -> Result<CrossEvalReport> {
    run_protocol_with_models(cfg, panel, partition, pcfg).map(|(r, _)| r)
}

/// [`run_hidden_feature_protocol`] that also hands back the A, B and joint models.
pub fn run_protocol_with_models(
    cfg: &NetworkConfig,
    panel: &Dataset,
    partition: &BTreeMap<String, Population>,
    pcfg: &ProtocolConfig,
) -> Result<(CrossEvalReport, [TrainedModel; 3])> {
    pcfg.validate()?;
    let mut rows_of: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in panel.tags.iter().enumerate() {
        let Some(d) = t.district.as_deref() else {
            return Err(Error::Protocol(format!("row {i} has no unit id")));
        };
        if !partition.contains_key(d) {
            return Err(Error::Protocol(format!("unit {d} is missing from the partition")));
        }
        rows_of.entry(d).or_default().push(i);
    }
    for p in [Population::A, Population::B] {
        let n = rows_of.keys().filter(|u| partition[**u] == p).count();
        if n == 0 {
            return Err(Error::Protocol(format!("partition class {} empty", p.as_str())));
        }
        if n < 2 {
            return Err(Error::Protocol(format!(
                "partition class {} has {n} unit, at least 2 are needed",
                p.as_str()
            )));
        }
    }

    let in_class = |p: Population| {
        let idx: Vec<usize> = (0..panel.len())
            .filter(|&i| partition[panel.tags[i].district.as_deref().unwrap_or_default()] == p)
            .collect();
        panel.subset(&idx)
    };
    let data_a = in_class(Population::A);
    let data_b = in_class(Population::B);
    let models: Vec<TrainedModel> = std::thread::scope(|s| {
        let handles = [&data_a, &data_b, panel].map(|d| s.spawn(move || network::train(cfg, d)));
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect::<Result<Vec<_>>>()
    })?;
    let preds = models
        .iter()
        .map(|m| m.predict_batch(&panel.features))
        .collect::<Result<Vec<_>>>()?;

    let width = panel.target_dim();
    let mut units = Vec::with_capacity(rows_of.len());
    for (unit, rows) in &rows_of {
        let target: Vec<f64> = rows.iter().flat_map(|&i| panel.targets.row(i).to_vec()).collect();
        let mut errs = [0.0; 3];
        for (k, p) in preds.iter().enumerate() {
            let pred: Vec<f64> = rows.iter().flat_map(|&i| p.row(i).to_vec()).collect();
            debug_assert_eq!(pred.len(), rows.len() * width);
            errs[k] = relative_error(&pred, &target, pcfg.log_target);
        }
        units.push(UnitReport {
            unit: unit.to_string(),
            population: partition[*unit],
            rows: rows.len(),
            relative_error: errs,
        });
    }

    let mut cells = Vec::with_capacity(6);
    for (k, net) in NetworkKind::ALL.into_iter().enumerate() {
        for pop in [Population::A, Population::B] {
            let mut counts = CellCounts::default();
            let mut sum = 0.0;
            let mut n = 0usize;
            for u in units.iter().filter(|u| u.population == pop) {
                let e = u.relative_error[k];
                sum += e;
                n += 1;
                match classify(e, pcfg.accuracy_band) {
                    std::cmp::Ordering::Greater => counts.over += 1,
                    std::cmp::Ordering::Less => counts.under += 1,
                    std::cmp::Ordering::Equal => counts.accurate += 1,
                }
            }
            cells.push(CellReport {
                network: net,
                population: pop,
                counts,
                mean_relative_error: sum / n as f64,
            });
        }
    }

    let mut report = CrossEvalReport {
        config: pcfg.clone(),
        cells,
        units,
        decision: Decision::NoClusters,
        rule: String::new(),
        note: BAND_NOTE.into(),
    };
    let (decision, rule) = decide(&report, pcfg);
    report.decision = decision;
    report.rule = rule;
    let [a, b, joint]: [TrainedModel; 3] = models.try_into().expect("three models");
    Ok((report, [a, b, joint]))
}

fn decide(r: &CrossEvalReport, pcfg: &ProtocolConfig) -> (Decision, String) {
    // the `hi` network over-predicts `lo` units and the `lo` network under-predicts `hi` units
    let asym = |hi: Population, lo: Population| {
        r.cell(NetworkKind::own(hi), lo).counts.over_share() >= pcfg.min_over_fraction
            && r.cell(NetworkKind::own(lo), hi).counts.under_share() >= pcfg.min_under_fraction
    };
    let own = |p: Population| r.cell(NetworkKind::own(p), p).counts.accurate_share();
    let own_ok = own(Population::A) >= pcfg.min_own_accuracy && own(Population::B) >= pcfg.min_own_accuracy;
    let direction = if asym(Population::A, Population::B) {
        Some((Population::A, Population::B))
    } else if asym(Population::B, Population::A) {
        Some((Population::B, Population::A))
    } else {
        None
    };
    let own_text = format!(
        "own-network accuracy A {:.2}, B {:.2} (min {})",
        own(Population::A),
        own(Population::B),
        pcfg.min_own_accuracy
    );
    match direction {
        Some((hi, lo)) => {
            let what = format!(
                "{hi}-network over-predicts {:.2} of {lo} units and {lo}-network under-predicts {:.2} of {hi} units",
                r.cell(NetworkKind::own(hi), lo).counts.over_share(),
                r.cell(NetworkKind::own(lo), hi).counts.under_share(),
                hi = hi.as_str(),
                lo = lo.as_str(),
            );
            if own_ok {
                (Decision::ClustersDetected, format!("{what}; {own_text}"))
            } else {
                (Decision::Inconclusive, format!("{what}, but {own_text}"))
            }
        }
        None => (
            Decision::NoClusters,
            format!(
                "no cross-network asymmetry reaches over {} / under {}",
                pcfg.min_over_fraction, pcfg.min_under_fraction
            ),
        ),
    }
}
