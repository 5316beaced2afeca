//! Majority-branch learning on set-valued data, sample classification by
//! branch, and the three-network hidden-feature protocol.
//!
//! Branch proximity is judged on an evaluation grid over the region where the
//! two branches differ. A grid point counts toward branch 1 or 2 by whichever
//! branch value is nearer the prediction, and toward the midpoint band when
//! the prediction sits within 10% of the gap from the branch average.

mod protocol;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use protocol::{
    partition_from_tags, run_hidden_feature_protocol, run_protocol_with_models, CellCounts, CellReport, CrossEvalReport, Decision,
    NetworkKind, ProtocolConfig, UnitReport,
};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::network::{self, NetworkConfig, TrainedModel};
use crate::numerics::Matrix;
use crate::setvalued::{BranchFunction, BranchSpec, MULTI_VALUED_1D};

/// Grid points per axis: 1D grids are open, 2D grids include the box edges.
pub const GRID_POINTS_1D: usize = 401;
pub const GRID_POINTS_2D: usize = 41;
/// Half-width of the midpoint band as a fraction of the branch gap.
pub const MIDPOINT_HALF_WIDTH: f64 = 0.1;
/// Points where the branches agree this closely carry no vote.
const GAP_EPS: f64 = 1e-12;
/// Epochs kept for the prediction variance diagnostic.
pub const VARIANCE_WINDOW: usize = 10;

/// Trains on a mixture; a thin wrapper that warns when the loss is not logcosh.
pub fn fit_majority(cfg: &NetworkConfig, mix: &Dataset) -> Result<TrainedModel> {
    if cfg.loss != Loss::LogCosh {
        log::warn!("fitting a mixture with {} instead of logcosh", cfg.loss.name());
    }
    let model = network::train(cfg, mix)?;
    let tagged = mix.tags.iter().filter(|t| t.branch.is_some()).count();
    log::info!(
        "fitted {} rows ({tagged} branch-tagged), final loss {:.6}",
        mix.len(),
        model.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(model)
}

fn check_pair(branches: &[BranchSpec; 2]) -> Result<usize> {
    branches[0].validate()?;
    branches[1].validate()?;
    let d = branches[0].function.input_dim();
    if branches[1].function.input_dim() != d {
        return Err(Error::InvalidArgument("branches have different input dimensions".into()));
    }
    if branches[0].id == branches[1].id {
        return Err(Error::InvalidArgument(format!("both branches have id {}", branches[0].id)));
    }
    Ok(d)
}

fn open_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i + 1) as f64 / (n + 1) as f64).collect()
}

fn closed_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// The voting grid for a branch pair, one row per point.
///
/// 1D: 401 interior points of the multi-valued interval for the quartic pair,
/// otherwise of the shared domain. 2D: a 41x41 lattice over the first
/// branch's domain.
pub fn evaluation_grid(branches: &[BranchSpec; 2]) -> Result<Matrix> {
    match check_pair(branches)? {
        1 => {
            let quartic_pair = matches!(
                (branches[0].function, branches[1].function),
                (BranchFunction::Quartic1d, BranchFunction::FlatQuartic1d)
                    | (BranchFunction::FlatQuartic1d, BranchFunction::Quartic1d)
            );
            let (lo, hi) = if quartic_pair { MULTI_VALUED_1D } else { branches[0].domain.bounds[0] };
            Matrix::new(GRID_POINTS_1D, 1, open_grid(lo, hi, GRID_POINTS_1D))
        }
        _ => {
            let b = &branches[0].domain.bounds;
            let xs = closed_grid(b[0].0, b[0].1, GRID_POINTS_2D);
            let ys = closed_grid(b[1].0, b[1].1, GRID_POINTS_2D);
            let mut data = Vec::with_capacity(2 * xs.len() * ys.len());
            for x in &xs {
                for y in &ys {
                    data.push(*x);
                    data.push(*y);
                }
            }
            Matrix::new(xs.len() * ys.len(), 2, data)
        }
    }
}

/// Index of the branch nearer `v`, ties to the first.
fn nearer(v: f64, a: f64, b: f64) -> usize {
    if (v - b).abs() < (v - a).abs() {
        1
    } else {
        0
    }
}

/// Shares of the multi-valued grid points nearest each branch and in the
/// midpoint band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proximity {
    /// Grid points where the branches differ.
    pub n_points: usize,
    pub near_first: f64,
    pub near_second: f64,
    pub midpoint: f64,
}

impl Proximity {
    /// The branch holding the larger share, ties to the first.
    pub fn majority_index(&self) -> usize {
        usize::from(self.near_second > self.near_first)
    }
}

fn proximity_of(pred: &[f64], grid: &Matrix, branches: &[BranchSpec; 2]) -> Result<Proximity> {
    let (mut n, mut first, mut second, mut mid) = (0usize, 0usize, 0usize, 0usize);
    for (i, x) in grid.iter_rows().enumerate() {
        let a = branches[0].eval(x)?;
        let b = branches[1].eval(x)?;
        if (a - b).abs() <= GAP_EPS {
            continue;
        }
        n += 1;
        let p = pred[i];
        if nearer(p, a, b) == 0 {
            first += 1;
        } else {
            second += 1;
        }
        let t = (p - b) / (a - b);
        if (t - 0.5).abs() <= MIDPOINT_HALF_WIDTH {
            mid += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("the branches agree on the whole evaluation grid".into()));
    }
    let share = |k: usize| k as f64 / n as f64;
    Ok(Proximity {
        n_points: n,
        near_first: share(first),
        near_second: share(second),
        midpoint: share(mid),
    })
}

/// Branch proximity of a model's predictions over [`evaluation_grid`].
pub fn branch_proximity(m: &TrainedModel, branches: &[BranchSpec; 2]) -> Result<Proximity> {
    let grid = evaluation_grid(branches)?;
    let pred = m.predict_batch(&grid)?;
    proximity_of(pred.data(), &grid, branches)
}

/// The branch a mixture with this first-branch fraction is expected to teach,
/// or `None` when neither fraction reaches `threshold`.
pub fn expected_majority(branches: &[BranchSpec; 2], fraction_first: f64, threshold: f64) -> Option<u8> {
    if fraction_first >= threshold {
        Some(branches[0].id)
    } else if 1.0 - fraction_first >= threshold {
        Some(branches[1].id)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAssignment {
    pub predicted: f64,
    /// Target minus each branch value, in branch order.
    pub residuals: [f64; 2],
    pub branch: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchAssignment {
    pub branch_ids: [u8; 2],
    pub samples: Vec<SampleAssignment>,
    /// Samples assigned to each branch, in branch order.
    pub counts: [usize; 2],
    /// The branch the model follows, by grid vote.
    pub majority_branch: u8,
    pub proximity: Proximity,
}

impl BranchAssignment {
    /// Share of samples whose assignment matches their branch tag, over the
    /// tagged samples of `data`.
    pub fn tag_agreement(&self, data: &Dataset) -> Option<f64> {
        let (mut n, mut hit) = (0usize, 0usize);
        for (s, t) in self.samples.iter().zip(&data.tags) {
            if let Some(b) = t.branch {
                n += 1;
                hit += usize::from(b == s.branch);
            }
        }
        (n > 0).then(|| hit as f64 / n as f64)
    }
}

/// Assigns each sample to the branch nearest its target and reads the
/// majority branch off the model's grid predictions.
pub fn classify_by_branch(m: &TrainedModel, data: &Dataset, branches: &[BranchSpec; 2]) -> Result<BranchAssignment> {
    let d = check_pair(branches)?;
    if data.feature_dim() != d || data.target_dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {d} feature column(s) and one target, got {} and {}",
            data.feature_dim(),
            data.target_dim()
        )));
    }
    let pred = m.predict_batch(&data.features)?;
    let mut counts = [0usize; 2];
    let mut samples = Vec::with_capacity(data.len());
    for (i, x) in data.features.iter_rows().enumerate() {
        let y = data.targets.get(i, 0);
        let a = branches[0].eval(x)?;
        let b = branches[1].eval(x)?;
        let k = nearer(y, a, b);
        counts[k] += 1;
        samples.push(SampleAssignment {
            predicted: pred.get(i, 0),
            residuals: [y - a, y - b],
            branch: branches[k].id,
        });
    }
    let proximity = branch_proximity(m, branches)?;
    Ok(BranchAssignment {
        branch_ids: [branches[0].id, branches[1].id],
        samples,
        counts,
        majority_branch: branches[proximity.majority_index()].id,
        proximity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub loss: Loss,
    pub final_loss: f64,
    pub proximity: Proximity,
    /// Per-point variance of grid predictions over the last epochs, averaged
    /// over the grid.
    pub prediction_variance: f64,
    pub variance_epochs: usize,
    pub loss_trace: Vec<f64>,
    /// Final predictions on [`evaluation_grid`].
    pub grid_predictions: Vec<f64>,
}

fn mean_pointwise_variance(snaps: &VecDeque<Vec<f64>>) -> f64 {
    let Some(first) = snaps.front() else {
        return 0.0;
    };
    let k = snaps.len() as f64;
    let n = first.len();
    let mut total = 0.0;
    for i in 0..n {
        let mu = snaps.iter().map(|s| s[i]).sum::<f64>() / k;
        total += snaps.iter().map(|s| (s[i] - mu).powi(2)).sum::<f64>() / k;
    }
    total / n as f64
}

fn train_summary(cfg: &NetworkConfig, mix: &Dataset, branches: &[BranchSpec; 2], grid: &Matrix) -> Result<LossSummary> {
    let mut snaps: VecDeque<Vec<f64>> = VecDeque::with_capacity(VARIANCE_WINDOW + 1);
    let mut snap_err = None;
    let model = network::train_with_observer(cfg, mix, |_, m| match m.predict_batch(grid) {
        Ok(p) => {
            if snaps.len() == VARIANCE_WINDOW {
                snaps.pop_front();
            }
            snaps.push_back(p.data().to_vec());
        }
        Err(e) => snap_err = Some(e),
    })?;
    if let Some(e) = snap_err {
        return Err(e);
    }
    let pred = model.predict_batch(grid)?;
    Ok(LossSummary {
        loss: cfg.loss,
        final_loss: model.loss_trace.last().copied().unwrap_or(f64::NAN),
        proximity: proximity_of(pred.data(), grid, branches)?,
        prediction_variance: mean_pointwise_variance(&snaps),
        variance_epochs: snaps.len(),
        loss_trace: model.loss_trace,
        grid_predictions: pred.data().to_vec(),
    })
}

/// Trains one model per config on the same mixture and summarizes each.
///
/// The configs must differ only in their loss. Trainings run on separate
/// threads.
pub fn compare_losses(mix: &Dataset, cfgs: &[NetworkConfig], branches: &[BranchSpec; 2]) -> Result<Vec<LossSummary>> {
    let Some(base) = cfgs.first() else {
        return Err(Error::InvalidArgument("no configs to compare".into()));
    };
    for c in &cfgs[1..] {
        let mut same = c.clone();
        same.loss = base.loss;
        if &same != base {
            return Err(Error::InvalidArgument("compared configs may differ only in their loss".into()));
        }
    }
    let grid = evaluation_grid(branches)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|c| {
                let grid = &grid;
                s.spawn(move || train_summary(c, mix, branches, grid))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    })
}
