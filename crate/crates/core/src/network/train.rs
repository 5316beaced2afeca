use super::optim::OptimizerState;
use super::{Gradients, NetworkConfig, Standardizer, TrainedModel, Workspace};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Progress handed to a training observer after each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// Epochs completed so far, across all schedule steps.
    pub epoch: usize,
    pub schedule_step: usize,
    pub learn_rate: f64,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

pub fn train(config: &NetworkConfig, data: &Dataset) -> Result<TrainedModel> {
    train_with_observer(config, data, |_, _| {})
}

/// Mini-batch training over the whole learning-rate schedule.
///
/// Rows are reshuffled every epoch with the seeded generator and the final
/// short batch is kept. Optimizer state restarts at each schedule step.
pub fn train_with_observer(
    config: &NetworkConfig,
    data: &Dataset,
    mut observer: impl FnMut(&EpochReport, &TrainedModel),
) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.feature_dim() != config.input_dim {
        return Err(Error::LengthMismatch {
            op: "train features",
            left: data.feature_dim(),
            right: config.input_dim,
        });
    }
    if data.target_dim() != config.output_dim() {
        return Err(Error::LengthMismatch {
            op: "train targets",
            left: data.target_dim(),
            right: config.output_dim(),
        });
    }

    let mut rng = Rng::new(config.seed);
    let mut model = TrainedModel::initialize_with(config.clone(), &mut rng)?;

    let n = data.len();
    let (fit_idx, val_idx) = match &config.early_stopping {
        Some(es) => {
            if n < 2 {
                return Err(Error::InvalidArgument("early stopping needs at least two rows".into()));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let n_val = ((n as f64 * es.validation_fraction).round() as usize).clamp(1, n - 1);
            let mut val = idx[..n_val].to_vec();
            let mut fit = idx[n_val..].to_vec();
            val.sort_unstable();
            fit.sort_unstable();
            (fit, val)
        }
        None => ((0..n).collect(), Vec::new()),
    };

    let d_in = config.input_dim;
    let d_out = config.output_dim();
    let gather = |idx: &[usize]| {
        let mut x = Vec::with_capacity(idx.len() * d_in);
        let mut y = Vec::with_capacity(idx.len() * d_out);
        for &i in idx {
            x.extend_from_slice(data.features.row(i));
            y.extend_from_slice(data.targets.row(i));
        }
        (x, y)
    };
    let (mut fit_x, fit_y) = gather(&fit_idx);
    if config.standardize_features {
        let s = Standardizer::fit(&fit_x, d_in);
        s.apply_in_place(&mut fit_x);
        model.standardizer = Some(s);
    }
    if config.scales_targets() {
        model.target_scaler = Some(Standardizer::fit(&fit_y, d_out));
    }
    let (val_features, val_targets) = if val_idx.is_empty() {
        (None, None)
    } else {
        (
            Some(data.features.select_rows(&val_idx)),
            Some(data.targets.select_rows(&val_idx)),
        )
    };

    let n_fit = fit_idx.len();
    let batch = config.batch_size.min(n_fit);
    let mut ws = Workspace::new(config, batch);
    let mut grads = Gradients::zeros_like(&model);
    let mut bx = vec![0.0; batch * d_in];
    let mut by = vec![0.0; batch * d_out];
    let mut order: Vec<usize> = (0..n_fit).collect();

    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    let mut epoch = 0usize;

    'schedule: for (step, &lr) in config.learn_rate_schedule.iter().enumerate() {
        let mut opt = OptimizerState::new(config.optimizer, &model);
        for _ in 0..config.epochs {
            rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(batch) {
                let rows = chunk.len();
                for (k, &i) in chunk.iter().enumerate() {
                    bx[k * d_in..(k + 1) * d_in].copy_from_slice(&fit_x[i * d_in..(i + 1) * d_in]);
                    by[k * d_out..(k + 1) * d_out].copy_from_slice(&fit_y[i * d_out..(i + 1) * d_out]);
                }
                ws.rows = rows;
                grads.clear();
                model.forward_batch(&bx[..rows * d_in], &mut ws);
                loss_sum += model.backward_batch(&bx[..rows * d_in], &by[..rows * d_out], &mut ws, &mut grads, 1.0 / rows as f64);
                opt.step(&mut model, &grads, lr);
            }
            epoch += 1;
            let train_loss = loss_sum / n_fit as f64;
            if !train_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            model.loss_trace.push(train_loss);

            let mut validation_loss = None;
            let mut stop = false;
            if let (Some(es), Some(vx), Some(vy)) = (&config.early_stopping, &val_features, &val_targets) {
                let v = model
                    .mean_loss(vx, vy)
                    .map_err(|_| Error::NonFiniteLoss { epoch })?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                model.validation_trace.push(v);
                validation_loss = Some(v);
                if v < best_val - es.min_delta {
                    best_val = v;
                    stale = 0;
                } else {
                    stale += 1;
                    stop = stale >= es.patience;
                }
            }
            observer(
                &EpochReport {
                    epoch,
                    schedule_step: step,
                    learn_rate: lr,
                    train_loss,
                    validation_loss,
                },
                &model,
            );
            if stop {
                model.stopped_epoch = Some(epoch);
                break 'schedule;
            }
        }
    }
    Ok(model)
}
