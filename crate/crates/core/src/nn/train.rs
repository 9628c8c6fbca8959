use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::fpmode::FlushDenormals;
use super::model::ModelParams;
use super::net::{backward, forward, loss, Workspace};
use super::optim::RmsProp;
use crate::dataset::{Dataset, Normalizer, Split, Trajectory};
use crate::error::{DftcError, Result};
use crate::plant::{INPUT_DIM, SENSOR_COUNT};
use crate::rng::stream;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs run at `lr` before switching to `lr_after`.
    pub lr_drop_epoch: usize,
    pub lr_after: f64,
    pub lambda: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 1024,
            lr: 1e-3,
            lr_drop_epoch: 100,
            lr_after: 5e-4,
            lambda: 1e-3,
            rms_decay: 0.99,
            rms_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Shortened schedule for single-machine runs.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.lr_after, self.rms_eps];
        if self.batch_size == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(DftcError::InvalidConfig(
                "batch size, learning rates and eps must be positive".into(),
            ));
        }
        if !(self.lambda >= 0.0) || !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return Err(DftcError::InvalidConfig("need λ ≥ 0 and 0 < decay < 1".into()));
        }
        Ok(())
    }

    /// Learning rate of a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch > self.lr_drop_epoch {
            self.lr_after
        } else {
            self.lr
        }
    }
}

/// All windows of a set of trajectories, with measurements normalized once.
#[derive(Clone, Debug)]
pub struct WindowSet<T> {
    window: usize,
    /// Per trajectory, `len × 6` normalized measurements.
    series: Vec<Vec<T>>,
    /// Per trajectory, `len × 2` targets.
    targets: Vec<Vec<T>>,
    /// `(trajectory, last step)` of every window.
    index: Vec<(u32, u32)>,
}

impl<T: Scalar> WindowSet<T> {
    pub fn new<'a>(
        trajectories: impl IntoIterator<Item = &'a Trajectory>,
        normalizer: &Normalizer,
        window: usize,
    ) -> Result<Self> {
        if window == 0 {
            return Err(DftcError::InvalidConfig("window must be at least 1".into()));
        }
        let mut set = WindowSet {
            window,
            series: Vec::new(),
            targets: Vec::new(),
            index: Vec::new(),
        };
        for traj in trajectories {
            if traj.len() < window {
                continue;
            }
            let t = set.series.len() as u32;
            set.series.push(
                traj.measurements
                    .iter()
                    .flat_map(|y| {
                        (0..SENSOR_COUNT).map(move |j| T::of((y[j] - normalizer.mean[j]) / normalizer.std[j]))
                    })
                    .collect(),
            );
            set.targets
                .push(traj.inputs.iter().flat_map(|u| u.iter().map(|&v| T::of(v))).collect());
            set.index.extend((window - 1..traj.len()).map(|k| (t, k as u32)));
        }
        Ok(set)
    }

    pub fn from_split(ds: &Dataset, split: Split, normalizer: &Normalizer, window: usize) -> Result<Self> {
        Self::new(ds.in_split(split), normalizer, window)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Copy windows `ids` into `[sample][step][channel]` inputs and targets.
    pub fn gather(&self, ids: &[usize], inputs: &mut Vec<T>, targets: &mut Vec<T>) {
        let m = self.window;
        inputs.clear();
        targets.clear();
        for &i in ids {
            let (t, k) = self.index[i];
            let (t, k) = (t as usize, k as usize);
            inputs.extend_from_slice(&self.series[t][(k + 1 - m) * SENSOR_COUNT..(k + 1) * SENSOR_COUNT]);
            targets.extend_from_slice(&self.targets[t][k * INPUT_DIM..(k + 1) * INPUT_DIM]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Mean imitation loss `P` over a whole set, in batches.
pub fn evaluate_loss<T: Scalar>(model: &ModelParams<T>, set: &WindowSet<T>, batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(DftcError::InvalidInput("cannot evaluate on an empty set".into()));
    }
    let mut ws = Workspace::new();
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    let ids: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in ids.chunks(batch_size.max(1)) {
        set.gather(chunk, &mut inputs, &mut targets);
        let out = forward(model, &inputs, chunk.len(), &mut ws)?;
        total += loss(out, &targets)?.to_f64_lossy() * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

fn l2_term<T: Scalar>(model: &ModelParams<T>, lambda: f64, n: usize) -> f64 {
    lambda / (2.0 * n as f64) * model.weight_sq_sum().to_f64_lossy()
}

/// Minibatch RMSprop on `P_L2`. Records the epoch's mean training `P_L2` and
/// the validation `P_L2` after each epoch; `on_epoch` sees each point as it
/// is produced.
pub fn train<T: Scalar>(
    mut model: ModelParams<T>,
    train_set: &WindowSet<T>,
    val_set: &WindowSet<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&CurvePoint),
) -> Result<(ModelParams<T>, Vec<CurvePoint>)> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    let m = model.arch().window;
    if train_set.window() != m || val_set.window() != m {
        return Err(DftcError::InvalidInput("window sets do not match the model window".into()));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(DftcError::InvalidInput("training and validation sets must be non-empty".into()));
    }
    let _ftz = FlushDenormals::new();
    let mut rng = stream(cfg.seed, "shuffle");
    let mut opt = RmsProp::new(model.param_count(), T::of(cfg.rms_decay), T::of(cfg.rms_eps));
    let lambda = T::of(cfg.lambda);
    let mut grads = vec![T::zero(); model.param_count()];
    let mut ws = Workspace::new();
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = T::of(cfg.lr_at(epoch));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            train_set.gather(chunk, &mut inputs, &mut targets);
            let n = chunk.len();
            forward(&model, &inputs, n, &mut ws)
                .map(|_| ())
                .and_then(|_| backward(&model, &ws, &targets, lambda, &mut grads))
                .and_then(|p| {
                    let p_l2 = p.to_f64_lossy() + l2_term(&model, cfg.lambda, n);
                    if p_l2.is_finite() {
                        sum += p_l2 * n as f64;
                        Ok(())
                    } else {
                        Err(DftcError::numeric("loss"))
                    }
                })
                .map_err(|e| DftcError::numeric(format!("epoch {epoch}, batch {}: {e}", b + 1)))?;
            opt.step(model.params_mut(), &grads, lr);
        }
        let val = evaluate_loss(&model, val_set, cfg.batch_size)? + l2_term(&model, cfg.lambda, cfg.batch_size);
        let point = CurvePoint {
            epoch,
            train_loss: sum / train_set.len() as f64,
            val_loss: val,
        };
        if !point.val_loss.is_finite() {
            return Err(DftcError::numeric(format!("validation loss after epoch {epoch}")));
        }
        on_epoch(&point);
        curve.push(point);
    }
    Ok((model, curve))
}

/// `epoch,train_loss,val_loss`.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{}\n",
            p.epoch,
            crate::dataset::fmt_f64(p.train_loss),
            crate::dataset::fmt_f64(p.val_loss)
        ));
    }
    out
}

pub fn parse_curve(text: &str) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut curve = Vec::new();
    for (i, row) in reader.deserialize::<CurvePoint>().enumerate() {
        curve.push(row.map_err(|e| DftcError::Parse {
            line: i as u64 + 2,
            message: e.to_string(),
        })?);
    }
    Ok(curve)
}
