//! L2 loss, Adam, the two-stage training loop and checkpoints.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SegmentPair;
use crate::dsp::{corrupt_segment, decimate_skip, NoiseBank, NoiseProtocol, Signal};
use crate::error::{Error, Result};
use crate::grad::{Graph, Tensor};
use crate::model::{msecg_forward, ModelConfig, ModelParams};
use crate::real::Real;
use crate::seed::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub stage1: Stage,
    pub stage2: Stage,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Use at most this many training pairs (desk-scale runs).
    pub max_train: Option<usize>,
    /// Use at most this many validation pairs.
    pub max_val: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            stage1: Stage { epochs: 300, lr: 1e-4 },
            stage2: Stage { epochs: 50, lr: 1e-5 },
            seed: 0,
            adam: AdamConfig::default(),
            max_train: None,
            max_val: None,
        }
    }
}

impl TrainConfig {
    /// Small, fast schedule for laptops and CI.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 4,
            stage1: Stage { epochs: 200, lr: 1e-3 },
            stage2: Stage { epochs: 20, lr: 1e-4 },
            max_train: Some(64),
            max_val: Some(16),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, s) in [("stage1", self.stage1), ("stage2", self.stage2)] {
            if !(s.lr > 0.0 && s.lr.is_finite()) {
                return Err(Error::Config(format!("{name} learning rate must be positive, got {}", s.lr)));
            }
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam hyperparameters {a:?}")));
        }
        Ok(())
    }
}

/// Mean of squared elementwise differences.
pub fn l2_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!("loss shapes {:?} vs {:?}", pred.shape(), target.shape())));
    }
    crate::eval::mse(
        &pred.data().iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
        &target.data().iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
    )
}

/// Adam moments, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        OptimizerState { v: m.clone(), m, t: 0 }
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort the step
/// before anything is modified.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || grads.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != g.shape() {
            return Err(Error::Dimension(format!("gradient {i} has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite { op: "adam_step gradient" });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for k in 0..pd.len() {
            let gk = g.data()[k].as_f64();
            let mk = b1 * md[k].as_f64() + (1.0 - b1) * gk;
            let vk = b2 * vd[k].as_f64() + (1.0 - b2) * gk * gk;
            md[k] = T::lit(mk);
            vd[k] = T::lit(vk);
            let step = lr * (mk / c1) / ((vk / c2).sqrt() + cfg.eps);
            pd[k] = T::lit(pd[k].as_f64() - step);
        }
    }
    Ok(())
}

fn to_tensor<T: Real>(s: &Signal) -> Result<Tensor<T>> {
    Tensor::new([s.channels(), s.len()], s.data().iter().map(|&v| T::lit(v)).collect())
}

/// Loss and parameter gradients for one `(lr, gt)` pair.
pub fn loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    lr: &Tensor<T>,
    gt: &Tensor<T>,
) -> Result<(f64, Vec<Tensor<T>>)> {
    let mut g = Graph::new();
    let w = params.register(&mut g, true);
    let y = msecg_forward(&mut g, lr, &w, cfg)?;
    let t = g.constant(gt.clone());
    let loss = g.mse_loss(y, t)?;
    let value = g.value(loss).data()[0].as_f64();
    let mut grads = g.backward(loss)?;
    let out = w
        .iter()
        .map(|id| grads.take(*id).ok_or_else(|| Error::Contract("parameter without gradient".into())))
        .collect::<Result<_>>()?;
    Ok((value, out))
}

/// Mean per-segment MSE of the model against ground truth.
pub fn validation_mse(params: &ModelParams<f32>, cfg: &ModelConfig, pairs: &[SegmentPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let per: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let y = crate::model::infer(params, cfg, &p.lr)?;
            crate::eval::mse(y.data(), p.hr_gt.data())
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// One row of the training log. `train_loss` is `None` for the stage-2
/// re-evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: u8,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Clean LR input derived from the ground truth, corrupted with the
/// `(seed, epoch, index)` stream.
fn epoch_input(
    pair: &SegmentPair,
    bank: &NoiseBank,
    protocol: &NoiseProtocol,
    seed: u64,
    epoch: usize,
    index: usize,
) -> Result<Signal> {
    let clean = decimate_skip(&pair.hr_gt, pair.ratio())?;
    let mut rng = rng_for(seed, &[stream::CORRUPT, epoch as u64, index as u64]);
    Ok(corrupt_segment(&clean, bank, &mut rng, protocol)?.0)
}

struct Trainer<'a> {
    cfg: &'a ModelConfig,
    tc: &'a TrainConfig,
    train: &'a [SegmentPair],
    bank: &'a NoiseBank,
    protocol: &'a NoiseProtocol,
    targets: Vec<Tensor<f32>>,
}

impl Trainer<'_> {
    fn inputs(&self, epoch: usize, idx: &[usize]) -> Result<Vec<Tensor<f32>>> {
        idx.par_iter()
            .map(|&i| to_tensor(&epoch_input(&self.train[i], self.bank, self.protocol, self.tc.seed, epoch, i)?))
            .collect()
    }

    /// Mean loss and summed-then-averaged gradients over `idx`, reduced in order.
    fn batch(&self, params: &ModelParams<f32>, epoch: usize, idx: &[usize]) -> Result<(f64, Vec<Tensor<f32>>)> {
        let inputs = self.inputs(epoch, idx)?;
        let parts: Vec<(f64, Vec<Tensor<f32>>)> = idx
            .par_iter()
            .zip(&inputs)
            .map(|(&i, x)| loss_and_grads(params, self.cfg, x, &self.targets[i]))
            .collect::<Result<_>>()?;
        let n = parts.len() as f64;
        let mut iter = parts.into_iter();
        let (mut loss, mut acc) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            for (a, b) in acc.iter_mut().zip(&g) {
                a.add_assign(b);
            }
        }
        let scale = 1.0 / n as f32;
        for a in &mut acc {
            a.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        Ok((loss / n, acc))
    }

    fn mean_loss(&self, params: &ModelParams<f32>, epoch: usize) -> Result<f64> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        let inputs = self.inputs(epoch, &all)?;
        let losses: Vec<f64> = inputs
            .par_iter()
            .zip(&self.targets)
            .map(|(x, t)| {
                let mut g = Graph::new();
                let w = params.register(&mut g, false);
                let y = msecg_forward(&mut g, x, &w, self.cfg)?;
                l2_loss(g.value(y), t)
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

/// Two-stage training with best-on-validation retention.
///
/// Stage 1 evaluates the initial parameters (epoch 0) and then runs
/// `stage1.epochs` epochs; stage 2 restarts from the best stage-1 checkpoint,
/// logs its validation MSE as a stage-2 epoch-0 row, and runs `stage2.epochs`.
/// Training inputs are re-corrupted every epoch with the `(seed, epoch, index)`
/// stream; validation inputs are used as prepared.
#[allow(clippy::too_many_arguments)]
pub fn train(
    train: &[SegmentPair],
    val: &[SegmentPair],
    noise: &NoiseBank,
    protocol: &NoiseProtocol,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    init: ModelParams<f32>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    let train = &train[..tc.max_train.map_or(train.len(), |m| m.min(train.len()))];
    let val = &val[..tc.max_val.map_or(val.len(), |m| m.min(val.len()))];
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty splits (train {}, validation {})",
            train.len(),
            val.len()
        )));
    }
    let lr_rate = train[0].hr_gt.sample_rate() / cfg.ratio as f64;
    let bank = crate::data::bank_at_rate(noise, lr_rate)?;
    let trainer = Trainer {
        cfg,
        tc,
        train,
        bank: &bank,
        protocol,
        targets: train.iter().map(|p| to_tensor(&p.hr_gt)).collect::<Result<_>>()?,
    };

    let mut params = init;
    let mut opt = OptimizerState::new(params.iter());
    let mut log = Vec::new();
    let mut push = |row: EpochLog, log: &mut Vec<EpochLog>| {
        on_epoch(&row);
        log.push(row);
    };

    let val0 = validation_mse(&params, cfg, val)?;
    let loss0 = trainer.mean_loss(&params, 0)?;
    push(EpochLog { epoch: 0, stage: 1, lr: tc.stage1.lr, train_loss: Some(loss0), val_mse: val0 }, &mut log);
    let snapshot = |params: &ModelParams<f32>, opt: &OptimizerState<f32>, epoch, stage, val_mse| Checkpoint {
        version: CHECKPOINT_VERSION,
        model: cfg.clone(),
        train: tc.clone(),
        params: params.clone(),
        opt: opt.clone(),
        epoch,
        stage,
        val_mse,
    };
    let mut best = snapshot(&params, &opt, 0, 1, val0);

    let mut global = 0usize;
    for (stage, sc) in [(1u8, tc.stage1), (2u8, tc.stage2)] {
        if stage == 2 {
            params = best.params.clone();
            opt = best.opt.clone();
            let v = validation_mse(&params, cfg, val)?;
            push(EpochLog { epoch: 0, stage, lr: sc.lr, train_loss: None, val_mse: v }, &mut log);
        }
        for epoch in 1..=sc.epochs {
            global += 1;
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng_for(tc.seed, &[stream::SHUFFLE, global as u64]));
            let mut total = 0.0;
            for chunk in order.chunks(tc.batch_size) {
                let (loss, grads) = trainer.batch(&params, global, chunk)?;
                total += loss * chunk.len() as f64;
                adam_step(&mut params.iter_mut(), &grads, &mut opt, sc.lr, &tc.adam)?;
            }
            let val_mse = validation_mse(&params, cfg, val)?;
            let row = EpochLog { epoch, stage, lr: sc.lr, train_loss: Some(total / train.len() as f64), val_mse };
            push(row, &mut log);
            if val_mse < best.val_mse {
                best = snapshot(&params, &opt, epoch, stage, val_mse);
            }
        }
    }
    Ok(TrainOutcome { best, log })
}
