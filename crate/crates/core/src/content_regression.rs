//! WMF+Regression baseline: the audio tower of the CUE model trained to
//! regress WMF item factors from mel windows.

use rand::seq::SliceRandom;

use crate::audio_frontend::{random_offset, MelSpec};
use crate::cue_model::{mean_over_grid, AudioTower, CueConfig, EpochLog};
use crate::error::{Error, Result};
use crate::ndiff::{DenseArray, GradTape, OptimizerState, Parameterized};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub tower: AudioTower,
}

impl Parameterized for RegressionModel {
    fn named_arrays(&self) -> Vec<(String, &DenseArray)> {
        self.tower.named_arrays()
    }

    fn arrays_mut(&mut self) -> Vec<&mut DenseArray> {
        self.tower.arrays_mut()
    }
}

impl RegressionModel {
    /// Tower shaped like the CUE audio tower, with output width `cfg.feature_dim`.
    pub fn init(cfg: &CueConfig, mel_bins: usize, context_frames: usize) -> Result<Self> {
        let mut r = rng::substream(cfg.seed, streams::INIT);
        let tower = AudioTower::init(&mut r, &cfg.audio_config(mel_bins, context_frames))?;
        Ok(Self { tower })
    }

    pub fn out_dim(&self) -> usize {
        self.tower.out_dim()
    }

    pub fn context_frames(&self) -> usize {
        self.tower.config.context_frames
    }
}

/// One training example: a normalized clip and its WMF item factor.
#[derive(Debug, Clone, Copy)]
pub struct RegressionExample<'d> {
    pub mel: &'d MelSpec,
    pub target: &'d DenseArray,
}

/// Mean over windows of `‖tower(x) − v‖²` and its gradient.
pub fn mse_and_grads(
    m: &RegressionModel,
    windows: &[(&DenseArray, &DenseArray)],
) -> Result<(f64, Vec<DenseArray>)> {
    if windows.is_empty() {
        return Err(Error::Config("empty regression batch".into()));
    }
    let mut tape = GradTape::new();
    let h = m.tower.register(&mut tape);
    let mut terms = Vec::with_capacity(windows.len());
    for (x, v) in windows {
        let xi = tape.input(x);
        let y = m.tower.forward_tape(&mut tape, &h, xi)?;
        let t = tape.input(v);
        let d = tape.sub(y, t)?;
        terms.push(tape.sum_squares(d));
    }
    let total = tape.sum_all(&terms);
    let loss = tape.scale(total, 1.0 / windows.len() as f64);
    let mut grads = tape.backward(loss)?;
    let value = tape.scalar(loss);
    let grads = h
        .ids()
        .into_iter()
        .map(|id| {
            let shape = tape.value(id).shape().to_vec();
            grads.take_or_zeros(id, &shape)
        })
        .collect();
    Ok((value, grads))
}

fn check_targets(m: &RegressionModel, examples: &[RegressionExample<'_>]) -> Result<()> {
    for e in examples {
        if e.target.len() != m.out_dim() {
            return Err(Error::Config(format!(
                "tower output width {} does not match factor rank {}",
                m.out_dim(),
                e.target.len()
            )));
        }
        if e.mel.frames() < m.context_frames() {
            return Err(Error::Length {
                needed: m.context_frames(),
                got: e.mel.frames(),
                unit: "frames",
            });
        }
    }
    Ok(())
}

fn fixed_mse(m: &RegressionModel, examples: &[RegressionExample<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for e in examples {
        let y = m.tower.forward(&e.mel.window(0, m.context_frames())?.values)?;
        total += y
            .data()
            .iter()
            .zip(e.target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone)]
pub struct RegressionOutcome {
    pub model: RegressionModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Minimizes the mean squared factor error with Nesterov SGD. Each epoch
/// takes one fresh random crop per item. With `valid` examples, early
/// stopping keeps the parameters with the lowest validation MSE (windows at
/// offset 0).
pub fn train_regression(
    init: RegressionModel,
    train: &[RegressionExample<'_>],
    valid: &[RegressionExample<'_>],
    cfg: &CueConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<RegressionOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no regression training items".into()));
    }
    check_targets(&init, train)?;
    check_targets(&init, valid)?;

    let frames = init.context_frames();
    let mut model = init;
    let mut opt = OptimizerState::new(model.arrays(), cfg.sgd());
    let mut sampling = rng::substream(cfg.seed, streams::SAMPLING);
    let mut crops = rng::substream(cfg.seed, streams::CROPS);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = Vec::new();
    let mut best: Option<(f64, RegressionModel, usize)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut sampling);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut windows = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let mel = train[i].mel;
                let off = random_offset(mel.frames(), frames, &mut crops)?;
                windows.push(mel.window(off, frames)?.values);
            }
            let pairs: Vec<(&DenseArray, &DenseArray)> = windows
                .iter()
                .zip(chunk)
                .map(|(w, &i)| (w, train[i].target))
                .collect();
            let (loss, grads) = mse_and_grads(&model, &pairs)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("regression loss at epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            opt.step(&mut model.arrays_mut(), &grads)?;
        }
        if !fits_f32(&model) {
            return Err(Error::NonFinite(format!(
                "regression parameters overflow f32 at epoch {epoch}"
            )));
        }
        let valid_loss = if valid.is_empty() {
            None
        } else {
            Some(fixed_mse(&model, valid)?)
        };
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            valid_loss,
            lr: opt.effective_lr(),
        };
        on_epoch(&entry);
        log.push(entry);

        if let Some(v) = valid_loss {
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, model.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => {
            let e = log.len();
            (model, e)
        }
    };
    Ok(RegressionOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Whether every parameter survives the f32 checkpoint encoding.
fn fits_f32(m: &RegressionModel) -> bool {
    m.arrays()
        .iter()
        .all(|a| a.data().iter().all(|x| x.abs() <= f32::MAX as f64))
}

/// Predicted factor for one context window.
pub fn predict_item_factor(m: &RegressionModel, window: &MelSpec) -> Result<DenseArray> {
    if window.frames() < m.context_frames() {
        return Err(Error::Length {
            needed: m.context_frames(),
            got: window.frames(),
            unit: "frames",
        });
    }
    m.tower.forward(&window.window(0, m.context_frames())?.values)
}

/// Clip-level prediction: mean over the non-overlapping window grid.
pub fn predict_clip_factor(m: &RegressionModel, clip: &MelSpec) -> Result<DenseArray> {
    mean_over_grid(clip, m.context_frames(), |w| m.tower.forward(w))
}
