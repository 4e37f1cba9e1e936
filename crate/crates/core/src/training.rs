//! NMSE loss, Adam, and the seeded minibatch loop shared by every model.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Backend, Eager};
use crate::channelsim::{Dataset, Mode};
use crate::ctmath::{self, CMatrix, Complex};
use crate::error::{Error, Result};
use crate::tnode::{adjoint_backward, tape_backward, Checkpoint, ModelParams, SolverSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientPath {
    /// Backpropagation through the solver steps.
    Tape,
    /// Continuous adjoint for the decoder.
    Adjoint,
}

impl std::str::FromStr for GradientPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tape" => Ok(GradientPath::Tape),
            "adjoint" => Ok(GradientPath::Adjoint),
            _ => Err(Error::config("grad", format!("unknown gradient path {s:?}, expected tape or adjoint"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub gradient_path: GradientPath,
    pub seed: u64,
    /// Save every this many epochs; 0 disables periodic saves.
    pub checkpoint_every: usize,
    /// Stop once the loss improved by less than `early_stop_tol` (linear)
    /// over this many epochs; 0 disables early stopping.
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            gradient_path: GradientPath::Tape,
            seed: 0,
            checkpoint_every: 0,
            early_stop_window: 20,
            early_stop_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (field, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(field, "must lie in (0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if !(self.early_stop_tol >= 0.0) {
            return Err(Error::config("early_stop_tol", "must be non-negative"));
        }
        Ok(())
    }
}

/// `(1/P)·Σᵢ ‖predᵢ − labelᵢ‖² / ‖labelᵢ‖²`, recorded on `b`.
pub fn nmse_loss<B: Backend>(b: &mut B, preds: &[B::Value], labels: &[CMatrix]) -> Result<B::Value> {
    if preds.len() != labels.len() || labels.is_empty() {
        return Err(Error::Length {
            op: "nmse_loss",
            expected: labels.len().max(1),
            actual: preds.len(),
        });
    }
    let mut acc: Option<B::Value> = None;
    for (i, (p, l)) in preds.iter().zip(labels).enumerate() {
        let norm = ctmath::fro_norm_sq(l);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateLabel { index: i });
        }
        let lc = b.constant(l.clone());
        let diff = b.sub(p, &lc)?;
        let e = b.fro_norm_sq(&diff)?;
        let term = b.scale_real(&e, 1.0 / norm)?;
        acc = Some(match acc {
            None => term,
            Some(a) => b.add(&a, &term)?,
        });
    }
    b.scale_real(&acc.expect("non-empty"), 1.0 / labels.len() as f64)
}

pub fn nmse(preds: &[CMatrix], labels: &[CMatrix]) -> Result<f64> {
    Ok(nmse_loss(&mut Eager, preds, labels)?.get(0, 0).re)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Adam moments in the real-pair representation: the second moment of the
/// real part lives in `.re`, that of the imaginary part in `.im`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<CMatrix>,
    pub v: Vec<CMatrix>,
    pub step: u64,
}

impl Adam {
    pub fn new(params: &[CMatrix]) -> Self {
        let z: Vec<CMatrix> = params.iter().map(|p| CMatrix::zeros(p.rows(), p.cols())).collect();
        Adam {
            m: z.clone(),
            v: z,
            step: 0,
        }
    }
}

pub fn adam_step(params: &mut [CMatrix], grads: &[CMatrix], state: &mut Adam, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Length {
            op: "adam_step",
            expected: params.len(),
            actual: grads.len(),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let lr = cfg.learning_rate;
    let eps = cfg.adam_eps;
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((x, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mi = *mi * b1 + gi * (1.0 - b1);
            vi.re = b2 * vi.re + (1.0 - b2) * gi.re * gi.re;
            vi.im = b2 * vi.im + (1.0 - b2) * gi.im * gi.im;
            let dre = (mi.re / c1) / ((vi.re / c2).sqrt() + eps);
            let dim = (mi.im / c1) / ((vi.im / c2).sqrt() + eps);
            *x -= Complex::new(lr * dre, lr * dim);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss (linear) over the epoch.
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    pub fn mean_nmse_db(&self) -> f64 {
        to_db(self.mean_loss)
    }
}

/// Everything needed to resume the loop bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean loss of every completed epoch.
    pub history: Vec<f64>,
}

impl TrainState {
    pub fn new(params: &[CMatrix]) -> Self {
        TrainState {
            adam: Adam::new(params),
            epoch: 0,
            history: Vec::new(),
        }
    }

    /// Stores the state under `prefix`-qualified names next to `names`.
    pub fn write(&self, ck: &mut Checkpoint, names: &[String]) {
        for ((n, m), v) in names.iter().zip(&self.adam.m).zip(&self.adam.v) {
            ck.insert(format!("adam.m.{n}"), m.clone());
            ck.insert(format!("adam.v.{n}"), v.clone());
        }
        ck.insert("adam.step", CMatrix::scalar(Complex::new(self.adam.step as f64, 0.0)));
        ck.insert("train.epoch", CMatrix::scalar(Complex::new(self.epoch as f64, 0.0)));
        let hist: Vec<Complex> = self.history.iter().map(|&x| Complex::new(x, 0.0)).collect();
        ck.insert(
            "train.history",
            CMatrix::new(1, hist.len(), hist).expect("row vector"),
        );
    }

    /// Reads a state written by [`TrainState::write`], if present.
    pub fn read(ck: &Checkpoint, names: &[String]) -> Result<Option<Self>> {
        if ck.get("adam.step").is_none() {
            return Ok(None);
        }
        let mut m = Vec::new();
        let mut v = Vec::new();
        for n in names {
            m.push(ck.require(&format!("adam.m.{n}"))?.clone());
            v.push(ck.require(&format!("adam.v.{n}"))?.clone());
        }
        let scalar = |name: &str| -> Result<f64> { Ok(ck.require(name)?.get(0, 0).re) };
        Ok(Some(TrainState {
            adam: Adam {
                m,
                v,
                step: scalar("adam.step")? as u64,
            },
            epoch: scalar("train.epoch")? as usize,
            history: ck.require("train.history")?.data().iter().map(|z| z.re).collect(),
        }))
    }
}

fn should_stop(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() <= window {
        return false;
    }
    let n = history.len();
    let before = history[n - 1 - window];
    let best = history[n - window..].iter().copied().fold(f64::INFINITY, f64::min);
    before - best < tol
}

/// Epoch `e` shuffles with ChaCha8 stream `SHUFFLE_STREAM_BASE + e`, kept
/// apart from the dataset streams (`0..` and `2^40..`).
pub const SHUFFLE_STREAM_BASE: u64 = 3 << 40;

pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &[CMatrix], &TrainState) -> Result<()> + 'a;

/// Seeded minibatch Adam over `n_samples` examples.
///
/// `loss_grad(params, i)` returns sample `i`'s loss and gradients. Batch
/// gradients are summed in sample order and averaged, so the result does not
/// depend on the thread count. Shuffles depend only on `tcfg.seed` and the
/// epoch, which makes a resumed run identical to an unbroken one.
pub fn fit<F>(
    params: &mut [CMatrix],
    n_samples: usize,
    tcfg: &TrainConfig,
    state: &mut TrainState,
    loss_grad: F,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Vec<EpochRecord>>
where
    F: Fn(&[CMatrix], usize) -> Result<(f64, Vec<CMatrix>)> + Sync,
{
    tcfg.validate()?;
    if n_samples == 0 {
        return Err(Error::config("samples", "training set is empty"));
    }
    let start = Instant::now();
    let mut records = Vec::new();
    while state.epoch < tcfg.epochs {
        if should_stop(&state.history, tcfg.early_stop_window, tcfg.early_stop_tol) {
            break;
        }
        let mut order: Vec<usize> = (0..n_samples).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        rng.set_stream(SHUFFLE_STREAM_BASE + state.epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            let snapshot: &[CMatrix] = params;
            let results = batch
                .par_iter()
                .map(|&i| loss_grad(snapshot, i))
                .collect::<Result<Vec<_>>>()?;
            let mut grads: Vec<CMatrix> = params.iter().map(|p| CMatrix::zeros(p.rows(), p.cols())).collect();
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite training loss at epoch {}", state.epoch)));
                }
                loss_sum += loss;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += b;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for z in g.data_mut() {
                    *z *= inv;
                }
            }
            adam_step(params, &grads, &mut state.adam, tcfg)?;
        }
        let rec = EpochRecord {
            epoch: state.epoch,
            mean_loss: loss_sum / n_samples as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        state.epoch += 1;
        state.history.push(rec.mean_loss);
        on_epoch(&rec, params, state)?;
        records.push(rec);
    }
    Ok(records)
}

/// Per-dataset amplitude normalization: models see channels divided by
/// `sqrt(E_avg)` and their outputs are scaled back.
pub fn input_scale(ds: &Dataset) -> f64 {
    ds.e_avg.sqrt()
}

pub(crate) fn scaled(ms: &[CMatrix], s: f64) -> Vec<CMatrix> {
    ms.iter().map(|m| ctmath::scale(m, Complex::new(1.0 / s, 0.0))).collect()
}

/// Loss and gradients of a TN-ODE model on one normalized sample.
pub fn tnode_loss_grad(
    params: &ModelParams,
    inputs: &[CMatrix],
    targets: &[f64],
    labels: &[CMatrix],
    spec: &SolverSpec,
    path: GradientPath,
) -> Result<(f64, ModelParams)> {
    match path {
        GradientPath::Tape => tape_backward(params, inputs, targets, labels, spec),
        GradientPath::Adjoint => adjoint_backward(params, inputs, targets, labels, spec),
    }
}

/// Trains a TN-ODE model in place on a train-mode dataset.
pub fn train_tnode(
    params: &mut ModelParams,
    ds: &Dataset,
    tcfg: &TrainConfig,
    spec: &SolverSpec,
    state: &mut TrainState,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Vec<EpochRecord>> {
    params.check_shapes(&ds.config)?;
    if ds.mode() != Mode::Train {
        return Err(Error::config("data", "training needs a train-mode dataset"));
    }
    let s = input_scale(ds);
    let data: Vec<(Vec<CMatrix>, Vec<CMatrix>)> = ds
        .samples
        .iter()
        .map(|x| (scaled(&x.inputs, s), scaled(&x.labels, s)))
        .collect();
    let mut flat: Vec<CMatrix> = params.clone().into_vec();
    let records = fit(
        &mut flat,
        data.len(),
        tcfg,
        state,
        |p, i| {
            let w = ModelParams::from_vec(p.to_vec())?;
            let (loss, g) = tnode_loss_grad(&w, &data[i].0, &ds.samples[i].label_times, &data[i].1, spec, tcfg.gradient_path)?;
            Ok((loss, g.into_vec()))
        },
        on_epoch,
    )?;
    *params = ModelParams::from_vec(flat)?;
    Ok(records)
}
