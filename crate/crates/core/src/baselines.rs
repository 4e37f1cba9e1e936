//! Discrete-time comparison schemes: outdated CSI, and frame-boundary
//! predictors (GRU, fully connected) followed by linear interpolation.

use rand::Rng;

use crate::autodiff::{self, Backend, Eager, Objective};
use crate::channelsim::{Dataset, Mode, SystemConfig};
use crate::ctmath::{self, CMatrix, Complex};
use crate::error::{Error, Result};
use crate::tnode::{encode, encoder_cell, pred_head, Checkpoint, VanillaParams, VanillaWeights};
use crate::training::{fit, input_scale, nmse_loss, scaled, EpochHook, EpochRecord, TrainConfig, TrainState};

/// Frame-boundary channels `Ĥ(k)` for `k = 0..=K`; entry 0 is the last
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrediction {
    pub frames: Vec<CMatrix>,
}

impl DiscretePrediction {
    pub fn new(frames: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Contract("a discrete prediction needs the observed frame".into()));
        };
        let shape = first.shape();
        if let Some(bad) = frames.iter().find(|f| f.shape() != shape) {
            return Err(Error::Shape {
                op: "DiscretePrediction::new",
                lhs: shape,
                rhs: bad.shape(),
            });
        }
        Ok(DiscretePrediction { frames })
    }

    /// Predicted frames `K`.
    pub fn horizon(&self) -> usize {
        self.frames.len() - 1
    }

    /// Interpolated channels on the slot grid `i = 1..=KQ`.
    pub fn on_grid(&self, slots_per_frame: usize) -> Result<Vec<CMatrix>> {
        let q = slots_per_frame;
        (1..=self.horizon() * q)
            .map(|i| {
                let k = (i - 1) / q;
                interpolate(self, k, i - k * q, q)
            })
            .collect()
    }
}

/// `(1 − q/Q)·Ĥ(k) + (q/Q)·Ĥ(k+1)`.
pub fn interpolate(dp: &DiscretePrediction, k: usize, q: usize, slots_per_frame: usize) -> Result<CMatrix> {
    if slots_per_frame == 0 || k >= dp.horizon() || q > slots_per_frame {
        return Err(Error::Contract(format!(
            "interpolate: need k < {} and q <= {slots_per_frame}, got k = {k}, q = {q}",
            dp.horizon()
        )));
    }
    if q == 0 {
        return Ok(dp.frames[k].clone());
    }
    if q == slots_per_frame {
        return Ok(dp.frames[k + 1].clone());
    }
    let a = q as f64 / slots_per_frame as f64;
    let lo = ctmath::scale(&dp.frames[k], Complex::new(1.0 - a, 0.0));
    let hi = ctmath::scale(&dp.frames[k + 1], Complex::new(a, 0.0));
    ctmath::add(&lo, &hi)
}

/// The last observation, held for every target time.
pub fn outdated_csi(inputs: &[CMatrix], targets: &[f64]) -> Result<Vec<CMatrix>> {
    let last = inputs
        .last()
        .ok_or_else(|| Error::Contract("outdated CSI needs at least one input".into()))?;
    Ok(vec![last.clone(); targets.len()])
}

/// Autoregressive GRU rollout over vectorized channels: `K` predicted
/// frame-boundary columns. The decoder gates `V` are not used.
pub fn gru_rollout_with<B: Backend>(
    b: &mut B,
    w: &VanillaWeights<B::Value>,
    inputs: &[B::Value],
    horizon: usize,
) -> Result<Vec<B::Value>> {
    let tw = w.as_tensor(b);
    let cols = inputs.iter().map(|x| b.vec(x)).collect::<Result<Vec<_>>>()?;
    let mut r = encode(b, &tw, &cols)?;
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let p = pred_head(b, &tw, &r)?;
        if k + 1 < horizon {
            r = encoder_cell(b, &tw, &p, &r)?;
        }
        out.push(p);
    }
    Ok(out)
}

fn unvec_all<B: Backend>(b: &mut B, cols: &[B::Value], shape: (usize, usize)) -> Result<Vec<B::Value>> {
    cols.iter().map(|c| b.unvec(c, shape.0, shape.1)).collect()
}

pub fn gru_discrete_predict(params: &VanillaParams, inputs: &[CMatrix], horizon: usize) -> Result<DiscretePrediction> {
    let last = inputs
        .last()
        .ok_or_else(|| Error::Contract("GRU prediction needs at least one input".into()))?;
    let cols = gru_rollout_with(&mut Eager, params, inputs, horizon)?;
    let mut frames = vec![last.clone()];
    frames.extend(unvec_all(&mut Eager, &cols, last.shape())?);
    DiscretePrediction::new(frames)
}

/// Two hidden layers with split tanh; input is the stacked `vec` of all
/// history frames, output the stacked `vec` of all `K` predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FcWeights<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
    pub w3: T,
    pub b3: T,
}

pub type FcParams = FcWeights<CMatrix>;

impl<T> FcWeights<T> {
    pub fn names() -> Vec<String> {
        ["W_1", "b_1", "W_2", "b_2", "W_3", "b_3"].map(String::from).to_vec()
    }

    pub fn into_vec(self) -> Vec<T> {
        vec![self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
    }

    pub fn from_vec(v: Vec<T>) -> Result<Self> {
        let n = v.len();
        let Ok([w1, b1, w2, b2, w3, b3]) = <[T; 6]>::try_from(v) else {
            return Err(Error::Length {
                op: "FcWeights::from_vec",
                expected: 6,
                actual: n,
            });
        };
        Ok(FcWeights { w1, b1, w2, b2, w3, b3 })
    }
}

impl FcParams {
    pub fn shapes(d_in: usize, width: usize, d_out: usize) -> Vec<(usize, usize)> {
        vec![(width, d_in), (width, 1), (width, width), (width, 1), (d_out, width), (d_out, 1)]
    }

    pub fn zeros(d_in: usize, width: usize, d_out: usize) -> Self {
        let v = Self::shapes(d_in, width, d_out).into_iter().map(|(r, c)| CMatrix::zeros(r, c)).collect();
        Self::from_vec(v).expect("six tensors")
    }

    /// Weights ~ CN(0, 1/fan_in), zero biases.
    pub fn init<R: Rng + ?Sized>(d_in: usize, width: usize, d_out: usize, rng: &mut R) -> Self {
        let v = Self::shapes(d_in, width, d_out)
            .into_iter()
            .map(|(r, c)| if c == 1 { CMatrix::zeros(r, 1) } else { CMatrix::random_cn(r, c, 1.0 / c as f64, rng) })
            .collect();
        Self::from_vec(v).expect("six tensors")
    }

    pub fn width(&self) -> usize {
        self.w1.rows()
    }
}

/// `K` predicted columns.
pub fn fc_forward_with<B: Backend>(
    b: &mut B,
    w: &FcWeights<B::Value>,
    inputs: &[B::Value],
    horizon: usize,
) -> Result<Vec<B::Value>> {
    let cols = inputs.iter().map(|x| b.vec(x)).collect::<Result<Vec<_>>>()?;
    let x = b.concat_rows(&cols)?;
    let layer = |b: &mut B, wm: &B::Value, bias: &B::Value, x: &B::Value| -> Result<B::Value> {
        let y = b.matmul(wm, x)?;
        b.add(&y, bias)
    };
    let h1p = layer(b, &w.w1, &w.b1, &x)?;
    let h1 = b.tanh(&h1p)?;
    let h2p = layer(b, &w.w2, &w.b2, &h1)?;
    let h2 = b.tanh(&h2p)?;
    let y = layer(b, &w.w3, &w.b3, &h2)?;
    let total = b.value(&y).rows();
    if horizon == 0 || total % horizon != 0 {
        return Err(Error::Contract(format!("FC output of {total} rows does not split into {horizon} frames")));
    }
    let d = total / horizon;
    (0..horizon).map(|k| b.slice_rows(&y, k * d, (k + 1) * d)).collect()
}

pub fn fc_discrete_predict(params: &FcParams, inputs: &[CMatrix], horizon: usize) -> Result<DiscretePrediction> {
    let last = inputs
        .last()
        .ok_or_else(|| Error::Contract("FC prediction needs at least one input".into()))?;
    let cols = fc_forward_with(&mut Eager, params, inputs, horizon)?;
    let mut frames = vec![last.clone()];
    frames.extend(unvec_all(&mut Eager, &cols, last.shape())?);
    DiscretePrediction::new(frames)
}

/// A trained frame-boundary predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteModel {
    Gru(VanillaParams),
    Fc(FcParams),
}

impl DiscreteModel {
    pub fn kind(&self) -> &'static str {
        match self {
            DiscreteModel::Gru(_) => "gru",
            DiscreteModel::Fc(_) => "fc",
        }
    }

    pub fn new_gru<R: Rng + ?Sized>(cfg: &SystemConfig, hidden: usize, rng: &mut R) -> Self {
        DiscreteModel::Gru(VanillaParams::init(cfg.eff_rows() * cfg.n_subcarriers, hidden, rng))
    }

    pub fn new_fc<R: Rng + ?Sized>(cfg: &SystemConfig, width: usize, rng: &mut R) -> Self {
        let d = cfg.eff_rows() * cfg.n_subcarriers;
        DiscreteModel::Fc(FcParams::init(cfg.history_frames * d, width, cfg.future_frames * d, rng))
    }

    /// Checkpoint tensor names, prefixed with the model kind.
    pub fn names(&self) -> Vec<String> {
        let raw = match self {
            DiscreteModel::Gru(_) => VanillaParams::names(),
            DiscreteModel::Fc(_) => FcParams::names(),
        };
        raw.into_iter().map(|n| format!("{}.{n}", self.kind())).collect()
    }

    pub fn to_vec(&self) -> Vec<CMatrix> {
        match self {
            DiscreteModel::Gru(p) => p.clone().into_vec(),
            DiscreteModel::Fc(p) => p.clone().into_vec(),
        }
    }

    /// Same kind, new weights.
    pub fn with_vec(&self, v: Vec<CMatrix>) -> Result<Self> {
        Ok(match self {
            DiscreteModel::Gru(_) => DiscreteModel::Gru(VanillaParams::from_vec(v)?),
            DiscreteModel::Fc(_) => DiscreteModel::Fc(FcParams::from_vec(v)?),
        })
    }

    /// Predicted frame-boundary columns on any backend.
    pub fn forward_with<B: Backend>(
        &self,
        b: &mut B,
        params: &[B::Value],
        inputs: &[B::Value],
        horizon: usize,
    ) -> Result<Vec<B::Value>> {
        match self {
            DiscreteModel::Gru(_) => gru_rollout_with(b, &VanillaWeights::from_vec(params.to_vec())?, inputs, horizon),
            DiscreteModel::Fc(_) => fc_forward_with(b, &FcWeights::from_vec(params.to_vec())?, inputs, horizon),
        }
    }

    pub fn predict(&self, inputs: &[CMatrix], horizon: usize) -> Result<DiscretePrediction> {
        match self {
            DiscreteModel::Gru(p) => gru_discrete_predict(p, inputs, horizon),
            DiscreteModel::Fc(p) => fc_discrete_predict(p, inputs, horizon),
        }
    }

    pub fn to_checkpoint(&self, cfg: &SystemConfig) -> Checkpoint {
        let mut ck = Checkpoint::new(cfg.clone());
        for (n, m) in self.names().into_iter().zip(self.to_vec()) {
            ck.insert(n, m);
        }
        ck
    }

    /// Reads a `kind` model (`"gru"` or `"fc"`) from a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint, kind: &str) -> Result<Self> {
        let take = |names: Vec<String>| -> Result<Vec<CMatrix>> {
            names
                .iter()
                .map(|n| ck.require(&format!("{kind}.{n}")).cloned())
                .collect()
        };
        let model = match kind {
            "gru" => DiscreteModel::Gru(VanillaParams::from_vec(take(VanillaParams::names())?)?),
            "fc" => DiscreteModel::Fc(FcParams::from_vec(take(FcParams::names())?)?),
            other => return Err(Error::config("baseline", format!("unknown baseline kind {other:?}"))),
        };
        model.check_shapes(&ck.config)?;
        Ok(model)
    }

    pub fn check_shapes(&self, cfg: &SystemConfig) -> Result<()> {
        let d = cfg.eff_rows() * cfg.n_subcarriers;
        let expected = match self {
            DiscreteModel::Gru(p) => VanillaParams::shapes(d, p.d_h()),
            DiscreteModel::Fc(p) => FcParams::shapes(cfg.history_frames * d, p.width(), cfg.future_frames * d),
        };
        for ((name, m), (r, c)) in self.names().iter().zip(self.to_vec()).zip(expected) {
            if m.shape() != (r, c) {
                return Err(Error::config(
                    name,
                    format!("shape {:?} does not match the configuration's ({r}, {c})", m.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Frame-boundary NMSE for one sample.
struct BoundaryObjective<'a> {
    model: &'a DiscreteModel,
    inputs: &'a [CMatrix],
    labels: &'a [CMatrix],
}

impl Objective for BoundaryObjective<'_> {
    fn eval<B: Backend>(&self, b: &mut B, params: &[B::Value]) -> Result<B::Value> {
        let inputs: Vec<B::Value> = self.inputs.iter().map(|m| b.constant(m.clone())).collect();
        let cols = self.model.forward_with(b, params, &inputs, self.labels.len())?;
        let labels: Vec<CMatrix> = self.labels.iter().map(ctmath::vec).collect();
        nmse_loss(b, &cols, &labels)
    }
}

/// Noise-free channels at frames `1..=K`, rebuilt from each sample's paths.
pub fn boundary_labels(ds: &Dataset) -> Vec<Vec<CMatrix>> {
    let times: Vec<f64> = (1..=ds.config.future_frames).map(|k| k as f64).collect();
    ds.samples.iter().map(|s| s.clean_at(&ds.config, &times)).collect()
}

/// Trains a discrete predictor on a train-mode dataset, using only the
/// frame-boundary labels.
pub fn train_discrete(
    model: &mut DiscreteModel,
    ds: &Dataset,
    tcfg: &TrainConfig,
    state: &mut TrainState,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Vec<EpochRecord>> {
    model.check_shapes(&ds.config)?;
    if ds.mode() != Mode::Train {
        return Err(Error::config("data", "training needs a train-mode dataset"));
    }
    let s = input_scale(ds);
    let data: Vec<(Vec<CMatrix>, Vec<CMatrix>)> = ds
        .samples
        .iter()
        .zip(boundary_labels(ds))
        .map(|(x, l)| (scaled(&x.inputs, s), scaled(&l, s)))
        .collect();
    let mut flat = model.to_vec();
    let shape = model.clone();
    let records = fit(
        &mut flat,
        data.len(),
        tcfg,
        state,
        |p, i| {
            let obj = BoundaryObjective {
                model: &shape,
                inputs: &data[i].0,
                labels: &data[i].1,
            };
            autodiff::value_and_grad(&obj, p)
        },
        on_epoch,
    )?;
    *model = model.with_vec(flat)?;
    Ok(records)
}

/// Interpolated predictions on the test grid for one sample, in the
/// dataset's units.
pub fn predict_grid(model: &DiscreteModel, inputs: &[CMatrix], cfg: &SystemConfig, scale: f64) -> Result<Vec<CMatrix>> {
    let dp = model.predict(&scaled(inputs, scale), cfg.future_frames)?;
    let back = DiscretePrediction::new(dp.frames.iter().map(|f| ctmath::scale(f, Complex::new(scale, 0.0))).collect())?;
    back.on_grid(cfg.slots_per_frame)
}
