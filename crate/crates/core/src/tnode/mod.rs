//! Tensorized neural-ODE channel predictor.
//!
//! The encoder is a GRU whose input and recurrent maps act as `L·X·R`
//! products, the decoder is the matching gated ODE field, and the head maps
//! the hidden state back to an effective channel. All model code runs over
//! [`Backend`], so the same functions serve evaluation, tape gradients and
//! multiplication counting.

mod adjoint;
mod checkpoint;
mod flops;
mod solver;
mod vanilla;

use std::ops::Range;

use rand::Rng;

use crate::autodiff::{self, Backend, Eager, Objective};
use crate::channelsim::SystemConfig;
use crate::ctmath::{CMatrix, ONE};
use crate::error::{Error, Result};

pub use adjoint::{adjoint_backward, adjoint_core, AdjointField, DecoderAdjoint};
pub use checkpoint::Checkpoint;
pub use flops::{count_flops, Counting, FlopReport};
pub use solver::{field_evaluations, ode_solve, step, step_plan, Field, LinearField, Scheme, SolverSpec, ZeroField};
pub use vanilla::{vanilla_predict, vanilla_predict_with, VanillaParams, VanillaWeights};

pub const GATES: [&str; 3] = ["z", "x", "u"];
pub const N_TENSORS: usize = 20;
pub const ENCODER: Range<usize> = 0..12;
pub const DECODER: Range<usize> = 12..18;
pub const HEAD: Range<usize> = 18..20;

/// Every weight of the model. Gate arrays are ordered `z, x, u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TnodeWeights<T> {
    pub u_l: [T; 3],
    pub u_r: [T; 3],
    pub w_l: [T; 3],
    pub w_r: [T; 3],
    pub v_l: [T; 3],
    pub v_r: [T; 3],
    pub h_l: T,
    pub h_r: T,
}

pub type ModelParams = TnodeWeights<CMatrix>;

const GATED: [&str; 6] = ["U_l", "U_r", "W_l", "W_r", "V_l", "V_r"];

impl<T> TnodeWeights<T> {
    /// Tensor names in flat order.
    pub fn names() -> Vec<String> {
        let mut out: Vec<String> = GATED
            .iter()
            .flat_map(|p| GATES.iter().map(move |g| format!("{p}_{g}")))
            .collect();
        out.push("W_l_h".into());
        out.push("W_r_h".into());
        out
    }

    pub fn into_vec(self) -> Vec<T> {
        let mut out = Vec::with_capacity(N_TENSORS);
        for arr in [self.u_l, self.u_r, self.w_l, self.w_r, self.v_l, self.v_r] {
            out.extend(arr);
        }
        out.push(self.h_l);
        out.push(self.h_r);
        out
    }

    pub fn from_vec(v: Vec<T>) -> Result<Self> {
        if v.len() != N_TENSORS {
            return Err(Error::Length {
                op: "TnodeWeights::from_vec",
                expected: N_TENSORS,
                actual: v.len(),
            });
        }
        let mut it = v.into_iter();
        let mut three = || -> [T; 3] { [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()] };
        let (u_l, u_r, w_l, w_r, v_l, v_r) = (three(), three(), three(), three(), three(), three());
        Ok(TnodeWeights {
            u_l,
            u_r,
            w_l,
            w_r,
            v_l,
            v_r,
            h_l: it.next().unwrap(),
            h_r: it.next().unwrap(),
        })
    }

    pub fn as_refs(&self) -> TnodeWeights<&T> {
        TnodeWeights {
            u_l: self.u_l.each_ref(),
            u_r: self.u_r.each_ref(),
            w_l: self.w_l.each_ref(),
            w_r: self.w_r.each_ref(),
            v_l: self.v_l.each_ref(),
            v_r: self.v_r.each_ref(),
            h_l: &self.h_l,
            h_r: &self.h_r,
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> TnodeWeights<U> {
        let r = self.as_refs();
        TnodeWeights::from_vec(r.into_vec().into_iter().map(f).collect()).expect("same arity")
    }
}

/// Whether a tensor multiplies from the left (`true`) or the right.
fn is_left(name: &str) -> bool {
    name.contains("_l_")
}

impl ModelParams {
    /// Expected shapes in flat order.
    pub fn shapes(cfg: &SystemConfig) -> Vec<(usize, usize)> {
        let (d, m, fl, fr) = (cfg.eff_rows(), cfg.n_subcarriers, cfg.feature_l, cfg.feature_r);
        let gated = [(fl, d), (m, fr), (fl, fl), (fr, fr), (fl, fl), (fr, fr)];
        let mut out: Vec<(usize, usize)> = gated.iter().flat_map(|&s| [s; 3]).collect();
        out.push((d, fl));
        out.push((fr, m));
        out
    }

    pub fn zeros(cfg: &SystemConfig) -> Self {
        let v = Self::shapes(cfg).into_iter().map(|(r, c)| CMatrix::zeros(r, c)).collect();
        Self::from_vec(v).expect("shape table has every tensor")
    }

    /// Entries ~ CN(0, 1/fan_in): columns for left factors, rows for right.
    pub fn init<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let v = Self::names()
            .iter()
            .zip(Self::shapes(cfg))
            .map(|(name, (r, c))| {
                let fan_in = if is_left(name) { c } else { r };
                CMatrix::random_cn(r, c, 1.0 / fan_in as f64, rng)
            })
            .collect();
        Self::from_vec(v).expect("shape table has every tensor")
    }

    pub fn check_shapes(&self, cfg: &SystemConfig) -> Result<()> {
        let names = Self::names();
        for ((name, m), want) in names.iter().zip(self.as_refs().into_vec()).zip(Self::shapes(cfg)) {
            if m.shape() != want {
                return Err(Error::config(
                    name,
                    format!("shape {:?} does not match configured {:?}", m.shape(), want),
                ));
            }
        }
        Ok(())
    }

    /// Real floats held by the head, `2·(rows·cols)` summed over both factors.
    pub fn head_float_count(&self) -> usize {
        2 * (self.h_l.len() + self.h_r.len())
    }

    pub fn to_checkpoint(&self, cfg: &SystemConfig) -> Checkpoint {
        let mut ck = Checkpoint::new(cfg.clone());
        for (name, m) in Self::names().into_iter().zip(self.as_refs().into_vec()) {
            ck.insert(name, m.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let v = Self::names()
            .iter()
            .map(|n| ck.require(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        let p = Self::from_vec(v)?;
        p.check_shapes(&ck.config)?;
        Ok(p)
    }
}

/// Backend values for every weight, e.g. tape leaves.
pub fn lift<B: Backend>(b: &mut B, params: &ModelParams) -> TnodeWeights<B::Value> {
    params.map(|m| b.constant(m.clone()))
}

/// `L·X·R`.
pub(crate) fn bilinear<B: Backend>(b: &mut B, l: &B::Value, x: &B::Value, r: &B::Value) -> Result<B::Value> {
    b.matmul3(l, x, r)
}

/// `(1 − Z)∘U + Z∘S`.
fn gated_update<B: Backend>(b: &mut B, z: &B::Value, u: &B::Value, s: &B::Value) -> Result<B::Value> {
    let keep = b.rsub_scalar(ONE, z)?;
    let new = b.hadamard(&keep, u)?;
    let old = b.hadamard(z, s)?;
    b.add(&new, &old)
}

/// One tensor-GRU step `R[n−1] → R[n]` driven by the input `Ĥ[n]`.
pub fn encoder_cell<B: Backend>(
    b: &mut B,
    w: &TnodeWeights<B::Value>,
    h_in: &B::Value,
    r_prev: &B::Value,
) -> Result<B::Value> {
    let pre = |b: &mut B, g: usize, state: &B::Value| -> Result<B::Value> {
        let i = bilinear(b, &w.u_l[g], h_in, &w.u_r[g])?;
        let s = bilinear(b, &w.w_l[g], state, &w.w_r[g])?;
        b.add(&i, &s)
    };
    let zp = pre(b, 0, r_prev)?;
    let z = b.sigmoid(&zp)?;
    let xp = pre(b, 1, r_prev)?;
    let x = b.sigmoid(&xp)?;
    let rx = b.hadamard(r_prev, &x)?;
    let up = pre(b, 2, &rx)?;
    let u = b.tanh(&up)?;
    gated_update(b, &z, &u, r_prev)
}

/// Folds [`encoder_cell`] over the inputs (oldest first) from a zero state.
pub fn encode<B: Backend>(b: &mut B, w: &TnodeWeights<B::Value>, inputs: &[B::Value]) -> Result<B::Value> {
    if inputs.is_empty() {
        return Err(Error::Contract("encode needs at least one input".into()));
    }
    let fl = b.value(&w.w_l[0]).rows();
    let fr = b.value(&w.w_r[0]).cols();
    let mut r = b.constant(CMatrix::zeros(fl, fr));
    for h in inputs {
        r = encoder_cell(b, w, h, &r)?;
    }
    Ok(r)
}

/// The gated decoder field `dO/dt`.
pub struct DecoderField<'a, V> {
    pub v_l: &'a [V; 3],
    pub v_r: &'a [V; 3],
}

impl<'a, V> DecoderField<'a, V> {
    pub fn of(w: &'a TnodeWeights<V>) -> Self {
        DecoderField { v_l: &w.v_l, v_r: &w.v_r }
    }
}

impl<B: Backend> Field<B> for DecoderField<'_, B::Value> {
    fn eval(&self, b: &mut B, o: &B::Value) -> Result<B::Value> {
        let zp = bilinear(b, &self.v_l[0], o, &self.v_r[0])?;
        let z = b.sigmoid(&zp)?;
        let xp = bilinear(b, &self.v_l[1], o, &self.v_r[1])?;
        let x = b.sigmoid(&xp)?;
        let ox = b.hadamard(o, &x)?;
        let up = bilinear(b, &self.v_l[2], &ox, &self.v_r[2])?;
        let u = b.tanh(&up)?;
        gated_update(b, &z, &u, o)
    }
}

/// `Ĥ(t) = W_l^h·O(t)·W_r^h`.
pub fn pred_head<B: Backend>(b: &mut B, w: &TnodeWeights<B::Value>, o: &B::Value) -> Result<B::Value> {
    bilinear(b, &w.h_l, o, &w.h_r)
}

pub fn predict_with<B: Backend>(
    b: &mut B,
    w: &TnodeWeights<B::Value>,
    inputs: &[B::Value],
    targets: &[f64],
    spec: &SolverSpec,
) -> Result<Vec<B::Value>> {
    let o0 = encode(b, w, inputs)?;
    let states = ode_solve(b, &DecoderField::of(w), &o0, targets, spec)?;
    states.iter().map(|o| pred_head(b, w, o)).collect()
}

/// Predicted effective channels at each target time (frames).
pub fn predict(params: &ModelParams, inputs: &[CMatrix], targets: &[f64], spec: &SolverSpec) -> Result<Vec<CMatrix>> {
    predict_with(&mut Eager, params, inputs, targets, spec)
}

/// NMSE of one sample's predictions as a function of the flat weight list.
pub struct SampleObjective<'a> {
    pub inputs: &'a [CMatrix],
    pub targets: &'a [f64],
    pub labels: &'a [CMatrix],
    pub spec: SolverSpec,
}

impl Objective for SampleObjective<'_> {
    fn eval<B: Backend>(&self, b: &mut B, params: &[B::Value]) -> Result<B::Value> {
        let w = TnodeWeights::from_vec(params.to_vec())?;
        let inputs: Vec<B::Value> = self.inputs.iter().map(|m| b.constant(m.clone())).collect();
        let preds = predict_with(b, &w, &inputs, self.targets, &self.spec)?;
        crate::training::nmse_loss(b, &preds, self.labels)
    }
}

/// Loss and tape gradients (backprop through the solver) for one sample.
pub fn tape_backward(
    params: &ModelParams,
    inputs: &[CMatrix],
    targets: &[f64],
    labels: &[CMatrix],
    spec: &SolverSpec,
) -> Result<(f64, ModelParams)> {
    let obj = SampleObjective {
        inputs,
        targets,
        labels,
        spec: *spec,
    };
    let flat = params.as_refs().into_vec().into_iter().cloned().collect::<Vec<_>>();
    let (loss, grads) = autodiff::value_and_grad(&obj, &flat)?;
    Ok((loss, ModelParams::from_vec(grads)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, Tape};
    use crate::ctmath::{self, split_sigmoid, split_tanh, Complex};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> SystemConfig {
        SystemConfig::desk()
    }

    fn tiny() -> SystemConfig {
        SystemConfig {
            n_tx: 8,
            n_rx: 2,
            n_rf: 2,
            n_subcarriers: 6,
            feature_l: 3,
            feature_r: 5,
            history_frames: 3,
            ..SystemConfig::desk()
        }
    }

    fn inputs(cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> Vec<CMatrix> {
        (0..cfg.history_frames)
            .map(|_| CMatrix::random_cn(cfg.eff_rows(), cfg.n_subcarriers, 0.2, rng))
            .collect()
    }

    fn lit_bil(l: &CMatrix, x: &CMatrix, r: &CMatrix) -> CMatrix {
        ctmath::cmatmul(&ctmath::cmatmul(l, x).unwrap(), r).unwrap()
    }

    fn lit_gate(z: &CMatrix, u: &CMatrix, s: &CMatrix) -> CMatrix {
        let one = CMatrix::ones(z.rows(), z.cols());
        let a = ctmath::hadamard(&ctmath::sub(&one, z).unwrap(), u).unwrap();
        ctmath::add(&a, &ctmath::hadamard(z, s).unwrap()).unwrap()
    }

    fn literal_encoder_cell(p: &ModelParams, h: &CMatrix, r: &CMatrix) -> CMatrix {
        let z = split_sigmoid(&ctmath::add(&lit_bil(&p.u_l[0], h, &p.u_r[0]), &lit_bil(&p.w_l[0], r, &p.w_r[0])).unwrap());
        let x = split_sigmoid(&ctmath::add(&lit_bil(&p.u_l[1], h, &p.u_r[1]), &lit_bil(&p.w_l[1], r, &p.w_r[1])).unwrap());
        let rx = ctmath::hadamard(r, &x).unwrap();
        let u = split_tanh(&ctmath::add(&lit_bil(&p.u_l[2], h, &p.u_r[2]), &lit_bil(&p.w_l[2], &rx, &p.w_r[2])).unwrap());
        lit_gate(&z, &u, r)
    }

    fn literal_field(p: &ModelParams, o: &CMatrix) -> CMatrix {
        let z = split_sigmoid(&lit_bil(&p.v_l[0], o, &p.v_r[0]));
        let x = split_sigmoid(&lit_bil(&p.v_l[1], o, &p.v_r[1]));
        let u = split_tanh(&lit_bil(&p.v_l[2], &ctmath::hadamard(o, &x).unwrap(), &p.v_r[2]));
        lit_gate(&z, &u, o)
    }

    #[test]
    fn names_and_shapes() {
        let names = ModelParams::names();
        assert_eq!(names.len(), N_TENSORS);
        assert_eq!(names[0], "U_l_z");
        assert_eq!(names[10], "W_r_x");
        assert_eq!(names[14], "V_l_u");
        assert_eq!(&names[18..], ["W_l_h", "W_r_h"]);
        let cfg = desk();
        let p = ModelParams::zeros(&cfg);
        assert_eq!(p.u_l[0].shape(), (16, 8));
        assert_eq!(p.u_r[2].shape(), (16, 32));
        assert_eq!(p.h_l.shape(), (8, 16));
        assert_eq!(p.h_r.shape(), (32, 16));
        p.check_shapes(&cfg).unwrap();
        assert!(ModelParams::zeros(&tiny()).check_shapes(&cfg).is_err());
    }

    #[test]
    fn init_variance_follows_fan_in() {
        let cfg = SystemConfig::paper();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let var = |m: &CMatrix| ctmath::fro_norm_sq(m) / m.len() as f64;
        assert!((var(&p.u_l[0]) * 16.0 - 1.0).abs() < 0.1);
        assert!((var(&p.u_r[0]) * 256.0 - 1.0).abs() < 0.1);
        assert!((var(&p.h_r) * 128.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_encoder_cell() {
        let cfg = tiny();
        let p = ModelParams::zeros(&cfg);
        let h = CMatrix::zeros(cfg.eff_rows(), cfg.n_subcarriers);
        let r = CMatrix::zeros(cfg.feature_l, cfg.feature_r);
        assert_eq!(encoder_cell(&mut Eager, &p, &h, &r).unwrap(), r);
        let half = Complex::new(0.5, 0.5);
        let z = split_sigmoid(&lit_bil(&p.u_l[0], &h, &p.u_r[0]));
        assert!(z.data().iter().all(|&v| v == half));
    }

    #[test]
    fn encoder_cell_matches_literal_transcription() {
        let cfg = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(&cfg, &mut rng);
        let h = CMatrix::random_cn(cfg.eff_rows(), cfg.n_subcarriers, 1.0, &mut rng);
        let r = CMatrix::random_cn(cfg.feature_l, cfg.feature_r, 1.0, &mut rng);
        let got = encoder_cell(&mut Eager, &p, &h, &r).unwrap();
        assert!(got.max_abs_diff(&literal_encoder_cell(&p, &h, &r)) < 1e-12);
        assert_eq!(got.shape(), (cfg.feature_l, cfg.feature_r));
    }

    #[test]
    fn decoder_field_matches_literal_and_is_autonomous() {
        let cfg = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(&cfg, &mut rng);
        let o = CMatrix::random_cn(cfg.feature_l, cfg.feature_r, 1.0, &mut rng);
        let w = p.clone();
        let f = DecoderField::of(&w);
        let a = f.eval(&mut Eager, &o).unwrap();
        assert!(a.max_abs_diff(&literal_field(&p, &o)) < 1e-12);
        assert_eq!(a, f.eval(&mut Eager, &o).unwrap());
        let zero = ModelParams::zeros(&cfg);
        let zo = CMatrix::zeros(cfg.feature_l, cfg.feature_r);
        assert_eq!(DecoderField::of(&zero).eval(&mut Eager, &zo).unwrap(), zo);
    }

    #[test]
    fn encode_folds_and_is_order_sensitive() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::init(&cfg, &mut rng);
        let xs = inputs(&cfg, &mut rng);
        let r0 = CMatrix::zeros(cfg.feature_l, cfg.feature_r);
        assert_eq!(
            encode(&mut Eager, &p, &xs[..1]).unwrap(),
            encoder_cell(&mut Eager, &p, &xs[0], &r0).unwrap()
        );
        let fwd = encode(&mut Eager, &p, &xs).unwrap();
        let mut rev = xs.clone();
        rev.reverse();
        assert!(fwd.max_abs_diff(&encode(&mut Eager, &p, &rev).unwrap()) > 1e-6);
        let zero = ModelParams::zeros(&cfg);
        let zin: Vec<CMatrix> = xs.iter().map(|x| CMatrix::zeros(x.rows(), x.cols())).collect();
        assert_eq!(encode(&mut Eager, &zero, &zin).unwrap(), r0);
        assert!(encode(&mut Eager, &p, &[]).is_err());
    }

    #[test]
    fn gates_stay_in_range() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::init(&cfg, &mut rng);
        for _ in 0..20 {
            let h = CMatrix::random_cn(cfg.eff_rows(), cfg.n_subcarriers, 25.0, &mut rng);
            let r = CMatrix::random_cn(cfg.feature_l, cfg.feature_r, 25.0, &mut rng);
            let z = split_sigmoid(&ctmath::add(&lit_bil(&p.u_l[0], &h, &p.u_r[0]), &lit_bil(&p.w_l[0], &r, &p.w_r[0])).unwrap());
            let u = split_tanh(&ctmath::add(&lit_bil(&p.u_l[2], &h, &p.u_r[2]), &lit_bil(&p.w_l[2], &r, &p.w_r[2])).unwrap());
            assert!(z.data().iter().all(|v| v.re > 0.0 && v.re < 1.0 && v.im > 0.0 && v.im < 1.0));
            assert!(u.data().iter().all(|v| v.re.abs() <= 1.0 && v.im.abs() <= 1.0));
        }
    }

    #[test]
    fn head_identity_linearity_and_count() {
        let cfg = SystemConfig {
            feature_l: 8,
            feature_r: 16,
            ..desk()
        };
        let mut p = ModelParams::zeros(&cfg);
        p.h_l = CMatrix::identity(8);
        p.h_r = CMatrix::identity(16);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let o = CMatrix::random_cn(8, 16, 1.0, &mut rng);
        assert_eq!(pred_head(&mut Eager, &p, &o).unwrap(), o);

        let p = ModelParams::init(&cfg, &mut rng);
        let o2 = CMatrix::random_cn(8, 16, 1.0, &mut rng);
        let (a, b) = (Complex::new(0.3, -1.2), Complex::new(-2.0, 0.5));
        let mix = ctmath::add(&ctmath::scale(&o, a), &ctmath::scale(&o2, b)).unwrap();
        let lhs = pred_head(&mut Eager, &p, &mix).unwrap();
        let rhs = ctmath::add(
            &ctmath::scale(&pred_head(&mut Eager, &p, &o).unwrap(), a),
            &ctmath::scale(&pred_head(&mut Eager, &p, &o2).unwrap(), b),
        )
        .unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);

        let full = SystemConfig {
            feature_l: 16,
            feature_r: 256,
            ..SystemConfig::paper()
        };
        assert_eq!(ModelParams::zeros(&full).head_float_count(), 131_584);
    }

    #[test]
    fn predict_prefix_zero_and_shapes() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = ModelParams::init(&cfg, &mut rng);
        let xs = inputs(&cfg, &mut rng);
        let spec = SolverSpec::per_slot(5);
        let one = predict(&p, &xs, &[0.3], &spec).unwrap();
        let two = predict(&p, &xs, &[0.3, 1.1], &spec).unwrap();
        assert_eq!(one[0], two[0]);
        assert_eq!(two.len(), 2);
        assert_eq!(two[1].shape(), cfg.channel_shape());
        let z = predict(&ModelParams::zeros(&cfg), &xs, &[0.3, 1.1], &spec).unwrap();
        assert!(z.iter().all(|m| m.data().iter().all(|v| *v == Complex::new(0.0, 0.0))));
        let again = predict(&p, &xs, &[0.3, 1.1], &spec).unwrap();
        assert_eq!(two, again);
    }

    #[test]
    fn teacher_equals_student_has_zero_loss_and_gradient() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = ModelParams::init(&cfg, &mut rng);
        let xs = inputs(&cfg, &mut rng);
        let spec = SolverSpec::per_slot(5);
        let t = [0.4, 0.9, 1.7];
        let labels = predict(&p, &xs, &t, &spec).unwrap();
        let (loss, g) = tape_backward(&p, &xs, &t, &labels, &spec).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.into_vec().iter().all(|m| ctmath::fro_norm_sq(m) == 0.0));
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ModelParams::init(&cfg, &mut rng);
        let xs = inputs(&cfg, &mut rng);
        let t = [0.35, 1.0, 1.6];
        let labels: Vec<CMatrix> = t
            .iter()
            .map(|_| CMatrix::random_cn(cfg.eff_rows(), cfg.n_subcarriers, 0.2, &mut rng))
            .collect();
        let obj = SampleObjective {
            inputs: &xs,
            targets: &t,
            labels: &labels,
            spec: SolverSpec::per_slot(5),
        };
        let flat = p.into_vec();
        let err = finite_diff_check(&obj, &flat, 40, 1e-6, 11).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn tape_and_eager_agree_bitwise() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = ModelParams::init(&cfg, &mut rng);
        let xs = inputs(&cfg, &mut rng);
        let spec = SolverSpec::per_slot(5);
        let eager = predict(&p, &xs, &[0.5, 2.0], &spec).unwrap();
        let mut tape = Tape::new();
        let w = p.map(|m| tape.leaf(m.clone()));
        let ins: Vec<_> = xs.iter().map(|m| tape.constant(m.clone())).collect();
        let out = predict_with(&mut tape, &w, &ins, &[0.5, 2.0], &spec).unwrap();
        for (a, b) in eager.iter().zip(&out) {
            assert_eq!(a, tape.value(*b));
        }
    }
}
