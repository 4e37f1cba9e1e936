//! Continuous adjoint gradients for the decoder ODE.
//!
//! The state, its adjoint `a = ∂L/∂O` and a parameter accumulator are
//! integrated backward together with the same scheme and step plan as the
//! forward pass. At every target the adjoint jumps by the head's `∂L/∂O(tᵢ)`
//! and the state is reset to the stored forward value.

use crate::autodiff::{Eager, Tape};
use crate::ctmath::{self, CMatrix};
use crate::error::Result;

use super::{
    bilinear, encode, ode_solve, step_plan, DecoderField, Field, ModelParams, Scheme, SolverSpec, TnodeWeights,
    ZeroField, DECODER,
};

/// A field that can also report vector-Jacobian products.
pub trait AdjointField {
    fn eval(&self, o: &CMatrix) -> Result<CMatrix>;

    /// `f(o)`, `Jₒᵀa` and `J_θᵀa` for every parameter, under the real-pair
    /// gradient convention.
    fn eval_vjp(&self, o: &CMatrix, a: &CMatrix) -> Result<(CMatrix, CMatrix, Vec<CMatrix>)>;
}

/// The decoder field of a model, differentiated with a per-stage tape.
pub struct DecoderAdjoint<'a> {
    pub params: &'a ModelParams,
}

impl AdjointField for DecoderAdjoint<'_> {
    fn eval(&self, o: &CMatrix) -> Result<CMatrix> {
        DecoderField::of(self.params).eval(&mut Eager, o)
    }

    fn eval_vjp(&self, o: &CMatrix, a: &CMatrix) -> Result<(CMatrix, CMatrix, Vec<CMatrix>)> {
        let mut tape = Tape::new();
        let o_id = tape.leaf(o.clone());
        let v_l = self.params.v_l.each_ref().map(|m| tape.leaf(m.clone()));
        let v_r = self.params.v_r.each_ref().map(|m| tape.leaf(m.clone()));
        let out = DecoderField { v_l: &v_l, v_r: &v_r }.eval(&mut tape, &o_id)?;
        let mut leaves = vec![o_id];
        leaves.extend(v_l);
        leaves.extend(v_r);
        let g = tape.backward_seeded(out, a.clone(), &leaves)?;
        let mut grads = g.collect(&leaves);
        let g_o = grads.remove(0);
        Ok((tape.value(out).clone(), g_o, grads))
    }
}

impl AdjointField for ZeroField {
    fn eval(&self, o: &CMatrix) -> Result<CMatrix> {
        Ok(CMatrix::zeros(o.rows(), o.cols()))
    }

    fn eval_vjp(&self, o: &CMatrix, _a: &CMatrix) -> Result<(CMatrix, CMatrix, Vec<CMatrix>)> {
        let z = CMatrix::zeros(o.rows(), o.cols());
        Ok((z.clone(), z, Vec::new()))
    }
}

struct Forward<'a, F>(&'a F);

impl<F: AdjointField> Field<Eager> for Forward<'_, F> {
    fn eval(&self, _b: &mut Eager, o: &CMatrix) -> Result<CMatrix> {
        self.0.eval(o)
    }
}

#[derive(Debug, Clone)]
pub struct AdjointResult {
    /// `∂L/∂O(0)`.
    pub a0: CMatrix,
    pub param_grads: Vec<CMatrix>,
    /// Adjoint value at the start of every backward segment, last target first.
    pub segment_starts: Vec<CMatrix>,
}

/// One backward pass over the augmented system, given the forward states
/// at `targets` and `∂L/∂O(tᵢ)` for each of them.
pub fn adjoint_core<F: AdjointField>(
    field: &F,
    o0: &CMatrix,
    targets: &[f64],
    dl_do: &[CMatrix],
    spec: &SolverSpec,
) -> Result<AdjointResult> {
    spec.validate()?;
    let plan = step_plan(targets, spec.step_frames)?;
    let states = ode_solve(&mut Eager, &Forward(field), o0, targets, spec)?;
    let mut a = CMatrix::zeros(o0.rows(), o0.cols());
    let mut g: Option<Vec<CMatrix>> = None;
    let mut segment_starts = Vec::with_capacity(targets.len());
    for i in (0..targets.len()).rev() {
        axpy(&mut a, 1.0, &dl_do[i]);
        segment_starts.push(a.clone());
        let mut o = states[i].clone();
        for &h in plan[i].iter().rev() {
            let (o2, a2, dg) = aug_step(field, &o, &a, -h, spec.scheme)?;
            o = o2;
            a = a2;
            match &mut g {
                Some(acc) => acc.iter_mut().zip(&dg).for_each(|(x, d)| axpy(x, 1.0, d)),
                None => g = Some(dg),
            }
        }
    }
    let param_grads = match g {
        Some(g) => g,
        None => field.eval_vjp(o0, &a)?.2.iter().map(|m| CMatrix::zeros(m.rows(), m.cols())).collect(),
    };
    Ok(AdjointResult {
        a0: a,
        param_grads,
        segment_starts,
    })
}

fn axpy(y: &mut CMatrix, s: f64, x: &CMatrix) {
    for (a, b) in y.data_mut().iter_mut().zip(x.data()) {
        *a += b * s;
    }
}

fn plus(y: &CMatrix, s: f64, x: &CMatrix) -> CMatrix {
    let mut out = y.clone();
    axpy(&mut out, s, x);
    out
}

/// Time derivative of `(O, a, g)`: `(f, −Jₒᵀa, −J_θᵀa)`.
fn aug_rhs<F: AdjointField>(field: &F, o: &CMatrix, a: &CMatrix) -> Result<(CMatrix, CMatrix, Vec<CMatrix>)> {
    let (f, jo, jt) = field.eval_vjp(o, a)?;
    Ok((f, ctmath::scale(&jo, (-1.0).into()), jt.iter().map(|m| ctmath::scale(m, (-1.0).into())).collect()))
}

/// One step of length `dt` (negative when running backward); returns the new
/// state, new adjoint and the accumulator increment.
fn aug_step<F: AdjointField>(
    field: &F,
    o: &CMatrix,
    a: &CMatrix,
    dt: f64,
    scheme: Scheme,
) -> Result<(CMatrix, CMatrix, Vec<CMatrix>)> {
    match scheme {
        Scheme::Euler => {
            let (fo, fa, fg) = aug_rhs(field, o, a)?;
            Ok((plus(o, dt, &fo), plus(a, dt, &fa), fg.iter().map(|m| ctmath::scale(m, dt.into())).collect()))
        }
        Scheme::Rk4 => {
            let k1 = aug_rhs(field, o, a)?;
            let k2 = aug_rhs(field, &plus(o, dt / 2.0, &k1.0), &plus(a, dt / 2.0, &k1.1))?;
            let k3 = aug_rhs(field, &plus(o, dt / 2.0, &k2.0), &plus(a, dt / 2.0, &k2.1))?;
            let k4 = aug_rhs(field, &plus(o, dt, &k3.0), &plus(a, dt, &k3.1))?;
            let w = [dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0];
            let ks = [&k1, &k2, &k3, &k4];
            let mut o2 = o.clone();
            let mut a2 = a.clone();
            let mut dg: Vec<CMatrix> = k1.2.iter().map(|m| CMatrix::zeros(m.rows(), m.cols())).collect();
            for (k, &wk) in ks.iter().zip(&w) {
                axpy(&mut o2, wk, &k.0);
                axpy(&mut a2, wk, &k.1);
                for (d, m) in dg.iter_mut().zip(&k.2) {
                    axpy(d, wk, m);
                }
            }
            Ok((o2, a2, dg))
        }
    }
}

/// NMSE loss and gradients with the decoder differentiated by the adjoint
/// method; encoder and head gradients come from tapes.
pub fn adjoint_backward(
    params: &ModelParams,
    inputs: &[CMatrix],
    targets: &[f64],
    labels: &[CMatrix],
    spec: &SolverSpec,
) -> Result<(f64, ModelParams)> {
    // encoder on its own tape
    let mut enc = Tape::new();
    let w_enc: TnodeWeights<_> = params.map(|m| enc.leaf(m.clone()));
    let xs: Vec<_> = inputs.iter().map(|m| enc.constant(m.clone())).collect();
    let o0_id = encode(&mut enc, &w_enc, &xs)?;
    let o0 = enc.value(o0_id).clone();

    let field = DecoderAdjoint { params };
    let states = ode_solve(&mut Eager, &Forward(&field), &o0, targets, spec)?;

    // head and loss with the states as leaves
    let mut head = Tape::new();
    let h_l = head.leaf(params.h_l.clone());
    let h_r = head.leaf(params.h_r.clone());
    let o_ids: Vec<_> = states.iter().map(|o| head.leaf(o.clone())).collect();
    let preds = o_ids
        .iter()
        .map(|o| bilinear(&mut head, &h_l, o, &h_r))
        .collect::<Result<Vec<_>>>()?;
    let loss_id = crate::training::nmse_loss(&mut head, &preds, labels)?;
    let mut leaves = vec![h_l, h_r];
    leaves.extend(&o_ids);
    let mut hg = head.backward(loss_id, &leaves)?.collect(&leaves);
    let dl_do = hg.split_off(2);

    let adj = adjoint_core(&field, &o0, targets, &dl_do, spec)?;

    let enc_leaves = w_enc.as_refs().into_vec().into_iter().copied().collect::<Vec<_>>();
    let enc_grads = enc.backward_seeded(o0_id, adj.a0, &enc_leaves[..DECODER.start])?;
    let mut flat: Vec<CMatrix> = enc_grads.collect(&enc_leaves[..DECODER.start]);
    flat.extend(adj.param_grads);
    flat.extend(hg);
    Ok((head.value(loss_id).get(0, 0).re, ModelParams::from_vec(flat)?))
}
