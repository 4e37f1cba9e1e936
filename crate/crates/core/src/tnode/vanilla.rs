//! The vectorized GRU/ODE model that the tensor form replaces.
//!
//! It runs through the tensor code path with every right factor fixed to
//! the `1 × 1` identity and the channels vectorized into columns.

use rand::Rng;

use crate::autodiff::{Backend, Eager};
use crate::ctmath::{CMatrix, ONE};
use crate::error::{Error, Result};

use super::{predict_with, SolverSpec, TnodeWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct VanillaWeights<T> {
    pub u: [T; 3],
    pub w: [T; 3],
    pub v: [T; 3],
    pub h: T,
}

pub type VanillaParams = VanillaWeights<CMatrix>;

impl<T> VanillaWeights<T> {
    pub fn names() -> Vec<String> {
        let mut out: Vec<String> = ["U", "W", "V"]
            .iter()
            .flat_map(|p| super::GATES.iter().map(move |g| format!("{p}_{g}")))
            .collect();
        out.push("W_h".into());
        out
    }

    pub fn into_vec(self) -> Vec<T> {
        let mut out: Vec<T> = Vec::with_capacity(10);
        for arr in [self.u, self.w, self.v] {
            out.extend(arr);
        }
        out.push(self.h);
        out
    }

    pub fn from_vec(v: Vec<T>) -> Result<Self> {
        if v.len() != 10 {
            return Err(Error::Length {
                op: "VanillaWeights::from_vec",
                expected: 10,
                actual: v.len(),
            });
        }
        let mut it = v.into_iter();
        let mut three = || -> [T; 3] { [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()] };
        let (u, w, v) = (three(), three(), three());
        Ok(VanillaWeights {
            u,
            w,
            v,
            h: it.next().unwrap(),
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> VanillaWeights<U> {
        VanillaWeights {
            u: self.u.each_ref().map(&mut f),
            w: self.w.each_ref().map(&mut f),
            v: self.v.each_ref().map(&mut f),
            h: f(&self.h),
        }
    }
}

impl VanillaParams {
    /// `d_in` is `N_RF·N_R·M`, `d_h` the hidden size.
    pub fn shapes(d_in: usize, d_h: usize) -> Vec<(usize, usize)> {
        let mut out = vec![(d_h, d_in); 3];
        out.extend([(d_h, d_h); 6]);
        out.push((d_in, d_h));
        out
    }

    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        Self::from_vec(Self::shapes(d_in, d_h).into_iter().map(|(r, c)| CMatrix::zeros(r, c)).collect())
            .expect("ten tensors")
    }

    /// Entries ~ CN(0, 1/cols).
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_h: usize, rng: &mut R) -> Self {
        let v = Self::shapes(d_in, d_h)
            .into_iter()
            .map(|(r, c)| CMatrix::random_cn(r, c, 1.0 / c as f64, rng))
            .collect();
        Self::from_vec(v).expect("ten tensors")
    }

    pub fn d_in(&self) -> usize {
        self.u[0].cols()
    }

    pub fn d_h(&self) -> usize {
        self.u[0].rows()
    }

    /// Real floats held by the head `W^h`.
    pub fn head_float_count(&self) -> usize {
        2 * self.h.len()
    }
}

impl<V: Clone> VanillaWeights<V> {
    /// The tensor-model view with `1 × 1` identity right factors.
    pub fn as_tensor<B: Backend<Value = V>>(&self, b: &mut B) -> TnodeWeights<V> {
        let one = b.constant(CMatrix::scalar(ONE));
        let ones = [one.clone(), one.clone(), one.clone()];
        TnodeWeights {
            u_l: self.u.clone(),
            u_r: ones.clone(),
            w_l: self.w.clone(),
            w_r: ones.clone(),
            v_l: self.v.clone(),
            v_r: ones,
            h_l: self.h.clone(),
            h_r: one,
        }
    }
}

/// Predictions as `N_RF·N_R·M × 1` columns.
pub fn vanilla_predict_with<B: Backend>(
    b: &mut B,
    w: &VanillaWeights<B::Value>,
    inputs: &[B::Value],
    targets: &[f64],
    spec: &SolverSpec,
) -> Result<Vec<B::Value>> {
    let tw = w.as_tensor(b);
    let cols = inputs.iter().map(|x| b.vec(x)).collect::<Result<Vec<_>>>()?;
    predict_with(b, &tw, &cols, targets, spec)
}

pub fn vanilla_predict(
    params: &VanillaParams,
    inputs: &[CMatrix],
    targets: &[f64],
    spec: &SolverSpec,
) -> Result<Vec<CMatrix>> {
    vanilla_predict_with(&mut Eager, params, inputs, targets, spec)
}
