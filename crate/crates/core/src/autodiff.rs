//! Reverse-mode differentiation over complex matrices.
//!
//! Every complex entry is treated as a pair of independent real parameters.
//! The gradient of a real loss `L` with respect to a matrix `A` is stored as
//! `∂L/∂Re A + i·∂L/∂Im A`. Under that convention the adjoints are:
//!
//! | op            | adjoint                                   |
//! |---------------|-------------------------------------------|
//! | `C = A·B`     | `G_A = G_C·Bᴴ`, `G_B = Aᴴ·G_C`            |
//! | `C = A∘B`     | `G_A = G_C∘conj(B)`                       |
//! | `C = s·A`     | `G_A = conj(s)·G_C`                       |
//! | split σ, tanh | real and imaginary parts independently     |
//! | `‖A‖²`        | `G_A = 2·Re(G)·A`                         |
//!
//! Model code is written once against [`Backend`] and runs eagerly
//! ([`Eager`]), on a [`Tape`], or under a multiplication counter.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctmath::{self, CMatrix, Complex, ONE};
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operations that can be recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    MatMul,
    Hadamard,
    Add,
    Sub,
    Scale(Complex),
    /// `c − A` with `c` broadcast as a constant matrix of the same shape.
    RSubScalar(Complex),
    SplitSigmoid,
    SplitTanh,
    ConjTranspose,
    Transpose,
    FroNormSq,
    Vec,
    Unvec { rows: usize, cols: usize },
    SliceRows { start: usize, end: usize },
    ConcatRows,
    /// Present so callers get an explicit error rather than a silent gap.
    SolveHermitian,
}

impl OpKind {
    fn arity(&self) -> Option<usize> {
        use OpKind::*;
        match self {
            MatMul | Hadamard | Add | Sub | SolveHermitian => Some(2),
            ConcatRows => None,
            _ => Some(1),
        }
    }

    fn name(&self) -> &'static str {
        use OpKind::*;
        match self {
            MatMul => "matmul",
            Hadamard => "hadamard",
            Add => "add",
            Sub => "sub",
            Scale(_) => "scale",
            RSubScalar(_) => "rsub_scalar",
            SplitSigmoid => "split_sigmoid",
            SplitTanh => "split_tanh",
            ConjTranspose => "conj_transpose",
            Transpose => "transpose",
            FroNormSq => "fro_norm_sq",
            Vec => "vec",
            Unvec { .. } => "unvec",
            SliceRows { .. } => "slice_rows",
            ConcatRows => "concat_rows",
            SolveHermitian => "solve_hermitian",
        }
    }
}

/// Forward rule shared by recording and replay.
fn eval_op(kind: &OpKind, inputs: &[&CMatrix]) -> Result<CMatrix> {
    use OpKind::*;
    Ok(match kind {
        MatMul => ctmath::cmatmul(inputs[0], inputs[1])?,
        Hadamard => ctmath::hadamard(inputs[0], inputs[1])?,
        Add => ctmath::add(inputs[0], inputs[1])?,
        Sub => ctmath::sub(inputs[0], inputs[1])?,
        Scale(s) => ctmath::scale(inputs[0], *s),
        RSubScalar(c) => inputs[0].map(|z| c - z),
        SplitSigmoid => ctmath::split_sigmoid(inputs[0]),
        SplitTanh => ctmath::split_tanh(inputs[0]),
        ConjTranspose => ctmath::conj_transpose(inputs[0]),
        Transpose => inputs[0].transpose(),
        FroNormSq => CMatrix::scalar(Complex::new(ctmath::fro_norm_sq(inputs[0]), 0.0)),
        Vec => ctmath::vec(inputs[0]),
        Unvec { rows, cols } => ctmath::unvec(inputs[0], *rows, *cols)?,
        SliceRows { start, end } => inputs[0].slice_rows(*start, *end)?,
        ConcatRows => {
            let cols = inputs[0].cols();
            let mut data = std::vec::Vec::new();
            let mut rows = 0;
            for m in inputs {
                if m.cols() != cols {
                    return Err(Error::Shape {
                        op: "concat_rows",
                        lhs: inputs[0].shape(),
                        rhs: m.shape(),
                    });
                }
                rows += m.rows();
                data.extend_from_slice(m.data());
            }
            CMatrix::new(rows, cols, data)?
        }
        SolveHermitian => return Err(Error::Unsupported("solve_hermitian")),
    })
}

#[derive(Debug, Clone)]
struct Node {
    kind: Option<OpKind>,
    inputs: Vec<VarId>,
    value: CMatrix,
    requires_grad: bool,
}

/// Append-only record of a computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to requested leaves.
#[derive(Debug, Clone)]
pub struct Gradients {
    map: HashMap<VarId, CMatrix>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&CMatrix> {
        self.map.get(&id)
    }

    /// Gradients in the order of `ids`.
    pub fn collect(&self, ids: &[VarId]) -> Vec<CMatrix> {
        ids.iter().map(|id| self.map[id].clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn accumulate(slot: &mut Option<CMatrix>, g: CMatrix) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: CMatrix) -> VarId {
        self.push(None, Vec::new(), value, true)
    }

    /// A non-differentiable input; backward never propagates into it.
    pub fn constant(&mut self, value: CMatrix) -> VarId {
        self.push(None, Vec::new(), value, false)
    }

    fn push(&mut self, kind: Option<OpKind>, inputs: Vec<VarId>, value: CMatrix, requires_grad: bool) -> VarId {
        self.nodes.push(Node {
            kind,
            inputs,
            value,
            requires_grad,
        });
        VarId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: VarId) -> &CMatrix {
        &self.nodes[id.0].value
    }

    /// Evaluates `kind` on already-recorded inputs and appends the result.
    pub fn record(&mut self, kind: OpKind, inputs: &[VarId]) -> Result<VarId> {
        if let Some(n) = kind.arity() {
            if inputs.len() != n {
                return Err(Error::Contract(format!(
                    "{} takes {n} inputs, got {}",
                    kind.name(),
                    inputs.len()
                )));
            }
        } else if inputs.is_empty() {
            return Err(Error::Contract(format!("{} needs at least one input", kind.name())));
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::Contract(format!("unknown variable {}", bad.0)));
        }
        if kind == OpKind::SolveHermitian {
            return Err(Error::Unsupported("solve_hermitian"));
        }
        let vals: Vec<&CMatrix> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = eval_op(&kind, &vals)?;
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(Some(kind), inputs.to_vec(), value, requires_grad))
    }

    /// Re-evaluates every node from the leaf values.
    pub fn replay(&self) -> Result<Vec<CMatrix>> {
        let mut out: Vec<CMatrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.kind {
                None => node.value.clone(),
                Some(kind) => {
                    let vals: Vec<&CMatrix> = node.inputs.iter().map(|id| &out[id.0]).collect();
                    eval_op(kind, &vals)?
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Gradients of the real scalar `loss` with respect to `leaves`.
    pub fn backward(&self, loss: VarId, leaves: &[VarId]) -> Result<Gradients> {
        let v = self.value(loss);
        if v.shape() != (1, 1) || v.get(0, 0).im != 0.0 {
            return Err(Error::Contract(format!(
                "loss must be a real 1x1 scalar, got {:?} with value {}",
                v.shape(),
                v.get(0, 0)
            )));
        }
        self.backward_seeded(loss, CMatrix::scalar(ONE), leaves)
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `root`) back
    /// to `leaves`.
    pub fn backward_seeded(&self, root: VarId, seed: CMatrix, leaves: &[VarId]) -> Result<Gradients> {
        if seed.shape() != self.value(root).shape() {
            return Err(Error::Shape {
                op: "backward_seeded",
                lhs: seed.shape(),
                rhs: self.value(root).shape(),
            });
        }
        let mut grads: Vec<Option<CMatrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            let Some(kind) = &node.kind else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(kind, &node.inputs, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let map = leaves
            .iter()
            .map(|&id| {
                let shape = self.value(id).shape();
                let g = grads
                    .get(id.0)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| CMatrix::zeros(shape.0, shape.1));
                (id, g)
            })
            .collect();
        Ok(Gradients { map })
    }

    fn propagate(
        &self,
        kind: &OpKind,
        inputs: &[VarId],
        out: &CMatrix,
        g: &CMatrix,
        grads: &mut [Option<CMatrix>],
    ) -> Result<()> {
        use OpKind::*;
        let needs = |k: usize| self.nodes[inputs[k].0].requires_grad;
        let val = |k: usize| &self.nodes[inputs[k].0].value;
        match kind {
            MatMul => {
                if needs(0) {
                    let ga = ctmath::cmatmul(g, &ctmath::conj_transpose(val(1)))?;
                    accumulate(&mut grads[inputs[0].0], ga);
                }
                if needs(1) {
                    let gb = ctmath::cmatmul(&ctmath::conj_transpose(val(0)), g)?;
                    accumulate(&mut grads[inputs[1].0], gb);
                }
            }
            Hadamard => {
                if needs(0) {
                    let ga = ctmath::hadamard(g, &val(1).conj())?;
                    accumulate(&mut grads[inputs[0].0], ga);
                }
                if needs(1) {
                    let gb = ctmath::hadamard(g, &val(0).conj())?;
                    accumulate(&mut grads[inputs[1].0], gb);
                }
            }
            Add => {
                for k in 0..2 {
                    if needs(k) {
                        accumulate(&mut grads[inputs[k].0], g.clone());
                    }
                }
            }
            Sub => {
                if needs(0) {
                    accumulate(&mut grads[inputs[0].0], g.clone());
                }
                if needs(1) {
                    accumulate(&mut grads[inputs[1].0], g.map(|z| -z));
                }
            }
            Scale(s) => accumulate(&mut grads[inputs[0].0], ctmath::scale(g, s.conj())),
            RSubScalar(_) => accumulate(&mut grads[inputs[0].0], g.map(|z| -z)),
            SplitSigmoid => {
                let ga = ctmath::hadamard(g, out)?; // shape check only
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gz, s)| Complex::new(gz.re * s.re * (1.0 - s.re), gz.im * s.im * (1.0 - s.im)))
                    .collect();
                accumulate(&mut grads[inputs[0].0], CMatrix::new(ga.rows(), ga.cols(), data)?);
            }
            SplitTanh => {
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gz, t)| Complex::new(gz.re * (1.0 - t.re * t.re), gz.im * (1.0 - t.im * t.im)))
                    .collect();
                accumulate(&mut grads[inputs[0].0], CMatrix::new(g.rows(), g.cols(), data)?);
            }
            ConjTranspose => accumulate(&mut grads[inputs[0].0], ctmath::conj_transpose(g)),
            Transpose => accumulate(&mut grads[inputs[0].0], g.transpose()),
            FroNormSq => {
                let w = 2.0 * g.get(0, 0).re;
                accumulate(&mut grads[inputs[0].0], ctmath::scale(val(0), Complex::new(w, 0.0)));
            }
            Vec => {
                let (r, c) = val(0).shape();
                accumulate(&mut grads[inputs[0].0], ctmath::unvec(g, r, c)?);
            }
            Unvec { .. } => accumulate(&mut grads[inputs[0].0], ctmath::vec(g)),
            SliceRows { start, end } => {
                let src = val(0);
                let mut full = CMatrix::zeros(src.rows(), src.cols());
                let cols = src.cols();
                full.data_mut()[start * cols..end * cols].copy_from_slice(g.data());
                accumulate(&mut grads[inputs[0].0], full);
            }
            ConcatRows => {
                let mut offset = 0;
                for (k, id) in inputs.iter().enumerate() {
                    let rows = val(k).rows();
                    if needs(k) {
                        accumulate(&mut grads[id.0], g.slice_rows(offset, offset + rows)?);
                    }
                    offset += rows;
                }
            }
            SolveHermitian => return Err(Error::Unsupported("solve_hermitian")),
        }
        Ok(())
    }
}

/// Execution strategy for model code.
pub trait Backend {
    type Value: Clone;

    fn constant(&mut self, value: CMatrix) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a CMatrix;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn hadamard(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, s: Complex) -> Result<Self::Value>;
    fn rsub_scalar(&mut self, c: Complex, a: &Self::Value) -> Result<Self::Value>;
    fn sigmoid(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn fro_norm_sq(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn vec(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn unvec(&mut self, a: &Self::Value, rows: usize, cols: usize) -> Result<Self::Value>;
    fn slice_rows(&mut self, a: &Self::Value, start: usize, end: usize) -> Result<Self::Value>;
    fn concat_rows(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;

    /// `a · b · c`, evaluated left to right.
    fn matmul3(&mut self, a: &Self::Value, b: &Self::Value, c: &Self::Value) -> Result<Self::Value> {
        let ab = self.matmul(a, b)?;
        self.matmul(&ab, c)
    }

    fn scale_real(&mut self, a: &Self::Value, s: f64) -> Result<Self::Value> {
        self.scale(a, Complex::new(s, 0.0))
    }
}

/// Plain evaluation with no recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type Value = CMatrix;

    fn constant(&mut self, value: CMatrix) -> CMatrix {
        value
    }
    fn value<'a>(&'a self, v: &'a CMatrix) -> &'a CMatrix {
        v
    }
    fn matmul(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        ctmath::cmatmul(a, b)
    }
    fn hadamard(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        ctmath::hadamard(a, b)
    }
    fn add(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        ctmath::add(a, b)
    }
    fn sub(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        ctmath::sub(a, b)
    }
    fn scale(&mut self, a: &CMatrix, s: Complex) -> Result<CMatrix> {
        Ok(ctmath::scale(a, s))
    }
    fn rsub_scalar(&mut self, c: Complex, a: &CMatrix) -> Result<CMatrix> {
        Ok(a.map(|z| c - z))
    }
    fn sigmoid(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Ok(ctmath::split_sigmoid(a))
    }
    fn tanh(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Ok(ctmath::split_tanh(a))
    }
    fn fro_norm_sq(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Ok(CMatrix::scalar(Complex::new(ctmath::fro_norm_sq(a), 0.0)))
    }
    fn vec(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Ok(ctmath::vec(a))
    }
    fn unvec(&mut self, a: &CMatrix, rows: usize, cols: usize) -> Result<CMatrix> {
        ctmath::unvec(a, rows, cols)
    }
    fn slice_rows(&mut self, a: &CMatrix, start: usize, end: usize) -> Result<CMatrix> {
        a.slice_rows(start, end)
    }
    fn concat_rows(&mut self, parts: &[CMatrix]) -> Result<CMatrix> {
        let refs: Vec<&CMatrix> = parts.iter().collect();
        eval_op(&OpKind::ConcatRows, &refs)
    }
}

impl Backend for Tape {
    type Value = VarId;

    fn constant(&mut self, value: CMatrix) -> VarId {
        Tape::constant(self, value)
    }
    fn value<'a>(&'a self, v: &'a VarId) -> &'a CMatrix {
        Tape::value(self, *v)
    }
    fn matmul(&mut self, a: &VarId, b: &VarId) -> Result<VarId> {
        self.record(OpKind::MatMul, &[*a, *b])
    }
    fn hadamard(&mut self, a: &VarId, b: &VarId) -> Result<VarId> {
        self.record(OpKind::Hadamard, &[*a, *b])
    }
    fn add(&mut self, a: &VarId, b: &VarId) -> Result<VarId> {
        self.record(OpKind::Add, &[*a, *b])
    }
    fn sub(&mut self, a: &VarId, b: &VarId) -> Result<VarId> {
        self.record(OpKind::Sub, &[*a, *b])
    }
    fn scale(&mut self, a: &VarId, s: Complex) -> Result<VarId> {
        self.record(OpKind::Scale(s), &[*a])
    }
    fn rsub_scalar(&mut self, c: Complex, a: &VarId) -> Result<VarId> {
        self.record(OpKind::RSubScalar(c), &[*a])
    }
    fn sigmoid(&mut self, a: &VarId) -> Result<VarId> {
        self.record(OpKind::SplitSigmoid, &[*a])
    }
    fn tanh(&mut self, a: &VarId) -> Result<VarId> {
        self.record(OpKind::SplitTanh, &[*a])
    }
    fn fro_norm_sq(&mut self, a: &VarId) -> Result<VarId> {
        self.record(OpKind::FroNormSq, &[*a])
    }
    fn vec(&mut self, a: &VarId) -> Result<VarId> {
        self.record(OpKind::Vec, &[*a])
    }
    fn unvec(&mut self, a: &VarId, rows: usize, cols: usize) -> Result<VarId> {
        self.record(OpKind::Unvec { rows, cols }, &[*a])
    }
    fn slice_rows(&mut self, a: &VarId, start: usize, end: usize) -> Result<VarId> {
        self.record(OpKind::SliceRows { start, end }, &[*a])
    }
    fn concat_rows(&mut self, parts: &[VarId]) -> Result<VarId> {
        self.record(OpKind::ConcatRows, parts)
    }
}

/// A real scalar function of a list of complex parameter matrices.
pub trait Objective {
    fn eval<B: Backend>(&self, backend: &mut B, params: &[B::Value]) -> Result<B::Value>;
}

/// Loss value and gradients of `objective` at `params`.
pub fn value_and_grad<O: Objective>(objective: &O, params: &[CMatrix]) -> Result<(f64, Vec<CMatrix>)> {
    let mut tape = Tape::new();
    let leaves: Vec<VarId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = objective.eval(&mut tape, &leaves)?;
    let grads = tape.backward(loss, &leaves)?;
    Ok((tape.value(loss).get(0, 0).re, grads.collect(&leaves)))
}

/// Loss value without recording.
pub fn value_only<O: Objective>(objective: &O, params: &[CMatrix]) -> Result<f64> {
    let loss = objective.eval(&mut Eager, params)?;
    Ok(loss.get(0, 0).re)
}

/// Compares tape gradients against central differences on `probes` randomly
/// chosen real components (seeded). Returns the largest
/// `|g_analytic − g_fd| / max(|g_fd|, 1e-12)`.
pub fn finite_diff_check<O: Objective>(
    objective: &O,
    params: &[CMatrix],
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    if !(step > 0.0) || probes == 0 {
        return Err(Error::Contract("finite_diff_check needs step > 0 and probes >= 1".into()));
    }
    let total: usize = params.iter().map(|p| 2 * p.len()).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let (_, grads) = value_and_grad(objective, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, total, probes.min(total));

    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for flat in picks.iter() {
        let (p, entry, imag) = locate(params, flat);
        let analytic = if imag {
            grads[p].data()[entry].im
        } else {
            grads[p].data()[entry].re
        };
        let orig = work[p].data()[entry];
        let bump = if imag { Complex::new(0.0, step) } else { Complex::new(step, 0.0) };
        work[p].data_mut()[entry] = orig + bump;
        let up = value_only(objective, &work)?;
        work[p].data_mut()[entry] = orig - bump;
        let down = value_only(objective, &work)?;
        work[p].data_mut()[entry] = orig;
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((analytic - fd).abs() / fd.abs().max(1e-12));
    }
    Ok(worst)
}

fn locate(params: &[CMatrix], mut flat: usize) -> (usize, usize, bool) {
    for (p, m) in params.iter().enumerate() {
        if flat < 2 * m.len() {
            return (p, flat / 2, flat % 2 == 1);
        }
        flat -= 2 * m.len();
    }
    unreachable!("probe index out of range")
}

/// Sums matrices elementwise in order; `parts` must be non-empty and same-shaped.
pub fn sum_in_order<'a>(parts: impl IntoIterator<Item = &'a CMatrix>) -> Option<CMatrix> {
    let mut it = parts.into_iter();
    let mut acc = it.next()?.clone();
    for m in it {
        for (a, b) in acc.data_mut().iter_mut().zip(m.data()) {
            *a += b;
        }
    }
    Some(acc)
}
