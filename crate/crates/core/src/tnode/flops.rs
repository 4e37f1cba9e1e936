//! Complex-multiplication counts per pipeline stage.

use crate::autodiff::{Backend, Eager};
use crate::channelsim::{test_grid, SystemConfig};
use crate::ctmath::{CMatrix, Complex};
use crate::error::Result;

use super::{encode, field_evaluations, ode_solve, pred_head, DecoderField, ModelParams, SolverSpec};

/// Evaluates eagerly while counting complex multiplications.
#[derive(Debug, Default, Clone, Copy)]
pub struct Counting {
    /// Inside matrix products: `m·k·n` for an `(m×k)(k×n)` product.
    pub matmul: u64,
    /// Hadamard products, scalings and squared norms.
    pub elementwise: u64,
}

impl Counting {
    pub fn total(&self) -> u64 {
        self.matmul + self.elementwise
    }
}

impl Backend for Counting {
    type Value = CMatrix;

    fn constant(&mut self, value: CMatrix) -> CMatrix {
        value
    }
    fn value<'a>(&'a self, v: &'a CMatrix) -> &'a CMatrix {
        v
    }
    fn matmul(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        self.matmul += (a.rows() * a.cols() * b.cols()) as u64;
        Eager.matmul(a, b)
    }
    fn hadamard(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        self.elementwise += a.len() as u64;
        Eager.hadamard(a, b)
    }
    fn add(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        Eager.add(a, b)
    }
    fn sub(&mut self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        Eager.sub(a, b)
    }
    fn scale(&mut self, a: &CMatrix, s: Complex) -> Result<CMatrix> {
        self.elementwise += a.len() as u64;
        Eager.scale(a, s)
    }
    fn rsub_scalar(&mut self, c: Complex, a: &CMatrix) -> Result<CMatrix> {
        Eager.rsub_scalar(c, a)
    }
    fn sigmoid(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Eager.sigmoid(a)
    }
    fn tanh(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Eager.tanh(a)
    }
    fn fro_norm_sq(&mut self, a: &CMatrix) -> Result<CMatrix> {
        self.elementwise += a.len() as u64;
        Eager.fro_norm_sq(a)
    }
    fn vec(&mut self, a: &CMatrix) -> Result<CMatrix> {
        Eager.vec(a)
    }
    fn unvec(&mut self, a: &CMatrix, rows: usize, cols: usize) -> Result<CMatrix> {
        Eager.unvec(a, rows, cols)
    }
    fn slice_rows(&mut self, a: &CMatrix, start: usize, end: usize) -> Result<CMatrix> {
        Eager.slice_rows(a, start, end)
    }
    fn concat_rows(&mut self, parts: &[CMatrix]) -> Result<CMatrix> {
        Eager.concat_rows(parts)
    }
}

/// Counted matrix-product multiplications for one prediction over the test
/// grid, next to the asymptotic expressions they should track.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopReport {
    pub encoder: u64,
    pub decoder: u64,
    pub head: u64,
    pub elementwise: u64,
    /// Field evaluations `G`.
    pub field_evals: usize,
    /// `J·F_l·N_RF·N_R·M + J·F_l·M·F_r`.
    pub encoder_formula: f64,
    /// The encoder expression plus the recurrent term `J·(F_l²F_r + F_l·F_r²)`.
    pub encoder_formula_full: f64,
    /// `G·(F_l²F_r + F_l·F_r²)`.
    pub decoder_formula: f64,
    /// `KQ·(N_RF·N_R·F_l·F_r + N_RF·N_R·F_r·M)`.
    pub head_formula: f64,
}

impl FlopReport {
    pub fn encoder_ratio(&self) -> f64 {
        self.encoder as f64 / self.encoder_formula
    }
    pub fn encoder_full_ratio(&self) -> f64 {
        self.encoder as f64 / self.encoder_formula_full
    }
    pub fn decoder_ratio(&self) -> f64 {
        self.decoder as f64 / self.decoder_formula
    }
    pub fn head_ratio(&self) -> f64 {
        self.head as f64 / self.head_formula
    }
}

/// Runs one instrumented prediction on the `KQ`-slot test grid.
///
/// Weights and inputs are zero; the counts depend only on shapes.
pub fn count_flops(cfg: &SystemConfig, spec: &SolverSpec) -> Result<FlopReport> {
    cfg.validate()?;
    let p = ModelParams::zeros(cfg);
    let inputs: Vec<CMatrix> = (0..cfg.history_frames)
        .map(|_| CMatrix::zeros(cfg.eff_rows(), cfg.n_subcarriers))
        .collect();
    let targets = test_grid(cfg);
    let mut c = Counting::default();

    let o0 = encode(&mut c, &p, &inputs)?;
    let encoder = c.matmul;
    let states = ode_solve(&mut c, &DecoderField::of(&p), &o0, &targets, spec)?;
    let decoder = c.matmul - encoder;
    for o in &states {
        pred_head(&mut c, &p, o)?;
    }
    let head = c.matmul - encoder - decoder;

    let g = field_evaluations(&targets, spec)?;
    let (j, d, m, fl, fr) = (
        cfg.history_frames as f64,
        cfg.eff_rows() as f64,
        cfg.n_subcarriers as f64,
        cfg.feature_l as f64,
        cfg.feature_r as f64,
    );
    let kq = targets.len() as f64;
    let recurrent = fl * fl * fr + fl * fr * fr;
    let encoder_formula = j * fl * d * m + j * fl * m * fr;
    Ok(FlopReport {
        encoder,
        decoder,
        head,
        elementwise: c.elementwise,
        field_evals: g,
        encoder_formula,
        encoder_formula_full: encoder_formula + j * recurrent,
        decoder_formula: g as f64 * recurrent,
        head_formula: kq * (d * fl * fr + d * fr * m),
    })
}
