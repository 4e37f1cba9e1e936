//! Dense complex matrices and the split real/imaginary nonlinearities.
//!
//! Storage is row-major. `vec`/`unvec` follow the column-major stacking
//! convention used for vectorized channels, so the two orders meet only
//! inside those functions.
//!
//! No operation broadcasts: every shape disagreement is an [`Error::Shape`].

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Complex = num_complex::Complex64;

pub const ZERO: Complex = Complex::new(0.0, 0.0);
pub const ONE: Complex = Complex::new(1.0, 0.0);

#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(6) {
            if r > 0 {
                write!(f, "; ")?;
            }
            for c in 0..self.cols.min(6) {
                let z = self[(r, c)];
                write!(f, " {:.4}{:+.4}i", z.re, z.im)?;
            }
            if self.cols > 6 {
                write!(f, " ..")?;
            }
        }
        if self.rows > 6 {
            write!(f, "; ..")?;
        }
        write!(f, " ]")
    }
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Length {
                op: "CMatrix::new",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, ZERO)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, ONE)
    }

    pub fn filled(rows: usize, cols: usize, value: Complex) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn scalar(value: Complex) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column(values: &[Complex]) -> Self {
        CMatrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Entries drawn i.i.d. from CN(0, variance).
    pub fn random_cn<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> Self {
        let s = (variance / 2.0).sqrt();
        Self::from_fn(rows, cols, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(s * re, s * im)
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries.
    pub fn data(&self) -> &[Complex] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Complex] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<Complex> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn map(&self, f: impl Fn(Complex) -> Complex) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Largest entrywise modulus of `self - other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// ‖self − other‖_F / ‖other‖_F, or the absolute error when `other` is zero.
    pub fn rel_err(&self, other: &CMatrix) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let denom = fro_norm_sq(other);
        if denom == 0.0 {
            diff.sqrt()
        } else {
            (diff / denom).sqrt()
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<CMatrix> {
        if start > end || end > self.rows {
            return Err(Error::Length {
                op: "slice_rows",
                expected: self.rows,
                actual: end,
            });
        }
        Ok(CMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex;

    fn index(&self, (r, c): (usize, usize)) -> &Complex {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex {
        &mut self.data[r * self.cols + c]
    }
}

fn same_shape(op: &'static str, a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn zip_with(a: &CMatrix, b: &CMatrix, f: impl Fn(Complex, Complex) -> Complex) -> CMatrix {
    CMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Complex matrix product.
pub fn cmatmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "cmatmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![ZERO; n * m];
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == ZERO {
                continue;
            }
            let (ar, ai) = (aip.re, aip.im);
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                o.re += ar * bv.re - ai * bv.im;
                o.im += ar * bv.im + ai * bv.re;
            }
        }
    }
    Ok(CMatrix {
        rows: n,
        cols: m,
        data: out,
    })
}

pub fn hadamard(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    same_shape("hadamard", a, b)?;
    Ok(zip_with(a, b, |x, y| x * y))
}

pub fn add(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    same_shape("add", a, b)?;
    Ok(zip_with(a, b, |x, y| x + y))
}

pub fn sub(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    same_shape("sub", a, b)?;
    Ok(zip_with(a, b, |x, y| x - y))
}

pub fn scale(a: &CMatrix, s: Complex) -> CMatrix {
    a.map(|z| z * s)
}

pub fn conj_transpose(a: &CMatrix) -> CMatrix {
    CMatrix::from_fn(a.cols, a.rows, |r, c| a.get(c, r).conj())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// σ applied to real and imaginary parts separately.
pub fn split_sigmoid(a: &CMatrix) -> CMatrix {
    a.map(|z| Complex::new(sigmoid(z.re), sigmoid(z.im)))
}

/// tanh applied to real and imaginary parts separately.
pub fn split_tanh(a: &CMatrix) -> CMatrix {
    a.map(|z| Complex::new(z.re.tanh(), z.im.tanh()))
}

pub fn fro_norm_sq(a: &CMatrix) -> f64 {
    a.data.iter().map(|z| z.norm_sqr()).sum()
}

/// Column-major stacking into a `rows·cols × 1` column.
pub fn vec(a: &CMatrix) -> CMatrix {
    let mut data = Vec::with_capacity(a.len());
    for c in 0..a.cols {
        for r in 0..a.rows {
            data.push(a.get(r, c));
        }
    }
    CMatrix {
        rows: a.len(),
        cols: 1,
        data,
    }
}

/// Inverse of [`vec`]: refills a `rows × cols` matrix column by column.
pub fn unvec(v: &CMatrix, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Length {
            op: "unvec",
            expected: rows * cols,
            actual: v.len(),
        });
    }
    Ok(CMatrix::from_fn(rows, cols, |r, c| v.data[c * rows + r]))
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix::from_fn(a.rows * b.rows, a.cols * b.cols, |r, c| {
        a.get(r / b.rows, c / b.cols) * b.get(r % b.rows, c % b.cols)
    })
}

/// Options for [`solve_hermitian_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Added to the diagonal before factoring.
    pub jitter: f64,
    /// Reject systems whose condition estimate exceeds this.
    pub max_condition: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            jitter: 0.0,
            max_condition: 1e12,
        }
    }
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(a: &CMatrix, jitter: f64) -> Result<CMatrix> {
    if a.rows != a.cols {
        return Err(Error::Shape {
            op: "cholesky",
            lhs: a.shape(),
            rhs: a.shape(),
        });
    }
    let n = a.rows;
    let scale = (0..n).map(|i| a.get(i, i).re.abs()).fold(0.0, f64::max);
    for r in 0..n {
        for c in 0..r {
            if (a.get(r, c) - a.get(c, r).conj()).norm() > 1e-10 * scale.max(1e-300) {
                return Err(Error::Numeric("matrix is not Hermitian".into()));
            }
        }
    }
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j).re + jitter;
        for k in 0..j {
            d -= l.get(j, k).norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k).conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `a · x = b` for Hermitian positive definite `a`.
pub fn solve_hermitian(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    solve_hermitian_with(a, b, SolveOptions::default())
}

pub fn solve_hermitian_with(a: &CMatrix, b: &CMatrix, opts: SolveOptions) -> Result<CMatrix> {
    if a.rows != a.cols || a.rows != b.rows {
        return Err(Error::Shape {
            op: "solve_hermitian",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let l = cholesky(a, opts.jitter)?;
    let n = a.rows;
    let (dmin, dmax) = (0..n)
        .map(|i| l.get(i, i).re)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let cond = (dmax / dmin).powi(2);
    if !(cond <= opts.max_condition) {
        return Err(Error::Numeric(format!(
            "condition estimate {cond:e} exceeds cap {:e}",
            opts.max_condition
        )));
    }
    let mut x = b.clone();
    for c in 0..b.cols {
        // forward: L y = b
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x[(i, c)] = s / l.get(i, i).re;
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i).conj() * x.get(k, c);
            }
            x[(i, c)] = s / l.get(i, i).re;
        }
    }
    Ok(x)
}

/// log₂ det of a Hermitian positive definite matrix.
pub fn log2_det_hpd(a: &CMatrix) -> Result<f64> {
    let l = cholesky(a, 0.0)?;
    Ok((0..a.rows).map(|i| 2.0 * l.get(i, i).re.log2()).sum())
}

/// Unitary N-point DFT matrix, column k = (1/√N)·exp(−j2πkn/N).
pub fn dft_matrix(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |r, c| {
        let phase = -2.0 * std::f64::consts::PI * ((r * c) % n) as f64 / n as f64;
        Complex::from_polar(s, phase)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn naive_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
        CMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut s = ZERO;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            s
        })
    }

    #[test]
    fn matmul_identity_and_i_squared() {
        let x = CMatrix::random_cn(3, 3, 1.0, &mut rng(1));
        assert_eq!(cmatmul(&CMatrix::identity(3), &x).unwrap(), x);
        let i = CMatrix::scalar(c(0.0, 1.0));
        assert_eq!(cmatmul(&i, &i).unwrap(), CMatrix::scalar(c(-1.0, 0.0)));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut r = rng(2);
        let a = CMatrix::random_cn(4, 5, 1.0, &mut r);
        let b = CMatrix::random_cn(5, 3, 1.0, &mut r);
        assert!(cmatmul(&a, &b).unwrap().max_abs_diff(&naive_product(&a, &b)) < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = cmatmul(&CMatrix::zeros(2, 3), &CMatrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("cmatmul"), "{msg}");
    }

    #[test]
    fn hadamard_cases() {
        let a = CMatrix::random_cn(2, 3, 1.0, &mut rng(3));
        assert_eq!(hadamard(&a, &CMatrix::ones(2, 3)).unwrap(), a);
        assert_eq!(hadamard(&a, &CMatrix::zeros(2, 3)).unwrap(), CMatrix::zeros(2, 3));
        let p = hadamard(&CMatrix::scalar(c(1.0, 1.0)), &CMatrix::scalar(c(1.0, -1.0))).unwrap();
        assert_eq!(p, CMatrix::scalar(c(2.0, 0.0)));
        assert!(hadamard(&a, &CMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn add_sub_scale() {
        let a = CMatrix::random_cn(2, 2, 1.0, &mut rng(4));
        assert_eq!(add(&a, &CMatrix::zeros(2, 2)).unwrap(), a);
        assert_eq!(sub(&a, &a).unwrap(), CMatrix::zeros(2, 2));
        let two = scale(&CMatrix::identity(2), c(2.0, 0.0));
        assert_eq!(two, CMatrix::from_fn(2, 2, |r, cc| if r == cc { c(2.0, 0.0) } else { ZERO }));
        assert!(add(&a, &CMatrix::zeros(1, 2)).is_err());
        assert!(sub(&a, &CMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn conj_transpose_cases() {
        let a = CMatrix::random_cn(3, 2, 1.0, &mut rng(5));
        assert_eq!(conj_transpose(&conj_transpose(&a)), a);
        assert_eq!(conj_transpose(&CMatrix::scalar(c(0.0, 1.0))), CMatrix::scalar(c(0.0, -1.0)));
        let q = dft_matrix(8);
        let qhq = cmatmul(&conj_transpose(&q), &q).unwrap();
        assert!(qhq.max_abs_diff(&CMatrix::identity(8)) < 1e-12);
    }

    #[test]
    fn split_activations() {
        let s = split_sigmoid(&CMatrix::scalar(ZERO));
        assert_eq!(s.get(0, 0), c(0.5, 0.5));
        assert!((split_sigmoid(&CMatrix::scalar(c(800.0, 0.0))).get(0, 0).re - 1.0).abs() < 1e-15);
        let v = split_sigmoid(&CMatrix::scalar(c(1.0, 2.0))).get(0, 0);
        assert!((v.re - 0.73106).abs() < 1e-5 && (v.im - 0.88080).abs() < 1e-5);

        assert_eq!(split_tanh(&CMatrix::scalar(ZERO)).get(0, 0), ZERO);
        let a = CMatrix::random_cn(3, 3, 4.0, &mut rng(6));
        let neg = split_tanh(&scale(&a, c(-1.0, 0.0)));
        assert!(add(&neg, &split_tanh(&a)).unwrap().max_abs_diff(&CMatrix::zeros(3, 3)) == 0.0);
        assert!((split_tanh(&CMatrix::scalar(ONE)).get(0, 0).re - 0.76159).abs() < 1e-5);
        // no overflow at extreme inputs
        let big = split_sigmoid(&CMatrix::scalar(c(-1e4, 1e4)));
        assert!(big.is_finite());
    }

    #[test]
    fn fro_norm_cases() {
        assert_eq!(fro_norm_sq(&CMatrix::zeros(3, 3)), 0.0);
        assert_eq!(fro_norm_sq(&CMatrix::identity(3)), 3.0);
        assert_eq!(fro_norm_sq(&CMatrix::scalar(c(3.0, 4.0))), 25.0);
    }

    fn random_spd(n: usize, r: &mut ChaCha8Rng) -> CMatrix {
        let g = CMatrix::random_cn(n, n, 1.0, r);
        let a = cmatmul(&g, &conj_transpose(&g)).unwrap();
        add(&a, &scale(&CMatrix::identity(n), c(0.5, 0.0))).unwrap()
    }

    #[test]
    fn solve_cases() {
        let mut r = rng(7);
        let b = CMatrix::random_cn(4, 2, 1.0, &mut r);
        assert!(solve_hermitian(&CMatrix::identity(4), &b).unwrap().max_abs_diff(&b) < 1e-15);
        let two = scale(&CMatrix::identity(4), c(2.0, 0.0));
        let half = scale(&b, c(0.5, 0.0));
        assert!(solve_hermitian(&two, &b).unwrap().max_abs_diff(&half) < 1e-15);

        let a = random_spd(6, &mut r);
        let b = CMatrix::random_cn(6, 3, 1.0, &mut r);
        let x = solve_hermitian(&a, &b).unwrap();
        assert!(cmatmul(&a, &x).unwrap().rel_err(&b) < 1e-9);
    }

    #[test]
    fn solve_rejects_singular_and_ill_conditioned() {
        let mut a = CMatrix::identity(3);
        a[(2, 2)] = ZERO;
        assert!(matches!(solve_hermitian(&a, &CMatrix::ones(3, 1)), Err(Error::Numeric(_))));
        let mut b = CMatrix::identity(3);
        b[(2, 2)] = c(1e-14, 0.0);
        assert!(matches!(solve_hermitian(&b, &CMatrix::ones(3, 1)), Err(Error::Numeric(_))));
        // jitter rescues the singular case
        let opts = SolveOptions {
            jitter: 1e-3,
            ..Default::default()
        };
        assert!(solve_hermitian_with(&a, &CMatrix::ones(3, 1), opts).is_ok());
    }

    #[test]
    fn solve_residual_at_condition_1e6() {
        let n = 6;
        let mut r = rng(8);
        let q = dft_matrix(n);
        let diag = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c(10f64.powf(6.0 * i as f64 / (n - 1) as f64), 0.0)
            } else {
                ZERO
            }
        });
        let a = cmatmul(&cmatmul(&q, &diag).unwrap(), &conj_transpose(&q)).unwrap();
        // symmetrize away rounding
        let a = scale(&add(&a, &conj_transpose(&a)).unwrap(), c(0.5, 0.0));
        let b = CMatrix::random_cn(n, 2, 1.0, &mut r);
        let x = solve_hermitian(&a, &b).unwrap();
        assert!(cmatmul(&a, &x).unwrap().rel_err(&b) < 1e-9);
    }

    #[test]
    fn vec_unvec() {
        let s = CMatrix::scalar(c(1.5, -2.0));
        assert_eq!(vec(&s), s);
        let a = CMatrix::from_fn(2, 2, |r, cc| c((1 + r + 2 * cc) as f64, 0.0));
        // [[1,3],[2,4]]
        let v = vec(&a);
        let expect: Vec<Complex> = (1..=4).map(|k| c(k as f64, 0.0)).collect();
        assert_eq!(v.data(), &expect[..]);
        let m = CMatrix::random_cn(3, 4, 1.0, &mut rng(9));
        assert_eq!(unvec(&vec(&m), 3, 4).unwrap(), m);
        assert!(unvec(&vec(&m), 5, 4).is_err());
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), rows * cols).prop_map(move |v| {
            CMatrix::new(rows, cols, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn matmul_associative(a in arb_matrix(3, 4), b in arb_matrix(4, 2), cc in arb_matrix(2, 5)) {
            let left = cmatmul(&cmatmul(&a, &b).unwrap(), &cc).unwrap();
            let right = cmatmul(&a, &cmatmul(&b, &cc).unwrap()).unwrap();
            prop_assert!(left.rel_err(&right) < 1e-10 || fro_norm_sq(&right) < 1e-20);
        }

        #[test]
        fn conj_transpose_reverses_products(a in arb_matrix(3, 4), b in arb_matrix(4, 2)) {
            let lhs = conj_transpose(&cmatmul(&a, &b).unwrap());
            let rhs = cmatmul(&conj_transpose(&b), &conj_transpose(&a)).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }

        #[test]
        fn split_activations_are_entrywise(a in arb_matrix(3, 3)) {
            let t = a.transpose();
            prop_assert_eq!(split_sigmoid(&t), split_sigmoid(&a).transpose());
            prop_assert_eq!(split_tanh(&t), split_tanh(&a).transpose());
        }

        #[test]
        fn fro_norm_invariant_under_vec(a in arb_matrix(3, 5)) {
            prop_assert!((fro_norm_sq(&a) - fro_norm_sq(&vec(&a))).abs() < 1e-12);
        }
    }
}
