//! Fixed-step integrators for autonomous fields, written over [`Backend`].

use crate::autodiff::Backend;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    /// Field evaluations per step.
    pub fn stages(self) -> usize {
        match self {
            Scheme::Euler => 1,
            Scheme::Rk4 => 4,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            _ => Err(Error::config("solver", format!("unknown scheme {s:?}, expected euler or rk4"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSpec {
    pub scheme: Scheme,
    /// Step length in frames.
    pub step_frames: f64,
}

impl SolverSpec {
    /// RK4 with one step per slot.
    pub fn per_slot(slots_per_frame: usize) -> Self {
        SolverSpec {
            scheme: Scheme::Rk4,
            step_frames: 1.0 / slots_per_frame as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_frames > 0.0 && self.step_frames <= 1.0) {
            return Err(Error::config("step_frames", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// An autonomous right-hand side `dO/dt = f(O)`.
pub trait Field<B: Backend> {
    fn eval(&self, b: &mut B, o: &B::Value) -> Result<B::Value>;
}

/// Step sizes for each segment `[t_{i-1}, t_i]` with `t_0 = 0`.
///
/// A segment of length `d` takes `⌈d/h⌉` steps: full steps of `h` and a
/// final one that lands on `t_i`. A final step within `1e-9·h` of `h` is
/// taken as exactly `h`, so grid-aligned targets never introduce slivers.
pub fn step_plan(targets: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    if targets.is_empty() {
        return Err(Error::Contract("ode_solve needs at least one target".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("step_frames", "must be positive and finite"));
    }
    let mut prev = 0.0;
    let mut plan = Vec::with_capacity(targets.len());
    for &t in targets {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Contract(format!("target time {t} must be positive and finite")));
        }
        if t < prev {
            return Err(Error::Contract("target times must be sorted ascending".into()));
        }
        let d = t - prev;
        let n = (d / h - 1e-9).ceil().max(0.0) as usize;
        let mut steps = vec![h; n];
        if let Some(last) = steps.last_mut() {
            let rest = d - (n - 1) as f64 * h;
            if (rest - h).abs() >= 1e-9 * h {
                *last = rest;
            }
        }
        plan.push(steps);
        prev = t;
    }
    Ok(plan)
}

/// Advances `o` by one step of length `h`.
pub fn step<B: Backend, F: Field<B>>(b: &mut B, field: &F, o: &B::Value, h: f64, scheme: Scheme) -> Result<B::Value> {
    match scheme {
        Scheme::Euler => {
            let k = field.eval(b, o)?;
            let dk = b.scale_real(&k, h)?;
            b.add(o, &dk)
        }
        Scheme::Rk4 => {
            let k1 = field.eval(b, o)?;
            let d1 = b.scale_real(&k1, h / 2.0)?;
            let y1 = b.add(o, &d1)?;
            let k2 = field.eval(b, &y1)?;
            let d2 = b.scale_real(&k2, h / 2.0)?;
            let y2 = b.add(o, &d2)?;
            let k3 = field.eval(b, &y2)?;
            let d3 = b.scale_real(&k3, h)?;
            let y3 = b.add(o, &d3)?;
            let k4 = field.eval(b, &y3)?;
            let mut acc = b.scale_real(&k1, h / 6.0)?;
            for (k, w) in [(&k2, h / 3.0), (&k3, h / 3.0), (&k4, h / 6.0)] {
                let t = b.scale_real(k, w)?;
                acc = b.add(&acc, &t)?;
            }
            b.add(o, &acc)
        }
    }
}

/// Integrates from `t = 0` and returns the state at every target.
pub fn ode_solve<B: Backend, F: Field<B>>(
    b: &mut B,
    field: &F,
    o0: &B::Value,
    targets: &[f64],
    spec: &SolverSpec,
) -> Result<Vec<B::Value>> {
    spec.validate()?;
    let plan = step_plan(targets, spec.step_frames)?;
    let mut o = o0.clone();
    let mut out = Vec::with_capacity(targets.len());
    for seg in plan {
        for h in seg {
            o = step(b, field, &o, h, spec.scheme)?;
        }
        out.push(o.clone());
    }
    Ok(out)
}

/// Field evaluations `G` used by [`ode_solve`] for these targets.
pub fn field_evaluations(targets: &[f64], spec: &SolverSpec) -> Result<usize> {
    let plan = step_plan(targets, spec.step_frames)?;
    Ok(plan.iter().map(Vec::len).sum::<usize>() * spec.scheme.stages())
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl<B: Backend> Field<B> for ZeroField {
    fn eval(&self, b: &mut B, o: &B::Value) -> Result<B::Value> {
        let (r, c) = b.value(o).shape();
        Ok(b.constant(crate::ctmath::CMatrix::zeros(r, c)))
    }
}

/// `f(O) = λ·O`.
#[derive(Debug, Clone, Copy)]
pub struct LinearField(pub crate::ctmath::Complex);

impl<B: Backend> Field<B> for LinearField {
    fn eval(&self, b: &mut B, o: &B::Value) -> Result<B::Value> {
        b.scale(o, self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eager;
    use crate::ctmath::{CMatrix, Complex};
    use proptest::prelude::*;

    fn scalar(x: f64) -> CMatrix {
        CMatrix::scalar(Complex::new(x, 0.0))
    }

    fn solve_scalar(lambda: f64, t: f64, h: f64, scheme: Scheme) -> f64 {
        let spec = SolverSpec { scheme, step_frames: h };
        let out = ode_solve(&mut Eager, &LinearField(Complex::new(lambda, 0.0)), &scalar(1.0), &[t], &spec).unwrap();
        out[0].get(0, 0).re
    }

    #[test]
    fn plan_lands_on_targets() {
        let plan = step_plan(&[0.2, 0.5, 0.5, 1.3], 0.2).unwrap();
        assert_eq!(plan[0], vec![0.2]);
        assert_eq!(plan[1].len(), 2);
        assert!((plan[1][1] - 0.1).abs() < 1e-12);
        assert!(plan[2].is_empty());
        assert_eq!(plan[3].len(), 4);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 5.0).collect();
        assert!(step_plan(&grid, 0.2).unwrap().iter().all(|s| s == &vec![0.2]));
        assert!(step_plan(&[], 0.2).is_err());
        assert!(step_plan(&[0.4, 0.2], 0.2).is_err());
        assert!(step_plan(&[0.0], 0.2).is_err());
    }

    #[test]
    fn zero_field_keeps_state() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let o0 = CMatrix::random_cn(3, 4, 1.0, &mut rng);
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            let spec = SolverSpec { scheme, step_frames: 0.3 };
            for o in ode_solve(&mut Eager, &ZeroField, &o0, &[0.1, 0.7, 2.0], &spec).unwrap() {
                assert_eq!(o, o0);
            }
        }
    }

    #[test]
    fn euler_is_geometric() {
        let (lambda, h) = (-0.7, 0.125);
        for n in [1, 3, 8, 16] {
            let got = solve_scalar(lambda, n as f64 * h, h, Scheme::Euler);
            let expect = (1.0 + lambda * h).powi(n);
            assert!((got - expect).abs() < 1e-14 * expect.abs().max(1.0), "{n}: {got} vs {expect}");
        }
    }

    #[test]
    fn rk4_error_shrinks_sixteenfold() {
        let (lambda, t): (f64, f64) = (-1.3, 2.0);
        let exact = (lambda * t).exp();
        let e1 = (solve_scalar(lambda, t, 0.1, Scheme::Rk4) - exact).abs();
        let e2 = (solve_scalar(lambda, t, 0.05, Scheme::Rk4) - exact).abs();
        let ratio = e1 / e2;
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn field_evaluation_count() {
        let targets: Vec<f64> = (1..=10).map(|i| i as f64 / 5.0).collect();
        let rk = SolverSpec::per_slot(5);
        assert_eq!(field_evaluations(&targets, &rk).unwrap(), 40);
        let half = SolverSpec {
            step_frames: 0.1,
            ..rk
        };
        assert_eq!(field_evaluations(&targets, &half).unwrap(), 80);
    }

    proptest! {
        #[test]
        fn semigroup_on_grid(k1 in 1usize..8, k2 in 1usize..8, rk in any::<bool>()) {
            let h = 0.125;
            let scheme = if rk { Scheme::Rk4 } else { Scheme::Euler };
            let spec = SolverSpec { scheme, step_frames: h };
            let field = LinearField(Complex::new(-0.4, 1.1));
            let o0 = CMatrix::from_fn(2, 2, |r, c| Complex::new(r as f64 + 0.5, c as f64 - 0.3));
            let t1 = k1 as f64 * h;
            let t2 = t1 + k2 as f64 * h;
            let direct = ode_solve(&mut Eager, &field, &o0, &[t2], &spec).unwrap();
            let mid = ode_solve(&mut Eager, &field, &o0, &[t1], &spec).unwrap();
            let rest = ode_solve(&mut Eager, &field, &mid[0], &[t2 - t1], &spec).unwrap();
            let both = ode_solve(&mut Eager, &field, &o0, &[t1, t2], &spec).unwrap();
            prop_assert_eq!(&direct[0], &rest[0]);
            prop_assert_eq!(&direct[0], &both[1]);
        }
    }
}
