//! Per-slot NMSE, zero-forcing precoding, achievable rate and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::baselines::{outdated_csi, predict_grid, DiscreteModel};
use crate::channelsim::{subcarrier_block, test_grid, Dataset, Mode, SystemConfig};
use crate::ctmath::{self, CMatrix, Complex};
use crate::error::{Error, Result};
use crate::tnode::{predict, ModelParams, SolverSpec};
use crate::training::{input_scale, scaled};

/// Reported in place of `−∞` for exact predictions.
pub const NMSE_FLOOR_DB: f64 = -200.0;

/// Per-slot NMSE in dB: each sample's error ratio (summed over subcarriers)
/// is averaged over samples before taking the log.
///
/// `preds[s][i]` and `labels[s][i]` are sample `s` at slot `i`.
pub fn nmse_per_slot(preds: &[Vec<CMatrix>], labels: &[Vec<CMatrix>]) -> Result<Vec<f64>> {
    if preds.len() != labels.len() || labels.is_empty() {
        return Err(Error::Length {
            op: "nmse_per_slot",
            expected: labels.len().max(1),
            actual: preds.len(),
        });
    }
    let n_slots = labels[0].len();
    let mut acc = vec![0.0; n_slots];
    for (s, (p, l)) in preds.iter().zip(labels).enumerate() {
        if p.len() != n_slots || l.len() != n_slots {
            return Err(Error::Length {
                op: "nmse_per_slot",
                expected: n_slots,
                actual: p.len().min(l.len()),
            });
        }
        for (i, (pi, li)) in p.iter().zip(l).enumerate() {
            let norm = ctmath::fro_norm_sq(li);
            if norm == 0.0 {
                return Err(Error::DegenerateLabel { index: s });
            }
            acc[i] += ctmath::fro_norm_sq(&ctmath::sub(pi, li)?) / norm;
        }
    }
    Ok(acc.into_iter().map(|a| ratio_db(a / preds.len() as f64)).collect())
}

fn ratio_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// `D = (ĤᴴĤ)⁻¹Ĥᴴ` for an `N_RF × N_R` channel.
///
/// Fails with [`Error::Numeric`] when `ĤᴴĤ` is too ill-conditioned for the
/// result to satisfy `D·Ĥ = I` within `1e-9`.
pub fn zf_precoder(h_hat: &CMatrix) -> Result<CMatrix> {
    if h_hat.rows() < h_hat.cols() {
        return Err(Error::Shape {
            op: "zf_precoder",
            lhs: h_hat.shape(),
            rhs: (h_hat.cols(), h_hat.rows()),
        });
    }
    let hh = ctmath::conj_transpose(h_hat);
    let gram = ctmath::cmatmul(&hh, h_hat)?;
    let d = ctmath::solve_hermitian(&gram, &hh)?;
    let resid = ctmath::cmatmul(&d, h_hat)?.max_abs_diff(&CMatrix::identity(h_hat.cols()));
    if !(resid < 1e-9) {
        return Err(Error::Numeric(format!("zero-forcing residual {resid:.3e} exceeds 1e-9")));
    }
    Ok(d)
}

/// `log₂ det(I + D·H̄·H̄ᴴ·Dᴴ / (N_R σ²))` for one subcarrier.
pub fn achievable_rate(d: &CMatrix, h_true: &CMatrix, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::config("sigma2", "noise power must be positive"));
    }
    let n_r = d.rows();
    let g = ctmath::cmatmul(d, h_true)?;
    let gg = ctmath::cmatmul(&g, &ctmath::conj_transpose(&g))?;
    let a = ctmath::add(&CMatrix::identity(n_r), &ctmath::scale(&gg, Complex::new(1.0 / (n_r as f64 * sigma2), 0.0)))?;
    ctmath::log2_det_hpd(&a)
}

/// How a method's ZF precoder is scaled before the rate is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatePolicy {
    /// `D` exactly as built from the predicted channel.
    Literal,
    /// `D` rescaled to the Frobenius norm of the ZF precoder built from the
    /// true channel, so every method spends the same precoding power and a
    /// shrunken prediction cannot buy rate with a larger `D`.
    #[default]
    EqualPower,
}

impl std::str::FromStr for RatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(RatePolicy::Literal),
            "equal_power" => Ok(RatePolicy::EqualPower),
            _ => Err(Error::config("rate_policy", format!("unknown policy {s:?}, expected literal or equal_power"))),
        }
    }
}

impl std::fmt::Display for RatePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RatePolicy::Literal => "literal",
            RatePolicy::EqualPower => "equal_power",
        })
    }
}

/// Subcarrier-averaged ZF rate for packed effective channels; `None` when
/// a channel is singular on some subcarrier.
pub fn packed_rate(pred: &CMatrix, truth: &CMatrix, cfg: &SystemConfig, sigma2: f64, policy: RatePolicy) -> Result<Option<f64>> {
    let mut total = 0.0;
    for m in 0..cfg.n_subcarriers {
        let h_hat = subcarrier_block(pred, cfg.n_rf, cfg.n_rx, m);
        let h_true = subcarrier_block(truth, cfg.n_rf, cfg.n_rx, m);
        let mut d = match zf_precoder(&h_hat) {
            Ok(d) => d,
            Err(Error::Numeric(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if policy == RatePolicy::EqualPower {
            let reference = match zf_precoder(&h_true) {
                Ok(d) => d,
                Err(Error::Numeric(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let g = (ctmath::fro_norm_sq(&reference) / ctmath::fro_norm_sq(&d)).sqrt();
            d = ctmath::scale(&d, Complex::new(g, 0.0));
        }
        total += achievable_rate(&d, &h_true, sigma2)?;
    }
    Ok(Some(total / cfg.n_subcarriers as f64))
}

/// A prediction scheme under evaluation.
#[derive(Debug, Clone)]
pub enum Predictor {
    TnOde { params: ModelParams, spec: SolverSpec },
    Interpolated(DiscreteModel),
    Outdated,
    Perfect,
}

#[derive(Debug, Clone)]
pub struct Method {
    pub name: String,
    pub predictor: Predictor,
}

impl Method {
    pub fn new(name: impl Into<String>, predictor: Predictor) -> Self {
        Method {
            name: name.into(),
            predictor,
        }
    }

    /// Predictions for one sample on the test grid.
    pub fn predict_sample(&self, ds: &Dataset, s: usize) -> Result<Vec<CMatrix>> {
        let cfg = &ds.config;
        let sample = &ds.samples[s];
        let grid = test_grid(cfg);
        let scale = input_scale(ds);
        match &self.predictor {
            Predictor::TnOde { params, spec } => {
                let out = predict(params, &scaled(&sample.inputs, scale), &grid, spec)?;
                Ok(scaled(&out, 1.0 / scale))
            }
            Predictor::Interpolated(model) => predict_grid(model, &sample.inputs, cfg, scale),
            Predictor::Outdated => outdated_csi(&sample.inputs, &grid),
            Predictor::Perfect => Ok(sample.labels.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub method: String,
    /// `1..=KQ`.
    pub slot_index: usize,
    pub time_frames: f64,
    pub nmse_db: f64,
    /// Mean over non-excluded samples.
    pub rate_bps_hz: f64,
    pub n_samples: usize,
    /// Samples whose predicted channel was too ill-conditioned for ZF.
    pub n_excluded: usize,
}

/// All slots of one method, tagged with the dataset they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub dataset_hash: String,
    pub slots: Vec<SlotReport>,
    /// `rates[s][i]`, `None` where excluded; kept for paired comparisons.
    pub rates: Vec<Vec<Option<f64>>>,
}

pub fn evaluate_method(method: &Method, ds: &Dataset, policy: RatePolicy) -> Result<MethodReport> {
    if ds.mode() != Mode::Test {
        return Err(Error::config("data", "evaluation needs a test-mode dataset"));
    }
    let cfg = &ds.config;
    let sigma2 = ds.noise_power();
    let per_sample: Vec<(Vec<CMatrix>, Vec<Option<f64>>)> = (0..ds.len())
        .into_par_iter()
        .map(|s| {
            let preds = method.predict_sample(ds, s)?;
            let rates = preds
                .iter()
                .zip(&ds.samples[s].labels)
                .map(|(p, l)| packed_rate(p, l, cfg, sigma2, policy))
                .collect::<Result<Vec<_>>>()?;
            Ok((preds, rates))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Vec<CMatrix>> = ds.samples.iter().map(|s| s.labels.clone()).collect();
    let (preds, rates): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    let nmse = nmse_per_slot(&preds, &labels)?;
    let grid = test_grid(cfg);
    let slots = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let kept: Vec<f64> = rates.iter().filter_map(|r: &Vec<Option<f64>>| r[i]).collect();
            let rate = if kept.is_empty() { 0.0 } else { kept.iter().sum::<f64>() / kept.len() as f64 };
            SlotReport {
                method: method.name.clone(),
                slot_index: i + 1,
                time_frames: t,
                nmse_db: nmse[i],
                rate_bps_hz: rate,
                n_samples: ds.len(),
                n_excluded: ds.len() - kept.len(),
            }
        })
        .collect();
    Ok(MethodReport {
        method: method.name.clone(),
        dataset_hash: ds.content_hash(),
        slots,
        rates,
    })
}

/// Checks that every report came from the same dataset.
pub fn check_same_dataset(reports: &[MethodReport]) -> Result<()> {
    if let Some(first) = reports.first() {
        if let Some(bad) = reports.iter().find(|r| r.dataset_hash != first.dataset_hash) {
            return Err(Error::HashMismatch {
                method: bad.method.clone(),
                expected: first.dataset_hash.clone(),
                actual: bad.dataset_hash.clone(),
            });
        }
    }
    Ok(())
}

pub fn evaluate_methods(methods: &[Method], ds: &Dataset, policy: RatePolicy) -> Result<Vec<MethodReport>> {
    let reports = methods.iter().map(|m| evaluate_method(m, ds, policy)).collect::<Result<Vec<_>>>()?;
    check_same_dataset(&reports)?;
    Ok(reports)
}

pub const CSV_HEADER: &str = "method,slot_index,time_frames,nmse_db,rate_bps_hz,n_samples,n_excluded";

/// CSV text: `# ` metadata lines, the header, then one row per method and
/// slot.
pub fn report_csv(reports: &[MethodReport], metadata: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}: {v}");
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(out, "# dataset_sha256: {}", r.dataset_hash);
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in reports.iter().flat_map(|r| &r.slots) {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{},{}",
            s.method, s.slot_index, s.time_frames, s.nmse_db, s.rate_bps_hz, s.n_samples, s.n_excluded
        );
    }
    out
}

pub fn write_report(path: &Path, reports: &[MethodReport], metadata: &[(String, String)]) -> Result<()> {
    check_same_dataset(reports)?;
    fs::write(path, report_csv(reports, metadata))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelsim::generate_dataset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    fn random_sets(n: usize, slots: usize, seed: u64) -> Vec<Vec<CMatrix>> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| (0..slots).map(|_| CMatrix::random_cn(4, 3, 1.0, &mut r)).collect())
            .collect()
    }

    #[test]
    fn nmse_floor_zero_and_noise_slope() {
        let l = random_sets(20, 3, 1);
        assert!(nmse_per_slot(&l, &l).unwrap().iter().all(|&x| x == NMSE_FLOOR_DB));
        let z: Vec<Vec<CMatrix>> = l.iter().map(|s| s.iter().map(|_| CMatrix::zeros(4, 3)).collect()).collect();
        assert!(nmse_per_slot(&z, &l).unwrap().iter().all(|&x| x.abs() < 1e-12));
        let noise = random_sets(20, 3, 2);
        let at = |eps: f64| {
            let p: Vec<Vec<CMatrix>> = l
                .iter()
                .zip(&noise)
                .map(|(ls, ns)| {
                    ls.iter()
                        .zip(ns)
                        .map(|(a, n)| ctmath::add(a, &ctmath::scale(n, Complex::new(eps, 0.0))).unwrap())
                        .collect()
                })
                .collect();
            nmse_per_slot(&p, &l).unwrap()
        };
        // ε·noise exactly: every decade of ε is 20 dB
        let (a, b) = (at(1e-2), at(1e-4));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y - 40.0).abs() < 1e-9, "{x} {y}");
        }
        assert!(nmse_per_slot(&l[..3], &l).is_err());
    }

    #[test]
    fn nmse_is_scale_invariant() {
        let l = random_sets(5, 2, 3);
        let p = random_sets(5, 2, 4);
        let c = Complex::new(-0.3, 2.1);
        let sc = |x: &Vec<Vec<CMatrix>>| -> Vec<Vec<CMatrix>> {
            x.iter().map(|s| s.iter().map(|m| ctmath::scale(m, c)).collect()).collect()
        };
        let a = nmse_per_slot(&p, &l).unwrap();
        let b = nmse_per_slot(&sc(&p), &sc(&l)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zf_cases() {
        let q = ctmath::dft_matrix(4);
        let h = CMatrix::from_fn(4, 2, |r, c| q.get(r, c));
        let d = zf_precoder(&h).unwrap();
        assert!(d.max_abs_diff(&ctmath::conj_transpose(&h)) < 1e-14);
        let mut r = rng(5);
        for _ in 0..20 {
            let h = CMatrix::random_cn(4, 2, 1.0, &mut r);
            let d = zf_precoder(&h).unwrap();
            assert!(ctmath::cmatmul(&d, &h).unwrap().max_abs_diff(&CMatrix::identity(2)) < 1e-9);
        }
        let sq = CMatrix::random_cn(3, 3, 1.0, &mut r);
        let d = zf_precoder(&sq).unwrap();
        assert!(ctmath::cmatmul(&sq, &d).unwrap().max_abs_diff(&CMatrix::identity(3)) < 1e-9);
        let rank1 = CMatrix::from_fn(4, 2, |r, _| Complex::new(r as f64 + 1.0, 0.0));
        assert!(matches!(zf_precoder(&rank1), Err(Error::Numeric(_))));
    }

    #[test]
    fn perfect_csi_rate_closed_form() {
        let mut r = rng(6);
        let h = CMatrix::random_cn(4, 4, 1.0, &mut r);
        let d = zf_precoder(&h).unwrap();
        let rate = achievable_rate(&d, &h, 0.1).unwrap();
        let closed = 4.0 * (1.0 + 1.0 / 0.4f64).log2();
        assert!((rate - closed).abs() < 1e-9);
        assert!((closed - 7.2294).abs() < 1e-4);
        assert!(achievable_rate(&d, &h, 1e12).unwrap() < 1e-10);
        assert!(achievable_rate(&d, &h, 0.0).is_err());
    }

    #[test]
    fn rate_ignores_common_phase() {
        let mut r = rng(7);
        let (h, p) = (CMatrix::random_cn(4, 2, 1.0, &mut r), CMatrix::random_cn(4, 2, 1.0, &mut r));
        let ph = Complex::from_polar(1.0, 0.7);
        let a = achievable_rate(&zf_precoder(&p).unwrap(), &h, 0.05).unwrap();
        let b = achievable_rate(&zf_precoder(&ctmath::scale(&p, ph)).unwrap(), &ctmath::scale(&h, ph), 0.05).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    fn small() -> SystemConfig {
        SystemConfig {
            n_tx: 8,
            n_rx: 2,
            n_rf: 2,
            n_subcarriers: 4,
            history_frames: 3,
            ..SystemConfig::desk()
        }
    }

    #[test]
    fn report_rows_and_hash_guard() {
        let cfg = small();
        let ds = generate_dataset(&cfg, 6, Mode::Test).unwrap();
        let methods = [Method::new("perfect", Predictor::Perfect), Method::new("outdated", Predictor::Outdated)];
        let reports = evaluate_methods(&methods, &ds, RatePolicy::EqualPower).unwrap();
        let csv = report_csv(&reports, &[("seed".into(), "0".into())]);
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], CSV_HEADER);
        assert_eq!(rows.len(), 1 + 2 * cfg.horizon_slots());
        let (perfect, outdated) = (&reports[0], &reports[1]);
        let n_r = cfg.n_rx as f64;
        let closed = n_r * (1.0 + 1.0 / (n_r * ds.noise_power())).log2();
        for (p, o) in perfect.slots.iter().zip(&outdated.slots) {
            assert_eq!(p.nmse_db, NMSE_FLOOR_DB);
            assert!((p.rate_bps_hz - closed).abs() < 1e-9 * closed);
            assert_eq!(p.n_excluded, 0);
            assert!(o.nmse_db > -60.0);
        }
        let other = generate_dataset(&SystemConfig { seed: 1, ..cfg }, 6, Mode::Test).unwrap();
        let mut mixed = reports.clone();
        mixed.push(evaluate_method(&methods[0], &other, RatePolicy::Literal).unwrap());
        assert!(matches!(check_same_dataset(&mixed), Err(Error::HashMismatch { .. })));
        let train = generate_dataset(&small(), 2, Mode::Train).unwrap();
        assert!(evaluate_method(&methods[0], &train, RatePolicy::Literal).is_err());
    }
}
