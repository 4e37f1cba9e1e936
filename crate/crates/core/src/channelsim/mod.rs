//! Time-varying mmWave channels from a geometric multipath model, analog
//! combining with a DFT codebook, noisy least-squares estimation, and the
//! dataset files built from them.
//!
//! Time inside a [`Sample`] is measured in frames: `t = 1` is one frame
//! after the last observation. Seconds appear only in [`channel_at`].

mod config;
mod dataset;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ctmath::{self, CMatrix, Complex};
use crate::error::{Error, Result};

pub use config::SystemConfig;
pub use dataset::{
    generate_dataset, generate_dataset_with_pilot, load_dataset, save_dataset, test_grid, Dataset, Mode, Sample,
};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex,
    pub doppler_hz: f64,
    pub delay_s: f64,
    pub aod_rad: f64,
    pub aoa_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Half-wavelength ULA response, normalized to unit norm.
pub fn steering_vector(n_ant: usize, angle_rad: f64) -> CMatrix {
    let s = 1.0 / (n_ant as f64).sqrt();
    let k = -PI * angle_rad.sin();
    CMatrix::from_fn(n_ant, 1, |i, _| Complex::from_polar(s, k * i as f64))
}

/// Largest Doppler shift the configured speed range can produce.
pub fn max_doppler_hz(cfg: &SystemConfig) -> f64 {
    cfg.carrier_hz * cfg.velocity_range_kmh.1 / 3.6 / SPEED_OF_LIGHT
}

pub fn sample_paths<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> PathSet {
    let speed_mps = uniform(rng, cfg.velocity_range_kmh) / 3.6;
    let doppler_max = cfg.carrier_hz * speed_mps / SPEED_OF_LIGHT;
    let spread_s = uniform(rng, cfg.delay_spread_range_ns) * 1e-9;
    let gain_std = (0.5 / cfg.n_paths as f64).sqrt();
    let half_pi = PI / 2.0;
    let paths = (0..cfg.n_paths)
        .map(|_| {
            let psi = rng.random::<f64>() * 2.0 * PI;
            let delay_s = rng.random::<f64>() * spread_s;
            let aod_rad = open_interval(rng, -half_pi, half_pi);
            let aoa_rad = open_interval(rng, -half_pi, half_pi);
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Path {
                gain: Complex::new(gain_std * re, gain_std * im),
                doppler_hz: doppler_max * psi.cos(),
                delay_s,
                aod_rad,
                aoa_rad,
            }
        })
        .collect();
    PathSet { paths }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn open_interval<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = uniform(rng, (lo, hi));
        if x > lo && x < hi {
            return x;
        }
    }
}

/// Frequency of subcarrier `m` (1-based).
pub fn subcarrier_hz(cfg: &SystemConfig, m: usize) -> f64 {
    cfg.carrier_hz + cfg.bandwidth_hz / 2.0 * (m as f64 - cfg.n_subcarriers as f64 / 2.0)
}

/// `exp(−j2π(v·t + f_m·τ))`, reduced modulo one cycle before scaling.
fn path_phasor(path: &Path, t_s: f64, f_m: f64) -> Complex {
    let cycles = (path.doppler_hz * t_s).rem_euclid(1.0) + (f_m * path.delay_s).rem_euclid(1.0);
    Complex::from_polar(1.0, -2.0 * PI * cycles)
}

/// Channel `H_m(t)` (`N_T × N_R`) at time `t_s` seconds, subcarrier `m` in `1..=M`.
pub fn channel_at(paths: &PathSet, cfg: &SystemConfig, t_s: f64, m: usize) -> CMatrix {
    assert!((1..=cfg.n_subcarriers).contains(&m), "subcarrier {m} out of range");
    let f_m = subcarrier_hz(cfg, m);
    let mut h = CMatrix::zeros(cfg.n_tx, cfg.n_rx);
    for p in &paths.paths {
        let coef = p.gain * path_phasor(p, t_s, f_m);
        let at = steering_vector(cfg.n_tx, p.aod_rad);
        let ar = steering_vector(cfg.n_rx, p.aoa_rad);
        for i in 0..cfg.n_tx {
            let ci = coef * at.get(i, 0);
            for j in 0..cfg.n_rx {
                h[(i, j)] += ci * ar.get(j, 0).conj();
            }
        }
    }
    h
}

/// Combined channel `A·H_m(t)` for every subcarrier, packed as the
/// `N_RF·N_R × M` matrix whose column `m` is `vec(A·H_m)`.
pub fn effective_channel(paths: &PathSet, cfg: &SystemConfig, combiner: &CMatrix, t_s: f64) -> CMatrix {
    let (n_rf, n_rx) = (cfg.n_rf, cfg.n_rx);
    // A·a_T(φ_T) and conj(a_R(φ_R)) per path
    let beams: Vec<(CMatrix, CMatrix)> = paths
        .paths
        .iter()
        .map(|p| {
            let b = ctmath::cmatmul(combiner, &steering_vector(cfg.n_tx, p.aod_rad)).expect("combiner is N_RF x N_T");
            (b, steering_vector(n_rx, p.aoa_rad).conj())
        })
        .collect();
    let mut out = CMatrix::zeros(n_rf * n_rx, cfg.n_subcarriers);
    for m in 0..cfg.n_subcarriers {
        let f_m = subcarrier_hz(cfg, m + 1);
        for (p, (b, ar)) in paths.paths.iter().zip(&beams) {
            let coef = p.gain * path_phasor(p, t_s, f_m);
            for c in 0..n_rx {
                let cc = coef * ar.get(c, 0);
                for r in 0..n_rf {
                    out[(r + c * n_rf, m)] += cc * b.get(r, 0);
                }
            }
        }
    }
    out
}

/// Extracts `A·H_m` (`N_RF × N_R`) for 0-based subcarrier `m` from a packed
/// effective-channel matrix.
pub fn subcarrier_block(packed: &CMatrix, n_rf: usize, n_rx: usize, m: usize) -> CMatrix {
    CMatrix::from_fn(n_rf, n_rx, |r, c| packed.get(r + c * n_rf, m))
}

/// Inverse of [`subcarrier_block`] over all subcarriers.
pub fn pack_blocks(blocks: &[CMatrix]) -> CMatrix {
    let (n_rf, n_rx) = blocks[0].shape();
    CMatrix::from_fn(n_rf * n_rx, blocks.len(), |row, m| blocks[m].get(row % n_rf, row / n_rf))
}

/// Picks the `N_RF` DFT codewords with the most received energy on the
/// noise-free `t = 0` channel. Row `k` of the result is the conjugate
/// transpose of the k-th strongest codeword; ties go to the lower index.
pub fn select_combiner(paths: &PathSet, cfg: &SystemConfig) -> CMatrix {
    let dft = ctmath::dft_matrix(cfg.n_tx);
    let dft_h = ctmath::conj_transpose(&dft);
    let mut energy = vec![0.0; cfg.n_tx];
    for m in 1..=cfg.n_subcarriers {
        let h = channel_at(paths, cfg, 0.0, m);
        let proj = ctmath::cmatmul(&dft_h, &h).expect("square DFT");
        for (k, e) in energy.iter_mut().enumerate() {
            *e += proj.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    let mut order: Vec<usize> = (0..cfg.n_tx).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    CMatrix::from_fn(cfg.n_rf, cfg.n_tx, |r, c| dft_h.get(order[r], c))
}

/// Default pilot: one orthogonal symbol per receive antenna.
pub fn identity_pilot(n_rx: usize) -> CMatrix {
    CMatrix::identity(n_rx)
}

/// Least-squares estimate `Y·Sᴴ·(S·Sᴴ)⁻¹` of the `N_RF × N_R` effective channel.
pub fn ls_estimate(y: &CMatrix, pilot: &CMatrix) -> Result<CMatrix> {
    if y.cols() != pilot.cols() {
        return Err(Error::Shape {
            op: "ls_estimate",
            lhs: y.shape(),
            rhs: pilot.shape(),
        });
    }
    if pilot.cols() < pilot.rows() {
        return Err(Error::Numeric(format!(
            "pilot {}x{} cannot have full row rank",
            pilot.rows(),
            pilot.cols()
        )));
    }
    let gram = ctmath::cmatmul(pilot, &ctmath::conj_transpose(pilot))?;
    let rhs = ctmath::cmatmul(pilot, &ctmath::conj_transpose(y))?;
    let x = ctmath::solve_hermitian(&gram, &rhs)
        .map_err(|e| Error::Numeric(format!("rank-deficient pilot: {e}")))?;
    Ok(ctmath::conj_transpose(&x))
}

/// Mean of `|h|²` over all entries.
pub fn mean_entry_power(m: &CMatrix) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        ctmath::fro_norm_sq(m) / m.len() as f64
    }
}

/// Adds i.i.d. CN(0, σ²) noise with `σ² = e_avg / 10^(snr_db/10)`.
pub fn add_noise<R: Rng + ?Sized>(signal: &CMatrix, snr_db: f64, e_avg: f64, rng: &mut R) -> CMatrix {
    let sigma2 = e_avg / 10f64.powf(snr_db / 10.0);
    add_noise_power(signal, sigma2, rng)
}

pub fn add_noise_power<R: Rng + ?Sized>(signal: &CMatrix, sigma2: f64, rng: &mut R) -> CMatrix {
    if sigma2 == 0.0 {
        return signal.clone();
    }
    let s = (sigma2 / 2.0).sqrt();
    let mut out = signal.clone();
    for z in out.data_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *z += Complex::new(s * re, s * im);
    }
    out
}

/// Noisy LS estimate of every subcarrier of a packed effective channel.
///
/// `A·N` has i.i.d. CN(0, σ²) entries because `A` has orthonormal rows, so
/// the noise is drawn directly in the combined domain.
pub fn estimate_packed<R: Rng + ?Sized>(
    clean: &CMatrix,
    cfg: &SystemConfig,
    pilot: &CMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    let blocks = (0..cfg.n_subcarriers)
        .map(|m| {
            let h = subcarrier_block(clean, cfg.n_rf, cfg.n_rx, m);
            let y = add_noise_power(&ctmath::cmatmul(&h, pilot)?, sigma2, rng);
            ls_estimate(&y, pilot)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pack_blocks(&blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmath::{conj_transpose, fro_norm_sq, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn single(path: Path) -> PathSet {
        PathSet { paths: vec![path] }
    }

    #[test]
    fn steering_cases() {
        let a = steering_vector(8, 0.0);
        for i in 0..8 {
            assert!((a.get(i, 0) - Complex::new(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        for angle in [-1.2, -0.3, 0.4, 1.5] {
            assert!((fro_norm_sq(&steering_vector(13, angle)) - 1.0).abs() < 1e-12);
        }
        let b = steering_vector(2, PI / 2.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.get(0, 0) - Complex::new(s, 0.0)).norm() < 1e-15);
        assert!((b.get(1, 0) - Complex::new(-s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn doppler_at_60_kmh_28_ghz() {
        let v = 28e9 * (60.0 / 3.6) / SPEED_OF_LIGHT;
        assert!((v - 1556.63).abs() < 0.01, "{v}");
        // the rounded c = 3e8 gives the often-quoted 1555.6 Hz
        assert!((28e9 * (60.0 / 3.6) / 3e8 - 1555.6f64).abs() < 0.05);
        let cfg = SystemConfig::desk();
        assert!((max_doppler_hz(&cfg) - v).abs() < 1e-9);
    }

    #[test]
    fn sampled_paths_stay_in_support() {
        let cfg = SystemConfig::desk();
        let mut r = rng(1);
        let vmax = max_doppler_hz(&cfg);
        let mut power = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let ps = sample_paths(&cfg, &mut r);
            assert_eq!(ps.len(), cfg.n_paths);
            for p in &ps.paths {
                assert!(p.doppler_hz.abs() <= vmax);
                assert!(p.delay_s >= 0.0 && p.delay_s <= cfg.delay_spread_range_ns.1 * 1e-9);
                assert!(p.aod_rad.abs() < PI / 2.0 && p.aoa_rad.abs() < PI / 2.0);
            }
            power += ps.paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        let mean = power / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn static_path_is_time_invariant_and_rank_one() {
        let cfg = SystemConfig::desk();
        let p = Path {
            doppler_hz: 0.0,
            ..sample_paths(&cfg, &mut rng(2)).paths[0]
        };
        let h1 = channel_at(&single(p), &cfg, 0.0, 3);
        let h2 = channel_at(&single(p), &cfg, 0.37, 3);
        assert!(h1.max_abs_diff(&h2) < 1e-14);

        // rank one: the second column has no component orthogonal to the first,
        // and that residual norm bounds the second singular value
        let (c0, c1) = (h1.col(0), h1.col(1));
        let dot: Complex = c0.iter().zip(&c1).map(|(a, b)| a.conj() * b).sum();
        let n0: f64 = c0.iter().map(|z| z.norm_sqr()).sum();
        let resid: f64 = c0.iter().zip(&c1).map(|(a, b)| (b - dot / n0 * a).norm_sqr()).sum();
        assert!(resid.sqrt() < 1e-10);
    }

    #[test]
    fn channel_superposes_paths() {
        let cfg = SystemConfig::desk();
        let ps = sample_paths(&cfg, &mut rng(3));
        let two = PathSet {
            paths: ps.paths[..2].to_vec(),
        };
        let t = 1.3e-3;
        let sum = ctmath::add(
            &channel_at(&single(ps.paths[0]), &cfg, t, 5),
            &channel_at(&single(ps.paths[1]), &cfg, t, 5),
        )
        .unwrap();
        assert!(channel_at(&two, &cfg, t, 5).max_abs_diff(&sum) < 1e-14);
    }

    #[test]
    fn effective_channel_matches_direct_product() {
        let cfg = SystemConfig::desk();
        let ps = sample_paths(&cfg, &mut rng(4));
        let a = select_combiner(&ps, &cfg);
        let t = -2.5e-3;
        let packed = effective_channel(&ps, &cfg, &a, t);
        for m in 0..cfg.n_subcarriers {
            let direct = ctmath::cmatmul(&a, &channel_at(&ps, &cfg, t, m + 1)).unwrap();
            let block = subcarrier_block(&packed, cfg.n_rf, cfg.n_rx, m);
            assert!(block.max_abs_diff(&direct) < 1e-12);
        }
        let blocks: Vec<CMatrix> = (0..cfg.n_subcarriers)
            .map(|m| subcarrier_block(&packed, cfg.n_rf, cfg.n_rx, m))
            .collect();
        assert_eq!(pack_blocks(&blocks), packed);
    }

    #[test]
    fn combiner_picks_matched_codeword_first() {
        let cfg = SystemConfig::desk();
        let g = 5;
        // sin φ = 2g/N_T points exactly at codeword g
        let aod = (2.0 * g as f64 / cfg.n_tx as f64).asin();
        let p = Path {
            gain: ONE,
            doppler_hz: 0.0,
            delay_s: 0.0,
            aod_rad: aod,
            aoa_rad: 0.2,
        };
        let a = select_combiner(&single(p), &cfg);
        let dft = ctmath::dft_matrix(cfg.n_tx);
        let expect = conj_transpose(&dft).slice_rows(g, g + 1).unwrap();
        assert!(a.slice_rows(0, 1).unwrap().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn combiner_rows_are_orthonormal() {
        let cfg = SystemConfig::desk();
        let a = select_combiner(&sample_paths(&cfg, &mut rng(5)), &cfg);
        let aah = ctmath::cmatmul(&a, &conj_transpose(&a)).unwrap();
        assert!(aah.max_abs_diff(&CMatrix::identity(cfg.n_rf)) < 1e-12);
    }

    #[test]
    fn full_combiner_is_permuted_unitary_dft() {
        let cfg = SystemConfig {
            n_tx: 8,
            n_rf: 8,
            ..SystemConfig::desk()
        };
        let a = select_combiner(&sample_paths(&cfg, &mut rng(6)), &cfg);
        let dft_h = conj_transpose(&ctmath::dft_matrix(8));
        let mut seen = [false; 8];
        for r in 0..8 {
            let row = a.slice_rows(r, r + 1).unwrap();
            let k = (0..8)
                .find(|&k| row.max_abs_diff(&dft_h.slice_rows(k, k + 1).unwrap()) < 1e-12)
                .expect("row is a codeword");
            assert!(!seen[k]);
            seen[k] = true;
        }
    }

    #[test]
    fn ls_recovers_noiseless_channel() {
        let mut r = rng(7);
        let h = CMatrix::random_cn(4, 2, 1.0, &mut r);
        let est = ls_estimate(&h, &identity_pilot(2)).unwrap();
        assert_eq!(est, h);
        for nq in [2, 3, 6] {
            let s = CMatrix::random_cn(2, nq, 1.0, &mut r);
            let y = ctmath::cmatmul(&h, &s).unwrap();
            assert!(ls_estimate(&y, &s).unwrap().rel_err(&h) < 1e-10);
        }
        let short = CMatrix::random_cn(2, 1, 1.0, &mut r);
        assert!(matches!(ls_estimate(&CMatrix::zeros(4, 1), &short), Err(Error::Numeric(_))));
        let mut dup = CMatrix::zeros(2, 3);
        for c in 0..3 {
            dup[(0, c)] = ONE;
            dup[(1, c)] = ONE;
        }
        assert!(ls_estimate(&CMatrix::zeros(4, 3), &dup).is_err());
    }

    #[test]
    fn ls_noise_floor_matches_snr() {
        let cfg = SystemConfig::desk();
        let mut r = rng(8);
        let pilot = identity_pilot(cfg.n_rx);
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..1000 {
            let h = CMatrix::random_cn(cfg.n_rf, cfg.n_rx, 1.0, &mut r);
            let y = add_noise(&ctmath::cmatmul(&h, &pilot).unwrap(), 10.0, 1.0, &mut r);
            let est = ls_estimate(&y, &pilot).unwrap();
            num += fro_norm_sq(&ctmath::sub(&est, &h).unwrap());
            den += fro_norm_sq(&h);
        }
        let nmse_db = 10.0 * (num / den).log10();
        assert!((nmse_db + 10.0).abs() < 1.0, "{nmse_db}");
    }

    #[test]
    fn noise_power_matches_definition() {
        let mut r = rng(9);
        let sig = CMatrix::random_cn(100, 1000, 2.0, &mut r);
        let e = mean_entry_power(&sig);
        for snr in [0.0, 10.0] {
            let noisy = add_noise(&sig, snr, e, &mut r);
            let p = mean_entry_power(&ctmath::sub(&noisy, &sig).unwrap());
            let sigma2 = e / 10f64.powf(snr / 10.0);
            assert!((p / sigma2 - 1.0).abs() < 0.03, "snr {snr}: {p} vs {sigma2}");
        }
        let huge = add_noise(&sig, 400.0, e, &mut r);
        assert!(huge.max_abs_diff(&sig) < 1e-15);
    }

    #[test]
    fn channel_energy_is_stationary() {
        let cfg = SystemConfig::desk();
        let mut r = rng(10);
        let times = [0.0, 0.4e-3, 1.1e-3];
        let mut energy = [0.0; 3];
        for _ in 0..2000 {
            let ps = sample_paths(&cfg, &mut r);
            for (e, &t) in energy.iter_mut().zip(&times) {
                *e += fro_norm_sq(&channel_at(&ps, &cfg, t, 4));
            }
        }
        for e in &energy[1..] {
            assert!((e / energy[0] - 1.0).abs() < 0.03);
        }
    }
}
