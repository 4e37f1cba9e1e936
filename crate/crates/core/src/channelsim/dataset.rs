use std::fs;
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{
    effective_channel, estimate_packed, identity_pilot, sample_paths, select_combiner, Path, PathSet, SystemConfig,
};
use crate::ctmath::{self, CMatrix, Complex};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

const MAGIC: &[u8; 4] = b"CTCP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `P` random label times in `(0, K]`.
    Train,
    /// The fixed slot grid `i/Q`, `i = 1..KQ`.
    Test,
}

impl Mode {
    fn stream_base(self) -> u64 {
        match self {
            Mode::Train => 0,
            Mode::Test => 1 << 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Noisy LS estimates at frames `−J+1..=0`, oldest first.
    pub inputs: Vec<CMatrix>,
    /// Label times in frames, ascending, in `(0, K]`.
    pub label_times: Vec<f64>,
    /// Noise-free effective channels at `label_times`.
    pub labels: Vec<CMatrix>,
    pub paths: PathSet,
}

impl Sample {
    /// Noise-free effective channel at arbitrary frame times, rebuilt from
    /// the stored paths.
    pub fn clean_at(&self, cfg: &SystemConfig, times: &[f64]) -> Vec<CMatrix> {
        let a = select_combiner(&self.paths, cfg);
        times
            .iter()
            .map(|&t| effective_channel(&self.paths, cfg, &a, t * cfg.frame_s))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SystemConfig,
    /// Mean per-entry power of the noise-free received pilots.
    pub e_avg: f64,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Noise variance used when the inputs were generated.
    pub fn noise_power(&self) -> f64 {
        self.config.noise_power(self.e_avg)
    }

    /// `Test` when every sample carries exactly the slot grid.
    pub fn mode(&self) -> Mode {
        let grid = test_grid(&self.config);
        if self.samples.iter().all(|s| s.label_times == grid) {
            Mode::Test
        } else {
            Mode::Train
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.config(&self.config);
        w.f64(self.e_avg);
        w.u64(self.samples.len() as u64);
        for s in &self.samples {
            for m in &s.inputs {
                w.matrix(m);
            }
            w.count(s.labels.len());
            for &t in &s.label_times {
                w.f64(t);
            }
            for m in &s.labels {
                w.matrix(m);
            }
            w.count(s.paths.len());
            for p in &s.paths.paths {
                for v in [p.gain.re, p.gain.im, p.doppler_hz, p.delay_s, p.aod_rad, p.aoa_rad] {
                    w.f64(v);
                }
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], origin: &FsPath) -> Result<Dataset> {
        let mut r = Reader::new(bytes, origin);
        if r.take(4)? != MAGIC {
            return Err(r.corrupt("bad magic, not a dataset file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.corrupt(format!("unsupported dataset version {version}")));
        }
        let config = r.config()?;
        config
            .validate()
            .map_err(|e| r.corrupt(format!("invalid config block: {e}")))?;
        let e_avg = r.f64()?;
        let n = r.u64()?;
        let shape = config.channel_shape();
        let mut samples = Vec::new();
        for _ in 0..n {
            let inputs = (0..config.history_frames)
                .map(|_| r.matrix(shape))
                .collect::<Result<Vec<_>>>()?;
            let n_labels = r.count()?;
            if n_labels.saturating_mul(8) > bytes.len() {
                return Err(r.corrupt(format!("label count {n_labels} exceeds file size")));
            }
            let label_times = (0..n_labels).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let labels = (0..n_labels).map(|_| r.matrix(shape)).collect::<Result<Vec<_>>>()?;
            let n_paths = r.count()?;
            if n_paths.saturating_mul(48) > bytes.len() {
                return Err(r.corrupt(format!("path count {n_paths} exceeds file size")));
            }
            let mut paths = Vec::with_capacity(n_paths);
            for _ in 0..n_paths {
                let mut v = [0.0; 6];
                for x in &mut v {
                    *x = r.f64()?;
                }
                paths.push(Path {
                    gain: Complex::new(v[0], v[1]),
                    doppler_hz: v[2],
                    delay_s: v[3],
                    aod_rad: v[4],
                    aoa_rad: v[5],
                });
            }
            samples.push(Sample {
                inputs,
                label_times,
                labels,
                paths: PathSet { paths },
            });
        }
        if !r.at_end() {
            return Err(r.corrupt("trailing bytes after last sample"));
        }
        Ok(Dataset {
            config,
            e_avg,
            samples,
        })
    }

    /// Hex SHA-256 over `"blob <len>\0"` followed by the serialized bytes.
    pub fn content_hash(&self) -> String {
        hash_bytes(&self.to_bytes())
    }
}

pub(crate) fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn test_grid(cfg: &SystemConfig) -> Vec<f64> {
    let q = cfg.slots_per_frame as f64;
    (1..=cfg.horizon_slots()).map(|i| i as f64 / q).collect()
}

fn train_times<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<f64> {
    let k = cfg.future_frames as f64;
    // 1 − u with u ∈ [0, 1) lies in (0, 1]
    let mut t: Vec<f64> = (0..cfg.label_samples)
        .map(|_| k * (1.0 - rng.random::<f64>()))
        .collect();
    t.sort_by(f64::total_cmp);
    t
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Clean {
    inputs: Vec<CMatrix>,
    pilot_power: f64,
    label_times: Vec<f64>,
    labels: Vec<CMatrix>,
    paths: PathSet,
}

pub fn generate_dataset(cfg: &SystemConfig, n_samples: usize, mode: Mode) -> Result<Dataset> {
    generate_dataset_with_pilot(cfg, n_samples, mode, &identity_pilot(cfg.n_rx))
}

/// Builds `n_samples` samples from `cfg.seed`.
///
/// Sample `i` draws paths and label times from ChaCha8 stream `base + 2i`
/// and noise from stream `base + 2i + 1`, so the result does not depend on
/// the thread count.
pub fn generate_dataset_with_pilot(
    cfg: &SystemConfig,
    n_samples: usize,
    mode: Mode,
    pilot: &CMatrix,
) -> Result<Dataset> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    if pilot.rows() != cfg.n_rx || pilot.cols() < cfg.n_rx {
        return Err(Error::config(
            "pilot",
            format!("must be {} x N_q with N_q >= {}", cfg.n_rx, cfg.n_rx),
        ));
    }
    let base = mode.stream_base();
    let grid = test_grid(cfg);
    let clean: Vec<Clean> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, base + 2 * i as u64);
            let paths = sample_paths(cfg, &mut rng);
            let label_times = match mode {
                Mode::Train => train_times(cfg, &mut rng),
                Mode::Test => grid.clone(),
            };
            let a = select_combiner(&paths, cfg);
            let j = cfg.history_frames as i64;
            let inputs: Vec<CMatrix> = (-j + 1..=0)
                .map(|n| effective_channel(&paths, cfg, &a, n as f64 * cfg.frame_s))
                .collect();
            let mut pilot_power = 0.0;
            for h in &inputs {
                for m in 0..cfg.n_subcarriers {
                    let block = super::subcarrier_block(h, cfg.n_rf, cfg.n_rx, m);
                    pilot_power += ctmath::fro_norm_sq(&ctmath::cmatmul(&block, pilot).expect("pilot shape checked"));
                }
            }
            let labels = label_times
                .iter()
                .map(|&t| effective_channel(&paths, cfg, &a, t * cfg.frame_s))
                .collect();
            Clean {
                inputs,
                pilot_power,
                label_times,
                labels,
                paths,
            }
        })
        .collect();

    let entries = (n_samples * cfg.history_frames * cfg.n_subcarriers * cfg.n_rf * pilot.cols()) as f64;
    let e_avg = clean.iter().map(|c| c.pilot_power).sum::<f64>() / entries;
    let sigma2 = cfg.noise_power(e_avg);

    let samples = clean
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = sample_rng(cfg.seed, base + 2 * i as u64 + 1);
            let inputs = c
                .inputs
                .iter()
                .map(|h| estimate_packed(h, cfg, pilot, sigma2, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Ok(Sample {
                inputs,
                label_times: c.label_times,
                labels: c.labels,
                paths: c.paths,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: cfg.clone(),
        e_avg,
        samples,
    })
}

pub fn save_dataset(ds: &Dataset, path: &FsPath) -> Result<()> {
    fs::write(path, ds.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: &FsPath) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    Dataset::from_bytes(&bytes, path)
}
