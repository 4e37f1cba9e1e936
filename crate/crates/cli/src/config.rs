//! `key = value` run configuration with `--set` overrides.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use ctpred_core::channelsim::SystemConfig;
use ctpred_core::evalkit::RatePolicy;
use ctpred_core::tnode::{Scheme, SolverSpec};
use ctpred_core::training::TrainConfig;
use ctpred_core::{Error, Result};

/// Everything a command needs, after the file, overrides and presets have
/// been merged.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub train: TrainConfig,
    pub scheme: Scheme,
    /// `None` means one step per slot.
    pub step_frames: Option<f64>,
    pub gru_hidden: usize,
    pub fc_width: usize,
    pub rate_policy: RatePolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemConfig::desk(),
            train: TrainConfig::default(),
            scheme: Scheme::Rk4,
            step_frames: None,
            gru_hidden: 256,
            fc_width: 512,
            rate_policy: RatePolicy::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "n_tx",
    "n_rx",
    "n_rf",
    "carrier_hz",
    "bandwidth_hz",
    "n_subcarriers",
    "snr_db",
    "frame_s",
    "slot_s",
    "slots_per_frame",
    "history_frames",
    "future_frames",
    "label_samples",
    "n_paths",
    "velocity_min_kmh",
    "velocity_max_kmh",
    "delay_spread_min_ns",
    "delay_spread_max_ns",
    "feature_l",
    "feature_r",
    "seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "gradient_path",
    "checkpoint_every",
    "early_stop_window",
    "early_stop_tol",
    "solver",
    "step_frames",
    "gru_hidden",
    "fc_width",
    "rate_policy",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

/// Splits config text into `(key, value)` pairs. Blank lines and `#`
/// comments are skipped.
pub fn parse_lines(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(
                format!("{origin}:{}", n + 1),
                format!("expected `key = value`, got {line:?}"),
            ));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.system;
        let t = &mut self.train;
        match key {
            "preset" => {
                s.clone_from(&match value {
                    "desk" => SystemConfig::desk(),
                    "paper" => SystemConfig::paper(),
                    _ => return Err(Error::config(key, format!("unknown preset {value:?}, expected desk or paper"))),
                });
            }
            "n_tx" => s.n_tx = parse(key, value)?,
            "n_rx" => s.n_rx = parse(key, value)?,
            "n_rf" => s.n_rf = parse(key, value)?,
            "carrier_hz" => s.carrier_hz = parse(key, value)?,
            "bandwidth_hz" => s.bandwidth_hz = parse(key, value)?,
            "n_subcarriers" => s.n_subcarriers = parse(key, value)?,
            "snr_db" => s.snr_db = parse(key, value)?,
            "frame_s" => s.frame_s = parse(key, value)?,
            "slot_s" => s.slot_s = parse(key, value)?,
            "slots_per_frame" => s.slots_per_frame = parse(key, value)?,
            "history_frames" => s.history_frames = parse(key, value)?,
            "future_frames" => s.future_frames = parse(key, value)?,
            "label_samples" => s.label_samples = parse(key, value)?,
            "n_paths" => s.n_paths = parse(key, value)?,
            "velocity_min_kmh" => s.velocity_range_kmh.0 = parse(key, value)?,
            "velocity_max_kmh" => s.velocity_range_kmh.1 = parse(key, value)?,
            "delay_spread_min_ns" => s.delay_spread_range_ns.0 = parse(key, value)?,
            "delay_spread_max_ns" => s.delay_spread_range_ns.1 = parse(key, value)?,
            "feature_l" => s.feature_l = parse(key, value)?,
            "feature_r" => s.feature_r = parse(key, value)?,
            "seed" => {
                s.seed = parse(key, value)?;
                t.seed = s.seed;
            }
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "adam_beta1" => t.adam_beta1 = parse(key, value)?,
            "adam_beta2" => t.adam_beta2 = parse(key, value)?,
            "adam_eps" => t.adam_eps = parse(key, value)?,
            "gradient_path" => t.gradient_path = value.parse()?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "early_stop_window" => t.early_stop_window = parse(key, value)?,
            "early_stop_tol" => t.early_stop_tol = parse(key, value)?,
            "solver" => self.scheme = value.parse()?,
            "step_frames" => self.step_frames = Some(parse(key, value)?),
            "gru_hidden" => self.gru_hidden = parse(key, value)?,
            "fc_width" => self.fc_width = parse(key, value)?,
            "rate_policy" => self.rate_policy = value.parse()?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies pairs in order, except that a `preset` is applied first.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let (presets, rest): (Vec<_>, Vec<_>) = pairs.iter().partition(|(k, _)| k == "preset");
        for (k, v) in presets.into_iter().chain(rest) {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults, then the file, then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(path) = file {
            let text = fs::read_to_string(path)?;
            pairs.extend(parse_lines(&text, &path.display().to_string())?);
        }
        for o in overrides {
            pairs.extend(parse_lines(o, "--set")?);
        }
        let mut rc = RunConfig::default();
        rc.apply(&pairs)?;
        rc.validate()?;
        Ok(rc)
    }

    pub fn solver(&self) -> SolverSpec {
        SolverSpec {
            scheme: self.scheme,
            step_frames: self
                .step_frames
                .unwrap_or(1.0 / self.system.slots_per_frame as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.train.validate()?;
        self.solver().validate()?;
        if self.gru_hidden == 0 {
            return Err(Error::config("gru_hidden", "must be positive"));
        }
        if self.fc_width == 0 {
            return Err(Error::config("fc_width", "must be positive"));
        }
        Ok(())
    }

    /// Every key with its effective value, in [`KEYS`] order after `preset`.
    pub fn echo(&self) -> Vec<(String, String)> {
        let s = &self.system;
        let t = &self.train;
        let v: Vec<String> = vec![
            s.n_tx.to_string(),
            s.n_rx.to_string(),
            s.n_rf.to_string(),
            s.carrier_hz.to_string(),
            s.bandwidth_hz.to_string(),
            s.n_subcarriers.to_string(),
            s.snr_db.to_string(),
            s.frame_s.to_string(),
            s.slot_s.to_string(),
            s.slots_per_frame.to_string(),
            s.history_frames.to_string(),
            s.future_frames.to_string(),
            s.label_samples.to_string(),
            s.n_paths.to_string(),
            s.velocity_range_kmh.0.to_string(),
            s.velocity_range_kmh.1.to_string(),
            s.delay_spread_range_ns.0.to_string(),
            s.delay_spread_range_ns.1.to_string(),
            s.feature_l.to_string(),
            s.feature_r.to_string(),
            s.seed.to_string(),
            t.epochs.to_string(),
            t.batch_size.to_string(),
            t.learning_rate.to_string(),
            t.adam_beta1.to_string(),
            t.adam_beta2.to_string(),
            t.adam_eps.to_string(),
            format!("{:?}", t.gradient_path).to_lowercase(),
            t.checkpoint_every.to_string(),
            t.early_stop_window.to_string(),
            t.early_stop_tol.to_string(),
            self.scheme.to_string(),
            self.solver().step_frames.to_string(),
            self.gru_hidden.to_string(),
            self.fc_width.to_string(),
            self.rate_policy.to_string(),
        ];
        KEYS[1..].iter().map(|k| k.to_string()).zip(v).collect()
    }
}
