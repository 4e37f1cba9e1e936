use crate::error::{Error, Result};

/// Physical and model dimensions for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Base-station antennas.
    pub n_tx: usize,
    /// User antennas.
    pub n_rx: usize,
    /// RF chains behind the analog combiner.
    pub n_rf: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub snr_db: f64,
    pub frame_s: f64,
    pub slot_s: f64,
    pub slots_per_frame: usize,
    /// Observed frames before the prediction origin.
    pub history_frames: usize,
    /// Predicted frames after the origin.
    pub future_frames: usize,
    /// Random label times per training sample.
    pub label_samples: usize,
    pub n_paths: usize,
    pub velocity_range_kmh: (f64, f64),
    pub delay_spread_range_ns: (f64, f64),
    /// Antenna-domain feature size.
    pub feature_l: usize,
    /// Frequency-domain feature size.
    pub feature_r: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Small configuration that trains in minutes on one machine.
    pub fn desk() -> Self {
        SystemConfig {
            n_tx: 32,
            n_rx: 2,
            n_rf: 4,
            carrier_hz: 28e9,
            bandwidth_hz: 100e6,
            n_subcarriers: 16,
            snr_db: 10.0,
            frame_s: 0.625e-3,
            slot_s: 0.125e-3,
            slots_per_frame: 5,
            history_frames: 10,
            future_frames: 2,
            label_samples: 5,
            n_paths: 6,
            velocity_range_kmh: (30.0, 60.0),
            delay_spread_range_ns: (50.0, 200.0),
            feature_l: 16,
            feature_r: 32,
            seed: 0,
        }
    }

    /// The full-size simulation configuration.
    pub fn paper() -> Self {
        SystemConfig {
            n_tx: 128,
            n_rx: 4,
            n_rf: 4,
            n_subcarriers: 256,
            feature_l: 64,
            feature_r: 128,
            ..Self::desk()
        }
    }

    /// Rows of an effective-channel matrix: `N_RF · N_R`.
    pub fn eff_rows(&self) -> usize {
        self.n_rf * self.n_rx
    }

    /// Shape of one effective-channel matrix `(N_RF·N_R, M)`.
    pub fn channel_shape(&self) -> (usize, usize) {
        (self.eff_rows(), self.n_subcarriers)
    }

    /// Number of test slots `K·Q`.
    pub fn horizon_slots(&self) -> usize {
        self.future_frames * self.slots_per_frame
    }

    pub fn noise_power(&self, e_avg: f64) -> f64 {
        e_avg / 10f64.powf(self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_rf", self.n_rf),
            ("n_subcarriers", self.n_subcarriers),
            ("slots_per_frame", self.slots_per_frame),
            ("history_frames", self.history_frames),
            ("future_frames", self.future_frames),
            ("label_samples", self.label_samples),
            ("n_paths", self.n_paths),
            ("feature_l", self.feature_l),
            ("feature_r", self.feature_r),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.n_rf > self.n_tx {
            return Err(Error::config("n_rf", "must not exceed n_tx"));
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("frame_s", self.frame_s),
            ("slot_s", self.slot_s),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        let expect = self.slots_per_frame as f64 * self.slot_s;
        if (self.frame_s - expect).abs() > 1e-9 * self.frame_s {
            return Err(Error::config(
                "frame_s",
                format!("must equal slots_per_frame * slot_s = {expect}"),
            ));
        }
        let ranges = [
            ("velocity_range_kmh", self.velocity_range_kmh),
            ("delay_spread_range_ns", self.delay_spread_range_ns),
        ];
        for (field, (lo, hi)) in ranges {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(field, "must satisfy 0 <= lo <= hi"));
            }
        }
        Ok(())
    }
}
