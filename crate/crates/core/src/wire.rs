//! Little-endian encoding helpers shared by the dataset and checkpoint files.

use std::path::{Path, PathBuf};

use crate::channelsim::SystemConfig;
use crate::ctmath::{CMatrix, Complex};
use crate::error::{Error, Result};

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn count(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("count exceeds u32"));
    }

    /// rows u32, cols u32, then row-major interleaved (re, im) pairs.
    pub fn matrix(&mut self, m: &CMatrix) {
        self.count(m.rows());
        self.count(m.cols());
        self.entries(m);
    }

    pub fn entries(&mut self, m: &CMatrix) {
        for z in m.data() {
            self.f64(z.re);
            self.f64(z.im);
        }
    }

    pub fn config(&mut self, c: &SystemConfig) {
        self.count(c.n_tx);
        self.count(c.n_rx);
        self.count(c.n_rf);
        self.f64(c.carrier_hz);
        self.f64(c.bandwidth_hz);
        self.count(c.n_subcarriers);
        self.f64(c.snr_db);
        self.f64(c.frame_s);
        self.f64(c.slot_s);
        self.count(c.slots_per_frame);
        self.count(c.history_frames);
        self.count(c.future_frames);
        self.count(c.label_samples);
        self.count(c.n_paths);
        self.f64(c.velocity_range_kmh.0);
        self.f64(c.velocity_range_kmh.1);
        self.f64(c.delay_spread_range_ns.0);
        self.f64(c.delay_spread_range_ns.1);
        self.count(c.feature_l);
        self.count(c.feature_r);
        self.u64(c.seed);
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], path: &Path) -> Self {
        Reader {
            buf,
            pos: 0,
            path: path.to_path_buf(),
        }
    }

    pub fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    pub fn count(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn entries(&mut self, rows: usize, cols: usize) -> Result<CMatrix> {
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(16).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| self.corrupt(format!("matrix {rows}x{cols} exceeds remaining payload")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let re = self.f64()?;
            let im = self.f64()?;
            data.push(Complex::new(re, im));
        }
        CMatrix::new(rows, cols, data)
    }

    /// Reads a matrix and checks its header against `expect`.
    pub fn matrix(&mut self, expect: (usize, usize)) -> Result<CMatrix> {
        let rows = self.count()?;
        let cols = self.count()?;
        if (rows, cols) != expect {
            return Err(self.corrupt(format!(
                "matrix header {rows}x{cols} disagrees with configured {}x{}",
                expect.0, expect.1
            )));
        }
        self.entries(rows, cols)
    }

    pub fn config(&mut self) -> Result<SystemConfig> {
        Ok(SystemConfig {
            n_tx: self.count()?,
            n_rx: self.count()?,
            n_rf: self.count()?,
            carrier_hz: self.f64()?,
            bandwidth_hz: self.f64()?,
            n_subcarriers: self.count()?,
            snr_db: self.f64()?,
            frame_s: self.f64()?,
            slot_s: self.f64()?,
            slots_per_frame: self.count()?,
            history_frames: self.count()?,
            future_frames: self.count()?,
            label_samples: self.count()?,
            n_paths: self.count()?,
            velocity_range_kmh: (self.f64()?, self.f64()?),
            delay_spread_range_ns: (self.f64()?, self.f64()?),
            feature_l: self.count()?,
            feature_r: self.count()?,
            seed: self.u64()?,
        })
    }
}
