use std::fs;
use std::path::Path;

use crate::channelsim::SystemConfig;
use crate::ctmath::CMatrix;
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

const MAGIC: &[u8; 4] = b"CTCK";
const VERSION: u32 = 1;

/// Named complex tensors plus the configuration they were trained under.
///
/// Layout: magic, version, config block, tensor count (u32), then per
/// tensor the name (u16 length + UTF-8), rank (u8, always 2), dims (u32
/// each) and interleaved re/im f64 entries in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: SystemConfig,
    pub tensors: Vec<(String, CMatrix)>,
}

impl Checkpoint {
    pub fn new(config: SystemConfig) -> Self {
        Checkpoint {
            config,
            tensors: Vec::new(),
        }
    }

    /// Replaces a tensor of the same name or appends a new one.
    pub fn insert(&mut self, name: impl Into<String>, m: CMatrix) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = m,
            None => self.tensors.push((name, m)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&CMatrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&CMatrix> {
        self.get(name)
            .ok_or_else(|| Error::config(name, "missing from checkpoint"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.config(&self.config);
        w.count(self.tensors.len());
        for (name, m) in &self.tensors {
            w.u16(u16::try_from(name.len()).expect("tensor name under 64 KiB"));
            w.bytes(name.as_bytes());
            w.u8(2);
            w.matrix(m);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, origin);
        if r.take(4)? != MAGIC {
            return Err(r.corrupt("bad magic, not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.corrupt(format!("unsupported checkpoint version {version}")));
        }
        let config = r.config()?;
        let n = r.count()?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.corrupt("tensor name is not UTF-8"))?;
            let rank = r.u8()?;
            if rank != 2 {
                return Err(r.corrupt(format!("tensor {name}: rank {rank}, expected 2")));
            }
            let rows = r.count()?;
            let cols = r.count()?;
            let m = r.entries(rows, cols)?;
            tensors.push((name, m));
        }
        if !r.at_end() {
            return Err(r.corrupt("trailing bytes after last tensor"));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}
