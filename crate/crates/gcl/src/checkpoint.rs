//! Versioned binary checkpoints. Little-endian, FNV-1a-64 checksum over
//! everything before the trailing checksum word. Stores enough to resume
//! a run bit-exactly: RNG position, all parameter blocks with optimizer
//! state, teacher history, and the in-flight teacher pseudo-episode.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::ppo::TrajectoryStep;

const MAGIC: &[u8; 8] = b"GCLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("truncated or malformed checkpoint: {0}")]
    Malformed(String),
}

/// Parameters plus Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub config_text: String,
    pub blocks: Vec<(String, ParamBlock)>,
    /// Teacher history entries, oldest first: (latent, raw student return).
    pub teacher_history: Vec<(Vec<f64>, f64)>,
    /// In-flight teacher pseudo-episode steps.
    pub teacher_segment: Vec<TrajectoryStep>,
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Enc(Vec<u8>);

impl Enc {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len() as u32);
        for &x in v {
            self.f64(x);
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Malformed(format!(
                "need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<Vec<u8>, CheckpointError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.0.extend_from_slice(MAGIC);
    e.u32(CHECKPOINT_VERSION);
    e.u64(ckpt.iteration);
    e.0.extend_from_slice(&ckpt.rng_seed);
    e.u64(ckpt.rng_word_pos as u64);
    e.u64((ckpt.rng_word_pos >> 64) as u64);
    e.bytes(ckpt.config_text.as_bytes());
    e.u32(ckpt.blocks.len() as u32);
    for (name, block) in &ckpt.blocks {
        e.bytes(name.as_bytes());
        e.f64s(&block.params);
        e.f64s(&block.adam_m);
        e.f64s(&block.adam_v);
        e.u64(block.adam_step);
    }
    e.u32(ckpt.teacher_history.len() as u32);
    for (z, ret) in &ckpt.teacher_history {
        e.f64s(z);
        e.f64(*ret);
    }
    e.u32(ckpt.teacher_segment.len() as u32);
    for step in &ckpt.teacher_segment {
        e.f64s(&step.observation);
        e.f64s(&step.action);
        e.f64(step.log_prob);
        e.f64(step.reward);
        e.f64(step.value_estimate);
        e.0.push(step.done as u8);
    }
    let checksum = fnv1a64(&e.0);
    e.u64(checksum);
    e.0
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if buf.len() < MAGIC.len() + 8 || &buf[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let body = &buf[..buf.len() - 8];
    let stored = u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }
    let mut d = Dec {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = d.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let iteration = d.u64()?;
    let rng_seed: [u8; 32] = d.take(32)?.try_into().unwrap();
    let lo = d.u64()? as u128;
    let hi = d.u64()? as u128;
    let rng_word_pos = lo | (hi << 64);
    let config_text = String::from_utf8(d.bytes()?)
        .map_err(|e| CheckpointError::Malformed(format!("config text not utf-8: {e}")))?;
    let n_blocks = d.u32()? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name = String::from_utf8(d.bytes()?)
            .map_err(|e| CheckpointError::Malformed(format!("block name not utf-8: {e}")))?;
        let params = d.f64s()?;
        let adam_m = d.f64s()?;
        let adam_v = d.f64s()?;
        let adam_step = d.u64()?;
        blocks.push((
            name,
            ParamBlock {
                params,
                adam_m,
                adam_v,
                adam_step,
            },
        ));
    }
    let n_hist = d.u32()? as usize;
    let mut teacher_history = Vec::with_capacity(n_hist);
    for _ in 0..n_hist {
        let z = d.f64s()?;
        let ret = d.f64()?;
        teacher_history.push((z, ret));
    }
    let n_seg = d.u32()? as usize;
    let mut teacher_segment = Vec::with_capacity(n_seg);
    for _ in 0..n_seg {
        let observation = d.f64s()?;
        let action = d.f64s()?;
        let log_prob = d.f64()?;
        let reward = d.f64()?;
        let value_estimate = d.f64()?;
        let done = d.take(1)?[0] != 0;
        teacher_segment.push(TrajectoryStep {
            observation,
            action,
            log_prob,
            reward,
            value_estimate,
            done,
        });
    }
    if d.pos != body.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            body.len() - d.pos
        )));
    }
    Ok(Checkpoint {
        iteration,
        rng_seed,
        rng_word_pos,
        config_text,
        blocks,
        teacher_history,
        teacher_segment,
    })
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&encode(ckpt)).map_err(io)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut buf).map_err(io)?;
    decode(&buf)
}
