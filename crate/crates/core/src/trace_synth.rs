//! Deterministic synthetic traces.
//!
//! The random pattern draws line indices from SplitMix64 (golden-gamma
//! increment `0x9e3779b97f4a7c15`, finalizer multipliers `0xbf58476d1ce4e5b9`
//! and `0x94d049bb133111eb`) seeded with the given value, and reduces each
//! 64-bit draw `x` to `[0, n)` as `(x * n) >> 64`. Reads are spread
//! evenly: request `i` is a read when `floor((i + 1) r / n) > floor(i r / n)`
//! for `r = floor(fraction * n + 0.5)` reads out of `n`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::engine::{Op, TraceRequest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Pattern {
    /// Consecutive lines, wrapping at the footprint.
    Stream,
    /// Every `lines`-th line, wrapping at the footprint.
    Stride { lines: u64 },
    /// Uniform over the footprint.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub pattern: Pattern,
    pub requests: u64,
    pub read_fraction: f64,
    pub inter_arrival_ns: f64,
    pub footprint_bytes: u64,
    #[serde(default = "default_line")]
    pub line_bytes: u32,
}

fn default_line() -> u32 {
    128
}

impl TraceSpec {
    /// All-read stream of `requests` lines arriving every `inter_arrival_ns`.
    pub fn stream(requests: u64, inter_arrival_ns: f64, footprint_bytes: u64) -> Self {
        Self {
            pattern: Pattern::Stream,
            requests,
            read_fraction: 1.0,
            inter_arrival_ns,
            footprint_bytes,
            line_bytes: default_line(),
        }
    }

    pub fn reads(&self) -> u64 {
        (self.read_fraction * self.requests as f64 + 0.5).floor() as u64
    }

    pub fn validate(&self, capacity_bytes: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return Err(Error::Domain(format!("read_fraction {} outside [0, 1]", self.read_fraction)));
        }
        if !(self.inter_arrival_ns.is_finite() && self.inter_arrival_ns >= 0.0) {
            return Err(Error::Domain(format!("inter_arrival_ns {} must be >= 0", self.inter_arrival_ns)));
        }
        if self.line_bytes == 0 || self.footprint_bytes < self.line_bytes as u64 {
            return Err(Error::Domain(format!(
                "footprint of {} bytes holds no {}-byte line",
                self.footprint_bytes, self.line_bytes
            )));
        }
        if self.footprint_bytes > capacity_bytes {
            return Err(Error::Capacity {
                addr: self.footprint_bytes,
                capacity_bytes,
            });
        }
        if let Pattern::Stride { lines: 0 } = self.pattern {
            return Err(Error::Domain("stride must be >= 1 line".into()));
        }
        Ok(())
    }
}

/// Reduces a 64-bit draw to `[0, n)`.
fn bounded(x: u64, n: u64) -> u64 {
    ((x as u128 * n as u128) >> 64) as u64
}

/// Builds the trace described by `spec` for a memory of `capacity_bytes`.
pub fn generate(spec: &TraceSpec, capacity_bytes: u64) -> Result<Vec<TraceRequest>> {
    spec.validate(capacity_bytes)?;
    let n = spec.requests;
    let lines = spec.footprint_bytes / spec.line_bytes as u64;
    let reads = spec.reads();
    let mut rng = match spec.pattern {
        Pattern::Random { seed } => Some(SplitMix64::seed_from_u64(seed)),
        _ => None,
    };
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        let line = match spec.pattern {
            Pattern::Stream => i % lines,
            Pattern::Stride { lines: k } => ((i as u128 * k as u128) % lines as u128) as u64,
            Pattern::Random { .. } => bounded(rng.as_mut().expect("seeded").next_u64(), lines),
        };
        let is_read = (i as u128 + 1) * reads as u128 / n as u128 > i as u128 * reads as u128 / n as u128;
        out.push(TraceRequest::new(
            i as f64 * spec.inter_arrival_ns,
            if is_read { Op::Read } else { Op::Write },
            line * spec.line_bytes as u64,
        ));
    }
    Ok(out)
}
