//! Event-driven, trace-driven memory simulation.
//!
//! A [`MemoryModel`] describes how one cache-line access occupies a bank;
//! [`simulate`] replays a trace against it with per-bank FIFO queues and
//! integrates energy. [`simulate_comet`] wraps it for the COMET organization.

mod comet;
mod stats;
pub mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LineBytes;

pub use comet::{simulate_comet, sweep_bit_density, CometModel, Photonics, SweepInputs, SweepRow};
pub use stats::{PowerSample, SimStats, STATS_SCHEMA_VERSION};
pub use trace::{format_trace, parse_trace, parse_trace_str, Op, TraceRequest};

/// Device and interface timing. Defaults are the COMET values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingParams {
    pub read_ns: f64,
    pub max_write_ns: f64,
    pub erase_ns: f64,
    pub burst_ns: f64,
    pub interface_ns: f64,
    pub eo_tune_ns: f64,
    pub gst_switch_ns: f64,
    pub bus_width_bits: u32,
    pub burst_length: u32,
    pub banks: u32,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            read_ns: 10.0,
            max_write_ns: 170.0,
            erase_ns: 210.0,
            burst_ns: 1.0,
            interface_ns: 105.0,
            eo_tune_ns: 2.0,
            gst_switch_ns: 100.0,
            bus_width_bits: 256,
            burst_length: 4,
            banks: 4,
        }
    }
}

impl TimingParams {
    /// Rescales `burst_length` so one burst carries exactly one `line`.
    pub fn scaled_for_line(mut self, line: LineBytes) -> Self {
        if self.bus_width_bits > 0 {
            self.burst_length = (line.bits() / self.bus_width_bits as u64).max(1) as u32;
        }
        self
    }

    pub fn burst_time_ns(&self) -> f64 {
        self.burst_length as f64 * self.burst_ns
    }

    pub fn validate(&self, line: LineBytes) -> Result<()> {
        for (name, v) in [
            ("read_ns", self.read_ns),
            ("max_write_ns", self.max_write_ns),
            ("erase_ns", self.erase_ns),
            ("burst_ns", self.burst_ns),
            ("interface_ns", self.interface_ns),
            ("eo_tune_ns", self.eo_tune_ns),
            ("gst_switch_ns", self.gst_switch_ns),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("timing.{name} must be finite and >= 0 (got {v})")));
            }
        }
        if self.banks == 0 {
            return Err(Error::Domain("timing.banks must be >= 1".into()));
        }
        let burst_bits = self.bus_width_bits as u64 * self.burst_length as u64;
        if burst_bits != line.bits() {
            return Err(Error::Domain(format!(
                "bus_width_bits x burst_length = {burst_bits} does not match the {}-bit cache line",
                line.bits()
            )));
        }
        Ok(())
    }
}

/// Whether a bank keeps its subarray selected and its row tuned between accesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    #[default]
    Open,
    Closed,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Open => "open",
            Policy::Closed => "closed",
        }
    }
}

/// Data assumed for write requests, which traces do not carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriteData {
    /// Symbols spread over all levels: the line waits for its slowest cell
    /// and the pulse energy is the per-level mean.
    #[default]
    Uniform,
    /// Every cell programmed to this level.
    Fill(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub policy: Policy,
    /// Keep the bank busy through the interface delay.
    pub interface_serial: bool,
    pub write_data: WriteData,
    /// Emit a power timeline with bins of this width.
    pub timeline_bin_ns: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            policy: Policy::Open,
            interface_serial: true,
            write_data: WriteData::Uniform,
            timeline_bin_ns: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BankState {
    pub selected_subarray: Option<u64>,
    pub tuned_row: Option<u64>,
    pub busy_until_ns: f64,
}

/// Where one cache line lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LineAccess {
    pub bank: u32,
    pub subarray: u64,
    /// Row within the bank.
    pub row: u64,
    /// Row within the subarray.
    pub subarray_row: u32,
}

/// Cost of serving one line access.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Service {
    /// Array work before the data leaves the bank.
    pub array_ns: f64,
    pub interface_ns: f64,
    /// Bank work after the data has left, such as a restoring write.
    pub post_ns: f64,
    pub pulse_energy_pj: f64,
    pub decode_errors: u64,
}

pub trait MemoryModel {
    fn name(&self) -> &str;
    fn banks(&self) -> u32;
    fn line_bytes(&self) -> u32;
    fn capacity_bytes(&self) -> u64;
    /// Placement of the `line`-th cache line of the address space.
    fn locate(&self, line: u64) -> Result<LineAccess>;
    /// Cost of an access given the bank state seen under the active policy.
    fn service(&mut self, op: Op, at: &LineAccess, bank: &BankState) -> Result<Service>;
    /// Power drawn for the whole span.
    fn static_power_w(&self) -> f64;
    /// Power drawn by one bank while it is busy.
    fn bank_soa_power_w(&self) -> f64;
    fn bank_eo_power_w(&self) -> f64;
    fn tuning_shift_nm(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival(usize),
    BankFree(u32),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time_ns: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_ns.total_cmp(&other.time_ns).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Default)]
struct Bank {
    state: BankState,
    queue: VecDeque<(usize, LineAccess)>,
    busy: bool,
    busy_ns: f64,
}

struct Interval {
    start_ns: f64,
    end_ns: f64,
    pulse_pj: f64,
}

/// W x ns in pJ.
const PJ_PER_W_NS: f64 = 1e3;

/// Largest timeline accepted, in bins.
const MAX_TIMELINE_BINS: f64 = 1e6;

fn validate_trace(trace: &[TraceRequest], line_bytes: u32, capacity: u64) -> Result<()> {
    let mut prev = 0.0;
    for (i, r) in trace.iter().enumerate() {
        if !(r.time_ns.is_finite() && r.time_ns >= 0.0) {
            return Err(Error::Domain(format!("request {}: invalid arrival time {}", i + 1, r.time_ns)));
        }
        if r.time_ns < prev {
            return Err(Error::TimeRegression {
                line: i + 1,
                time_ns: r.time_ns,
                previous_ns: prev,
            });
        }
        prev = r.time_ns;
        let size = r.size_or(line_bytes);
        if size == 0 {
            return Err(Error::Domain(format!("request {}: zero size", i + 1)));
        }
        let last = r.addr.saturating_add(size as u64 - 1);
        if last >= capacity {
            return Err(Error::Capacity {
                addr: if r.addr >= capacity { r.addr } else { last },
                capacity_bytes: capacity,
            });
        }
    }
    Ok(())
}

/// Replays `trace` against `model`.
///
/// Each request is split into cache lines; a line queues FIFO at its bank
/// and the request completes when its last line has left the interface.
pub fn simulate<M: MemoryModel>(model: &mut M, trace: &[TraceRequest], opts: &SimOptions) -> Result<SimStats> {
    let line_bytes = model.line_bytes();
    validate_trace(trace, line_bytes, model.capacity_bytes())?;
    if let Some(w) = opts.timeline_bin_ns {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!("timeline bin must be > 0 ns (got {w})")));
        }
    }

    let mut stats = SimStats::empty(model.name(), opts.policy);
    stats.tuning_shift_nm = model.tuning_shift_nm();
    if trace.is_empty() {
        return Ok(stats);
    }

    let mut banks: Vec<Bank> = (0..model.banks()).map(|_| Bank::default()).collect();
    let mut pending = vec![0u32; trace.len()];
    let mut done_ns: Vec<f64> = trace.iter().map(|r| r.time_ns).collect();
    let mut intervals: Vec<Interval> = Vec::new();
    let keep_intervals = opts.timeline_bin_ns.is_some();
    let mut end_ns = trace[0].time_ns;

    let mut heap: BinaryHeap<Reverse<Event>> = trace
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Reverse(Event {
                time_ns: r.time_ns,
                seq: i as u64,
                kind: EventKind::Arrival(i),
            })
        })
        .collect();
    let mut seq = trace.len() as u64;

    while let Some(Reverse(ev)) = heap.pop() {
        let now = ev.time_ns;
        let bank_id = match ev.kind {
            EventKind::Arrival(i) => {
                let r = &trace[i];
                let size = r.size_or(line_bytes) as u64;
                let first = r.addr / line_bytes as u64;
                let last = (r.addr + size - 1) / line_bytes as u64;
                match r.op {
                    Op::Read => stats.requests_read += 1,
                    Op::Write => stats.requests_write += 1,
                }
                stats.bits_transferred += size * 8;
                for line in first..=last {
                    let at = model.locate(line)?;
                    let bank = banks
                        .get_mut(at.bank as usize)
                        .ok_or_else(|| Error::Internal(format!("line {line} placed in bank {}", at.bank)))?;
                    bank.queue.push_back((i, at));
                    pending[i] += 1;
                }
                None
            }
            EventKind::BankFree(b) => {
                banks[b as usize].busy = false;
                Some(b)
            }
        };

        let candidates: Vec<u32> = match (ev.kind, bank_id) {
            (_, Some(b)) => vec![b],
            (EventKind::Arrival(_), None) => (0..banks.len() as u32).collect(),
            _ => Vec::new(),
        };
        for b in candidates {
            let bank = &mut banks[b as usize];
            if bank.busy {
                continue;
            }
            let Some((req, at)) = bank.queue.pop_front() else {
                continue;
            };
            let view = match opts.policy {
                Policy::Open => bank.state,
                Policy::Closed => BankState {
                    busy_until_ns: bank.state.busy_until_ns,
                    ..BankState::default()
                },
            };
            let svc = model.service(trace[req].op, &at, &view)?;
            let data_ns = now + svc.array_ns + svc.interface_ns;
            let occupancy = svc.array_ns + svc.post_ns + if opts.interface_serial { svc.interface_ns } else { 0.0 };
            let free_ns = now + occupancy;
            if free_ns < bank.state.busy_until_ns {
                return Err(Error::Internal(format!("bank {b} busy-until went backwards")));
            }
            bank.state = BankState {
                selected_subarray: Some(at.subarray),
                tuned_row: Some(at.row),
                busy_until_ns: free_ns,
            };
            bank.busy = true;
            bank.busy_ns += occupancy;
            stats.energy_write_pulse_pj += svc.pulse_energy_pj;
            stats.decode_error_events += svc.decode_errors;
            if keep_intervals {
                intervals.push(Interval {
                    start_ns: now,
                    end_ns: free_ns,
                    pulse_pj: svc.pulse_energy_pj,
                });
            }
            done_ns[req] = done_ns[req].max(data_ns);
            pending[req] -= 1;
            end_ns = end_ns.max(data_ns).max(free_ns);
            heap.push(Reverse(Event {
                time_ns: free_ns,
                seq,
                kind: EventKind::BankFree(b),
            }));
            seq += 1;
        }
    }

    if pending.iter().any(|p| *p != 0) {
        return Err(Error::Internal("requests left unserved".into()));
    }

    let mut lat: Vec<f64> = trace.iter().zip(&done_ns).map(|(r, d)| d - r.time_ns).collect();
    lat.sort_by(f64::total_cmp);
    stats.latency_avg_ns = lat.iter().sum::<f64>() / lat.len() as f64;
    stats.latency_p50_ns = stats::percentile(&lat, 0.50);
    stats.latency_p95_ns = stats::percentile(&lat, 0.95);
    stats.latency_p99_ns = stats::percentile(&lat, 0.99);
    stats.latency_max_ns = *lat.last().unwrap_or(&0.0);

    let start_ns = trace[0].time_ns;
    stats.span_ns = end_ns - start_ns;
    let busy_ns: f64 = banks.iter().map(|b| b.busy_ns).sum();
    stats.energy_laser_pj = model.static_power_w() * stats.span_ns * PJ_PER_W_NS;
    stats.energy_soa_pj = model.bank_soa_power_w() * busy_ns * PJ_PER_W_NS;
    stats.energy_eo_tuning_pj = model.bank_eo_power_w() * busy_ns * PJ_PER_W_NS;
    stats.energy_total_pj =
        stats.energy_laser_pj + stats.energy_soa_pj + stats.energy_eo_tuning_pj + stats.energy_write_pulse_pj;
    if stats.span_ns > 0.0 {
        stats.bandwidth_bytes_per_s = stats.bits_transferred as f64 / 8.0 / (stats.span_ns * 1e-9);
        stats.avg_power_w = stats.energy_total_pj / (stats.span_ns * PJ_PER_W_NS);
    }
    if stats.bits_transferred > 0 {
        stats.epb_pj_per_bit = stats.energy_total_pj / stats.bits_transferred as f64;
    }
    if let Some(w) = opts.timeline_bin_ns {
        stats.power_timeline = timeline(model, &intervals, start_ns, stats.span_ns, w)?;
    }
    Ok(stats)
}

fn timeline<M: MemoryModel>(model: &M, intervals: &[Interval], start_ns: f64, span_ns: f64, w: f64) -> Result<Vec<PowerSample>> {
    let nbins = (span_ns / w).ceil().max(1.0);
    if nbins > MAX_TIMELINE_BINS {
        return Err(Error::Domain(format!("timeline of {nbins} bins is too large; widen the bin")));
    }
    let n = nbins as usize;
    let mut busy = vec![0.0; n];
    let mut pulse = vec![0.0; n];
    for iv in intervals {
        let (s, e) = (iv.start_ns - start_ns, iv.end_ns - start_ns);
        if e <= s {
            pulse[((s / w) as usize).min(n - 1)] += iv.pulse_pj;
            continue;
        }
        let first = (s / w) as usize;
        let last = ((e / w).ceil() as usize).min(n);
        for k in first..last {
            let lo = s.max(k as f64 * w);
            let hi = e.min((k + 1) as f64 * w);
            if hi > lo {
                busy[k] += hi - lo;
                pulse[k] += iv.pulse_pj * (hi - lo) / (e - s);
            }
        }
    }
    Ok((0..n)
        .map(|k| {
            let width = (span_ns - k as f64 * w).clamp(f64::MIN_POSITIVE, w);
            let duty = busy[k] / width;
            PowerSample {
                start_ns: start_ns + k as f64 * w,
                laser_w: model.static_power_w(),
                soa_w: model.bank_soa_power_w() * duty,
                eo_tuning_w: model.bank_eo_power_w() * duty,
                write_pulse_w: pulse[k] / (width * PJ_PER_W_NS),
            }
        })
        .collect())
}
