use serde::{Deserialize, Serialize};

use super::Policy;

/// Bumped whenever a field of [`SimStats`] changes meaning or name.
pub const STATS_SCHEMA_VERSION: u32 = 1;

/// Average component power over one timeline bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub start_ns: f64,
    pub laser_w: f64,
    pub soa_w: f64,
    pub eo_tuning_w: f64,
    pub write_pulse_w: f64,
}

/// Outcome of one simulation. Units are part of every field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub schema_version: u32,
    pub architecture: String,
    pub policy: Policy,
    pub requests_read: u64,
    pub requests_write: u64,
    pub bits_transferred: u64,
    pub span_ns: f64,
    pub latency_avg_ns: f64,
    pub latency_p50_ns: f64,
    pub latency_p95_ns: f64,
    pub latency_p99_ns: f64,
    pub latency_max_ns: f64,
    pub bandwidth_bytes_per_s: f64,
    pub energy_laser_pj: f64,
    pub energy_soa_pj: f64,
    pub energy_eo_tuning_pj: f64,
    pub energy_write_pulse_pj: f64,
    pub energy_total_pj: f64,
    pub epb_pj_per_bit: f64,
    pub avg_power_w: f64,
    pub decode_error_events: u64,
    pub tuning_shift_nm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub power_timeline: Vec<PowerSample>,
}

macro_rules! csv_fields {
    ($s:ident; $($f:ident),* $(,)?) => {
        (
            [$(stringify!($f)),*],
            [$(format!("{}", $s.$f)),*],
        )
    };
}

impl SimStats {
    pub fn requests(&self) -> u64 {
        self.requests_read + self.requests_write
    }

    fn csv_pairs(&self) -> (Vec<&'static str>, Vec<String>) {
        let policy = self.policy.as_str();
        let (names, values) = csv_fields!(self;
            schema_version, architecture, requests_read, requests_write, bits_transferred,
            span_ns, latency_avg_ns, latency_p50_ns, latency_p95_ns, latency_p99_ns, latency_max_ns,
            bandwidth_bytes_per_s, energy_laser_pj, energy_soa_pj, energy_eo_tuning_pj,
            energy_write_pulse_pj, energy_total_pj, epb_pj_per_bit, avg_power_w,
            decode_error_events, tuning_shift_nm,
        );
        let mut n = names.to_vec();
        let mut v = values.to_vec();
        n.insert(2, "policy");
        v.insert(2, policy.to_string());
        (n, v)
    }

    pub fn csv_header() -> String {
        Self::empty("", Policy::Open).csv_pairs().0.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.csv_pairs().1.join(",")
    }

    pub(crate) fn empty(architecture: &str, policy: Policy) -> Self {
        Self {
            schema_version: STATS_SCHEMA_VERSION,
            architecture: architecture.to_string(),
            policy,
            requests_read: 0,
            requests_write: 0,
            bits_transferred: 0,
            span_ns: 0.0,
            latency_avg_ns: 0.0,
            latency_p50_ns: 0.0,
            latency_p95_ns: 0.0,
            latency_p99_ns: 0.0,
            latency_max_ns: 0.0,
            bandwidth_bytes_per_s: 0.0,
            energy_laser_pj: 0.0,
            energy_soa_pj: 0.0,
            energy_eo_tuning_pj: 0.0,
            energy_write_pulse_pj: 0.0,
            energy_total_pj: 0.0,
            epb_pj_per_bit: 0.0,
            avg_power_w: 0.0,
            decode_error_events: 0,
            tuning_shift_nm: 0.0,
            power_timeline: Vec::new(),
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub(crate) fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
