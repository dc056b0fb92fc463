use serde::{Deserialize, Serialize};

use super::{simulate, BankState, LineAccess, MemoryModel, Op, Service, SimOptions, SimStats, TimingParams, TraceRequest, WriteData};
use crate::error::{Error, Result};
use crate::geometry::{map_address, AddressLayout, BitsPerCell, GeometrySpec, LineBytes, MemoryGeometry};
use crate::integrity::{build_gain_lut, row_within_tolerance, soa_row_interval, GainLut};
use crate::pcm_cell::{build_level_table, transition_cost, LevelTable, ResetMode};
use crate::photonics::{
    active_soa_power_w, comet_worst_case_path, eo_tuning_power_w, laser_power_w, power_stack, LossParams, PathDescriptor,
    PowerParams, PowerStack,
};

/// Optical parameters of a COMET configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Photonics {
    pub loss: LossParams,
    pub power: PowerParams,
    /// Worst-case laser-to-detector path.
    pub path: PathDescriptor,
}

impl Photonics {
    /// Default parameters over the worst-case path of `g`.
    pub fn comet_default(g: &MemoryGeometry, die_length_cm: f64) -> Result<Self> {
        Self::with_params(g, LossParams::default(), PowerParams::default(), die_length_cm)
    }

    pub fn with_params(g: &MemoryGeometry, loss: LossParams, power: PowerParams, die_length_cm: f64) -> Result<Self> {
        let interval = soa_interval(&loss)?;
        let path = comet_worst_case_path(g, die_length_cm, interval)?;
        Ok(Self { loss, power, path })
    }

    /// Rows between intra-subarray SOA arrays; `None` when tuned MRs are lossless.
    pub fn soa_interval(&self) -> Result<Option<u32>> {
        soa_interval(&self.loss)
    }
}

fn soa_interval(loss: &LossParams) -> Result<Option<u32>> {
    if loss.eo_mr_through_db > 0.0 {
        Ok(Some(soa_row_interval(loss.intra_soa_gain_db, loss.eo_mr_through_db)?))
    } else {
        Ok(None)
    }
}

fn line_of(timing: &TimingParams) -> Result<LineBytes> {
    let bits = timing.bus_width_bits as u64 * timing.burst_length as u64;
    if !bits.is_multiple_of(8) || bits / 8 > u32::MAX as u64 {
        return Err(Error::Domain(format!("burst of {bits} bits is not a cache line")));
    }
    LineBytes::try_from((bits / 8) as u32)
}

/// COMET behind the [`MemoryModel`] interface.
#[derive(Debug, Clone)]
pub struct CometModel {
    geometry: MemoryGeometry,
    layout: AddressLayout,
    timing: TimingParams,
    row_ok: Vec<bool>,
    laser_w: f64,
    bank_soa_w: f64,
    bank_eo_w: f64,
    tuning_shift_nm: f64,
    program_ns: f64,
    line_write_pj: f64,
}

impl CometModel {
    pub fn new(
        geometry: &MemoryGeometry,
        timing: &TimingParams,
        levels: &LevelTable,
        photonics: &Photonics,
        lut: &GainLut,
        write_data: WriteData,
    ) -> Result<Self> {
        let line = line_of(timing)?;
        timing.validate(line)?;
        photonics.loss.validate()?;
        photonics.power.validate()?;
        let g = *geometry;
        if timing.banks != g.banks() {
            return Err(Error::Domain(format!(
                "timing.banks = {} but the geometry has {} banks",
                timing.banks,
                g.banks()
            )));
        }
        if levels.bits() != g.bits_per_cell() || lut.bits() != g.bits_per_cell() {
            return Err(Error::Domain(format!(
                "level table ({}b) and LUT ({}b) must match the {}b geometry",
                levels.bits(),
                lut.bits(),
                g.bits_per_cell()
            )));
        }
        let interval = photonics.soa_interval()?;
        if let Some(i) = interval {
            if i != lut.interval() {
                return Err(Error::Model(format!(
                    "LUT folds rows by {} but SOA arrays sit every {i} rows",
                    lut.interval()
                )));
            }
        }

        let program_ns = match write_data {
            WriteData::Uniform => levels.max_program_latency_ns(),
            WriteData::Fill(v) => levels.row(v)?.program_latency_ns,
        };
        if program_ns > timing.max_write_ns {
            return Err(Error::Model(format!(
                "program pulse of {program_ns} ns exceeds max_write_ns = {}",
                timing.max_write_ns
            )));
        }
        let cell_pj = match write_data {
            WriteData::Uniform => levels.reset_energy_pj() + levels.mean_program_energy_pj(),
            WriteData::Fill(v) => transition_cost(v, v, levels)?.energy_pj,
        };
        let layout = AddressLayout::new(&g, line)?;

        let intra = photonics.loss.intra_soa_gain_db;
        let row_ok = (0..g.subarray_rows() as u64)
            .map(|r| row_within_tolerance(lut, r, intra))
            .collect::<Result<Vec<_>>>()?;

        let banks = g.banks() as f64;
        let bank_soa_w = match interval {
            Some(i) => active_soa_power_w(&g, i, &photonics.power)? / banks,
            None => 0.0,
        };
        Ok(Self {
            geometry: g,
            layout,
            timing: *timing,
            row_ok,
            laser_w: laser_power_w(&g, &photonics.path, &photonics.loss, &photonics.power, levels.reset_mode())?,
            bank_soa_w,
            bank_eo_w: eo_tuning_power_w(&g, &photonics.power) / banks,
            tuning_shift_nm: photonics.power.tuning_shift_nm,
            program_ns,
            line_write_pj: layout.cells_per_line() as f64 * cell_pj,
        })
    }

    pub fn geometry(&self) -> &MemoryGeometry {
        &self.geometry
    }

    /// Rows whose readout residual exceeds the loss tolerance.
    pub fn rows_out_of_tolerance(&self) -> usize {
        self.row_ok.iter().filter(|ok| !**ok).count()
    }
}

impl MemoryModel for CometModel {
    fn name(&self) -> &str {
        "comet"
    }

    fn banks(&self) -> u32 {
        self.geometry.banks() * self.geometry.channels()
    }

    fn line_bytes(&self) -> u32 {
        self.layout.line().bytes()
    }

    fn capacity_bytes(&self) -> u64 {
        self.layout.capacity_bytes()
    }

    fn locate(&self, line: u64) -> Result<LineAccess> {
        let phys = self.layout.decompose(line * self.line_bytes() as u64)?;
        let m = map_address(&phys, &self.geometry)?;
        Ok(LineAccess {
            bank: m.channel * self.geometry.banks() + m.bank,
            subarray: m.subarray,
            row: phys.row,
            subarray_row: m.subarray_row,
        })
    }

    fn service(&mut self, op: Op, at: &LineAccess, bank: &BankState) -> Result<Service> {
        let t = &self.timing;
        let switch = if bank.selected_subarray == Some(at.subarray) {
            0.0
        } else {
            t.gst_switch_ns
        };
        let tune = if switch == 0.0 && bank.tuned_row == Some(at.row) {
            0.0
        } else {
            t.eo_tune_ns
        };
        Ok(match op {
            Op::Read => Service {
                array_ns: switch + tune + t.read_ns + t.burst_time_ns(),
                interface_ns: t.interface_ns,
                post_ns: 0.0,
                pulse_energy_pj: 0.0,
                decode_errors: u64::from(!self.row_ok[at.subarray_row as usize]),
            },
            Op::Write => Service {
                array_ns: switch + tune + t.erase_ns + self.program_ns,
                interface_ns: t.interface_ns,
                post_ns: 0.0,
                pulse_energy_pj: self.line_write_pj,
                decode_errors: 0,
            },
        })
    }

    fn static_power_w(&self) -> f64 {
        self.laser_w
    }

    fn bank_soa_power_w(&self) -> f64 {
        self.bank_soa_w
    }

    fn bank_eo_power_w(&self) -> f64 {
        self.bank_eo_w
    }

    fn tuning_shift_nm(&self) -> f64 {
        self.tuning_shift_nm
    }
}

/// Replays `trace` on a COMET memory. The cache line is `bus_width_bits x burst_length`.
pub fn simulate_comet(
    trace: &[TraceRequest],
    geometry: &MemoryGeometry,
    timing: &TimingParams,
    levels: &LevelTable,
    photonics: &Photonics,
    lut: &GainLut,
    opts: &SimOptions,
) -> Result<SimStats> {
    let mut model = CometModel::new(geometry, timing, levels, photonics, lut, opts.write_data)?;
    simulate(&mut model, trace, opts)
}

/// Parameters shared by every row of a bit-density sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepInputs {
    pub timing: TimingParams,
    pub loss: LossParams,
    pub power: PowerParams,
    pub reset_mode: ResetMode,
    pub die_length_cm: f64,
    pub options: SimOptions,
}

impl Default for SweepInputs {
    fn default() -> Self {
        Self {
            timing: TimingParams::default(),
            loss: LossParams::default(),
            power: PowerParams::default(),
            reset_mode: ResetMode::default(),
            die_length_cm: 2.0,
            options: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub bits_per_cell: u32,
    pub geometry: String,
    pub subarray_cols: u32,
    pub capacity_bits: u64,
    pub row_bits: u64,
    pub lut_entries: usize,
    pub power: PowerStack,
    pub stats: SimStats,
}

fn sweep_row(trace: &[TraceRequest], base: GeometrySpec, bits: BitsPerCell, p: &SweepInputs) -> Result<SweepRow> {
    let g = base.at_bit_density(bits)?.validate()?;
    let levels = build_level_table(bits, p.reset_mode, None)?;
    let photonics = Photonics::with_params(&g, p.loss, p.power, p.die_length_cm)?;
    let interval = photonics.soa_interval()?.unwrap_or(g.subarray_rows());
    let lut = build_gain_lut(bits, g.subarray_rows(), interval, p.loss.eo_mr_through_db)?;
    let power = power_stack(&g, &photonics.path, &p.loss, &p.power, p.reset_mode)?;
    let stats = simulate_comet(trace, &g, &p.timing, &levels, &photonics, &lut, &p.options)?;
    Ok(SweepRow {
        bits_per_cell: bits.bits(),
        geometry: g.to_string(),
        subarray_cols: g.subarray_cols(),
        capacity_bits: g.capacity_bits(),
        row_bits: g.row_bits(),
        lut_entries: lut.entry_count(),
        power,
        stats,
    })
}

/// Runs `trace` on the `b = 1, 2, 4` members of the family of `base`, one
/// thread per member. Rows come back in ascending `b`.
pub fn sweep_bit_density(trace: &[TraceRequest], base: GeometrySpec, params: &SweepInputs) -> Result<Vec<SweepRow>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = BitsPerCell::ALL
            .iter()
            .map(|&b| s.spawn(move || sweep_row(trace, base, b, params)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| Error::Internal("sweep worker panicked".into()))?)
            .collect()
    })
}
