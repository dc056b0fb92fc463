//! Electro-optic crossbar baseline (COSMOS with corrected levels).
//!
//! Cells sit on shared row and column waveguides, so a column reading is
//! the product of every cell transmission on it and the target row has to
//! be recovered by subtraction. Writing a row heats its neighbours and
//! nudges their crystalline fraction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::engine::{simulate, BankState, LineAccess, MemoryModel, Op, Service, SimOptions, SimStats, TraceRequest};
use crate::error::{Error, Result};
use crate::geometry::LineBytes;
use crate::pcm_cell::{LADDER_LEVELS, LADDER_STEP, LADDER_TOP};
use crate::photonics::{laser_power_for_channels_w, LossParams, PathDescriptor, PathElement, PowerParams, PowerStack};
use crate::scalar::db_to_linear;

/// Matching tolerance for reconstructed transmissions.
const READ_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarTiming {
    pub write_ns: f64,
    pub erase_ns: f64,
    pub read_ns: f64,
    pub burst_ns: f64,
    pub interface_ns: f64,
    pub bus_width_bits: u32,
    pub burst_length: u32,
    pub gst_switch_ns: f64,
}

impl Default for CrossbarTiming {
    fn default() -> Self {
        Self {
            write_ns: 1600.0,
            erase_ns: 250.0,
            read_ns: 25.0,
            burst_ns: 1.0,
            interface_ns: 105.0,
            bus_width_bits: 128,
            burst_length: 8,
            gst_switch_ns: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarConfig {
    pub banks: u32,
    /// `N_r`
    pub rows: u32,
    /// `N_c`
    pub cols: u32,
    pub bits_per_cell: u8,
    pub subarray_rows: u32,
    pub subarray_cols: u32,
    /// Nominal transmission per symbol, strictly decreasing.
    pub levels: Vec<f64>,
    pub crosstalk_db: f64,
    pub write_pulse_energy_pj: f64,
    pub pulse_power_mw: f64,
    /// Crystalline-fraction shift of each neighbour per row write.
    pub disturbance_fraction: f64,
    /// Sign of the shift: `true` pushes neighbours toward crystalline.
    pub disturbance_toward_crystalline: bool,
    pub timing: CrossbarTiming,
    pub soa_arrays_per_subarray: u32,
    /// Loss of one cell at the darkest level.
    pub worst_cell_loss_db: f64,
    pub die_length_cm: f64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self {
            banks: 16,
            rows: 16384,
            cols: 16384,
            bits_per_cell: 2,
            subarray_rows: 32,
            subarray_cols: 32,
            levels: vec![0.99, 0.90, 0.81, 0.72],
            crosstalk_db: -18.0,
            write_pulse_energy_pj: 750.0,
            pulse_power_mw: 5.0,
            disturbance_fraction: 0.08,
            disturbance_toward_crystalline: true,
            timing: CrossbarTiming::default(),
            soa_arrays_per_subarray: 6,
            worst_cell_loss_db: 1.4,
            die_length_cm: 2.0,
        }
    }
}

impl CrossbarConfig {
    pub fn line(&self) -> Result<LineBytes> {
        let bits = self.timing.bus_width_bits as u64 * self.timing.burst_length as u64;
        LineBytes::try_from((bits / 8) as u32).and_then(|l| {
            if l.bits() == bits {
                Ok(l)
            } else {
                Err(Error::Domain(format!("burst of {bits} bits is not a cache line")))
            }
        })
    }

    pub fn level_set(&self) -> Result<LevelSet> {
        LevelSet::new(self.levels.clone())
    }

    pub fn capacity_bits(&self) -> u64 {
        self.banks as u64 * self.rows as u64 * self.cols as u64 * self.bits_per_cell as u64
    }

    /// `S_r x S_c`
    pub fn subarray_grid(&self) -> (u32, u32) {
        (self.rows / self.subarray_rows, self.cols / self.subarray_cols)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("banks", self.banks),
            ("rows", self.rows),
            ("cols", self.cols),
            ("subarray_rows", self.subarray_rows),
            ("subarray_cols", self.subarray_cols),
        ] {
            if v == 0 || !v.is_power_of_two() {
                return Err(Error::Geometry(format!("crossbar {name} must be a power of two >= 1 (got {v})")));
            }
        }
        if self.subarray_rows > self.rows || self.subarray_cols > self.cols {
            return Err(Error::Geometry("crossbar subarray larger than the bank".into()));
        }
        if !matches!(self.bits_per_cell, 1 | 2 | 4) {
            return Err(Error::Geometry(format!("bits_per_cell must be 1, 2 or 4 (got {})", self.bits_per_cell)));
        }
        let set = self.level_set()?;
        if set.len() != 1 << self.bits_per_cell {
            return Err(Error::Domain(format!(
                "{} levels given for {} bits per cell",
                set.len(),
                self.bits_per_cell
            )));
        }
        if !(self.crosstalk_db.is_finite() && self.crosstalk_db.abs() > 0.0) {
            return Err(Error::Domain("crosstalk_db must be finite and non-zero".into()));
        }
        for (name, v) in [
            ("write_pulse_energy_pj", self.write_pulse_energy_pj),
            ("pulse_power_mw", self.pulse_power_mw),
            ("worst_cell_loss_db", self.worst_cell_loss_db),
            ("die_length_cm", self.die_length_cm),
            ("disturbance_fraction", self.disturbance_fraction),
            ("timing.write_ns", self.timing.write_ns),
            ("timing.erase_ns", self.timing.erase_ns),
            ("timing.read_ns", self.timing.read_ns),
            ("timing.burst_ns", self.timing.burst_ns),
            ("timing.interface_ns", self.timing.interface_ns),
            ("timing.gst_switch_ns", self.timing.gst_switch_ns),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and >= 0 (got {v})")));
            }
        }
        let line = self.line()?;
        let row_bits = self.cols as u64 * self.bits_per_cell as u64;
        if line.bits() > row_bits {
            return Err(Error::Geometry(format!("{}-bit line exceeds the {row_bits}-bit row", line.bits())));
        }
        Ok(())
    }
}

/// Energy coupled into a neighbour by a write pulse.
pub fn crosstalk_energy_pj(write_energy_pj: f64, crosstalk_db: f64) -> f64 {
    write_energy_pj * db_to_linear(crosstalk_db)
}

/// Nominal transmissions of a crossbar cell, one per symbol.
///
/// Readout is one-sided: a cell reads as the deepest level `k` whose nominal
/// transmission it does not exceed, so it only drops a symbol once it has
/// lost a full level step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSet {
    transmissions: Vec<f64>,
}

impl LevelSet {
    pub fn new(transmissions: Vec<f64>) -> Result<Self> {
        if transmissions.len() < 2 {
            return Err(Error::Domain("a level set needs at least two levels".into()));
        }
        if transmissions.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Domain("level transmissions must lie in (0, 1]".into()));
        }
        if transmissions.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Domain("level transmissions must strictly decrease".into()));
        }
        Ok(Self { transmissions })
    }

    /// The four levels with 9 % spacing.
    pub fn cosmos() -> Self {
        Self {
            transmissions: vec![0.99, 0.90, 0.81, 0.72],
        }
    }

    /// Sixteen levels with 6 % spacing as originally assumed for the crossbar.
    pub fn legacy_16() -> Self {
        Self {
            transmissions: (0..LADDER_LEVELS).map(|k| LADDER_TOP - LADDER_STEP * k as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.transmissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmissions.is_empty()
    }

    pub fn transmissions(&self) -> &[f64] {
        &self.transmissions
    }

    pub fn transmission(&self, symbol: u32) -> Result<f64> {
        self.transmissions
            .get(symbol as usize)
            .copied()
            .ok_or_else(|| Error::Domain(format!("symbol {symbol} outside [0, {})", self.len())))
    }

    /// Crystalline fraction giving the nominal transmission of `symbol`.
    pub fn fraction(&self, symbol: u32) -> Result<f64> {
        Ok(1.0 - self.transmission(symbol)?)
    }

    pub fn min_spacing(&self) -> f64 {
        self.transmissions.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
    }

    pub fn decode(&self, t: f64) -> u32 {
        self.transmissions[1..].iter().take_while(|&&level| t <= level + READ_EPS).count() as u32
    }

    /// Level whose nominal transmission is closest to `t`.
    pub fn nearest(&self, t: f64) -> u32 {
        let mut best = 0;
        for (k, level) in self.transmissions.iter().enumerate() {
            if (t - level).abs() < (t - self.transmissions[best]).abs() {
                best = k;
            }
        }
        best as u32
    }
}

/// Model for cells sharing waveguides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellModel {
    /// Neighbours are disturbed by writes.
    #[default]
    Crossbar,
    /// Optically isolated cells, as in COMET.
    Isolated,
}

/// Crystalline fraction of every cell of a small simulated subarray.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    fractions: Vec<f64>,
    model: CellModel,
}

impl CrossbarArray {
    /// An array with every cell fully amorphous.
    pub fn new(rows: usize, cols: usize, model: CellModel) -> Self {
        Self {
            rows,
            cols,
            fractions: vec![0.0; rows * cols],
            model,
        }
    }

    /// Programs row-major `symbols` at their nominal fractions.
    pub fn from_symbols(rows: usize, cols: usize, symbols: &[u32], levels: &LevelSet, model: CellModel) -> Result<Self> {
        if symbols.len() != rows * cols {
            return Err(Error::Domain(format!(
                "{} symbols do not fill a {rows} x {cols} array",
                symbols.len()
            )));
        }
        let fractions = symbols.iter().map(|&s| levels.fraction(s)).collect::<Result<_>>()?;
        Ok(Self {
            rows,
            cols,
            fractions,
            model,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn model(&self) -> CellModel {
        self.model
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.rows {
            Err(Error::Bounds {
                field: "row",
                value: row as u64,
                limit: self.rows as u64,
            })
        } else {
            Ok(())
        }
    }

    pub fn fraction(&self, row: usize, col: usize) -> f64 {
        self.fractions[row * self.cols + col]
    }

    pub fn transmission(&self, row: usize, col: usize) -> f64 {
        1.0 - self.fraction(row, col)
    }

    /// Programs one row to nominal levels without touching its neighbours.
    pub fn program_row(&mut self, row: usize, symbols: &[u32], levels: &LevelSet) -> Result<()> {
        self.check_row(row)?;
        if symbols.len() != self.cols {
            return Err(Error::Domain(format!("{} symbols for a {}-column row", symbols.len(), self.cols)));
        }
        for (c, &s) in symbols.iter().enumerate() {
            self.fractions[row * self.cols + c] = levels.fraction(s)?;
        }
        Ok(())
    }

    /// Per-cell readout without crossbar interference.
    pub fn direct_read(&self, row: usize, levels: &LevelSet) -> Result<Vec<u32>> {
        self.check_row(row)?;
        Ok((0..self.cols).map(|c| levels.decode(self.transmission(row, c))).collect())
    }

    /// Direct readout of the whole array, row-major.
    pub fn symbols(&self, levels: &LevelSet) -> Vec<u32> {
        self.fractions.iter().map(|f| levels.decode(1.0 - f)).collect()
    }

    fn column_products(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.transmission(r, c)).product())
            .collect()
    }
}

/// Shifts rows `row - 1` and `row + 1` by the configured disturbance.
pub fn apply_write_disturbance(arr: &mut CrossbarArray, row: usize, cfg: &CrossbarConfig) -> Result<()> {
    arr.check_row(row)?;
    if arr.model == CellModel::Isolated {
        return Ok(());
    }
    let shift = if cfg.disturbance_toward_crystalline {
        cfg.disturbance_fraction
    } else {
        -cfg.disturbance_fraction
    };
    let neighbours = [row.checked_sub(1), Some(row + 1).filter(|r| *r < arr.rows)];
    for r in neighbours.into_iter().flatten() {
        for f in &mut arr.fractions[r * arr.cols..(r + 1) * arr.cols] {
            *f = (*f + shift).clamp(0.0, 1.0);
        }
    }
    Ok(())
}

/// Rewrites a row to `symbols` and disturbs its neighbours.
pub fn write_row(arr: &mut CrossbarArray, row: usize, symbols: &[u32], levels: &LevelSet, cfg: &CrossbarConfig) -> Result<()> {
    arr.program_row(row, symbols, levels)?;
    apply_write_disturbance(arr, row, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtractiveRead {
    pub values: Vec<u32>,
    /// Cells whose reconstructed transmission sits nearer another level
    /// than the one it decodes to.
    pub ambiguous: usize,
}

/// Reads every column, resets the target row, reads again and divides.
///
/// The target row is left reset; the caller is expected to rewrite it.
pub fn subtractive_read(arr: &mut CrossbarArray, row: usize, levels: &LevelSet) -> Result<SubtractiveRead> {
    arr.check_row(row)?;
    let before = arr.column_products();
    for f in &mut arr.fractions[row * arr.cols..(row + 1) * arr.cols] {
        *f = 0.0;
    }
    let after = arr.column_products();
    let mut values = Vec::with_capacity(arr.cols);
    let mut ambiguous = 0;
    for (b, a) in before.iter().zip(&after) {
        let t = if *a > 0.0 { b / a } else { 0.0 };
        let v = levels.decode(t);
        if levels.nearest(t) != v {
            ambiguous += 1;
        }
        values.push(v);
    }
    Ok(SubtractiveRead { values, ambiguous })
}

/// Symbols, out of one cell per level, that read differently after `k`
/// successive disturbances.
pub fn flips_after(levels: &LevelSet, k: u32, cfg: &CrossbarConfig) -> usize {
    (0..levels.len() as u32)
        .filter(|&s| {
            let mut arr = CrossbarArray::from_symbols(2, 1, &[0, s], levels, CellModel::Crossbar).expect("symbol in range");
            for _ in 0..k {
                apply_write_disturbance(&mut arr, 0, cfg).expect("row 0 exists");
            }
            levels.decode(arr.transmission(1, 0)) != s
        })
        .count()
}

/// Fewest successive disturbances that flip some symbol, if any do.
pub fn disturbances_to_flip(levels: &LevelSet, cfg: &CrossbarConfig) -> Option<u32> {
    if cfg.disturbance_fraction <= 0.0 {
        return None;
    }
    let limit = (1.0 / cfg.disturbance_fraction).ceil() as u32 + 1;
    (1..=limit).find(|&k| flips_after(levels, k, cfg) > 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorruptionStep {
    pub step: usize,
    /// Rows rewritten in this step, as `row % 4`.
    pub written_rows_mod4: usize,
    pub corrupted_symbols: usize,
}

/// Repeatedly rewrites every other row in place and counts symbols that no
/// longer read back as written.
///
/// Odd steps rewrite rows `0 mod 4`, even steps rows `2 mod 4`, so each odd
/// row gains one disturbance per step.
pub fn corruption_sequence(arr: &mut CrossbarArray, levels: &LevelSet, cfg: &CrossbarConfig, steps: usize) -> Result<Vec<CorruptionStep>> {
    corruption_sequence_observed(arr, levels, cfg, steps, |_, _| {})
}

/// [`corruption_sequence`], handing the readout after each step to `observe`.
pub fn corruption_sequence_observed<F>(
    arr: &mut CrossbarArray,
    levels: &LevelSet,
    cfg: &CrossbarConfig,
    steps: usize,
    mut observe: F,
) -> Result<Vec<CorruptionStep>>
where
    F: FnMut(&CorruptionStep, &[u32]),
{
    let original = arr.symbols(levels);
    let cols = arr.cols;
    let mut out = Vec::with_capacity(steps);
    for step in 1..=steps {
        let phase = if step % 2 == 1 { 0 } else { 2 };
        for row in (phase..arr.rows).step_by(4) {
            let symbols = original[row * cols..(row + 1) * cols].to_vec();
            write_row(arr, row, &symbols, levels, cfg)?;
        }
        let now = arr.symbols(levels);
        let corrupted = now.iter().zip(&original).filter(|(a, b)| a != b).count();
        let record = CorruptionStep {
            step,
            written_rows_mod4: phase,
            corrupted_symbols: corrupted,
        };
        observe(&record, &now);
        out.push(record);
    }
    Ok(out)
}

/// Worst-case crossbar path: coupler, subarray switch, waveguide, passive
/// MR drop, one full row and one full column of darkest cells with the SOA
/// arrays, passive MR drop, coupler.
pub fn cosmos_path(cfg: &CrossbarConfig) -> Result<PathDescriptor> {
    let mut e = vec![
        PathElement::Coupler,
        PathElement::GstSwitch,
        PathElement::Waveguide {
            length_cm: cfg.die_length_cm,
        },
        PathElement::PassiveMrDrop,
        PathElement::CellTransit {
            count: cfg.subarray_rows + cfg.subarray_cols,
            loss_db: cfg.worst_cell_loss_db,
        },
    ];
    e.extend((0..cfg.soa_arrays_per_subarray).map(|_| PathElement::IntraSoa { gain_db: None }));
    e.extend([PathElement::PassiveMrDrop, PathElement::Coupler]);
    PathDescriptor::new(e)
}

/// Subarrays a single line access spans.
fn subarrays_per_line(cfg: &CrossbarConfig, line: LineBytes) -> u64 {
    let cells = line.bits() / cfg.bits_per_cell as u64;
    cells.div_ceil(cfg.subarray_cols as u64)
}

/// SOA draw of one busy bank. An SOA driving the 5 mW pulse draws its
/// 0 dBm figure scaled by the output power.
fn bank_soa_power_w(cfg: &CrossbarConfig, line: LineBytes, power: &PowerParams) -> f64 {
    let soas = subarrays_per_line(cfg, line) * cfg.soa_arrays_per_subarray as u64 * cfg.subarray_cols as u64;
    soas as f64 * power.intra_soa_power_mw * cfg.pulse_power_mw * 1e-3
}

/// Power breakdown with every bank accessing.
pub fn cosmos_power_stack(cfg: &CrossbarConfig, loss: &LossParams, power: &PowerParams) -> Result<PowerStack> {
    cfg.validate()?;
    loss.validate()?;
    power.validate()?;
    let path = cosmos_path(cfg)?;
    let laser = laser_power_for_channels_w(cfg.cols as u64, &path, loss, power, cfg.pulse_power_mw * 1e-3)?;
    let soa = bank_soa_power_w(cfg, cfg.line()?, power) * cfg.banks as f64;
    Ok(PowerStack::new(laser, soa, 0.0, 0.0))
}

/// The crossbar behind the [`MemoryModel`] interface.
///
/// Lines interleave over banks first, then walk down the rows so that
/// consecutive lines of a bank stay in one subarray.
#[derive(Debug, Clone)]
pub struct CosmosModel {
    cfg: CrossbarConfig,
    line: LineBytes,
    lines_per_row: u64,
    laser_w: f64,
    bank_soa_w: f64,
    line_pulse_pj: f64,
    flip_after: Option<u32>,
    disturbed: HashMap<(u32, u64, u32), u32>,
}

impl CosmosModel {
    pub fn new(cfg: &CrossbarConfig, loss: &LossParams, power: &PowerParams) -> Result<Self> {
        let stack = cosmos_power_stack(cfg, loss, power)?;
        let line = cfg.line()?;
        let cells = line.bits() / cfg.bits_per_cell as u64;
        Ok(Self {
            cfg: cfg.clone(),
            line,
            lines_per_row: cfg.cols as u64 * cfg.bits_per_cell as u64 / line.bits(),
            laser_w: stack.laser_w,
            bank_soa_w: stack.soa_w / cfg.banks as f64,
            // one reset pulse and one program pulse per cell
            line_pulse_pj: 2.0 * cells as f64 * cfg.write_pulse_energy_pj,
            flip_after: disturbances_to_flip(&cfg.level_set()?, cfg),
            disturbed: HashMap::new(),
        })
    }

    fn rewrite(&mut self, at: &LineAccess) {
        let key = (at.bank, at.subarray, at.subarray_row);
        self.disturbed.remove(&key);
        let last = self.cfg.subarray_rows - 1;
        for r in [at.subarray_row.checked_sub(1), Some(at.subarray_row + 1).filter(|r| *r <= last)]
            .into_iter()
            .flatten()
        {
            *self.disturbed.entry((at.bank, at.subarray, r)).or_insert(0) += 1;
        }
    }
}

impl MemoryModel for CosmosModel {
    fn name(&self) -> &str {
        "cosmos"
    }

    fn banks(&self) -> u32 {
        self.cfg.banks
    }

    fn line_bytes(&self) -> u32 {
        self.line.bytes()
    }

    fn capacity_bytes(&self) -> u64 {
        self.cfg.capacity_bits() / 8
    }

    fn locate(&self, line: u64) -> Result<LineAccess> {
        let banks = self.cfg.banks as u64;
        let rows = self.cfg.rows as u64;
        let rest = line / banks;
        let row = rest % rows;
        let slot = rest / rows;
        if slot >= self.lines_per_row {
            return Err(Error::Capacity {
                addr: line * self.line.bytes() as u64,
                capacity_bytes: self.capacity_bytes(),
            });
        }
        let row_groups = rows / self.cfg.subarray_rows as u64;
        Ok(LineAccess {
            bank: (line % banks) as u32,
            subarray: slot * row_groups + row / self.cfg.subarray_rows as u64,
            row,
            subarray_row: (row % self.cfg.subarray_rows as u64) as u32,
        })
    }

    fn service(&mut self, op: Op, at: &LineAccess, bank: &BankState) -> Result<Service> {
        let t = self.cfg.timing;
        let switch = if bank.selected_subarray == Some(at.subarray) {
            0.0
        } else {
            t.gst_switch_ns
        };
        let svc = match op {
            Op::Read => {
                let corrupted = match (self.flip_after, self.disturbed.get(&(at.bank, at.subarray, at.subarray_row))) {
                    (Some(k), Some(&n)) => n >= k,
                    _ => false,
                };
                Service {
                    array_ns: switch + t.read_ns + t.erase_ns + t.read_ns + t.burst_length as f64 * t.burst_ns,
                    interface_ns: t.interface_ns,
                    post_ns: t.write_ns,
                    pulse_energy_pj: self.line_pulse_pj,
                    decode_errors: u64::from(corrupted),
                }
            }
            Op::Write => Service {
                array_ns: switch + t.erase_ns + t.write_ns,
                interface_ns: t.interface_ns,
                post_ns: 0.0,
                pulse_energy_pj: self.line_pulse_pj,
                decode_errors: 0,
            },
        };
        self.rewrite(at);
        Ok(svc)
    }

    fn static_power_w(&self) -> f64 {
        self.laser_w
    }

    fn bank_soa_power_w(&self) -> f64 {
        self.bank_soa_w
    }

    fn bank_eo_power_w(&self) -> f64 {
        0.0
    }
}

/// Replays `trace` on the crossbar. Every read is subtractive and followed
/// by a full rewrite of the line.
pub fn simulate_cosmos(
    trace: &[TraceRequest],
    cfg: &CrossbarConfig,
    loss: &LossParams,
    power: &PowerParams,
    opts: &SimOptions,
) -> Result<SimStats> {
    let mut model = CosmosModel::new(cfg, loss, power)?;
    simulate(&mut model, trace, opts)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::photonics::loss_chain_db;

    fn cfg() -> CrossbarConfig {
        CrossbarConfig::default()
    }

    #[test]
    fn crosstalk_energy_examples() {
        assert_relative_eq!(crosstalk_energy_pj(750.0, -18.0), 750.0 * 10f64.powf(-1.8), epsilon = 1e-12);
        assert!((crosstalk_energy_pj(750.0, -18.0) - 11.89).abs() < 0.005);
        assert_eq!(crosstalk_energy_pj(750.0, 0.0), 750.0);
        assert_eq!(crosstalk_energy_pj(0.0, -18.0), 0.0);
    }

    #[test]
    fn config_defaults_validate() {
        let c = cfg();
        c.validate().unwrap();
        assert_eq!(c.capacity_bits(), 1 << 33);
        assert_eq!(c.subarray_grid(), (512, 512));
        let mut bad = cfg();
        bad.levels = vec![0.9, 0.99, 0.8, 0.7];
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.crosstalk_db = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.levels.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn disturbance_examples() {
        let c = cfg();
        let mut arr = CrossbarArray::new(3, 1, CellModel::Crossbar);
        arr.fractions = vec![0.5, 0.0, 0.95];
        apply_write_disturbance(&mut arr, 1, &c).unwrap();
        assert_relative_eq!(arr.fraction(0, 0), 0.58, epsilon = 1e-12);
        assert_eq!(arr.fraction(1, 0), 0.0);
        assert_eq!(arr.fraction(2, 0), 1.0);
        let mut iso = CrossbarArray::new(3, 1, CellModel::Isolated);
        iso.fractions = vec![0.5, 0.0, 0.95];
        apply_write_disturbance(&mut iso, 1, &c).unwrap();
        assert_eq!(iso.fractions, vec![0.5, 0.0, 0.95]);
        assert!(apply_write_disturbance(&mut arr, 3, &c).is_err());
    }

    #[test]
    fn edge_rows_have_one_neighbour() {
        let c = cfg();
        let mut arr = CrossbarArray::new(3, 2, CellModel::Crossbar);
        apply_write_disturbance(&mut arr, 0, &c).unwrap();
        assert_eq!(arr.fractions, vec![0.0, 0.0, 0.08, 0.08, 0.0, 0.0]);
        apply_write_disturbance(&mut arr, 2, &c).unwrap();
        assert_relative_eq!(arr.fraction(1, 1), 0.16, epsilon = 1e-12);
    }

    #[test]
    fn sign_flag_reverses_shift() {
        let mut c = cfg();
        c.disturbance_toward_crystalline = false;
        let mut arr = CrossbarArray::new(2, 1, CellModel::Crossbar);
        arr.fractions = vec![0.0, 0.5];
        apply_write_disturbance(&mut arr, 0, &c).unwrap();
        assert_relative_eq!(arr.fraction(1, 0), 0.42, epsilon = 1e-12);
    }

    #[test]
    fn nine_percent_levels_survive_one_disturbance() {
        let c = cfg();
        let set = LevelSet::cosmos();
        assert_eq!(flips_after(&set, 1, &c), 0);
        assert!(flips_after(&set, 2, &c) > 0);
        assert_eq!(disturbances_to_flip(&set, &c), Some(2));
        assert_eq!(disturbances_to_flip(&LevelSet::legacy_16(), &c), Some(1));
    }

    #[test]
    fn decoder_is_one_sided() {
        let set = LevelSet::cosmos();
        assert_eq!(set.decode(1.0), 0);
        assert_eq!(set.decode(0.91), 0);
        assert_eq!(set.decode(0.90), 1);
        assert_eq!(set.decode(0.5), 3);
        assert_eq!(set.nearest(0.91), 1);
    }

    #[test]
    fn subtractive_read_recovers_clean_rows() {
        let set = LevelSet::cosmos();
        let symbols: Vec<u32> = (0..16).map(|i| (i * 7 % 4) as u32).collect();
        let mut arr = CrossbarArray::from_symbols(4, 4, &symbols, &set, CellModel::Crossbar).unwrap();
        for row in 0..4 {
            let direct = arr.direct_read(row, &set).unwrap();
            let mut copy = arr.clone();
            let r = subtractive_read(&mut copy, row, &set).unwrap();
            assert_eq!(r.values, direct);
            assert_eq!(r.ambiguous, 0);
            assert!((0..4).all(|c| copy.fraction(row, c) == 0.0));
        }
        let mut zero = CrossbarArray::new(4, 4, CellModel::Crossbar);
        assert_eq!(subtractive_read(&mut zero, 2, &set).unwrap().values, vec![0; 4]);
        arr.program_row(0, &[3, 3, 3, 3], &set).unwrap();
        assert_eq!(arr.direct_read(0, &set).unwrap(), vec![3; 4]);
    }

    #[test]
    fn disturbed_row_reads_ambiguous() {
        let c = cfg();
        let set = LevelSet::cosmos();
        let mut arr = CrossbarArray::from_symbols(2, 2, &[0, 0, 0, 1], &set, CellModel::Crossbar).unwrap();
        apply_write_disturbance(&mut arr, 0, &c).unwrap();
        let r = subtractive_read(&mut arr, 1, &set).unwrap();
        assert_eq!(r.values, vec![0, 1]);
        assert_eq!(r.ambiguous, 2);
    }

    #[test]
    fn corruption_grows_with_steps_and_never_hits_isolated_cells() {
        let c = cfg();
        let set = LevelSet::legacy_16();
        let symbols: Vec<u32> = (0..32 * 32).map(|i| (i * 5 % 16) as u32).collect();
        let mut arr = CrossbarArray::from_symbols(32, 32, &symbols, &set, CellModel::Crossbar).unwrap();
        let steps = corruption_sequence(&mut arr, &set, &c, 4).unwrap();
        assert!(steps.windows(2).all(|w| w[0].corrupted_symbols <= w[1].corrupted_symbols));
        assert!(steps[3].corrupted_symbols > 0);
        let mut iso = CrossbarArray::from_symbols(32, 32, &symbols, &set, CellModel::Isolated).unwrap();
        let steps = corruption_sequence(&mut iso, &set, &c, 4).unwrap();
        assert!(steps.iter().all(|s| s.corrupted_symbols == 0));
    }

    #[test]
    fn path_and_power() {
        let c = cfg();
        let loss = LossParams::default();
        let p = cosmos_path(&c).unwrap();
        // 1 + 0.2 + 0.2 + 0.5 + 64 * 1.4 - 6 * 15.2 + 0.5 + 1
        assert_relative_eq!(loss_chain_db(&p, &loss), 1.8, epsilon = 1e-9);
        let s = cosmos_power_stack(&c, &loss, &PowerParams::default()).unwrap();
        assert_relative_eq!(s.laser_w, 16384.0 * 5e-3 * 10f64.powf(0.18) / 0.2, epsilon = 1e-6);
        // 16 subarrays x 6 arrays x 32 SOAs x 7 mW, in all 16 banks
        assert_relative_eq!(s.soa_w, 16.0 * 16.0 * 6.0 * 32.0 * 7e-3, epsilon = 1e-9);
        assert_eq!(s.eo_tuning_w, 0.0);
    }

    #[test]
    fn read_sequence_latency() {
        let c = cfg();
        let loss = LossParams::default();
        let power = PowerParams::default();
        let one = simulate_cosmos(&[TraceRequest::new(0.0, Op::Read, 0)], &c, &loss, &power, &SimOptions::default()).unwrap();
        assert_eq!(one.latency_max_ns, 100.0 + 25.0 + 250.0 + 25.0 + 8.0 + 105.0);
        assert!(one.latency_max_ns >= 25.0 + 25.0 + 250.0 + 105.0);
        // the bank stays busy for the rewrite
        assert_eq!(one.span_ns, 513.0 + 1600.0);
        let w = simulate_cosmos(&[TraceRequest::new(0.0, Op::Write, 0)], &c, &loss, &power, &SimOptions::default()).unwrap();
        assert_eq!(w.latency_max_ns, 100.0 + 250.0 + 1600.0 + 105.0);
    }

    #[test]
    fn locate_walks_rows_within_bank() {
        let m = CosmosModel::new(&cfg(), &LossParams::default(), &PowerParams::default()).unwrap();
        let a = m.locate(0).unwrap();
        let b = m.locate(16).unwrap();
        assert_eq!((a.bank, b.bank, a.subarray, b.subarray, b.row), (0, 0, 0, 0, 1));
        let c = m.locate(16 * 32).unwrap();
        assert_ne!(c.subarray, a.subarray);
        let last = m.capacity_bytes() / 128 - 1;
        assert!(m.locate(last).is_ok());
        assert!(m.locate(last + 1).is_err());
    }

    #[test]
    fn repeated_writes_to_a_neighbour_corrupt_reads() {
        let c = cfg();
        let loss = LossParams::default();
        let power = PowerParams::default();
        // line 16 is row 1 of bank 0; lines 0 and 32 are its neighbours
        let trace = [
            TraceRequest::new(0.0, Op::Write, 0),
            TraceRequest::new(0.0, Op::Write, 32 * 128),
            TraceRequest::new(0.0, Op::Read, 16 * 128),
        ];
        let s = simulate_cosmos(&trace, &c, &loss, &power, &SimOptions::default()).unwrap();
        assert_eq!(s.decode_error_events, 1);
        let s = simulate_cosmos(&trace[1..], &c, &loss, &power, &SimOptions::default()).unwrap();
        assert_eq!(s.decode_error_events, 0);
    }
}
