//! GST multi-level cell model.
//!
//! Partially crystallized cells are described by Lorentz-Lorenz mixing of the
//! amorphous and crystalline permittivities. Stored symbols live on a ladder
//! of 16 equally spaced transmission levels, `T_i = 0.95 - 0.06 i`; cells with
//! fewer bits use an equally spaced subset of that ladder.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BitsPerCell;
use crate::scalar::Scalar;

/// Transmission of ladder level 0 (fully amorphous).
pub const LADDER_TOP: f64 = 0.95;
/// Transmission spacing between adjacent ladder levels.
pub const LADDER_STEP: f64 = 0.06;
pub const LADDER_LEVELS: u32 = 16;

/// Program latency of the level next to the reset state.
pub const MIN_PROGRAM_LATENCY_NS: f64 = 10.0;
/// Max write time; no level may take longer to program.
pub const MAX_PROGRAM_LATENCY_NS: f64 = 170.0;
/// Default reset (erase) pulse duration.
pub const RESET_LATENCY_NS: f64 = 210.0;

pub const DEFAULT_GUARD_BAND: f64 = 0.01;
/// Readouts up to this far above 1.0 are accepted as amplifier overshoot.
pub const MAX_OVERSHOOT: f64 = 0.05;

pub const C_BAND_START_NM: f64 = 1530.0;
pub const C_BAND_END_NM: f64 = 1565.0;
const LOSS_AT_START_DB_PER_MM: f64 = 0.073;
const LOSS_AT_END_DB_PER_MM: f64 = 0.067;

/// Complex refractive index `n + i kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexIndex<T = f64> {
    pub n: T,
    pub kappa: T,
}

impl<T: Scalar> ComplexIndex<T> {
    pub fn new(n: T, kappa: T) -> Result<Self> {
        if !(n > T::zero()) || !(kappa >= T::zero()) {
            return Err(Error::Domain(format!("complex index requires n > 0 and kappa >= 0 (got {n}, {kappa})")));
        }
        Ok(Self { n, kappa })
    }

    /// `eps = (n + i kappa)^2`
    pub fn permittivity(&self) -> Complex<T> {
        let idx = Complex::new(self.n, self.kappa);
        idx * idx
    }

    /// Principal square root of the permittivity, with `kappa >= 0`.
    pub fn from_permittivity(eps: Complex<T>) -> Self {
        let mut root = eps.sqrt();
        if root.im < T::zero() {
            root = -root;
        }
        Self { n: root.re, kappa: root.im }
    }
}

/// Amorphous and crystalline optical constants of the phase-change material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material<T = f64> {
    pub amorphous: ComplexIndex<T>,
    pub crystalline: ComplexIndex<T>,
}

impl<T: Scalar> Material<T> {
    /// Placeholder constants. They only exercise the mixing code path; supply
    /// measured C-band values for any physical study.
    pub fn placeholder() -> Self {
        Self {
            amorphous: ComplexIndex { n: T::lit(2.0), kappa: T::lit(0.0) },
            crystalline: ComplexIndex { n: T::lit(3.0), kappa: T::lit(0.0) },
        }
    }

    pub fn effective_index(&self, crystalline_fraction: T) -> Result<ComplexIndex<T>> {
        let eps = effective_permittivity(
            crystalline_fraction,
            self.amorphous.permittivity(),
            self.crystalline.permittivity(),
        )?;
        Ok(ComplexIndex::from_permittivity(eps))
    }
}

fn clausius_mossotti<T: Scalar>(eps: Complex<T>) -> Complex<T> {
    let one = Complex::new(T::one(), T::zero());
    let two = Complex::new(T::lit(2.0), T::zero());
    (eps - one) / (eps + two)
}

/// Lorentz-Lorenz mixing:
/// `(e - 1)/(e + 2) = f (e_c - 1)/(e_c + 2) + (1 - f)(e_a - 1)/(e_a + 2)`.
pub fn effective_permittivity<T: Scalar>(f_c: T, eps_a: Complex<T>, eps_c: Complex<T>) -> Result<Complex<T>> {
    if !(f_c >= T::zero() && f_c <= T::one()) {
        return Err(Error::Domain(format!("crystalline fraction {f_c} outside [0, 1]")));
    }
    if !(eps_a.re > T::zero()) || !(eps_c.re > T::zero()) {
        return Err(Error::Domain("permittivities need a positive real part".into()));
    }
    if f_c == T::zero() {
        return Ok(eps_a);
    }
    if f_c == T::one() {
        return Ok(eps_c);
    }
    let mix = clausius_mossotti(eps_c) * f_c + clausius_mossotti(eps_a) * (T::one() - f_c);
    let one = Complex::new(T::one(), T::zero());
    let two = Complex::new(T::lit(2.0), T::zero());
    Ok((one + mix * two) / (one - mix))
}

/// State the cell is returned to before each program pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetMode {
    /// Deposited crystalline; programming amorphizes.
    #[default]
    Crystalline,
    /// Deposited amorphous; programming crystallizes.
    Amorphous,
}

impl ResetMode {
    pub fn reset_energy_pj(self) -> f64 {
        match self {
            ResetMode::Crystalline => 880.0,
            ResetMode::Amorphous => 280.0,
        }
    }

    /// Optical power delivered to the cell while programming.
    pub fn cell_power_mw(self) -> f64 {
        match self {
            ResetMode::Crystalline => 1.0,
            ResetMode::Amorphous => 5.0,
        }
    }

    /// Ladder index of the reset state.
    fn reset_ladder_index(self) -> u32 {
        match self {
            ResetMode::Crystalline => LADDER_LEVELS - 1,
            ResetMode::Amorphous => 0,
        }
    }
}

/// One row of a level-override document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelOverride<T = f64> {
    pub level: u32,
    pub transmission: Option<T>,
    pub latency_ns: T,
    pub energy_pj: T,
}

/// Override document: `{"levels": [{"level": 0, "transmission": 0.95, "latency_ns": 10, "energy_pj": 10}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelOverrides<T = f64> {
    pub levels: Vec<LevelOverride<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRow<T = f64> {
    /// Stored symbol value.
    pub level: u32,
    /// Position on the 16-level ladder.
    pub ladder_index: u32,
    pub transmission: T,
    pub crystalline_fraction: T,
    pub program_latency_ns: T,
    pub program_energy_pj: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTable<T = f64> {
    bits: BitsPerCell,
    rows: Vec<LevelRow<T>>,
    reset_mode: ResetMode,
    reset_energy_pj: T,
    reset_latency_ns: T,
    guard_band: T,
}

fn ladder_index(level: u32, bits: BitsPerCell) -> u32 {
    level * (LADDER_LEVELS - 1) / (bits.levels() - 1)
}

/// Builds the `2^b`-level table, applying per-level overrides when given.
pub fn build_level_table<T: Scalar>(
    bits: BitsPerCell,
    mode: ResetMode,
    overrides: Option<&LevelOverrides<T>>,
) -> Result<LevelTable<T>> {
    let n = bits.levels();
    let span = T::lit((LADDER_LEVELS - 1) as f64);
    let mut rows: Vec<LevelRow<T>> = (0..n)
        .map(|level| {
            let ladder = ladder_index(level, bits);
            let distance = ladder.abs_diff(mode.reset_ladder_index());
            let latency = T::lit(MIN_PROGRAM_LATENCY_NS)
                + T::lit(MAX_PROGRAM_LATENCY_NS - MIN_PROGRAM_LATENCY_NS) * T::lit(distance as f64) / span;
            LevelRow {
                level,
                ladder_index: ladder,
                transmission: T::lit(LADDER_TOP - LADDER_STEP * ladder as f64),
                crystalline_fraction: T::lit(ladder as f64) / span,
                program_latency_ns: latency,
                program_energy_pj: T::lit(mode.cell_power_mw()) * latency,
            }
        })
        .collect();

    if let Some(ov) = overrides {
        apply_overrides(&mut rows, ov)?;
    }

    Ok(LevelTable {
        bits,
        rows,
        reset_mode: mode,
        reset_energy_pj: T::lit(mode.reset_energy_pj()),
        reset_latency_ns: T::lit(RESET_LATENCY_NS),
        guard_band: T::lit(DEFAULT_GUARD_BAND),
    })
}

fn apply_overrides<T: Scalar>(rows: &mut [LevelRow<T>], ov: &LevelOverrides<T>) -> Result<()> {
    if ov.levels.len() != rows.len() {
        return Err(Error::Schema(format!(
            "level override table has {} rows, expected {}",
            ov.levels.len(),
            rows.len()
        )));
    }
    let top = T::one() + T::lit(MAX_OVERSHOOT);
    for (i, o) in ov.levels.iter().enumerate() {
        if o.level as usize != i {
            return Err(Error::Schema(format!("override row {i} names level {}, expected {i}", o.level)));
        }
        if !(o.latency_ns >= T::zero()) || !(o.energy_pj >= T::zero()) {
            return Err(Error::Schema(format!("override row {i}: latency and energy must be >= 0")));
        }
        let row = &mut rows[i];
        row.program_latency_ns = o.latency_ns;
        row.program_energy_pj = o.energy_pj;
        if let Some(t) = o.transmission {
            if !(t >= T::zero() && t < top) {
                return Err(Error::Schema(format!("override row {i}: transmission {t} outside [0, 1]")));
            }
            row.transmission = t;
        }
    }
    if rows.windows(2).any(|w| !(w[0].transmission > w[1].transmission)) {
        return Err(Error::Schema("override transmissions must strictly decrease with level".into()));
    }
    Ok(())
}

impl<T: Scalar> LevelTable<T> {
    pub fn bits(&self) -> BitsPerCell {
        self.bits
    }

    pub fn rows(&self) -> &[LevelRow<T>] {
        &self.rows
    }

    pub fn row(&self, level: u32) -> Result<&LevelRow<T>> {
        self.rows.get(level as usize).ok_or_else(|| {
            Error::Domain(format!("level {level} outside [0, {})", self.rows.len()))
        })
    }

    pub fn reset_mode(&self) -> ResetMode {
        self.reset_mode
    }

    pub fn reset_energy_pj(&self) -> T {
        self.reset_energy_pj
    }

    pub fn reset_latency_ns(&self) -> T {
        self.reset_latency_ns
    }

    pub fn guard_band(&self) -> T {
        self.guard_band
    }

    pub fn with_guard_band(mut self, guard_band: T) -> Result<Self> {
        if !(guard_band >= T::zero()) {
            return Err(Error::Domain(format!("guard band {guard_band} must be >= 0")));
        }
        self.guard_band = guard_band;
        Ok(self)
    }

    pub fn with_reset_latency_ns(mut self, latency: T) -> Result<Self> {
        if !(latency >= T::zero()) {
            return Err(Error::Domain(format!("reset latency {latency} must be >= 0")));
        }
        self.reset_latency_ns = latency;
        Ok(self)
    }

    pub fn max_program_latency_ns(&self) -> T {
        self.rows.iter().map(|r| r.program_latency_ns).fold(T::zero(), T::max)
    }

    /// Level with the longest program pulse.
    pub fn slowest_level(&self) -> u32 {
        let max = self.max_program_latency_ns();
        self.rows.iter().find(|r| r.program_latency_ns == max).map_or(0, |r| r.level)
    }

    /// Program energy averaged over all symbols, for uniformly distributed data.
    pub fn mean_program_energy_pj(&self) -> T {
        let sum = self.rows.iter().fold(T::zero(), |acc, r| acc + r.program_energy_pj);
        sum / T::lit(self.rows.len() as f64)
    }

    /// Smallest gap between adjacent nominal transmissions.
    pub fn min_spacing(&self) -> T {
        self.rows
            .windows(2)
            .map(|w| w[0].transmission - w[1].transmission)
            .fold(T::infinity(), T::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellState<T = f64> {
    pub level: u32,
    pub crystalline_fraction: T,
    pub transmission: T,
}

pub fn encode_symbol<T: Scalar>(value: u32, table: &LevelTable<T>) -> Result<CellState<T>> {
    let row = table.row(value)?;
    Ok(CellState {
        level: row.level,
        crystalline_fraction: row.crystalline_fraction,
        transmission: row.transmission,
    })
}

/// Nearest-level readout with decision boundaries at level midpoints.
///
/// Readouts closer than the table's guard band to a boundary are rejected as
/// ambiguous, carrying both candidate symbols.
pub fn decode_transmission<T: Scalar>(measured: T, table: &LevelTable<T>) -> Result<u32> {
    if !(measured >= T::zero() && measured <= T::one() + T::lit(MAX_OVERSHOOT)) {
        return Err(Error::Domain(format!("measured transmission {measured} outside [0, 1]")));
    }
    let slack = T::rounding_slack();
    let mut value = 0;
    for (j, w) in table.rows.windows(2).enumerate() {
        let boundary = (w[0].transmission + w[1].transmission) / T::lit(2.0);
        if (measured - boundary).abs() + slack < table.guard_band {
            return Err(Error::Decode {
                measured: measured.to_f64_lossy(),
                lower: j as u32,
                upper: j as u32 + 1,
            });
        }
        if measured < boundary {
            value = j as u32 + 1;
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionCost<T = f64> {
    pub energy_pj: T,
    pub latency_ns: T,
}

/// Blind write: every transition pays the reset pulse then the target's program pulse.
pub fn transition_cost<T: Scalar>(from: u32, to: u32, table: &LevelTable<T>) -> Result<TransitionCost<T>> {
    table.row(from)?;
    let target = table.row(to)?;
    Ok(TransitionCost {
        energy_pj: table.reset_energy_pj + target.program_energy_pj,
        latency_ns: table.reset_latency_ns + target.program_latency_ns,
    })
}

/// GST cell propagation loss across the C-band, linear in wavelength.
pub fn wavelength_loss<T: Scalar>(lambda_nm: T) -> Result<T> {
    let start = T::lit(C_BAND_START_NM);
    let end = T::lit(C_BAND_END_NM);
    if !(lambda_nm >= start && lambda_nm <= end) {
        return Err(Error::Domain(format!("wavelength {lambda_nm} nm outside the C-band [1530, 1565]")));
    }
    let t = (lambda_nm - start) / (end - start);
    let a = T::lit(LOSS_AT_START_DB_PER_MM);
    let b = T::lit(LOSS_AT_END_DB_PER_MM);
    Ok(a + (b - a) * t)
}
