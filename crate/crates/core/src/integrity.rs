//! Signal-integrity planning: loss tolerance per bit density, SOA spacing,
//! unamplified row reach and the per-row gain look-up table.
//!
//! A readout from subarray row `r` crosses the tuned MRs of every row between
//! it and the subarray edge. Intra-subarray SOA arrays every `interval` rows
//! restore the signal to the input level; whatever the segment since the
//! last SOA array has lost is made up at the interface from the gain LUT.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::BitsPerCell;
use crate::scalar::{db_to_linear, floor_ratio, linear_to_db, Scalar};

/// Gain settings are stored on this grid.
pub const GAIN_STEP_DB: f64 = 0.1;

/// Largest fractional transmission drop a symbol survives before it reads
/// as its neighbour: 50 % for two levels, 25 % for four, 6 % for sixteen.
pub fn default_tolerable_drop<T: Scalar>(bits: BitsPerCell) -> T {
    T::lit(match bits {
        BitsPerCell::One => 0.50,
        BitsPerCell::Two => 0.25,
        BitsPerCell::Four => 0.06,
    })
}

/// `-10 log10(1 - drop)`; `level_spacing` overrides the default drop for `bits`.
pub fn loss_tolerance_db<T: Scalar>(bits: BitsPerCell, level_spacing: Option<T>) -> Result<T> {
    let drop = level_spacing.unwrap_or_else(|| default_tolerable_drop(bits));
    if !(drop > T::zero() && drop < T::one()) {
        return Err(Error::Domain(format!("fractional drop {drop} outside (0, 1)")));
    }
    Ok(-linear_to_db(T::one() - drop))
}

fn check_row_loss<T: Scalar>(per_row_loss_db: T) -> Result<()> {
    if per_row_loss_db > T::zero() {
        Ok(())
    } else {
        Err(Error::Domain(format!("per-row loss must be > 0 (got {per_row_loss_db})")))
    }
}

/// Rows an SOA of `gain_db` can compensate, `floor(gain / per_row_loss)`.
pub fn soa_row_interval<T: Scalar>(gain_db: T, per_row_loss_db: T) -> Result<u32> {
    check_row_loss(per_row_loss_db)?;
    Ok(floor_ratio(gain_db, per_row_loss_db) as u32)
}

/// Rows a readout crosses, besides its own, before exceeding `tolerance_db`.
pub fn rows_without_amp<T: Scalar>(tolerance_db: T, per_row_loss_db: T) -> Result<u32> {
    check_row_loss(per_row_loss_db)?;
    Ok(floor_ratio(tolerance_db, per_row_loss_db) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainRounding {
    Up,
    Nearest,
}

/// Puts `db` on a `step` grid.
pub fn quantize_gain_db<T: Scalar>(db: T, step: T, rounding: GainRounding) -> T {
    let q = db / step;
    let slack = q.abs().max(T::one()) * T::rounding_slack();
    let n = match rounding {
        GainRounding::Up => (q - slack).ceil(),
        GainRounding::Nearest => q.round(),
    };
    // dividing by the reciprocal keeps decimal steps exact: 33 / 10 is 3.3, 33 * 0.1 is not
    let per_unit = step.recip();
    if per_unit == per_unit.round() {
        n.max(T::zero()) / per_unit
    } else {
        n.max(T::zero()) * step
    }
}

/// Amplifies a measured transmission by `gain_db`.
pub fn restore_transmission<T: Scalar>(measured: T, gain_db: T) -> T {
    measured * db_to_linear(gain_db)
}

/// How a row address picks its LUT slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorRule {
    /// `ceil((row % interval) / divisor)`
    CeilDiv(u32),
    /// `row % interval`
    Identity,
}

impl SelectorRule {
    pub fn slot(self, row_mod: u64) -> u64 {
        match self {
            SelectorRule::CeilDiv(d) => row_mod.div_ceil(d as u64),
            SelectorRule::Identity => row_mod,
        }
    }

    /// Rows sharing one slot.
    pub fn stride(self) -> u32 {
        match self {
            SelectorRule::CeilDiv(d) => d,
            SelectorRule::Identity => 1,
        }
    }
}

impl fmt::Display for SelectorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorRule::CeilDiv(d) => write!(f, "ceil-div-{d}"),
            SelectorRule::Identity => f.write_str("identity"),
        }
    }
}

impl Serialize for SelectorRule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Interface gain per row position inside an SOA segment.
///
/// `entries()` is indexed by selector slot. Slot 0 is the row right after an
/// SOA array and needs no gain; under a ceil-div selector it is a bypass
/// rather than a stored parameter, so [`entry_count`](Self::entry_count)
/// leaves it out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainLut<T = f64> {
    bits: BitsPerCell,
    interval: u32,
    rule: SelectorRule,
    entries: Vec<T>,
    raw_entry_count: u64,
    per_row_loss_db: T,
    tolerance_db: T,
}

/// Builds the gain LUT for a subarray of `subarray_rows` rows with SOA
/// arrays every `interval` rows.
///
/// Rows are grouped so a group spans one row more than the unamplified
/// reach; each slot's gain covers the loss of its group's farthest row,
/// rounded up to the 0.1 dB grid.
pub fn build_gain_lut<T: Scalar>(
    bits: BitsPerCell,
    subarray_rows: u32,
    interval: u32,
    per_row_loss_db: T,
) -> Result<GainLut<T>> {
    if interval == 0 || subarray_rows == 0 {
        return Err(Error::Domain("LUT needs interval >= 1 and at least one row".into()));
    }
    let tolerance_db = loss_tolerance_db(bits, None)?;
    let stride = rows_without_amp(tolerance_db, per_row_loss_db)? + 1;
    let rule = if stride == 1 {
        SelectorRule::Identity
    } else {
        SelectorRule::CeilDiv(stride)
    };
    let slots = rule.slot(interval as u64 - 1) + 1;
    let step = T::lit(GAIN_STEP_DB);
    let entries = (0..slots)
        .map(|s| {
            let rows = T::lit((s * stride as u64) as f64);
            quantize_gain_db(rows * per_row_loss_db, step, GainRounding::Up)
        })
        .collect();
    Ok(GainLut {
        bits,
        interval,
        rule,
        entries,
        raw_entry_count: (subarray_rows as u64).div_ceil(stride as u64),
        per_row_loss_db,
        tolerance_db,
    })
}

impl<T: Scalar> GainLut<T> {
    pub fn bits(&self) -> BitsPerCell {
        self.bits
    }

    /// Row modulus, equal to the SOA interval.
    pub fn interval(&self) -> u32 {
        self.interval
    }

    pub fn rule(&self) -> SelectorRule {
        self.rule
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    /// Stored gain parameters.
    pub fn entry_count(&self) -> usize {
        match self.rule {
            SelectorRule::CeilDiv(_) => self.entries.len() - 1,
            SelectorRule::Identity => self.entries.len(),
        }
    }

    /// Entries a table over the whole subarray would need without folding by
    /// the SOA interval.
    pub fn raw_entry_count(&self) -> u64 {
        self.raw_entry_count
    }

    pub fn tolerance_db(&self) -> T {
        self.tolerance_db
    }

    pub fn per_row_loss_db(&self) -> T {
        self.per_row_loss_db
    }

    /// `index,gain_db` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,gain_db\n");
        for (i, g) in self.entries.iter().enumerate() {
            out.push_str(&format!("{i},{g}\n"));
        }
        out
    }
}

/// Interface gain for `row_id`.
pub fn lut_gain_for_row<T: Scalar>(lut: &GainLut<T>, row_id: u64) -> Result<T> {
    let slot = lut.rule.slot(row_id % lut.interval as u64);
    lut.entries.get(slot as usize).copied().ok_or_else(|| {
        Error::Internal(format!(
            "row {row_id} selects slot {slot} of a {}-slot LUT",
            lut.entries.len()
        ))
    })
}

/// Loss left at the detector for a readout from `row_id`, after the SOA
/// arrays and the LUT gain. Negative means over-amplified.
///
/// Each SOA array restores at most `intra_soa_gain_db` of the segment it
/// closes.
pub fn readout_residual_db<T: Scalar>(lut: &GainLut<T>, row_id: u64, intra_soa_gain_db: T) -> Result<T> {
    let interval = lut.interval as u64;
    let segment_loss = T::lit(interval as f64) * lut.per_row_loss_db;
    let per_soa_deficit = (segment_loss - intra_soa_gain_db).max(T::zero());
    let full_segments = T::lit((row_id / interval) as f64);
    let tail = T::lit((row_id % interval) as f64) * lut.per_row_loss_db;
    Ok(full_segments * per_soa_deficit + tail - lut_gain_for_row(lut, row_id)?)
}

/// Whether a readout from `row_id` stays within the LUT's loss tolerance.
pub fn row_within_tolerance<T: Scalar>(lut: &GainLut<T>, row_id: u64, intra_soa_gain_db: T) -> Result<bool> {
    let r = readout_residual_db(lut, row_id, intra_soa_gain_db)?;
    Ok(r.abs() <= lut.tolerance_db + T::rounding_slack())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn tolerances_match_level_contrast() {
        let t1: f64 = loss_tolerance_db(BitsPerCell::One, None).unwrap();
        let t2: f64 = loss_tolerance_db(BitsPerCell::Two, None).unwrap();
        let t4: f64 = loss_tolerance_db(BitsPerCell::Four, None).unwrap();
        assert!((t1 - 3.01).abs() < 0.005, "{t1}");
        assert!((t2 - 1.2).abs() <= 0.05, "{t2}");
        assert!((t4 - 0.26).abs() <= 0.01, "{t4}");
        for (t, drop) in [(t1, 0.5), (t2, 0.25), (t4, 0.06)] {
            assert!(((1.0 - 10f64.powf(-t / 10.0)) - drop).abs() < 1e-3);
        }
        assert!(loss_tolerance_db(BitsPerCell::Four, Some(1.0_f64)).is_err());
        assert!(loss_tolerance_db(BitsPerCell::Four, Some(0.0_f64)).is_err());
    }

    #[test]
    fn soa_interval_examples() {
        assert_eq!(soa_row_interval(15.2, 0.33).unwrap(), 46);
        assert_eq!(soa_row_interval(0.33, 0.33).unwrap(), 1);
        assert_eq!(soa_row_interval(20.0, 0.33).unwrap(), 60);
        assert_eq!(soa_row_interval(15.2_f32, 0.33).unwrap(), 46);
        assert!(soa_row_interval(15.2, 0.0).is_err());
    }

    #[test]
    fn reach_examples() {
        assert_eq!(rows_without_amp(3.01, 0.33).unwrap(), 9);
        assert_eq!(rows_without_amp(0.26, 0.33).unwrap(), 0);
        assert_eq!(rows_without_amp(1.2, 0.33).unwrap(), 3);
        assert!(rows_without_amp(1.2, -0.33).is_err());
    }

    #[test]
    fn quantization() {
        assert_relative_eq!(quantize_gain_db(0.33, 0.1, GainRounding::Up), 0.4, epsilon = 1e-12);
        assert_relative_eq!(quantize_gain_db(3.3, 0.1, GainRounding::Up), 3.3, epsilon = 1e-12);
        assert_relative_eq!(quantize_gain_db(0.33 * 10.0, 0.1, GainRounding::Up), 3.3, epsilon = 1e-12);
        assert_relative_eq!(quantize_gain_db(0.33, 0.1, GainRounding::Nearest), 0.3, epsilon = 1e-12);
        assert_eq!(quantize_gain_db(0.0, 0.1, GainRounding::Up), 0.0);
    }

    #[test]
    fn lut_sizes() {
        let l1 = build_gain_lut(BitsPerCell::One, 512, 46, 0.33).unwrap();
        assert_eq!(l1.rule(), SelectorRule::CeilDiv(10));
        assert_eq!(l1.raw_entry_count(), 52);
        assert_eq!(l1.entry_count(), 5);
        let l2 = build_gain_lut(BitsPerCell::Two, 512, 46, 0.33).unwrap();
        assert_eq!(l2.rule(), SelectorRule::CeilDiv(4));
        assert_eq!(l2.entry_count(), 12);
        let l4 = build_gain_lut(BitsPerCell::Four, 512, 46, 0.33).unwrap();
        assert_eq!(l4.rule(), SelectorRule::Identity);
        assert_eq!(l4.entry_count(), 46);
    }

    #[test]
    fn lut_lookup_examples() {
        let l4 = build_gain_lut(BitsPerCell::Four, 512, 46, 0.33).unwrap();
        assert_eq!(lut_gain_for_row(&l4, 0).unwrap(), 0.0);
        assert_eq!(lut_gain_for_row(&l4, 47).unwrap(), l4.entries()[1]);
        assert_relative_eq!(l4.entries()[1], 0.4, epsilon = 1e-12);
        let l1 = build_gain_lut(BitsPerCell::One, 512, 46, 0.33).unwrap();
        assert_eq!(lut_gain_for_row(&l1, 45).unwrap(), l1.entries()[5]);
        assert_relative_eq!(l1.entries()[5], 16.5, epsilon = 1e-12);
    }

    #[test]
    fn mis_built_lut_is_internal_error() {
        let mut l4 = build_gain_lut(BitsPerCell::Four, 512, 46, 0.33_f64).unwrap();
        l4.entries.truncate(3);
        assert!(matches!(lut_gain_for_row(&l4, 10), Err(Error::Internal(_))));
    }

    #[test]
    fn end_to_end_integrity_for_all_rows() {
        for bits in BitsPerCell::ALL {
            let lut = build_gain_lut(bits, 512, 46, 0.33_f64).unwrap();
            assert!(lut.entries().iter().all(|g| *g >= 0.0));
            for row in 0..512 {
                assert!(row_within_tolerance(&lut, row, 15.2).unwrap(), "b={bits} row={row}");
            }
        }
    }

    #[test]
    fn weak_soas_accumulate_deficit() {
        let lut = build_gain_lut(BitsPerCell::Four, 512, 46, 0.33_f64).unwrap();
        // 46 rows lose 15.18 dB; a 14 dB SOA leaves 1.18 dB per segment
        assert!(!row_within_tolerance(&lut, 46 * 3, 14.0).unwrap());
    }

    #[test]
    fn csv_dump() {
        let lut = build_gain_lut(BitsPerCell::One, 512, 46, 0.33_f64).unwrap();
        let csv = lut.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,gain_db");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0,0");
    }
}
