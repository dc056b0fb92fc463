//! Optical loss chains and the laser / SOA / EO-tuning power model.
//!
//! Losses are in dB and positive; amplifier gain enters a chain as negative
//! loss. Power parameters carry their unit in the field name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MemoryGeometry;
use crate::integrity::soa_row_interval;
use crate::pcm_cell::ResetMode;
use crate::scalar::{db_to_linear, Scalar};

fn check_non_negative<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be >= 0 (got {v})")))
    }
}

/// Per-element optical losses. Defaults are the COMET device values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams<T = f64> {
    pub coupling_db: T,
    pub mr_drop_db: T,
    pub mr_through_db: T,
    pub eo_mr_drop_db: T,
    pub eo_mr_through_db: T,
    pub propagation_db_per_cm: T,
    pub bend_db_per_90: T,
    pub gst_switch_db: T,
    /// Gain of the interface SOAs that apply the per-row LUT gain.
    pub interface_soa_gain_db: T,
    /// Gain of the SOA arrays inside a subarray. Kept apart from the
    /// interface SOA gain, which is rated higher.
    pub intra_soa_gain_db: T,
    /// A chain whose net gain exceeds this is rejected as saturating.
    pub max_net_gain_db: T,
}

impl<T: Scalar> Default for LossParams<T> {
    fn default() -> Self {
        Self {
            coupling_db: T::lit(1.0),
            mr_drop_db: T::lit(0.5),
            mr_through_db: T::lit(0.02),
            eo_mr_drop_db: T::lit(1.6),
            eo_mr_through_db: T::lit(0.33),
            propagation_db_per_cm: T::lit(0.1),
            bend_db_per_90: T::lit(0.01),
            gst_switch_db: T::lit(0.2),
            interface_soa_gain_db: T::lit(20.0),
            intra_soa_gain_db: T::lit(15.2),
            max_net_gain_db: T::lit(20.0),
        }
    }
}

impl<T: Scalar> LossParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coupling_db", self.coupling_db),
            ("mr_drop_db", self.mr_drop_db),
            ("mr_through_db", self.mr_through_db),
            ("eo_mr_drop_db", self.eo_mr_drop_db),
            ("eo_mr_through_db", self.eo_mr_through_db),
            ("propagation_db_per_cm", self.propagation_db_per_cm),
            ("bend_db_per_90", self.bend_db_per_90),
            ("gst_switch_db", self.gst_switch_db),
            ("max_net_gain_db", self.max_net_gain_db),
        ] {
            check_non_negative(name, v)?;
        }
        for (name, v) in [
            ("interface_soa_gain_db", self.interface_soa_gain_db),
            ("intra_soa_gain_db", self.intra_soa_gain_db),
        ] {
            if !(v > T::zero()) {
                return Err(Error::Domain(format!("{name} must be > 0 (got {v})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams<T = f64> {
    /// Power to shift one MR resonance by 1 nm.
    pub eo_tuning_uw_per_nm: T,
    /// Resonance shift applied per tuned MR.
    pub tuning_shift_nm: T,
    /// Optical power needed at the cell, crystalline-reset programming.
    pub cell_power_crystalline_mw: T,
    /// Optical power needed at the cell, amorphous-reset programming.
    pub cell_power_amorphous_mw: T,
    /// Electrical draw of one intra-subarray SOA at 0 dBm output.
    pub intra_soa_power_mw: T,
    pub wall_plug_efficiency: T,
}

impl<T: Scalar> Default for PowerParams<T> {
    fn default() -> Self {
        Self {
            eo_tuning_uw_per_nm: T::lit(4.0),
            tuning_shift_nm: T::lit(1.0),
            cell_power_crystalline_mw: T::lit(1.0),
            cell_power_amorphous_mw: T::lit(5.0),
            intra_soa_power_mw: T::lit(1.4),
            wall_plug_efficiency: T::lit(0.20),
        }
    }
}

impl<T: Scalar> PowerParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_plug_efficiency > T::zero() && self.wall_plug_efficiency <= T::one()) {
            return Err(Error::Domain(format!(
                "wall_plug_efficiency must be in (0, 1] (got {})",
                self.wall_plug_efficiency
            )));
        }
        for (name, v) in [
            ("cell_power_crystalline_mw", self.cell_power_crystalline_mw),
            ("cell_power_amorphous_mw", self.cell_power_amorphous_mw),
            ("intra_soa_power_mw", self.intra_soa_power_mw),
        ] {
            if !(v > T::zero()) {
                return Err(Error::Domain(format!("{name} must be > 0 (got {v})")));
            }
        }
        check_non_negative("eo_tuning_uw_per_nm", self.eo_tuning_uw_per_nm)?;
        check_non_negative("tuning_shift_nm", self.tuning_shift_nm)
    }

    /// Optical power the cell needs, in watts.
    pub fn cell_power_w(&self, mode: ResetMode) -> T {
        let mw = match mode {
            ResetMode::Crystalline => self.cell_power_crystalline_mw,
            ResetMode::Amorphous => self.cell_power_amorphous_mw,
        };
        mw * T::lit(1e-3)
    }
}

/// One element on an optical path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathElement<T = f64> {
    Coupler,
    PassiveMrThrough { count: u32 },
    PassiveMrDrop,
    EoMrDrop,
    EoMrThrough { count: u32 },
    Waveguide { length_cm: T },
    Bend { count: u32 },
    GstSwitch,
    /// Intra-subarray SOA; `gain_db` falls back to [`LossParams::intra_soa_gain_db`].
    IntraSoa {
        #[serde(default)]
        gain_db: Option<T>,
    },
    /// Passage through `count` phase-change cells of a crossbar, `loss_db` each.
    CellTransit { count: u32, loss_db: T },
}

impl<T: Scalar> PathElement<T> {
    pub fn loss_db(&self, p: &LossParams<T>) -> T {
        let n = |c: u32| T::lit(c as f64);
        match *self {
            PathElement::Coupler => p.coupling_db,
            PathElement::PassiveMrThrough { count } => n(count) * p.mr_through_db,
            PathElement::PassiveMrDrop => p.mr_drop_db,
            PathElement::EoMrDrop => p.eo_mr_drop_db,
            PathElement::EoMrThrough { count } => n(count) * p.eo_mr_through_db,
            PathElement::Waveguide { length_cm } => length_cm * p.propagation_db_per_cm,
            PathElement::Bend { count } => n(count) * p.bend_db_per_90,
            PathElement::GstSwitch => p.gst_switch_db,
            PathElement::IntraSoa { gain_db } => -gain_db.unwrap_or(p.intra_soa_gain_db),
            PathElement::CellTransit { count, loss_db } => n(count) * loss_db,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PathElement::Waveguide { length_cm } => check_non_negative("waveguide length_cm", length_cm),
            PathElement::IntraSoa { gain_db: Some(g) } if !(g > T::zero()) => {
                Err(Error::Domain(format!("intra-SOA gain must be > 0 (got {g})")))
            }
            PathElement::CellTransit { loss_db, .. } => check_non_negative("cell loss_db", loss_db),
            _ => Ok(()),
        }
    }
}

/// Ordered, non-empty list of path elements from laser to detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PathElement<T>>", into = "Vec<PathElement<T>>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct PathDescriptor<T: Scalar = f64> {
    elements: Vec<PathElement<T>>,
}

impl<T: Scalar> PathDescriptor<T> {
    pub fn new(elements: Vec<PathElement<T>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Domain("path descriptor must not be empty".into()));
        }
        elements.iter().try_for_each(PathElement::validate)?;
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[PathElement<T>] {
        &self.elements
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut elements = self.elements.clone();
        elements.extend_from_slice(&other.elements);
        Self { elements }
    }
}

impl<T: Scalar> TryFrom<Vec<PathElement<T>>> for PathDescriptor<T> {
    type Error = Error;

    fn try_from(v: Vec<PathElement<T>>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T: Scalar> From<PathDescriptor<T>> for Vec<PathElement<T>> {
    fn from(p: PathDescriptor<T>) -> Self {
        p.elements
    }
}

/// Net loss of a path in dB; negative when amplification dominates.
pub fn loss_chain_db<T: Scalar>(path: &PathDescriptor<T>, p: &LossParams<T>) -> T {
    path.elements.iter().fold(T::zero(), |acc, e| acc + e.loss_db(p))
}

/// Worst-case read/write path through a COMET bank: coupler, subarray
/// switch, column waveguide, EO-MR drop into the column, `M_r` tuned-MR
/// throughs with an SOA array every `interval` rows, EO-MR drop out, coupler.
pub fn comet_worst_case_path<T: Scalar>(
    g: &MemoryGeometry,
    die_length_cm: T,
    soa_interval: Option<u32>,
) -> Result<PathDescriptor<T>> {
    let mut e = vec![
        PathElement::Coupler,
        PathElement::GstSwitch,
        PathElement::Waveguide { length_cm: die_length_cm },
        PathElement::EoMrDrop,
    ];
    let rows = g.subarray_rows();
    match soa_interval {
        Some(interval) if interval >= 1 && interval < rows => {
            for _ in 0..rows / interval {
                e.push(PathElement::EoMrThrough { count: interval });
                e.push(PathElement::IntraSoa { gain_db: None });
            }
            let tail = rows % interval;
            if tail > 0 {
                e.push(PathElement::EoMrThrough { count: tail });
            }
        }
        _ => e.push(PathElement::EoMrThrough { count: rows }),
    }
    e.extend([PathElement::EoMrDrop, PathElement::Coupler]);
    PathDescriptor::new(e)
}

/// Electrical laser power for `wavelengths` channels over the given path.
pub fn laser_power_for_channels_w<T: Scalar>(
    wavelengths: u64,
    path: &PathDescriptor<T>,
    loss: &LossParams<T>,
    power: &PowerParams<T>,
    cell_power_w: T,
) -> Result<T> {
    let net = loss_chain_db(path, loss);
    if -net > loss.max_net_gain_db {
        return Err(Error::Model(format!(
            "net path gain {} dB exceeds amplifier saturation limit {} dB",
            -net, loss.max_net_gain_db
        )));
    }
    let per_wavelength = cell_power_w * db_to_linear(net);
    Ok(T::lit(wavelengths as f64) * per_wavelength / power.wall_plug_efficiency)
}

/// Electrical laser power feeding `N_c` wavelengths.
pub fn laser_power_w<T: Scalar>(
    g: &MemoryGeometry,
    worst_case_path: &PathDescriptor<T>,
    loss: &LossParams<T>,
    power: &PowerParams<T>,
    mode: ResetMode,
) -> Result<T> {
    laser_power_for_channels_w(g.total_cols(), worst_case_path, loss, power, power.cell_power_w(mode))
}

fn check_interval(interval: u32) -> Result<()> {
    if interval == 0 {
        Err(Error::Domain("SOA interval must be >= 1 row".into()))
    } else {
        Ok(())
    }
}

/// Total intra-subarray SOAs, `ceil(B * N_r * N_c / interval)`.
pub fn soa_count(g: &MemoryGeometry, interval: u32) -> Result<u64> {
    check_interval(interval)?;
    let cells = g.banks() as u64 * g.total_rows() * g.total_cols();
    Ok(cells.div_ceil(interval as u64))
}

/// SOA draw with only the accessed subarray of each bank powered:
/// `(B * M_r * M_c / interval) * P_soa`.
pub fn active_soa_power_w<T: Scalar>(g: &MemoryGeometry, interval: u32, p: &PowerParams<T>) -> Result<T> {
    check_interval(interval)?;
    let cells = g.banks() as f64 * g.subarray_rows() as f64 * g.subarray_cols() as f64;
    Ok(T::lit(cells / interval as f64) * p.intra_soa_power_mw * T::lit(1e-3))
}

/// MR tuning power for one row per bank: `B * 2 * M_c * P_EO * shift`.
pub fn eo_tuning_power_w<T: Scalar>(g: &MemoryGeometry, p: &PowerParams<T>) -> T {
    let mrs = T::lit(g.banks() as f64 * 2.0 * g.subarray_cols() as f64);
    mrs * p.eo_tuning_uw_per_nm * T::lit(1e-6) * p.tuning_shift_nm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerStack<T = f64> {
    pub laser_w: T,
    pub soa_w: T,
    pub eo_tuning_w: T,
    pub total_w: T,
    /// Resonance shift assumed for the EO-tuning figure.
    pub tuning_shift_nm: T,
}

impl<T: Scalar> PowerStack<T> {
    pub fn new(laser_w: T, soa_w: T, eo_tuning_w: T, tuning_shift_nm: T) -> Self {
        Self {
            laser_w,
            soa_w,
            eo_tuning_w,
            total_w: laser_w + soa_w + eo_tuning_w,
            tuning_shift_nm,
        }
    }

    /// `(component, watts)` rows in reporting order.
    pub fn components(&self) -> [(&'static str, T); 4] {
        [
            ("laser", self.laser_w),
            ("soa", self.soa_w),
            ("eo_tuning", self.eo_tuning_w),
            ("total", self.total_w),
        ]
    }
}

/// Power breakdown of a COMET configuration over its worst-case path.
///
/// The SOA interval follows from the intra-SOA gain and the tuned-MR through
/// loss; a lossless through path needs no SOAs.
pub fn power_stack<T: Scalar>(
    g: &MemoryGeometry,
    worst_case_path: &PathDescriptor<T>,
    loss: &LossParams<T>,
    power: &PowerParams<T>,
    mode: ResetMode,
) -> Result<PowerStack<T>> {
    loss.validate()?;
    power.validate()?;
    let laser = laser_power_w(g, worst_case_path, loss, power, mode)?;
    let soa = if loss.eo_mr_through_db > T::zero() {
        let interval = soa_row_interval(loss.intra_soa_gain_db, loss.eo_mr_through_db)?;
        active_soa_power_w(g, interval, power)?
    } else {
        T::zero()
    };
    Ok(PowerStack::new(laser, soa, eo_tuning_power_w(g, power), power.tuning_shift_nm))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::geometry::GeometrySpec;

    fn comet() -> MemoryGeometry {
        GeometrySpec::comet_4b().validate().unwrap()
    }

    fn unit() -> MemoryGeometry {
        GeometrySpec::new(1, 1, 1, 1, 1).validate().unwrap()
    }

    fn path(e: Vec<PathElement<f64>>) -> PathDescriptor<f64> {
        PathDescriptor::new(e).unwrap()
    }

    #[test]
    fn loss_chain_examples() {
        let p = LossParams::default();
        assert_eq!(loss_chain_db(&path(vec![PathElement::Waveguide { length_cm: 0.0 }]), &p), 0.0);
        let chain = path(vec![PathElement::Coupler, PathElement::GstSwitch, PathElement::EoMrDrop]);
        assert_relative_eq!(loss_chain_db(&chain, &p), 2.8, epsilon = 1e-12);
        let amp = path(vec![
            PathElement::EoMrThrough { count: 46 },
            PathElement::IntraSoa { gain_db: Some(15.2) },
        ]);
        assert_relative_eq!(loss_chain_db(&amp, &p), -0.02, epsilon = 1e-12);
    }

    #[test]
    fn empty_path_is_rejected() {
        assert!(PathDescriptor::<f64>::new(vec![]).is_err());
        assert!(PathDescriptor::new(vec![PathElement::Waveguide { length_cm: -1.0 }]).is_err());
    }

    #[test]
    fn path_json_shape() {
        let p = path(vec![PathElement::Coupler, PathElement::EoMrThrough { count: 3 }]);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"[{"kind":"coupler"},{"kind":"eo-mr-through","count":3}]"#);
        let back: PathDescriptor<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<PathDescriptor<f64>>("[]").is_err());
    }

    #[test]
    fn laser_power_examples() {
        let loss = LossParams::<f64>::default();
        let power = PowerParams::<f64>::default();
        let lossless = path(vec![PathElement::Waveguide { length_cm: 0.0 }]);
        let w = laser_power_w(&unit(), &lossless, &loss, &power, ResetMode::Crystalline).unwrap();
        assert_relative_eq!(w, 5e-3, epsilon = 1e-15);

        let three = LossParams {
            coupling_db: 3.0,
            ..LossParams::default()
        };
        let c = path(vec![PathElement::Coupler]);
        let w = laser_power_w(&unit(), &c, &three, &power, ResetMode::Crystalline).unwrap();
        assert_relative_eq!(w, 9.976_311_574_844_4e-3, epsilon = 1e-12);
        let wa = laser_power_w(&unit(), &c, &three, &power, ResetMode::Amorphous).unwrap();
        assert_relative_eq!(wa, 5.0 * w, epsilon = 1e-12);
    }

    #[test]
    fn saturating_gain_is_a_model_error() {
        let p = path(vec![PathElement::IntraSoa { gain_db: Some(25.0) }]);
        let err = laser_power_w(&unit(), &p, &LossParams::default(), &PowerParams::default(), ResetMode::Crystalline)
            .unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn soa_count_examples() {
        assert_eq!(soa_count(&comet(), 46).unwrap(), 46_684_428);
        let g = GeometrySpec::new(1, 1, 64, 1, 1).validate().unwrap();
        assert_eq!(soa_count(&g, 64).unwrap(), 1);
        assert_eq!(soa_count(&comet(), 1).unwrap(), 1 << 31);
        assert!(soa_count(&comet(), 0).is_err());
    }

    #[test]
    fn active_soa_power_examples() {
        let p = PowerParams::<f64>::default();
        assert_relative_eq!(active_soa_power_w(&comet(), 46, &p).unwrap(), 524_288.0 / 46.0 * 1.4e-3, epsilon = 1e-12);
        assert_relative_eq!(active_soa_power_w(&comet(), 46, &p).unwrap(), 15.956, epsilon = 1e-3);
        // one row group with one column: a single SOA
        let g = GeometrySpec::new(1, 1, 64, 1, 1).validate().unwrap();
        assert_relative_eq!(active_soa_power_w(&g, 64, &p).unwrap(), 1.4e-3, epsilon = 1e-15);
        let wide = GeometrySpec::new(4, 4096, 512, 512, 4).validate().unwrap();
        assert_relative_eq!(
            active_soa_power_w(&wide, 46, &p).unwrap(),
            2.0 * active_soa_power_w(&comet(), 46, &p).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn active_soa_power_is_bounded_by_full_population() {
        let p = PowerParams::<f64>::default();
        let g = comet();
        let all = soa_count(&g, 46).unwrap() as f64 * 1.4e-3;
        assert!(active_soa_power_w(&g, 46, &p).unwrap() <= all);
    }

    #[test]
    fn eo_tuning_examples() {
        let mut p = PowerParams::<f64>::default();
        assert_relative_eq!(eo_tuning_power_w(&comet(), &p), 8.192e-3, epsilon = 1e-15);
        assert_relative_eq!(eo_tuning_power_w(&unit(), &p), 8e-6, epsilon = 1e-18);
        p.tuning_shift_nm = 0.0;
        assert_eq!(eo_tuning_power_w(&comet(), &p), 0.0);
    }

    #[test]
    fn default_comet_path() {
        let g = comet();
        let p: PathDescriptor<f64> = comet_worst_case_path(&g, 2.0, Some(46)).unwrap();
        let soas = p.elements().iter().filter(|e| matches!(e, PathElement::IntraSoa { .. })).count();
        assert_eq!(soas, 11);
        let throughs: u32 = p
            .elements()
            .iter()
            .map(|e| match e {
                PathElement::EoMrThrough { count } => *count,
                _ => 0,
            })
            .sum();
        assert_eq!(throughs, 512);
        // 1 + 0.2 + 0.2 + 1.6 + 512*0.33 - 11*15.2 + 1.6 + 1
        assert_relative_eq!(loss_chain_db(&p, &LossParams::default()), 7.36, epsilon = 1e-9);
    }

    #[test]
    fn power_stack_adds_up() {
        let g = comet();
        let loss = LossParams::<f64>::default();
        let power = PowerParams::<f64>::default();
        let p = comet_worst_case_path(&g, 2.0, Some(46)).unwrap();
        let s = power_stack(&g, &p, &loss, &power, ResetMode::Crystalline).unwrap();
        let sum = s.laser_w + s.soa_w + s.eo_tuning_w;
        assert!(((s.total_w - sum) / s.total_w).abs() < 1e-9);
        assert_relative_eq!(s.soa_w, 15.956, epsilon = 1e-3);
        assert_eq!(s.tuning_shift_nm, 1.0);
    }

    #[test]
    fn lossless_power_stack_is_laser_floor() {
        let g = comet();
        let zero = LossParams {
            coupling_db: 0.0,
            mr_drop_db: 0.0,
            mr_through_db: 0.0,
            eo_mr_drop_db: 0.0,
            eo_mr_through_db: 0.0,
            propagation_db_per_cm: 0.0,
            bend_db_per_90: 0.0,
            gst_switch_db: 0.0,
            ..LossParams::default()
        };
        let power = PowerParams { tuning_shift_nm: 0.0, ..PowerParams::default() };
        let p = comet_worst_case_path(&g, 2.0, None).unwrap();
        let s = power_stack(&g, &p, &zero, &power, ResetMode::Crystalline).unwrap();
        assert_eq!(s.soa_w, 0.0);
        assert_eq!(s.eo_tuning_w, 0.0);
        assert_relative_eq!(s.total_w, 256.0 * 1e-3 / 0.2, epsilon = 1e-12);
    }

    #[test]
    fn params_validation() {
        let bad = PowerParams { wall_plug_efficiency: 0.0, ..PowerParams::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = LossParams { coupling_db: -1.0, ..LossParams::<f64>::default() };
        assert!(bad.validate().is_err());
        assert!(LossParams::<f32>::default().validate().is_ok());
    }
}
