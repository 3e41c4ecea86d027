//! Primary frequency control: deadband + droop response, piecewise response
//! curves (dynamic containment/moderation/regulation style products) and
//! adaptive deadband switching.
//!
//! Sign convention: a positive frequency deviation (over-frequency) elicits a
//! negative power response and vice versa. Droop responses use the offset
//! deadband convention: the response is proportional to the deviation
//! *beyond* the deadband, so it is continuous at the deadband edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Resource;

/// Narrow RES deadband (mHz), switchable in real time.
pub const NARROW_DEADBAND_MHZ: f64 = 15.0;
/// Wide RES deadband (mHz).
pub const WIDE_DEADBAND_MHZ: f64 = 200.0;

/// Per-resource primary frequency control settings.
///
/// Exactly one of `droop_pct` / `curve` must be present when enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfcSettings {
    pub enabled: bool,
    /// Always-on grid-code response (saturates at physical room around the
    /// setpoint) vs. market-contracted response (saturates at the reserved
    /// headroom/footroom).
    pub mandatory: bool,
    /// Deadband half-width in mHz.
    pub deadband_mhz: f64,
    /// Droop in percent: full rated output change for `droop_pct`% frequency
    /// change. Lower is stiffer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droop_pct: Option<f64>,
    /// Piecewise response curve, alternative to a droop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PiecewiseResponseCurve>,
    /// Contracted MW scaled by the curve fraction. Required with `curve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contracted_mw: Option<f64>,
    /// Full activation time (s). Actuation lag is derived as fat/3 unless the
    /// resource overrides it.
    pub fat_s: f64,
}

impl PfcSettings {
    pub fn disabled() -> Self {
        PfcSettings {
            enabled: false,
            mandatory: false,
            deadband_mhz: 0.0,
            droop_pct: None,
            curve: None,
            contracted_mw: None,
            fat_s: 1.0,
        }
    }

    pub fn droop(deadband_mhz: f64, droop_pct: f64, fat_s: f64) -> Self {
        PfcSettings {
            enabled: true,
            mandatory: true,
            deadband_mhz,
            droop_pct: Some(droop_pct),
            curve: None,
            contracted_mw: None,
            fat_s,
        }
    }

    pub fn validate(&self, id: &str) -> Result<()> {
        if self.deadband_mhz < 0.0 {
            return Err(Error::config(format!("{id}: deadband must be >= 0")));
        }
        if self.fat_s <= 0.0 {
            return Err(Error::config(format!("{id}: fat_s must be > 0")));
        }
        if !self.enabled {
            return Ok(());
        }
        match (&self.droop_pct, &self.curve) {
            (Some(d), None) => {
                if *d <= 0.0 {
                    return Err(Error::config(format!("{id}: droop_pct must be > 0")));
                }
            }
            (None, Some(c)) => {
                c.validate(id)?;
                match self.contracted_mw {
                    Some(mw) if mw > 0.0 => {}
                    _ => {
                        return Err(Error::config(format!(
                            "{id}: a response curve requires contracted_mw > 0"
                        )))
                    }
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(format!(
                    "{id}: droop_pct and curve are mutually exclusive"
                )))
            }
            (None, None) => {
                return Err(Error::config(format!(
                    "{id}: enabled PFC needs droop_pct or curve"
                )))
            }
        }
        Ok(())
    }
}

/// Deadband mode for RES plants, switchable mid-run by the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadbandMode {
    Narrow,
    Wide,
}

/// Returns settings with the deadband set to the requested mode
/// (15 mHz narrow, 200 mHz wide). Takes effect at the next control step.
pub fn adaptive_deadband_switch(settings: &PfcSettings, mode: DeadbandMode) -> PfcSettings {
    let mut s = settings.clone();
    s.deadband_mhz = match mode {
        DeadbandMode::Narrow => NARROW_DEADBAND_MHZ,
        DeadbandMode::Wide => WIDE_DEADBAND_MHZ,
    };
    s
}

/// Effective deviation beyond the deadband (offset convention).
///
/// Returns 0 for |Δf| ≤ deadband, otherwise sign(Δf)·(|Δf| − deadband),
/// both in Hz.
pub fn apply_deadband(delta_f_hz: f64, deadband_mhz: f64) -> f64 {
    let db_hz = deadband_mhz / 1000.0;
    if delta_f_hz.abs() <= db_hz {
        0.0
    } else {
        delta_f_hz.signum() * (delta_f_hz.abs() - db_hz)
    }
}

/// Piecewise-linear response curve: ordered (Δf mHz, fraction of contracted
/// MW) breakpoints. Fractions oppose the deviation, so they are monotone
/// non-increasing; the curve saturates at the end fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseResponseCurve {
    pub breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseResponseCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Self {
        PiecewiseResponseCurve { breakpoints }
    }

    pub fn validate(&self, id: &str) -> Result<()> {
        if self.breakpoints.len() < 2 {
            return Err(Error::config(format!("{id}: curve needs >= 2 breakpoints")));
        }
        for w in self.breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config(format!(
                    "{id}: curve Δf values must be strictly increasing"
                )));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::config(format!(
                    "{id}: curve fractions must be monotone non-increasing"
                )));
            }
        }
        for (df, frac) in &self.breakpoints {
            if !df.is_finite() || frac.abs() > 1.0 {
                return Err(Error::config(format!(
                    "{id}: curve fractions must lie in [-1, 1]"
                )));
            }
        }
        if self.fraction_at(0.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "{id}: curve must respond 0 at Δf = 0 (deadband invariant)"
            )));
        }
        Ok(())
    }

    /// Response fraction at a deviation (mHz), linearly interpolated and
    /// saturated at the end breakpoints.
    pub fn fraction_at(&self, delta_f_mhz: f64) -> f64 {
        let bp = &self.breakpoints;
        if bp.is_empty() {
            return 0.0;
        }
        if delta_f_mhz <= bp[0].0 {
            return bp[0].1;
        }
        if delta_f_mhz >= bp[bp.len() - 1].0 {
            return bp[bp.len() - 1].1;
        }
        for w in bp.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            if delta_f_mhz <= x1 {
                return y0 + (y1 - y0) * (delta_f_mhz - x0) / (x1 - x0);
            }
        }
        bp[bp.len() - 1].1
    }
}

/// Power response (MW) of a piecewise curve product at a deviation.
pub fn piecewise_response(
    delta_f_hz: f64,
    curve: &PiecewiseResponseCurve,
    contracted_mw: f64,
) -> Result<f64> {
    curve.validate("curve")?;
    Ok(curve.fraction_at(delta_f_hz * 1000.0) * contracted_mw)
}

/// Commanded ΔP (MW) of one resource's primary frequency response.
///
/// Droop form: ΔP = −(100/droop%)·(Δf_eff/f0)·rating, where Δf_eff is the
/// deviation beyond the deadband. Saturates at the available room: physical
/// room around the setpoint for mandatory PFC, the reserved headroom and
/// footroom otherwise. `downward_only` resources (non-pre-curtailed RES)
/// never respond upward.
pub fn pfc_response(
    delta_f_hz: f64,
    settings: &PfcSettings,
    resource: &Resource,
    f0_hz: f64,
) -> Result<f64> {
    if !settings.enabled || !resource.online {
        return Ok(0.0);
    }
    let raw = match (&settings.droop_pct, &settings.curve) {
        (Some(droop), None) => {
            let df_eff = apply_deadband(delta_f_hz, settings.deadband_mhz);
            -(100.0 / droop) * (df_eff / f0_hz) * resource.rating_mva
        }
        (None, Some(curve)) => {
            let contracted = settings.contracted_mw.ok_or_else(|| {
                Error::config(format!("{}: curve without contracted_mw", resource.id))
            })?;
            // curve validity is checked at configuration time
            curve.fraction_at(delta_f_hz * 1000.0) * contracted
        }
        _ => {
            return Err(Error::config(format!(
                "{}: PFC needs exactly one of droop_pct / curve",
                resource.id
            )))
        }
    };
    let (up_room, down_room) = if settings.mandatory {
        (
            (resource.p_max_mw - resource.p_set_mw).max(0.0),
            (resource.p_set_mw - resource.p_min_mw).max(0.0),
        )
    } else {
        (resource.headroom_mw.max(0.0), resource.footroom_mw.max(0.0))
    };
    let mut dp = raw.clamp(-down_room, up_room);
    if resource.downward_only {
        dp = dp.min(0.0);
    }
    Ok(dp)
}

/// Aggregate fleet response (MW) at a deviation:
/// (100/droop%)·(max(0, |Δf| − deadband)/f0)·fleet MW.
///
/// With 20,000 MW at 1.7% droop and a 15 mHz deadband, a 150 mHz deviation
/// yields 3,176 MW, and each further 10 mHz adds 235 MW.
pub fn reserve_calc(
    fleet_mw: f64,
    droop_pct: f64,
    delta_f_mhz: f64,
    deadband_mhz: f64,
    f0_hz: f64,
) -> Result<f64> {
    if droop_pct <= 0.0 {
        return Err(Error::config("reserve-calc: droop_pct must be > 0"));
    }
    if f0_hz <= 0.0 {
        return Err(Error::config("reserve-calc: f0 must be > 0"));
    }
    if deadband_mhz < 0.0 {
        return Err(Error::config("reserve-calc: deadband must be >= 0"));
    }
    let eff_hz = (delta_f_mhz.abs() - deadband_mhz).max(0.0) / 1000.0;
    Ok((100.0 / droop_pct) * (eff_hz / f0_hz) * fleet_mw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Resource, ResourceKind};

    fn bess_fleet(rating_mw: f64, droop_pct: f64) -> Resource {
        let mut r = Resource::new("bess", ResourceKind::Bess, -rating_mw, rating_mw, rating_mw);
        r.pfc = PfcSettings::droop(15.0, droop_pct, 1.0);
        r.p_set_mw = 0.0;
        r
    }

    #[test]
    fn deadband_inside_and_boundary() {
        assert_eq!(apply_deadband(0.010, 15.0), 0.0);
        assert_eq!(apply_deadband(0.015, 15.0), 0.0);
        assert_eq!(apply_deadband(-0.015, 15.0), 0.0);
    }

    #[test]
    fn deadband_offset_convention() {
        // -150 mHz with 15 mHz deadband leaves -135 mHz effective; this is
        // the value behind the 3.176 GW aggregate response figure.
        let eff = apply_deadband(-0.150, 15.0);
        assert!((eff - (-0.135)).abs() < 1e-12);
        // continuous at the edge
        let just_out = apply_deadband(0.015 + 1e-9, 15.0);
        assert!(just_out > 0.0 && just_out < 1e-8);
    }

    #[test]
    fn bess_fleet_response_matches_aggregate_formula() {
        // 20 GW of BESS at 1.7% droop, 15 mHz deadband: -150 mHz raw
        // deviation yields +3,176 MW.
        let fleet = bess_fleet(20_000.0, 1.7);
        let dp = pfc_response(-0.150, &fleet.pfc.clone(), &fleet, 50.0).unwrap();
        assert!((dp - 3176.47).abs() < 1.0, "got {dp}");
        // and 235 MW for every further 10 mHz
        let dp2 = pfc_response(-0.160, &fleet.pfc.clone(), &fleet, 50.0).unwrap();
        assert!((dp2 - dp - 235.29).abs() < 1.0, "got {}", dp2 - dp);
    }

    #[test]
    fn droop_response_saturates_and_scales() {
        let mut r = Resource::new("g1", ResourceKind::SyncGen, 0.0, 1000.0, 1000.0);
        r.p_set_mw = 800.0;
        r.pfc = PfcSettings::droop(0.0, 5.0, 10.0);
        // -100 mHz at 5% droop on 1000 MVA: +40 MW, within 200 MW room
        let dp = pfc_response(-0.100, &r.pfc.clone(), &r, 50.0).unwrap();
        assert!((dp - 40.0).abs() < 1e-9);
        // deep deviation saturates at the physical headroom
        let dp = pfc_response(-1.0, &r.pfc.clone(), &r, 50.0).unwrap();
        assert!((dp - 200.0).abs() < 1e-9);
    }

    #[test]
    fn downward_only_never_responds_upward() {
        let mut w = Resource::new("w1", ResourceKind::WindPlant, 0.0, 700.0, 750.0);
        w.p_set_mw = 700.0;
        w.downward_only = true;
        w.pfc = PfcSettings::droop(15.0, 4.0, 2.0);
        let up = pfc_response(-0.100, &w.pfc.clone(), &w, 50.0).unwrap();
        assert_eq!(up, 0.0);
        let down = pfc_response(0.100, &w.pfc.clone(), &w, 50.0).unwrap();
        assert!(down < 0.0);
    }

    #[test]
    fn both_droop_and_curve_is_an_error() {
        let mut r = bess_fleet(100.0, 1.7);
        r.pfc.curve = Some(PiecewiseResponseCurve::new(vec![(-200.0, 1.0), (200.0, -1.0)]));
        assert!(r.pfc.validate("bess").is_err());
        assert!(pfc_response(-0.1, &r.pfc.clone(), &r, 50.0).is_err());
    }

    #[test]
    fn dr_style_curve_interpolates() {
        let curve = PiecewiseResponseCurve::new(vec![
            (-200.0, 1.0),
            (-15.0, 0.0),
            (15.0, 0.0),
            (200.0, -1.0),
        ]);
        curve.validate("dr").unwrap();
        let dp = piecewise_response(-0.1075, &curve, 100.0).unwrap();
        assert!((dp - 50.0).abs() < 1e-9);
        assert_eq!(piecewise_response(0.0, &curve, 100.0).unwrap(), 0.0);
        // saturation beyond the last breakpoint
        let dp = piecewise_response(-0.500, &curve, 100.0).unwrap();
        assert!((dp - 100.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_curves_rejected() {
        // non-increasing Δf
        let c = PiecewiseResponseCurve::new(vec![(10.0, 0.0), (10.0, -1.0)]);
        assert!(c.validate("c").is_err());
        // response does not oppose deviation
        let c = PiecewiseResponseCurve::new(vec![(-100.0, -1.0), (100.0, 1.0)]);
        assert!(c.validate("c").is_err());
        // nonzero response at Δf = 0
        let c = PiecewiseResponseCurve::new(vec![(-100.0, 1.0), (100.0, 0.5)]);
        assert!(c.validate("c").is_err());
    }

    #[test]
    fn deadband_switch_modes() {
        let s = PfcSettings::droop(200.0, 4.0, 2.0);
        let narrow = adaptive_deadband_switch(&s, DeadbandMode::Narrow);
        assert_eq!(narrow.deadband_mhz, 15.0);
        let again = adaptive_deadband_switch(&narrow, DeadbandMode::Narrow);
        assert_eq!(again, narrow);
        let wide = adaptive_deadband_switch(&narrow, DeadbandMode::Wide);
        assert_eq!(wide.deadband_mhz, 200.0);
    }
}
