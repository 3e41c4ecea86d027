//! Secondary frequency control: a single-area integral controller on the
//! area control error, with anti-windup clamping and participation-factor
//! distribution. Commands are issued on a fixed cycle and take effect one
//! cycle later (communication delay).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridState, Resource, ResourceKind};

/// AGC tuning. `k0` is the dimensionless integral gain applied per hour of
/// ACE: the integral state grows by `k0 · ACE · cycle/3600` each cycle, so
/// the restoration rate is independent of the cycle length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgcSettings {
    pub enabled: bool,
    pub k0: f64,
    /// Setpoint issuance interval (s).
    pub cycle_s: f64,
    /// Frequency bias (MW/Hz). When absent it is recomputed at every market
    /// interval as the aggregate droop stiffness plus load damping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_mw_per_hz: Option<f64>,
    /// Anti-windup clamp on the integral state (± MW).
    pub output_limit_mw: f64,
    /// Per-resource participation factors (id, factor ≥ 0, summing to 1).
    /// When empty, factors default to headroom-proportional among
    /// synchronous generators.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub participation: Vec<(String, f64)>,
}

impl Default for AgcSettings {
    fn default() -> Self {
        AgcSettings {
            enabled: false,
            k0: 10.0,
            cycle_s: 2.0,
            bias_mw_per_hz: None,
            output_limit_mw: 1000.0,
            participation: Vec::new(),
        }
    }
}

impl AgcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.cycle_s <= 0.0 {
            return Err(Error::config("agc: cycle_s must be > 0"));
        }
        if self.k0 < 0.0 {
            return Err(Error::config("agc: k0 must be >= 0"));
        }
        if self.output_limit_mw <= 0.0 {
            return Err(Error::config("agc: output_limit_mw must be > 0"));
        }
        Ok(())
    }
}

/// Resolves participation factors to fleet order. Explicit factors must
/// reference existing resources and sum to 1; otherwise factors default to
/// headroom-proportional among online synchronous generators.
pub fn resolve_participation(settings: &AgcSettings, fleet: &[Resource]) -> Result<Vec<f64>> {
    let mut factors = vec![0.0; fleet.len()];
    if settings.participation.is_empty() {
        let mut total = 0.0;
        for (i, r) in fleet.iter().enumerate() {
            if r.online && matches!(r.kind, ResourceKind::SyncGen | ResourceKind::GfmConverter) {
                let room = (r.p_max_mw - r.p_set_mw).max(0.0);
                factors[i] = room;
                total += room;
            }
        }
        if settings.enabled && total <= 0.0 {
            return Err(Error::config(
                "agc: no headroom on any synchronous unit to distribute to",
            ));
        }
        if total > 0.0 {
            for f in &mut factors {
                *f /= total;
            }
        }
        return Ok(factors);
    }
    let mut sum = 0.0;
    for (id, f) in &settings.participation {
        let idx = fleet
            .iter()
            .position(|r| &r.id == id)
            .ok_or_else(|| Error::config(format!("agc: unknown resource '{id}'")))?;
        if *f < 0.0 {
            return Err(Error::config(format!("agc: negative factor for '{id}'")));
        }
        factors[idx] = *f;
        sum += *f;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "agc: participation factors sum to {sum}, expected 1"
        )));
    }
    Ok(factors)
}

/// One AGC cycle: integrates the area control error `ACE = −bias·Δf` into the
/// clamped integral state and distributes the total by participation factor.
/// Ramp and headroom limits are enforced downstream by each resource's
/// actuation.
pub fn agc_step(
    state: &mut GridState,
    delta_f_hz: f64,
    settings: &AgcSettings,
    bias_mw_per_hz: f64,
    participation: &[f64],
) -> Vec<f64> {
    let ace_mw = -bias_mw_per_hz * delta_f_hz;
    let increment = settings.k0 * ace_mw * settings.cycle_s / 3600.0;
    state.agc_integral_mw = (state.agc_integral_mw + increment)
        .clamp(-settings.output_limit_mw, settings.output_limit_mw);
    participation
        .iter()
        .map(|f| f * state.agc_integral_mw)
        .collect()
}
