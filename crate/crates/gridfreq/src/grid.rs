//! Aggregate (center-of-inertia) frequency dynamics.
//!
//! The whole system is collapsed to a single bus: the frequency deviation is
//! integrated from the net MW imbalance through the aggregate stored-energy
//! constant, and every resource output follows a rate-limited first-order lag
//! toward its total command. Units are MW throughout; frequency deviation is
//! Hz internally and mHz in reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::CostCurve;
use crate::pfc::PfcSettings;

/// System-level constants of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Nominal frequency (Hz).
    pub f0_hz: f64,
    /// System base power (MVA) for per-unit conversions.
    pub s_base_mva: f64,
    /// Load damping: per-unit power per per-unit frequency.
    pub d_load: f64,
    /// Integration step (s).
    pub dt_s: f64,
    /// Fixed-step integration scheme.
    #[serde(default)]
    pub integrator: Integrator,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            f0_hz: 50.0,
            s_base_mva: 7000.0,
            d_load: 1.0,
            dt_s: 0.01,
            integrator: Integrator::Rk4,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.f0_hz <= 0.0 {
            return Err(Error::config("f0_hz must be > 0"));
        }
        if self.s_base_mva <= 0.0 {
            return Err(Error::config("s_base_mva must be > 0"));
        }
        if self.dt_s <= 0.0 {
            return Err(Error::config("dt_s must be > 0"));
        }
        if self.d_load < 0.0 {
            return Err(Error::config("d_load must be >= 0"));
        }
        Ok(())
    }

    /// Load damping expressed in MW per Hz.
    pub fn damping_mw_per_hz(&self) -> f64 {
        self.d_load * self.s_base_mva / self.f0_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Asset classes of the aggregate fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceKind {
    SyncGen,
    WindPlant,
    SolarPlant,
    Bess,
    HvdcLink,
    GfmConverter,
    Load,
}

impl ResourceKind {
    /// Variable RES that runs at maximum power point unless curtailed.
    pub fn is_res(&self) -> bool {
        matches!(self, ResourceKind::WindPlant | ResourceKind::SolarPlant)
    }
}

/// One generation/storage/interconnector asset (or aggregate of identical
/// assets) in the fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub kind: ResourceKind,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    /// Current (market) setpoint, MW.
    pub p_set_mw: f64,
    /// Current electrical output, MW.
    pub p_out_mw: f64,
    /// Inertia constant H (s, i.e. MW·s per MVA of rating). 0 for
    /// grid-following IBR; > 0 for synchronous machines and grid-forming
    /// converters with virtual inertia.
    pub inertia_h_s: f64,
    pub rating_mva: f64,
    /// First-order response time constant (s).
    pub tau_resp_s: f64,
    /// Actuation slew limit, MW per minute.
    pub ramp_rate_mw_per_min: f64,
    /// Reserved MW above/below the setpoint (set by the market clearing).
    pub headroom_mw: f64,
    pub footroom_mw: f64,
    /// Non-pre-curtailed RES can only regulate downward.
    pub downward_only: bool,
    /// Cleared by the energy market (storage held at setpoint and loads are
    /// not).
    pub market_participant: bool,
    pub online: bool,
    pub pfc: PfcSettings,
    /// Marginal cost curve, MW -> currency/MWh.
    pub cost: CostCurve,
}

impl Resource {
    pub fn new(id: &str, kind: ResourceKind, p_min_mw: f64, p_max_mw: f64, rating_mva: f64) -> Self {
        Resource {
            id: id.to_string(),
            kind,
            p_min_mw,
            p_max_mw,
            p_set_mw: 0.0,
            p_out_mw: 0.0,
            inertia_h_s: 0.0,
            rating_mva,
            tau_resp_s: 1.0,
            ramp_rate_mw_per_min: 10.0 * p_max_mw.abs().max(1.0),
            headroom_mw: 0.0,
            footroom_mw: 0.0,
            downward_only: false,
            market_participant: true,
            online: true,
            pfc: PfcSettings::disabled(),
            cost: CostCurve::flat(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.id;
        if self.p_min_mw > self.p_max_mw {
            return Err(Error::config(format!("{id}: p_min > p_max")));
        }
        if self.p_set_mw < self.p_min_mw - 1e-9 || self.p_set_mw > self.p_max_mw + 1e-9 {
            return Err(Error::config(format!("{id}: p_set outside [p_min, p_max]")));
        }
        if self.headroom_mw > self.p_max_mw - self.p_set_mw + 1e-9 {
            return Err(Error::config(format!("{id}: headroom exceeds p_max - p_set")));
        }
        if self.footroom_mw > self.p_set_mw - self.p_min_mw + 1e-9 {
            return Err(Error::config(format!("{id}: footroom exceeds p_set - p_min")));
        }
        if self.tau_resp_s <= 0.0 {
            return Err(Error::config(format!("{id}: tau_resp must be > 0")));
        }
        if self.rating_mva < 0.0 || self.inertia_h_s < 0.0 {
            return Err(Error::config(format!("{id}: rating and inertia must be >= 0")));
        }
        if self.ramp_rate_mw_per_min <= 0.0 {
            return Err(Error::config(format!("{id}: ramp_rate must be > 0")));
        }
        self.pfc.validate(id)?;
        self.cost.validate(id)?;
        Ok(())
    }
}

/// Simulation state advanced by [`step_coi`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    /// Simulation time (s).
    pub t_s: f64,
    /// Center-of-inertia frequency deviation (Hz).
    pub delta_f_hz: f64,
    /// Per-resource electrical output (MW), fleet order.
    pub p_out_mw: Vec<f64>,
    /// Per-resource total command at the last step (MW), fleet order.
    pub command_mw: Vec<f64>,
    /// AGC integral state (MW).
    pub agc_integral_mw: f64,
    /// Accumulated time error: integral of Δf/f0 (s).
    pub time_error_s: f64,
}

impl GridState {
    pub fn balanced(fleet: &[Resource]) -> Self {
        GridState {
            t_s: 0.0,
            delta_f_hz: 0.0,
            p_out_mw: fleet.iter().map(|r| r.p_out_mw).collect(),
            command_mw: fleet.iter().map(|r| r.p_set_mw).collect(),
            agc_integral_mw: 0.0,
            time_error_s: 0.0,
        }
    }
}

/// Total stored-energy constant Σ Hᵢ·ratingᵢ (MW·s) of the online fleet.
/// Tripped resources contribute nothing; an empty fleet returns 0.
pub fn aggregate_inertia(fleet: &[Resource]) -> f64 {
    fleet
        .iter()
        .filter(|r| r.online)
        .map(|r| r.inertia_h_s * r.rating_mva)
        .sum()
}

/// Advances the swing dynamics by one step of
/// `2·H_tot/f0 · dΔf/dt = Σ p_out − load(t) − D·Δf` (MW), along with each
/// resource's rate-limited first-order lag `dp/dt = (cmd − p)/τ` and the
/// accumulated time error.
///
/// `load_mw(t)` is the total frequency-independent load at stage time `t`;
/// `command_mw(i, t, Δf)` the total command (market + AGC + PFC) of fleet
/// index `i`. Fails when the state goes non-finite.
pub fn step_coi<L, C>(
    state: &mut GridState,
    params: &SystemParams,
    fleet: &[Resource],
    load_mw: L,
    command_mw: C,
) -> Result<()>
where
    L: Fn(f64) -> f64,
    C: Fn(usize, f64, f64) -> f64,
{
    let h_tot = aggregate_inertia(fleet);
    if h_tot <= 0.0 {
        return Err(Error::config(
            "aggregate inertia is zero: no synchronous machine or grid-forming converter online",
        ));
    }
    let inv_m = params.f0_hz / (2.0 * h_tot); // Hz/s per MW
    let d_mw_per_hz = params.damping_mw_per_hz();
    let n = fleet.len();
    let dt = params.dt_s;
    let t0 = state.t_s;

    // y = [Δf, p_0..p_{n-1}, time_error]
    let mut y = Vec::with_capacity(n + 2);
    y.push(state.delta_f_hz);
    y.extend_from_slice(&state.p_out_mw);
    y.push(state.time_error_s);

    let deriv = |t: f64, y: &[f64], dy: &mut [f64]| {
        let delta_f = y[0];
        let mut p_total = 0.0;
        for (i, r) in fleet.iter().enumerate() {
            let p = y[1 + i];
            if !r.online {
                dy[1 + i] = 0.0;
                continue;
            }
            p_total += p;
            let cmd = command_mw(i, t, delta_f).clamp(r.p_min_mw, r.p_max_mw);
            let rate = r.ramp_rate_mw_per_min / 60.0;
            dy[1 + i] = ((cmd - p) / r.tau_resp_s).clamp(-rate, rate);
        }
        let imbalance = p_total - load_mw(t) - d_mw_per_hz * delta_f;
        dy[0] = inv_m * imbalance;
        dy[n + 1] = delta_f / params.f0_hz;
    };

    match params.integrator {
        Integrator::Euler => {
            let mut dy = vec![0.0; n + 2];
            deriv(t0, &y, &mut dy);
            for (yi, di) in y.iter_mut().zip(&dy) {
                *yi += dt * di;
            }
        }
        Integrator::Rk4 => {
            let mut k1 = vec![0.0; n + 2];
            let mut k2 = vec![0.0; n + 2];
            let mut k3 = vec![0.0; n + 2];
            let mut k4 = vec![0.0; n + 2];
            let mut tmp = vec![0.0; n + 2];
            deriv(t0, &y, &mut k1);
            for i in 0..n + 2 {
                tmp[i] = y[i] + 0.5 * dt * k1[i];
            }
            deriv(t0 + 0.5 * dt, &tmp, &mut k2);
            for i in 0..n + 2 {
                tmp[i] = y[i] + 0.5 * dt * k2[i];
            }
            deriv(t0 + 0.5 * dt, &tmp, &mut k3);
            for i in 0..n + 2 {
                tmp[i] = y[i] + dt * k3[i];
            }
            deriv(t0 + dt, &tmp, &mut k4);
            for i in 0..n + 2 {
                y[i] += dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
            }
        }
    }

    state.delta_f_hz = y[0];
    for (i, r) in fleet.iter().enumerate() {
        // the lag drives toward a bounds-clamped command, but guard anyway
        state.p_out_mw[i] = if r.online {
            y[1 + i].clamp(r.p_min_mw, r.p_max_mw)
        } else {
            0.0
        };
        state.command_mw[i] = command_mw(i, t0 + dt, state.delta_f_hz);
    }
    state.time_error_s = y[n + 1];
    state.t_s = t0 + dt;

    if !state.delta_f_hz.is_finite() || !state.time_error_s.is_finite() {
        return Err(Error::Numeric {
            t_s: state.t_s,
            resource: None,
            message: "frequency state is non-finite".into(),
        });
    }
    if let Some(i) = state.p_out_mw.iter().position(|p| !p.is_finite()) {
        return Err(Error::Numeric {
            t_s: state.t_s,
            resource: Some(fleet[i].id.clone()),
            message: "resource output is non-finite".into(),
        });
    }
    Ok(())
}

/// Takes a resource out of service: output, reserves and inertia drop to
/// zero, and the lost injection shows up as a net imbalance. Returns the MW
/// output lost.
pub fn apply_trip(fleet: &mut [Resource], state: &mut GridState, resource_id: &str) -> Result<f64> {
    let idx = fleet
        .iter()
        .position(|r| r.id == resource_id)
        .ok_or_else(|| Error::config(format!("trip of unknown resource '{resource_id}'")))?;
    let r = &mut fleet[idx];
    if !r.online {
        return Err(Error::config(format!(
            "resource '{resource_id}' is already tripped"
        )));
    }
    let lost = state.p_out_mw[idx];
    r.online = false;
    r.p_out_mw = 0.0;
    r.p_set_mw = 0.0;
    r.headroom_mw = 0.0;
    r.footroom_mw = 0.0;
    state.p_out_mw[idx] = 0.0;
    state.command_mw[idx] = 0.0;
    Ok(lost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(id: &str, h_s: f64, rating: f64) -> Resource {
        let mut r = Resource::new(id, ResourceKind::SyncGen, 0.0, rating, rating);
        r.inertia_h_s = h_s;
        r
    }

    #[test]
    fn inertia_aggregation() {
        assert_eq!(aggregate_inertia(&[machine("g", 5.0, 100.0)]), 500.0);
        assert_eq!(aggregate_inertia(&[]), 0.0);
        let fleet: Vec<_> = (0..20).map(|i| machine(&format!("g{i}"), 4.0, 350.0)).collect();
        // brute-force accumulation oracle
        let mut acc = 0.0;
        for r in &fleet {
            acc += r.inertia_h_s * r.rating_mva;
        }
        assert_eq!(acc, 28_000.0);
        assert_eq!(aggregate_inertia(&fleet), acc);
    }

    #[test]
    fn equilibrium_stays_at_zero() {
        let mut g = machine("g", 5.0, 1000.0);
        g.p_set_mw = 500.0;
        g.p_out_mw = 500.0;
        let fleet = vec![g];
        let params = SystemParams {
            d_load: 0.0,
            ..SystemParams::default()
        };
        let mut state = GridState::balanced(&fleet);
        for _ in 0..1000 {
            step_coi(&mut state, &params, &fleet, |_| 500.0, |i, _, _| fleet[i].p_set_mw)
                .unwrap();
        }
        assert_eq!(state.delta_f_hz, 0.0);
        assert_eq!(state.time_error_s, 0.0);
    }

    #[test]
    fn initial_rocof_matches_analytic() {
        // H_tot = 10,000 MW·s, f0 = 50 Hz, lost 100 MW of load-side balance:
        // df/dt = ΔP·f0/(2H) = -0.25 Hz/s at t = 0+.
        let mut g = machine("g", 5.0, 2000.0);
        g.p_set_mw = 1000.0;
        g.p_out_mw = 1000.0;
        g.tau_resp_s = 1e6; // frozen output: controls off
        let fleet = vec![g];
        let params = SystemParams {
            d_load: 0.0,
            dt_s: 0.001,
            ..SystemParams::default()
        };
        let mut state = GridState::balanced(&fleet);
        step_coi(&mut state, &params, &fleet, |_| 1100.0, |i, _, _| fleet[i].p_set_mw).unwrap();
        let rocof = state.delta_f_hz / params.dt_s;
        assert!(
            (rocof - (-0.25)).abs() / 0.25 < 0.005,
            "RoCoF {rocof} != -0.25 Hz/s"
        );
    }

    #[test]
    fn first_order_lag_step_response() {
        // commanded +100 MW from 0 with tau = 1 s: p(1 s) ≈ 63.2 MW
        let mut g = machine("g", 5.0, 1000.0);
        g.tau_resp_s = 1.0;
        let fleet = vec![g];
        let params = SystemParams::default();
        let mut state = GridState::balanced(&fleet);
        let steps = (1.0 / params.dt_s) as usize;
        for _ in 0..steps {
            step_coi(&mut state, &params, &fleet, |_| 0.0, |_, _, _| 100.0).unwrap();
        }
        let expected = 100.0 * (1.0 - (-1.0f64).exp());
        assert!(
            (state.p_out_mw[0] - expected).abs() < 0.1,
            "p_out {} != {expected}",
            state.p_out_mw[0]
        );
    }

    #[test]
    fn euler_step_power_bookkeeping_is_exact() {
        let mut g = machine("g", 5.0, 2000.0);
        g.p_set_mw = 1000.0;
        g.p_out_mw = 1000.0;
        g.tau_resp_s = 2.0;
        let fleet = vec![g];
        let params = SystemParams {
            integrator: Integrator::Euler,
            ..SystemParams::default()
        };
        let mut state = GridState::balanced(&fleet);
        state.delta_f_hz = -0.05;
        let h_tot = aggregate_inertia(&fleet);
        for _ in 0..100 {
            let before = state.delta_f_hz;
            let p_total: f64 = state.p_out_mw.iter().sum();
            let imbalance =
                p_total - 1050.0 - params.damping_mw_per_hz() * before;
            step_coi(&mut state, &params, &fleet, |_| 1050.0, |i, _, _| fleet[i].p_set_mw)
                .unwrap();
            let lhs = 2.0 * h_tot / params.f0_hz * (state.delta_f_hz - before) / params.dt_s;
            assert!((lhs - imbalance).abs() < 1e-9, "bookkeeping off: {lhs} vs {imbalance}");
        }
    }

    #[test]
    fn trip_bookkeeping() {
        let mut a = machine("a", 5.0, 2000.0);
        a.p_set_mw = 500.0;
        a.p_out_mw = 500.0;
        let mut b = machine("b", 4.0, 1500.0);
        b.p_set_mw = 6500.0 - 500.0;
        b.p_max_mw = 6500.0;
        b.p_out_mw = 6000.0;
        let mut fleet = vec![a, b];
        let mut state = GridState::balanced(&fleet);
        let h_before = aggregate_inertia(&fleet);
        let lost = apply_trip(&mut fleet, &mut state, "a").unwrap();
        assert_eq!(lost, 500.0);
        assert_eq!(aggregate_inertia(&fleet), h_before - 5.0 * 2000.0);
        assert_eq!(state.p_out_mw[0], 0.0);
        // tripping again is an error, as is a bogus id
        assert!(apply_trip(&mut fleet, &mut state, "a").is_err());
        assert!(apply_trip(&mut fleet, &mut state, "zz").is_err());
    }

    #[test]
    fn non_finite_state_is_reported() {
        let mut g = machine("g", 5.0, 1000.0);
        g.p_set_mw = 500.0;
        g.p_out_mw = 500.0;
        let fleet = vec![g];
        let params = SystemParams::default();
        let mut state = GridState::balanced(&fleet);
        let err = step_coi(&mut state, &params, &fleet, |_| f64::NAN, |i, _, _| {
            fleet[i].p_set_mw
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
