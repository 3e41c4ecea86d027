//! The deterministic scenario engine: one fixed-step loop wiring
//! disturbances, PFC, AGC and the market into the swing dynamics, plus batch
//! comparison across scenarios.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::agc::{agc_step, resolve_participation};
use crate::disturbance::{
    ramp_value, stream_rng, DisturbanceState, JumpParams, OuParams, STREAM_FORECAST,
};
use crate::error::{Error, Result};
use crate::grid::{apply_trip, step_coi, GridState, Resource, SystemParams};
use crate::market::{
    clear_market, forecast_demand, is_market_unit, ramp_setpoints, DispatchEntry,
    DispatchSchedule,
};
use crate::metrics::{FrequencyTrace, MetricsReport};
use crate::pfc::{adaptive_deadband_switch, pfc_response};
use crate::scenario::{Scenario, ScenarioSpec};
use crate::trace::{write_histogram_csv, write_report, write_trace_csv, TraceRow};

/// Full in-memory result of one run.
#[derive(Debug, Clone)]
pub struct SimResult {
    /// Full-resolution deviation trace (mHz) including t = 0.
    pub trace: FrequencyTrace,
    /// Decimated rows for the trace CSV.
    pub rows: Vec<TraceRow>,
    pub metrics: MetricsReport,
    /// Timestamped run events (trips, deadband switches, clearings).
    pub events: Vec<String>,
    /// Every cleared dispatch schedule, in order.
    pub schedules: Vec<DispatchSchedule>,
}

/// Aggregate droop stiffness of the online PFC-enabled fleet plus load
/// damping (MW/Hz); the default AGC frequency bias.
pub fn auto_bias_mw_per_hz(fleet: &[Resource], params: &SystemParams) -> f64 {
    let mut stiffness = 0.0;
    for r in fleet.iter().filter(|r| r.online && r.pfc.enabled) {
        if let Some(droop) = r.pfc.droop_pct {
            stiffness += (100.0 / droop) * r.rating_mva / params.f0_hz;
        } else if let (Some(curve), Some(contracted)) = (&r.pfc.curve, r.pfc.contracted_mw) {
            let bp = &curve.breakpoints;
            if bp.len() >= 2 {
                let span_hz = (bp[bp.len() - 1].0 - bp[0].0) / 1000.0;
                let frac_span = (bp[0].1 - bp[bp.len() - 1].1).abs();
                if span_hz > 0.0 {
                    stiffness += contracted * frac_span / span_hz;
                }
            }
        }
    }
    stiffness + params.damping_mw_per_hz()
}

fn renormalize(participation: &mut [f64], fleet: &[Resource]) {
    let mut sum = 0.0;
    for (f, r) in participation.iter_mut().zip(fleet) {
        if !r.online {
            *f = 0.0;
        }
        sum += *f;
    }
    if sum > 0.0 {
        for f in participation.iter_mut() {
            *f /= sum;
        }
    }
}

/// Runs a resolved scenario to completion.
pub fn simulate(scn: &Scenario) -> Result<SimResult> {
    let params = &scn.params;
    let dt = params.dt_s;
    let n_steps = (scn.duration_s / dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::config("duration shorter than one step"));
    }
    let f0 = params.f0_hz;

    let mut fleet = scn.fleet.clone();
    let n = fleet.len();
    let interval_steps = ((scn.market.interval_s / dt).round() as usize).max(1);
    let agc_steps = ((scn.agc.cycle_s / dt).round() as usize).max(1);

    let ou = scn.ou.clone().unwrap_or(OuParams {
        theta_per_s: 1.0,
        sigma_mw_sqrt_s: 0.0,
        mu_mw: 0.0,
    });
    let jumps = scn.jumps.clone().unwrap_or(JumpParams {
        magnitude_mw: 0.0,
        rate_per_hour: 0.0,
        duration_s: 1.0,
    });
    let mut dist = DisturbanceState::new(ou, scn.ramps.clone(), jumps, scn.seed);
    let mut forecast_rng = stream_rng(scn.seed, STREAM_FORECAST);

    let mut events: Vec<String> = Vec::new();
    let mut schedules: Vec<DispatchSchedule> = Vec::new();
    let mut applied_trips: Vec<f64> = Vec::new();

    let mut participation = resolve_participation(&scn.agc, &fleet)?;
    let mut bias = scn
        .agc
        .bias_mw_per_hz
        .unwrap_or_else(|| auto_bias_mw_per_hz(&fleet, params));
    let mut agc_active = vec![0.0; n];
    let mut agc_pending = vec![0.0; n];

    let mut prev_sched: Option<DispatchSchedule> = None;
    let mut next_sched: Option<DispatchSchedule> = None;
    let mut interval_start = 0.0;

    let mut state = GridState::balanced(&fleet);
    let mut trip_i = 0;
    let mut switch_i = 0;

    let mut full_trace: Vec<f64> = Vec::with_capacity(n_steps + 1);
    full_trace.push(0.0);
    let mut rows: Vec<TraceRow> = Vec::with_capacity(n_steps / scn.trace_every_steps + 2);

    // reusable per-step setpoint buffers
    let mut sp0 = vec![0.0; n];
    let mut sp1 = vec![0.0; n];

    for k in 0..n_steps {
        let t = k as f64 * dt;

        while trip_i < scn.trips.len() && scn.trips[trip_i].time_s <= t + 1e-9 {
            let id = scn.trips[trip_i].resource_id.clone();
            let lost = apply_trip(&mut fleet, &mut state, &id)?;
            events.push(format!("t={t:.3} s: trip of {id} (-{lost:.1} MW)"));
            applied_trips.push(t);
            renormalize(&mut participation, &fleet);
            trip_i += 1;
        }
        while switch_i < scn.pfc_switches.len() && scn.pfc_switches[switch_i].time_s <= t + 1e-9 {
            let sw = &scn.pfc_switches[switch_i];
            if let Some(r) = fleet.iter_mut().find(|r| r.id == sw.resource_id) {
                r.pfc = adaptive_deadband_switch(&r.pfc, sw.mode);
                events.push(format!(
                    "t={t:.3} s: {} deadband -> {:.0} mHz",
                    sw.resource_id, r.pfc.deadband_mhz
                ));
            }
            switch_i += 1;
        }

        if scn.market.enabled && k % interval_steps == 0 {
            let t_mid = t + scn.market.interval_s / 2.0;
            let true_demand = scn.demand_mw + ramp_value(t_mid, &scn.ramps);
            let forecast = forecast_demand(true_demand, scn.market.forecast, &mut forecast_rng)?;
            let fixed: f64 = fleet
                .iter()
                .filter(|r| r.online && !is_market_unit(r))
                .map(|r| r.p_set_mw)
                .sum();
            let sched = clear_market(forecast - fixed, &fleet, &scn.market, t).map_err(|inf| {
                Error::Infeasible {
                    t_s: t,
                    shortfall_mw: inf.shortfall_mw,
                    message: inf.reason,
                }
            })?;
            // outgoing baseline is the delivered trajectory, so setpoints
            // stay continuous across the boundary
            let prev_entries: Vec<DispatchEntry> = match &next_sched {
                Some(_) => sched
                    .entries
                    .iter()
                    .map(|e| DispatchEntry {
                        target_mw: fleet[e.resource_idx].p_set_mw,
                        ..e.clone()
                    })
                    .collect(),
                None => {
                    // first clearing: start balanced at the targets
                    for e in &sched.entries {
                        fleet[e.resource_idx].p_set_mw = e.target_mw;
                        fleet[e.resource_idx].p_out_mw = e.target_mw;
                        state.p_out_mw[e.resource_idx] = e.target_mw;
                    }
                    sched.entries.clone()
                }
            };
            for e in &sched.entries {
                let r = &mut fleet[e.resource_idx];
                r.headroom_mw = e.reserved_mw;
                r.footroom_mw = (e.target_mw - r.p_min_mw).max(0.0);
            }
            prev_sched = Some(DispatchSchedule {
                entries: prev_entries,
                ..sched.clone()
            });
            next_sched = Some(sched.clone());
            schedules.push(sched);
            interval_start = t;
            if scn.agc.bias_mw_per_hz.is_none() {
                bias = auto_bias_mw_per_hz(&fleet, params);
            }
        }

        if scn.agc.enabled && k % agc_steps == 0 {
            // one cycle of communication latency: last cycle's command is
            // what acts now
            std::mem::swap(&mut agc_active, &mut agc_pending);
            let delta_f = state.delta_f_hz;
            agc_pending = agc_step(&mut state, delta_f, &scn.agc, bias, &participation);
        }

        // market setpoints delivered at step start/end; linear in between
        for i in 0..n {
            sp0[i] = fleet[i].p_set_mw;
            sp1[i] = fleet[i].p_set_mw;
        }
        if let (Some(prev), Some(next)) = (&prev_sched, &next_sched) {
            let d0 = ramp_setpoints(prev, next, t - interval_start, &scn.market, &fleet);
            let d1 = ramp_setpoints(prev, next, t + dt - interval_start, &scn.market, &fleet);
            for (e, (v0, v1)) in next.entries.iter().zip(d0.iter().zip(&d1)) {
                sp0[e.resource_idx] = *v0;
                sp1[e.resource_idx] = *v1;
            }
        }

        let sample = dist.step(t, dt);
        let (ou_held, jump_held) = (sample.ou_mw, sample.jump_mw);

        let load = |tau: f64| {
            scn.demand_mw + ou_held + jump_held + ramp_value(tau, &scn.ramps)
        };
        let fleet_ref = &fleet;
        let sp0_ref = &sp0;
        let sp1_ref = &sp1;
        let agc_ref = &agc_active;
        let cmd = move |i: usize, tau: f64, delta_f: f64| {
            let frac = ((tau - t) / dt).clamp(0.0, 1.0);
            let market_sp = sp0_ref[i] + (sp1_ref[i] - sp0_ref[i]) * frac;
            let pfc = pfc_response(delta_f, &fleet_ref[i].pfc, &fleet_ref[i], f0)
                .expect("pfc settings validated at configuration time");
            market_sp + agc_ref[i] + pfc
        };
        step_coi(&mut state, params, &fleet, load, cmd)?;

        for i in 0..n {
            if fleet[i].online {
                fleet[i].p_set_mw = sp1[i];
                fleet[i].p_out_mw = state.p_out_mw[i];
            }
        }

        full_trace.push(state.delta_f_hz * 1000.0);

        if (k + 1) % scn.trace_every_steps == 0 || k + 1 == n_steps {
            let t_next = t + dt;
            let p_pfc: f64 = fleet
                .iter()
                .map(|r| {
                    pfc_response(state.delta_f_hz, &r.pfc, r, f0)
                        .expect("pfc settings validated at configuration time")
                })
                .sum();
            let p_agc: f64 = agc_active.iter().sum();
            let p_market: f64 = next_sched
                .as_ref()
                .map(|s| s.entries.iter().map(|e| sp1[e.resource_idx]).sum())
                .unwrap_or(0.0);
            let ramp_now = ramp_value(t_next, &scn.ramps);
            rows.push(TraceRow {
                t_s: t_next,
                delta_f_mhz: state.delta_f_hz * 1000.0,
                p_load_mw: scn.demand_mw + ou_held + ramp_now + jump_held,
                p_ou_mw: ou_held,
                p_ramp_mw: ramp_now,
                p_jump_mw: jump_held,
                p_pfc_mw: p_pfc,
                p_agc_mw: p_agc,
                p_market_mw: p_market,
                time_error_s: state.time_error_s,
            });
        }
    }

    let trace = FrequencyTrace::new(0.0, dt, full_trace)?;
    let metrics = MetricsReport::from_trace(&trace, f0, &applied_trips)?;
    Ok(SimResult {
        trace,
        rows,
        metrics,
        events,
        schedules,
    })
}

/// Result envelope of a file-emitting run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub runtime_s: f64,
    /// Fully resolved config: re-running it reproduces the trace bit-exactly.
    pub config_echo: String,
    pub events: Vec<String>,
    pub trace_path: Option<PathBuf>,
    pub histogram_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub echo_path: Option<PathBuf>,
}

/// Runs a scenario spec; when `out_dir` is given, emits
/// `<name>-seed<seed>.{trace.csv,histogram.csv,report.txt,config.toml}`.
pub fn run_scenario(spec: &ScenarioSpec, out_dir: Option<&Path>) -> Result<RunResult> {
    let started = Instant::now();
    let scenario = spec.resolve()?;
    let result = simulate(&scenario)?;
    let mut run = RunResult {
        name: spec.name.clone(),
        seed: spec.seed,
        metrics: result.metrics.clone(),
        runtime_s: started.elapsed().as_secs_f64(),
        config_echo: spec.to_toml(),
        events: result.events.clone(),
        trace_path: None,
        histogram_path: None,
        report_path: None,
        echo_path: None,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let prefix = format!("{}-seed{}", spec.name, spec.seed);
        let trace_path = dir.join(format!("{prefix}.trace.csv"));
        write_trace_csv(&result.rows, &trace_path)?;
        let hist_path = dir.join(format!("{prefix}.histogram.csv"));
        write_histogram_csv(&result.metrics.histogram, &hist_path)?;
        let report_path = dir.join(format!("{prefix}.report.txt"));
        write_report(&result.metrics, &result.events, &report_path)?;
        let echo_path = dir.join(format!("{prefix}.config.toml"));
        std::fs::write(&echo_path, &run.config_echo)?;
        run.trace_path = Some(trace_path);
        run.histogram_path = Some(hist_path);
        run.report_path = Some(report_path);
        run.echo_path = Some(echo_path);
        run.runtime_s = started.elapsed().as_secs_f64();
    }
    Ok(run)
}

/// Side-by-side metrics of several scenarios, in input order.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<(String, MetricsReport)>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,sigma_mhz,pct_out_200,pct_out_150,skewness,nadir_mhz,zenith_mhz,time_error_s\n",
        );
        for (name, m) in &self.rows {
            out.push_str(&format!(
                "{name},{:.3},{:.4},{:.4},{:.4},{:.2},{:.2},{:.4}\n",
                m.sigma_mhz,
                m.pct_out_200,
                m.pct_out_150,
                m.skewness,
                m.nadir_mhz,
                m.zenith_mhz,
                m.time_error_s
            ));
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{:<18} {:>10} {:>12} {:>12} {:>9} {:>10} {:>10} {:>12}\n",
            "scenario", "sigma mHz", "%out ±200", "%out ±150", "skew", "nadir", "zenith", "time err s"
        );
        for (name, m) in &self.rows {
            out.push_str(&format!(
                "{:<18} {:>10.2} {:>12.3} {:>12.3} {:>9.3} {:>10.1} {:>10.1} {:>12.4}\n",
                name,
                m.sigma_mhz,
                m.pct_out_200,
                m.pct_out_150,
                m.skewness,
                m.nadir_mhz,
                m.zenith_mhz,
                m.time_error_s
            ));
        }
        out
    }
}

/// Runs each scenario and assembles the comparison table (input order is
/// preserved). With `out_dir`, per-run files and `comparison.csv` are
/// written.
pub fn compare_scenarios(specs: &[ScenarioSpec], out_dir: Option<&Path>) -> Result<Comparison> {
    if specs.len() < 2 {
        return Err(Error::config("compare needs at least two scenarios"));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let run = run_scenario(spec, out_dir)?;
        rows.push((run.name.clone(), run.metrics));
    }
    let cmp = Comparison { rows };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("comparison.csv"), cmp.to_csv())?;
    }
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;
    use crate::trace::trace_to_csv;

    fn quiet_spec() -> ScenarioSpec {
        let mut spec = preset("s3-conv-pfc").unwrap();
        spec.duration_s = 60.0;
        spec.disturbances.ou = None;
        spec.disturbances.jumps = None;
        spec.disturbances.ramps.clear();
        spec
    }

    #[test]
    fn zero_disturbance_run_stays_flat() {
        let scenario = quiet_spec().resolve().unwrap();
        let result = simulate(&scenario).unwrap();
        assert_eq!(result.metrics.nadir_mhz, 0.0);
        assert_eq!(result.metrics.zenith_mhz, 0.0);
        assert_eq!(result.metrics.sigma_mhz, 0.0);
        assert_eq!(result.metrics.time_error_s, 0.0);
        assert!(result.metrics.pct_out_200 == 0.0);
    }

    #[test]
    fn market_balances_initial_dispatch() {
        let scenario = quiet_spec().resolve().unwrap();
        let result = simulate(&scenario).unwrap();
        let first = &result.schedules[0];
        // the schedule covers demand net of the fixed wind and storage
        // injections, and withholds at least the required reserve
        assert!((first.total_target_mw() - (7000.0 - 3.0 * 630.0)).abs() < 1e-6);
        assert!(first.requirement_mw == 500.0);
        assert!(first.total_reserved_mw() >= first.requirement_mw - 1e-6);
    }

    #[test]
    fn same_seed_reproduces_rows() {
        let spec = {
            let mut s = preset("s3-conv-pfc").unwrap();
            s.duration_s = 120.0;
            s
        };
        let a = simulate(&spec.resolve().unwrap()).unwrap();
        let b = simulate(&spec.resolve().unwrap()).unwrap();
        assert_eq!(trace_to_csv(&a.rows), trace_to_csv(&b.rows));
        let mut c_spec = spec.clone();
        c_spec.seed = 2;
        let c = simulate(&c_spec.resolve().unwrap()).unwrap();
        assert_ne!(trace_to_csv(&a.rows), trace_to_csv(&c.rows));
    }

    #[test]
    fn comparison_preserves_input_order() {
        let mut a = quiet_spec();
        a.duration_s = 30.0;
        a.name = "zebra".into();
        let mut b = a.clone();
        b.name = "aardvark".into();
        let cmp = compare_scenarios(&[a.clone(), b, a.clone()], None).unwrap();
        let names: Vec<&str> = cmp.rows.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["zebra", "aardvark", "zebra"]);
        // identical configs give identical rows
        assert_eq!(cmp.rows[0].1, cmp.rows[2].1);
        let csv = cmp.to_csv();
        assert!(csv.starts_with("scenario,sigma_mhz,pct_out_200,"));
        assert_eq!(csv.lines().count(), 4);
        assert!(compare_scenarios(&[a], None).is_err());
    }

    #[test]
    fn trip_is_redispatched_at_next_boundary() {
        let mut spec = quiet_spec();
        spec.duration_s = 700.0;
        // off-peak so the remaining fleet can still carry the reserve
        spec.demand_mw = 6000.0;
        spec.disturbances.trips.push(crate::disturbance::TripEvent {
            time_s: 130.0,
            resource_id: "sg1".into(),
        });
        let scenario = spec.resolve().unwrap();
        let result = simulate(&scenario).unwrap();
        // clearings at 0, 300, 600: the 300 s one drops sg1
        assert!(result.schedules.len() >= 3);
        assert!(result.schedules[0].entries.iter().any(|e| e.id == "sg1"));
        let at_300 = result
            .schedules
            .iter()
            .find(|s| (s.cleared_at_s - 300.0).abs() < 1e-9)
            .unwrap();
        assert!(at_300.entries.iter().all(|e| e.id != "sg1"));
        assert!((at_300.total_target_mw() - (6000.0 - 3.0 * 630.0)).abs() < 1e-6);
    }
}
