//! The 5-minute real-time energy market: forecast-driven economic dispatch
//! with PFC-reserve co-optimization and ramped setpoint delivery.
//!
//! Dispatch is merit order on marginal cost (equal-lambda for
//! piecewise-linear curves). Reserve is met from undispatched capacity of
//! reserve-capable units; when that is short, energy is shifted from the most
//! expensive dispatched capable MW to the cheapest non-capable capacity, and
//! for the largest-infeed rule the solver additionally tries capping the
//! biggest units, since the requirement follows the largest dispatched
//! output. Candidate solutions are compared by total cost; fleets here are
//! small, so this recovers the exact optimum (checked against exhaustive
//! search in the property tests).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Resource, ResourceKind};

/// Market configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSettings {
    pub enabled: bool,
    /// Dispatch period (s).
    pub interval_s: f64,
    /// Setpoint ramp duration at the start of each interval (s).
    pub ramp_in_s: f64,
    pub reserve_rule: ReserveRule,
    pub forecast: ForecastModel,
}

impl Default for MarketSettings {
    fn default() -> Self {
        MarketSettings {
            enabled: true,
            interval_s: 300.0,
            ramp_in_s: 300.0,
            reserve_rule: ReserveRule::LargestInfeed,
            forecast: ForecastModel::Perfect,
        }
    }
}

impl MarketSettings {
    pub fn validate(&self) -> Result<()> {
        if self.interval_s <= 0.0 {
            return Err(Error::config("market: interval_s must be > 0"));
        }
        if self.ramp_in_s <= 0.0 || self.ramp_in_s > self.interval_s {
            return Err(Error::config("market: need 0 < ramp_in_s <= interval_s"));
        }
        if let ForecastModel::Gaussian { sigma_pct } = self.forecast {
            if sigma_pct < 0.0 {
                return Err(Error::config("market: forecast sigma_pct must be >= 0"));
            }
        }
        Ok(())
    }
}

/// How much upward PFC reserve the clearing must withhold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReserveRule {
    /// Cover the largest single dispatched infeed.
    LargestInfeed,
    FixedMw { mw: f64 },
    /// Largest infeed plus a margin for forecast errors.
    LargestInfeedPlusMargin { margin_mw: f64 },
}

/// Demand forecast error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForecastModel {
    Perfect,
    Gaussian { sigma_pct: f64 },
    Bias { offset_pct: f64 },
}

/// Applies the forecast error model to the true demand.
pub fn forecast_demand<R: Rng>(
    true_demand_mw: f64,
    model: ForecastModel,
    rng: &mut R,
) -> Result<f64> {
    if true_demand_mw <= 0.0 {
        return Err(Error::config("forecast: true demand must be > 0"));
    }
    Ok(match model {
        ForecastModel::Perfect => true_demand_mw,
        ForecastModel::Gaussian { sigma_pct } => {
            let z: f64 = rng.sample(StandardNormal);
            true_demand_mw * (1.0 + sigma_pct / 100.0 * z)
        }
        ForecastModel::Bias { offset_pct } => true_demand_mw * (1.0 + offset_pct / 100.0),
    })
}

/// Piecewise-linear marginal cost curve: (MW, currency/MWh) breakpoints,
/// flat-extended beyond the ends. Must be non-decreasing (convex energy
/// cost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub points: Vec<(f64, f64)>,
}

impl CostCurve {
    pub fn flat(cost: f64) -> Self {
        CostCurve { points: vec![(0.0, cost)] }
    }

    pub fn validate(&self, id: &str) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::config(format!("{id}: empty cost curve")));
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config(format!(
                    "{id}: cost curve MW values must be strictly increasing"
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::config(format!(
                    "{id}: marginal cost must be non-decreasing"
                )));
            }
        }
        Ok(())
    }

    /// Marginal cost at an output level.
    pub fn marginal_at(&self, p_mw: f64) -> f64 {
        let pts = &self.points;
        if p_mw <= pts[0].0 {
            return pts[0].1;
        }
        if p_mw >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        for w in pts.windows(2) {
            if p_mw <= w[1].0 {
                let f = (p_mw - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + f * (w[1].1 - w[0].1);
            }
        }
        pts[pts.len() - 1].1
    }

    /// Energy cost of moving output from `a` to `b` MW (trapezoid integral
    /// of the marginal curve).
    pub fn energy_cost(&self, a_mw: f64, b_mw: f64) -> f64 {
        let (lo, hi, sign) = if a_mw <= b_mw {
            (a_mw, b_mw, 1.0)
        } else {
            (b_mw, a_mw, -1.0)
        };
        let mut xs = vec![lo];
        for (x, _) in &self.points {
            if *x > lo && *x < hi {
                xs.push(*x);
            }
        }
        xs.push(hi);
        let mut total = 0.0;
        for w in xs.windows(2) {
            total += (w[1] - w[0]) * (self.marginal_at(w[0]) + self.marginal_at(w[1])) / 2.0;
        }
        sign * total
    }
}

/// One resource's cleared target and withheld reserve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchEntry {
    /// Index into the fleet slice passed to [`clear_market`].
    pub resource_idx: usize,
    pub id: String,
    pub target_mw: f64,
    pub reserved_mw: f64,
}

/// A cleared dispatch for one upcoming interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSchedule {
    pub cleared_at_s: f64,
    pub forecast_mw: f64,
    pub requirement_mw: f64,
    pub entries: Vec<DispatchEntry>,
}

impl DispatchSchedule {
    pub fn total_target_mw(&self) -> f64 {
        self.entries.iter().map(|e| e.target_mw).sum()
    }

    pub fn total_reserved_mw(&self) -> f64 {
        self.entries.iter().map(|e| e.reserved_mw).sum()
    }

    pub fn target_of(&self, resource_idx: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.resource_idx == resource_idx)
            .map(|e| e.target_mw)
    }
}

/// Clearing failure: demand or reserve cannot be covered.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    pub shortfall_mw: f64,
    pub reason: String,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({:.1} MW short)", self.reason, self.shortfall_mw)
    }
}

const EPS: f64 = 1e-6;

/// Internal per-unit dispatch view.
struct Unit {
    fleet_idx: usize,
    lo: f64,
    hi: f64,     // possibly capped
    hi_phys: f64, // physical p_max: reserve is delivered from here
    capable: bool,
    curve: CostCurve,
    p: f64,
}

impl Unit {
    fn dispatch_at(&self, lambda: f64) -> f64 {
        let mut p = self.lo;
        let mut xs = vec![self.lo];
        for (x, _) in &self.curve.points {
            if *x > self.lo && *x < self.hi {
                xs.push(*x);
            }
        }
        xs.push(self.hi);
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ca, cb) = (self.curve.marginal_at(a), self.curve.marginal_at(b));
            if cb <= lambda {
                p += b - a;
            } else if ca < lambda {
                p += (b - a) * (lambda - ca) / (cb - ca);
            }
        }
        p
    }
}

/// Is this resource eligible to hold upward PFC reserve?
fn reserve_capable(r: &Resource) -> bool {
    r.online && !r.downward_only
}

/// Is this resource dispatched by the energy market?
pub fn is_market_unit(r: &Resource) -> bool {
    r.online && r.market_participant && r.kind != ResourceKind::Load
}

fn requirement(rule: ReserveRule, units: &[Unit]) -> f64 {
    let largest = units.iter().map(|u| u.p).fold(0.0f64, f64::max);
    match rule {
        ReserveRule::LargestInfeed => largest,
        ReserveRule::FixedMw { mw } => mw,
        ReserveRule::LargestInfeedPlusMargin { margin_mw } => largest + margin_mw,
    }
}

fn free_capable(units: &[Unit]) -> f64 {
    units
        .iter()
        .filter(|u| u.capable)
        .map(|u| (u.hi_phys - u.p).max(0.0))
        .sum()
}

/// Merit-order (equal-lambda) dispatch of `demand` over the units.
/// Assumes Σ lo ≤ demand ≤ Σ hi.
fn lambda_dispatch(units: &mut [Unit], demand: f64) {
    let sum_lo: f64 = units.iter().map(|u| u.lo).sum();
    if demand <= sum_lo + EPS {
        for u in units.iter_mut() {
            u.p = u.lo;
        }
        return;
    }
    let mut lam_lo = f64::INFINITY;
    let mut lam_hi = f64::NEG_INFINITY;
    for u in units.iter() {
        for (_, c) in &u.curve.points {
            lam_lo = lam_lo.min(*c);
            lam_hi = lam_hi.max(*c);
        }
    }
    let (mut a, mut b) = (lam_lo - 1.0, lam_hi + 1.0);
    let total_at = |units: &[Unit], lam: f64| -> f64 {
        units.iter().map(|u| u.dispatch_at(lam)).sum()
    };
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if total_at(units, mid) >= demand {
            b = mid;
        } else {
            a = mid;
        }
        if b - a < 1e-12 * lam_hi.abs().max(1.0) {
            break;
        }
    }
    // base dispatch strictly below lambda, then fill the marginal band in
    // input order so that the balance is exact
    let mut need = demand;
    for u in units.iter_mut() {
        u.p = u.dispatch_at(a);
        need -= u.p;
    }
    for u in units.iter_mut() {
        if need <= EPS {
            break;
        }
        let room = (u.dispatch_at(b) - u.p).max(0.0);
        let add = room.min(need);
        u.p += add;
        need -= add;
    }
    // numeric residue goes to any unit with room
    if need > EPS {
        for u in units.iter_mut() {
            let add = (u.hi - u.p).max(0.0).min(need);
            u.p += add;
            need -= add;
            if need <= EPS {
                break;
            }
        }
    }
}

/// Distance from `p` down to the previous breakpoint of the curve (or to
/// `lo`), so exchanges stay within one marginal-cost segment.
fn room_down_segment(curve: &CostCurve, p: f64, lo: f64) -> f64 {
    let mut floor = lo;
    for (x, _) in &curve.points {
        if *x < p - EPS && *x > floor {
            floor = *x;
        }
    }
    (p - floor).max(0.0)
}

fn room_up_segment(curve: &CostCurve, p: f64, hi: f64) -> f64 {
    let mut ceil = hi;
    for (x, _) in &curve.points {
        if *x > p + EPS && *x < ceil {
            ceil = *x;
        }
    }
    (ceil - p).max(0.0)
}

/// Raises free capable headroom by moving energy from the most expensive
/// dispatched capable MW to the cheapest non-capable capacity until the
/// fixed requirement is met. Returns the remaining shortfall.
fn shift_for_reserve(units: &mut [Unit], requirement_mw: f64) -> f64 {
    loop {
        let need = requirement_mw - free_capable(units);
        if need <= 1e-9 {
            return 0.0;
        }
        // donor: highest marginal cost among dispatched capable MW
        let mut donor: Option<(usize, f64)> = None;
        for (i, u) in units.iter().enumerate() {
            if u.capable && u.p > u.lo + EPS {
                let mc = u.curve.marginal_at(u.p - EPS);
                if donor.map_or(true, |(_, best)| mc > best) {
                    donor = Some((i, mc));
                }
            }
        }
        // recipient: cheapest non-capable capacity
        let mut recip: Option<(usize, f64)> = None;
        for (i, u) in units.iter().enumerate() {
            if !u.capable && u.p < u.hi - EPS {
                let mc = u.curve.marginal_at(u.p + EPS);
                if recip.map_or(true, |(_, best)| mc < best) {
                    recip = Some((i, mc));
                }
            }
        }
        let (Some((di, _)), Some((ri, _))) = (donor, recip) else {
            return need;
        };
        let step = need
            .min(room_down_segment(&units[di].curve, units[di].p, units[di].lo))
            .min(room_up_segment(&units[ri].curve, units[ri].p, units[ri].hi));
        if step <= 1e-12 {
            return need;
        }
        units[di].p -= step;
        units[ri].p += step;
    }
}

fn total_cost(units: &[Unit]) -> f64 {
    units.iter().map(|u| u.curve.energy_cost(0.0, u.p)).sum()
}

/// Cost-minimizing dispatch of the forecast demand with the reserve rule
/// satisfied from reserve-capable headroom. Only online market participants
/// are dispatched; `resources` indexes are preserved in the schedule.
///
/// For the largest-infeed rules the requirement follows the largest
/// dispatched output, so the solver searches over a cap `M` on single-unit
/// output; the cost as a function of `M` is convex (a parametric LP value),
/// which makes a ternary search exact up to float resolution.
pub fn clear_market(
    forecast_mw: f64,
    resources: &[Resource],
    settings: &MarketSettings,
    cleared_at_s: f64,
) -> std::result::Result<DispatchSchedule, Infeasibility> {
    let idxs: Vec<usize> = (0..resources.len())
        .filter(|i| is_market_unit(&resources[*i]))
        .collect();
    if idxs.is_empty() {
        return Err(Infeasibility {
            shortfall_mw: forecast_mw,
            reason: "no dispatchable resources online".into(),
        });
    }

    let sum_lo: f64 = idxs.iter().map(|&i| resources[i].p_min_mw).sum();
    let sum_hi: f64 = idxs.iter().map(|&i| resources[i].p_max_mw).sum();
    if forecast_mw > sum_hi + EPS {
        return Err(Infeasibility {
            shortfall_mw: forecast_mw - sum_hi,
            reason: format!(
                "demand {forecast_mw:.1} MW exceeds dispatchable capacity {sum_hi:.1} MW"
            ),
        });
    }
    if forecast_mw < sum_lo - EPS {
        return Err(Infeasibility {
            shortfall_mw: sum_lo - forecast_mw,
            reason: format!(
                "demand {forecast_mw:.1} MW below must-run minimum {sum_lo:.1} MW"
            ),
        });
    }

    let solved = match settings.reserve_rule {
        ReserveRule::FixedMw { mw } => solve_fixed(resources, &idxs, forecast_mw, None, mw)
            .map_err(|shortfall| Infeasibility {
                shortfall_mw: shortfall,
                reason: format!("cannot hold {mw:.1} MW of reserve"),
            }),
        ReserveRule::LargestInfeed | ReserveRule::LargestInfeedPlusMargin { .. } => {
            let margin = match settings.reserve_rule {
                ReserveRule::LargestInfeedPlusMargin { margin_mw } => margin_mw,
                _ => 0.0,
            };
            // fast path: the unconstrained merit order already carries it
            let mut units = build_units(resources, &idxs, None);
            lambda_dispatch(&mut units, forecast_mw);
            if free_capable(&units) + EPS >= requirement(settings.reserve_rule, &units) {
                Ok(units)
            } else {
                solve_largest_infeed(resources, &idxs, forecast_mw, margin)
            }
        }
    };
    let mut units = match solved {
        Ok(u) => u,
        Err(e) => return Err(e),
    };

    // exact balance: clear any float residue at the cheapest margin,
    // against the search cap first and physical room as a last resort
    let sum_p: f64 = units.iter().map(|u| u.p).sum();
    let mut residue = forecast_mw - sum_p;
    if residue.abs() >= 1e-12 {
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.sort_by(|&a, &b| {
            let ca = units[a].curve.marginal_at(units[a].p);
            let cb = units[b].curve.marginal_at(units[b].p);
            if residue > 0.0 {
                ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
            } else {
                cb.partial_cmp(&ca).unwrap().then(a.cmp(&b))
            }
        });
        for bound_phys in [false, true] {
            for &i in &order {
                if residue.abs() < 1e-12 {
                    break;
                }
                let u = &mut units[i];
                let hi = if bound_phys { u.hi_phys } else { u.hi };
                let new_p = (u.p + residue).clamp(u.lo, hi.max(u.lo));
                residue -= new_p - u.p;
                u.p = new_p;
            }
        }
    }

    // the residue nudge may have grazed the headroom of the largest unit; a
    // final shift pass against physical limits (the search cap has done its
    // job) restores free >= requirement at float scale
    for u in units.iter_mut() {
        u.hi = u.hi_phys;
    }
    let req_now = requirement(settings.reserve_rule, &units);
    shift_for_reserve(&mut units, req_now);

    // assign the reserve to the cheapest capable free capacity
    let req = requirement(settings.reserve_rule, &units);
    let mut order: Vec<usize> = (0..units.len()).filter(|&i| units[i].capable).collect();
    order.sort_by(|&a, &b| {
        let ca = units[a].curve.marginal_at(units[a].p);
        let cb = units[b].curve.marginal_at(units[b].p);
        ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
    });
    let mut reserved = vec![0.0; units.len()];
    let mut left = req;
    for i in order {
        if left <= EPS {
            break;
        }
        let room = (units[i].hi_phys - units[i].p).max(0.0);
        let take = room.min(left);
        reserved[i] = take;
        left -= take;
    }

    let entries = units
        .iter()
        .zip(&reserved)
        .map(|(u, r)| DispatchEntry {
            resource_idx: u.fleet_idx,
            id: resources[u.fleet_idx].id.clone(),
            target_mw: u.p,
            reserved_mw: *r,
        })
        .collect();
    Ok(DispatchSchedule {
        cleared_at_s,
        forecast_mw,
        requirement_mw: req,
        entries,
    })
}

fn build_units(resources: &[Resource], idxs: &[usize], cap: Option<f64>) -> Vec<Unit> {
    idxs.iter()
        .map(|&i| {
            let r = &resources[i];
            let hi = cap.map_or(r.p_max_mw, |m| r.p_max_mw.min(m)).max(r.p_min_mw);
            Unit {
                fleet_idx: i,
                lo: r.p_min_mw,
                hi,
                hi_phys: r.p_max_mw,
                capable: reserve_capable(r),
                curve: r.cost.clone(),
                p: r.p_min_mw,
            }
        })
        .collect()
}

/// Merit dispatch under an optional single-unit cap, then reserve shifting
/// against a fixed requirement. Err carries the shortfall MW.
fn solve_fixed(
    resources: &[Resource],
    idxs: &[usize],
    forecast_mw: f64,
    cap: Option<f64>,
    requirement_mw: f64,
) -> std::result::Result<Vec<Unit>, f64> {
    let mut units = build_units(resources, idxs, cap);
    let cap_hi: f64 = units.iter().map(|u| u.hi).sum();
    if forecast_mw > cap_hi + EPS {
        return Err(forecast_mw - cap_hi);
    }
    lambda_dispatch(&mut units, forecast_mw);
    let shortfall = shift_for_reserve(&mut units, requirement_mw);
    if shortfall > EPS {
        Err(shortfall)
    } else {
        Ok(units)
    }
}

/// Largest achievable reserve slack at a given single-unit cap: how much
/// free capable headroom can exceed `m_cap + margin` once the balance is
/// met. Negative means the cap is infeasible.
fn reserve_slack(
    resources: &[Resource],
    idxs: &[usize],
    forecast_mw: f64,
    margin_mw: f64,
    m_cap: f64,
) -> f64 {
    let mut s_nc_max = 0.0;
    let mut nc_lo = 0.0;
    let mut cap_lo = 0.0;
    let mut cap_hi_m = 0.0;
    let mut cap_hi_phys = 0.0;
    for &i in idxs {
        let r = &resources[i];
        if r.p_min_mw > m_cap + EPS {
            return f64::NEG_INFINITY;
        }
        if reserve_capable(r) {
            cap_lo += r.p_min_mw;
            cap_hi_m += r.p_max_mw.min(m_cap);
            cap_hi_phys += r.p_max_mw;
        } else {
            s_nc_max += r.p_max_mw.min(m_cap);
            nc_lo += r.p_min_mw;
        }
    }
    let carry_min = (forecast_mw - s_nc_max).max(cap_lo);
    let carry_max = (forecast_mw - nc_lo).min(cap_hi_m);
    if carry_min > carry_max + EPS {
        return f64::NEG_INFINITY;
    }
    cap_hi_phys - carry_min - (m_cap + margin_mw)
}

fn solve_largest_infeed(
    resources: &[Resource],
    idxs: &[usize],
    forecast_mw: f64,
    margin_mw: f64,
) -> std::result::Result<Vec<Unit>, Infeasibility> {
    let m_lo = idxs
        .iter()
        .map(|&i| resources[i].p_min_mw)
        .fold(0.0f64, f64::max);
    let m_hi = idxs
        .iter()
        .map(|&i| resources[i].p_max_mw)
        .fold(m_lo, f64::max);
    let slack = |m: f64| reserve_slack(resources, idxs, forecast_mw, margin_mw, m);

    // the slack is concave in the cap: ternary-search its maximum to find
    // the feasible cap interval, keeping the best evaluated point (the
    // maximum can sit exactly on the feasibility edge)
    let (mut a, mut b) = (m_lo, m_hi);
    let mut m_peak = m_lo;
    let mut peak = slack(m_lo);
    let mut note = |m: f64, s: f64| {
        if s > peak {
            peak = s;
            m_peak = m;
        }
    };
    note(m_hi, slack(m_hi));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        let (s1, s2) = (slack(m1), slack(m2));
        note(m1, s1);
        note(m2, s2);
        if s1 < s2 {
            a = m1;
        } else {
            b = m2;
        }
    }
    if peak < -EPS || peak == f64::NEG_INFINITY {
        return Err(Infeasibility {
            shortfall_mw: if peak.is_finite() { -peak } else { f64::NAN },
            reason: "reserve requirement cannot be met".into(),
        });
    }
    // the slack often sits exactly on zero across a plateau; the tolerance
    // keeps ulp noise from randomizing the boundary
    let feasible = |m: f64| slack(m) >= -1e-9;
    let bisect = |mut lo: f64, mut hi: f64, want_ok_at_hi: bool| -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) == want_ok_at_hi {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let m_a = if feasible(m_lo) { m_lo } else { bisect(m_lo, m_peak, true) };
    let m_b = if feasible(m_hi) { m_hi } else { bisect(m_peak, m_hi, false) };

    // dispatch cost is convex in the cap: ternary-search the minimum
    let cost_at = |m: f64| -> f64 {
        match solve_fixed(resources, idxs, forecast_mw, Some(m), m + margin_mw) {
            Ok(units) => total_cost(&units),
            Err(_) => f64::INFINITY,
        }
    };
    let (mut a, mut b) = (m_a, m_b);
    let mut m_best = m_peak;
    let mut best = cost_at(m_peak);
    let mut note = |m: f64, c: f64| {
        if c < best {
            best = c;
            m_best = m;
        }
    };
    note(m_a, cost_at(m_a));
    note(m_b, cost_at(m_b));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        let (c1, c2) = (cost_at(m1), cost_at(m2));
        note(m1, c1);
        note(m2, c2);
        if c1 < c2 {
            b = m2;
        } else {
            a = m1;
        }
    }
    solve_fixed(resources, idxs, forecast_mw, Some(m_best), m_best + margin_mw).map_err(|short| {
        Infeasibility {
            shortfall_mw: short,
            reason: "reserve requirement cannot be met".into(),
        }
    })
}

/// Delivered setpoints between two schedules: each target moves linearly
/// over `ramp_in_s` or at the resource ramp rate, whichever is slower, and
/// holds once reached. Entries align with `next`.
pub fn ramp_setpoints(
    previous: &DispatchSchedule,
    next: &DispatchSchedule,
    t_within_interval_s: f64,
    settings: &MarketSettings,
    resources: &[Resource],
) -> Vec<f64> {
    let t = t_within_interval_s.max(0.0);
    next.entries
        .iter()
        .map(|e| {
            let from = previous.target_of(e.resource_idx).unwrap_or(e.target_mw);
            let delta = e.target_mw - from;
            if delta == 0.0 {
                return e.target_mw;
            }
            let rate = resources[e.resource_idx].ramp_rate_mw_per_min / 60.0;
            let nominal = delta.abs() * (t / settings.ramp_in_s).min(1.0);
            from + delta.signum() * nominal.min(rate * t).min(delta.abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Resource, ResourceKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(id: &str, cap: f64, cost: f64) -> Resource {
        let mut r = Resource::new(id, ResourceKind::SyncGen, 0.0, cap, cap);
        r.cost = CostCurve::flat(cost);
        r
    }

    fn settings(rule: ReserveRule) -> MarketSettings {
        MarketSettings {
            reserve_rule: rule,
            ..MarketSettings::default()
        }
    }

    #[test]
    fn forecast_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            forecast_demand(7000.0, ForecastModel::Perfect, &mut rng).unwrap(),
            7000.0
        );
        let biased =
            forecast_demand(7000.0, ForecastModel::Bias { offset_pct: 2.0 }, &mut rng).unwrap();
        assert!((biased - 7140.0).abs() < 1e-9);
        assert!(forecast_demand(-1.0, ForecastModel::Perfect, &mut rng).is_err());
    }

    #[test]
    fn gaussian_forecast_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                forecast_demand(7000.0, ForecastModel::Gaussian { sigma_pct: 1.0 }, &mut rng)
                    .unwrap()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 7000.0).abs() / 7000.0 < 0.0005, "mean {mean}");
    }

    #[test]
    fn single_unit_clears() {
        let fleet = vec![unit("g", 1000.0, 10.0)];
        let s = settings(ReserveRule::FixedMw { mw: 0.0 });
        let sched = clear_market(600.0, &fleet, &s, 0.0).unwrap();
        assert_eq!(sched.entries.len(), 1);
        assert!((sched.entries[0].target_mw - 600.0).abs() < 1e-9);
    }

    #[test]
    fn merit_order_with_reserve() {
        let fleet = vec![
            unit("a", 500.0, 10.0),
            unit("b", 500.0, 20.0),
            unit("c", 500.0, 30.0),
        ];
        let s = settings(ReserveRule::FixedMw { mw: 100.0 });
        let sched = clear_market(800.0, &fleet, &s, 0.0).unwrap();
        let t: Vec<f64> = sched.entries.iter().map(|e| e.target_mw).collect();
        assert!((t[0] - 500.0).abs() < 1e-6);
        assert!((t[1] - 300.0).abs() < 1e-6);
        assert!((t[2] - 0.0).abs() < 1e-6);
        assert!((sched.total_target_mw() - 800.0).abs() < 1e-6);
        assert!(sched.total_reserved_mw() >= 100.0 - 1e-6);
        // cheapest capable free capacity carries the reserve
        assert!((sched.entries[1].reserved_mw - 100.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_demand_names_shortfall() {
        let fleet = vec![unit("a", 500.0, 10.0)];
        let s = settings(ReserveRule::FixedMw { mw: 0.0 });
        let err = clear_market(800.0, &fleet, &s, 0.0).unwrap_err();
        assert!((err.shortfall_mw - 300.0).abs() < 1e-9);
    }

    #[test]
    fn largest_infeed_requirement_tracks_biggest_unit() {
        let fleet = vec![unit("a", 500.0, 10.0), unit("b", 500.0, 20.0)];
        let s = settings(ReserveRule::LargestInfeed);
        let sched = clear_market(600.0, &fleet, &s, 0.0).unwrap();
        let largest = sched
            .entries
            .iter()
            .map(|e| e.target_mw)
            .fold(0.0f64, f64::max);
        assert!(sched.requirement_mw >= largest - 1e-9);
        assert!(sched.total_reserved_mw() >= sched.requirement_mw - 1e-6);
    }

    #[test]
    fn largest_infeed_caps_when_tight() {
        // 500/300/300 at costs 1/2/3, demand 650: uncapped merit leaves
        // free 450 < largest 500; capping the big unit at 450 is optimal.
        let fleet = vec![
            unit("a", 500.0, 1.0),
            unit("b", 300.0, 2.0),
            unit("c", 300.0, 3.0),
        ];
        let s = settings(ReserveRule::LargestInfeed);
        let sched = clear_market(650.0, &fleet, &s, 0.0).unwrap();
        let t: Vec<f64> = sched.entries.iter().map(|e| e.target_mw).collect();
        assert!((t[0] - 450.0).abs() < 1e-6, "targets {t:?}");
        assert!((t[1] - 200.0).abs() < 1e-6, "targets {t:?}");
        assert!((sched.total_target_mw() - 650.0).abs() < 1e-6);
        assert!(sched.total_reserved_mw() >= 450.0 - 1e-6);
    }

    #[test]
    fn shift_to_noncapable_when_reserve_short() {
        // capable 1000 MW at 10, non-capable 500 MW at 30; demand 1200 and
        // fixed 300 MW reserve force 300 MW onto the expensive unit.
        let mut wind = unit("w", 500.0, 30.0);
        wind.downward_only = true;
        let fleet = vec![unit("a", 1000.0, 10.0), wind];
        let s = settings(ReserveRule::FixedMw { mw: 300.0 });
        let sched = clear_market(1200.0, &fleet, &s, 0.0).unwrap();
        let t: Vec<f64> = sched.entries.iter().map(|e| e.target_mw).collect();
        assert!((t[0] - 700.0).abs() < 1e-6, "targets {t:?}");
        assert!((t[1] - 500.0).abs() < 1e-6, "targets {t:?}");
        assert!((sched.entries[0].reserved_mw - 300.0).abs() < 1e-6);
    }

    #[test]
    fn piecewise_linear_curves_split_dispatch() {
        // identical units with rising marginal cost share the load equally
        let mut a = unit("a", 400.0, 0.0);
        a.cost = CostCurve { points: vec![(0.0, 10.0), (400.0, 30.0)] };
        let mut b = a.clone();
        b.id = "b".into();
        let fleet = vec![a, b];
        let s = settings(ReserveRule::FixedMw { mw: 0.0 });
        let sched = clear_market(400.0, &fleet, &s, 0.0).unwrap();
        let t: Vec<f64> = sched.entries.iter().map(|e| e.target_mw).collect();
        assert!((t[0] - 200.0).abs() < 1e-3, "targets {t:?}");
        assert!((t[1] - 200.0).abs() < 1e-3, "targets {t:?}");
    }

    #[test]
    fn ramp_setpoints_boundaries_and_rate() {
        let fleet = vec![unit("a", 1000.0, 10.0)];
        let s = settings(ReserveRule::FixedMw { mw: 0.0 });
        let prev = clear_market(400.0, &fleet, &s, 0.0).unwrap();
        let next = clear_market(600.0, &fleet, &s, 300.0).unwrap();
        let at = |t: f64| ramp_setpoints(&prev, &next, t, &s, &fleet)[0];
        assert!((at(0.0) - 400.0).abs() < 1e-9);
        assert!((at(150.0) - 500.0).abs() < 1e-6);
        assert!((at(300.0) - 600.0).abs() < 1e-6);
        assert!((at(400.0) - 600.0).abs() < 1e-6);

        // rate-limited: 300 MW change at 30 MW/min reaches 150 MW in 5 min
        let mut slow = unit("a", 1000.0, 10.0);
        slow.ramp_rate_mw_per_min = 30.0;
        let fleet = vec![slow];
        let prev = clear_market(300.0, &fleet, &s, 0.0).unwrap();
        let next = clear_market(600.0, &fleet, &s, 300.0).unwrap();
        let v = ramp_setpoints(&prev, &next, 300.0, &s, &fleet)[0];
        assert!((v - 450.0).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn tripped_units_are_not_dispatched() {
        let mut a = unit("a", 500.0, 10.0);
        a.online = false;
        let fleet = vec![a, unit("b", 500.0, 20.0)];
        let s = settings(ReserveRule::FixedMw { mw: 0.0 });
        let sched = clear_market(400.0, &fleet, &s, 0.0).unwrap();
        assert_eq!(sched.entries.len(), 1);
        assert_eq!(sched.entries[0].id, "b");
    }
}
