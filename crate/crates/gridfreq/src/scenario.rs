//! Scenario definition: the TOML-facing schema, validation/resolution into
//! runtime form, and the four shipped presets.

use serde::{Deserialize, Serialize};

use crate::agc::AgcSettings;
use crate::disturbance::{JumpParams, OuParams, RampEvent, TripEvent};
use crate::error::{Error, Result};
use crate::grid::{Resource, ResourceKind, SystemParams};
use crate::market::{CostCurve, MarketSettings, ReserveRule};
use crate::pfc::{DeadbandMode, PfcSettings};

/// The four shipped scenario presets.
pub const PRESET_NAMES: [&str; 4] = ["s1-conv-agc", "s2-conv-agc-pfc", "s3-conv-pfc", "s4-ibr"];

/// A complete, serializable scenario description. This is both the on-disk
/// config format and the run echo: serializing a parsed spec reproduces the
/// run bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Base system demand (MW) around which disturbances act.
    pub demand_mw: f64,
    /// Emit every Nth integration step to the trace CSV (10 ms steps, so 10
    /// keeps 100 ms resolution). Metrics always use the full stream.
    #[serde(default = "default_trace_every")]
    pub trace_every_steps: usize,
    #[serde(default)]
    pub system: SystemParams,
    #[serde(default)]
    pub agc: AgcSettings,
    #[serde(default)]
    pub market: MarketSettings,
    #[serde(default)]
    pub disturbances: DisturbanceSpec,
    /// Operator deadband switches applied mid-run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pfc_switches: Vec<PfcSwitchEvent>,
    pub resources: Vec<ResourceSpec>,
}

fn default_duration() -> f64 {
    86_400.0
}

fn default_seed() -> u64 {
    1
}

fn default_trace_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ou: Option<OuSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ramps: Vec<RampSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trips: Vec<TripEvent>,
}

/// OU noise sized either directly (MW/√s) or via its stationary standard
/// deviation, absolute or as % of demand. Exactly one sizing field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuSpec {
    pub theta_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_mw_sqrt_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_stat_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_stat_pct: Option<f64>,
    #[serde(default)]
    pub mu_mw: f64,
}

impl OuSpec {
    fn resolve(&self, demand_mw: f64) -> Result<OuParams> {
        let given = [
            self.sigma_mw_sqrt_s.is_some(),
            self.sigma_stat_mw.is_some(),
            self.sigma_stat_pct.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if given != 1 {
            return Err(Error::config(
                "ou: give exactly one of sigma_mw_sqrt_s / sigma_stat_mw / sigma_stat_pct",
            ));
        }
        let params = if let Some(s) = self.sigma_mw_sqrt_s {
            OuParams { theta_per_s: self.theta_per_s, sigma_mw_sqrt_s: s, mu_mw: self.mu_mw }
        } else {
            let stat = self
                .sigma_stat_mw
                .unwrap_or_else(|| self.sigma_stat_pct.unwrap() / 100.0 * demand_mw);
            let mut p = OuParams::from_stationary_std(stat, self.theta_per_s);
            p.mu_mw = self.mu_mw;
            p
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSpec {
    pub start_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_mw: Option<f64>,
    pub duration_s: f64,
}

impl RampSpec {
    fn resolve(&self, demand_mw: f64) -> Result<RampEvent> {
        if self.duration_s <= 0.0 {
            return Err(Error::config("ramp: duration_s must be > 0"));
        }
        let magnitude_mw = match (self.magnitude_pct, self.magnitude_mw) {
            (Some(pct), None) => pct / 100.0 * demand_mw,
            (None, Some(mw)) => mw,
            _ => {
                return Err(Error::config(
                    "ramp: give exactly one of magnitude_pct / magnitude_mw",
                ))
            }
        };
        Ok(RampEvent { start_s: self.start_s, magnitude_mw, duration_s: self.duration_s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_mw: Option<f64>,
    pub rate_per_hour: f64,
    pub duration_s: f64,
}

impl JumpSpec {
    fn resolve(&self, demand_mw: f64) -> Result<JumpParams> {
        let magnitude_mw = match (self.magnitude_pct, self.magnitude_mw) {
            (Some(pct), None) => pct / 100.0 * demand_mw,
            (None, Some(mw)) => mw,
            _ => {
                return Err(Error::config(
                    "jumps: give exactly one of magnitude_pct / magnitude_mw",
                ))
            }
        };
        let params = JumpParams {
            magnitude_mw,
            rate_per_hour: self.rate_per_hour,
            duration_s: self.duration_s,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfcSwitchEvent {
    pub time_s: f64,
    pub resource_id: String,
    pub mode: DeadbandMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub id: String,
    pub kind: ResourceKind,
    #[serde(default)]
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_mva: Option<f64>,
    #[serde(default)]
    pub inertia_h_s: f64,
    /// Initial setpoint; overwritten by the first market clearing when the
    /// market dispatches this resource.
    #[serde(default)]
    pub p_set_mw: f64,
    /// Defaults to pfc.fat_s / 3 so ~95% of the response arrives within the
    /// full activation time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_resp_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_rate_mw_per_min: Option<f64>,
    /// Defaults to true for wind/solar (not pre-curtailed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downward_only: Option<bool>,
    /// Defaults to true except for storage and loads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_participant: Option<bool>,
    /// Marginal cost breakpoints (MW, currency/MWh).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pfc: Option<PfcSettings>,
}

impl ResourceSpec {
    fn resolve(&self) -> Result<Resource> {
        let pfc = self.pfc.clone().unwrap_or_else(PfcSettings::disabled);
        let mut r = Resource::new(
            &self.id,
            self.kind,
            self.p_min_mw,
            self.p_max_mw,
            self.rating_mva.unwrap_or(self.p_max_mw),
        );
        r.inertia_h_s = self.inertia_h_s;
        r.p_set_mw = self.p_set_mw;
        r.p_out_mw = self.p_set_mw;
        r.tau_resp_s = self.tau_resp_s.unwrap_or(pfc.fat_s / 3.0);
        if let Some(rate) = self.ramp_rate_mw_per_min {
            r.ramp_rate_mw_per_min = rate;
        }
        r.downward_only = self.downward_only.unwrap_or_else(|| self.kind.is_res());
        r.market_participant = self
            .market_participant
            .unwrap_or(!matches!(self.kind, ResourceKind::Bess | ResourceKind::Load));
        if let Some(points) = &self.cost {
            r.cost = CostCurve { points: points.clone() };
        }
        r.pfc = pfc;
        r.validate()?;
        Ok(r)
    }
}

/// Fully resolved runtime scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    pub demand_mw: f64,
    pub trace_every_steps: usize,
    pub params: SystemParams,
    pub fleet: Vec<Resource>,
    pub agc: AgcSettings,
    pub market: MarketSettings,
    pub ou: Option<OuParams>,
    pub ramps: Vec<RampEvent>,
    pub jumps: Option<JumpParams>,
    pub trips: Vec<TripEvent>,
    pub pfc_switches: Vec<PfcSwitchEvent>,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("scenario parse: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario specs are always serializable")
    }

    pub fn resolve(&self) -> Result<Scenario> {
        if self.duration_s <= 0.0 {
            return Err(Error::config("duration_s must be > 0"));
        }
        if self.demand_mw <= 0.0 {
            return Err(Error::config("demand_mw must be > 0"));
        }
        if self.trace_every_steps == 0 {
            return Err(Error::config("trace_every_steps must be >= 1"));
        }
        self.system.validate()?;
        self.agc.validate()?;
        self.market.validate()?;
        if self.agc.enabled && self.agc.cycle_s < self.system.dt_s {
            return Err(Error::config("agc: cycle_s must be >= dt_s"));
        }

        let mut fleet = Vec::with_capacity(self.resources.len());
        for spec in &self.resources {
            if fleet.iter().any(|r: &Resource| r.id == spec.id) {
                return Err(Error::config(format!("duplicate resource id '{}'", spec.id)));
            }
            fleet.push(spec.resolve()?);
        }
        if fleet.is_empty() {
            return Err(Error::config("scenario needs at least one resource"));
        }

        let find = |id: &str, what: &str| -> Result<()> {
            if fleet.iter().any(|r| r.id == id) {
                Ok(())
            } else {
                Err(Error::config(format!("{what} references unknown resource '{id}'")))
            }
        };
        for t in &self.disturbances.trips {
            find(&t.resource_id, "trip")?;
        }
        for s in &self.pfc_switches {
            find(&s.resource_id, "pfc switch")?;
        }
        for (id, _) in &self.agc.participation {
            find(id, "agc participation")?;
        }

        let ou = self
            .disturbances
            .ou
            .as_ref()
            .map(|o| o.resolve(self.demand_mw))
            .transpose()?;
        let ramps = self
            .disturbances
            .ramps
            .iter()
            .map(|r| r.resolve(self.demand_mw))
            .collect::<Result<Vec<_>>>()?;
        let jumps = self
            .disturbances
            .jumps
            .as_ref()
            .map(|j| j.resolve(self.demand_mw))
            .transpose()?;

        let mut trips = self.disturbances.trips.clone();
        trips.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).unwrap());
        let mut switches = self.pfc_switches.clone();
        switches.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).unwrap());

        Ok(Scenario {
            name: self.name.clone(),
            duration_s: self.duration_s,
            seed: self.seed,
            demand_mw: self.demand_mw,
            trace_every_steps: self.trace_every_steps,
            params: self.system.clone(),
            fleet,
            agc: self.agc.clone(),
            market: self.market.clone(),
            ou,
            ramps,
            jumps,
            trips,
            pfc_switches: switches,
        })
    }
}

/// Returns a shipped preset by name, if it exists.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name {
        "s1-conv-agc" => Some(preset_s1()),
        "s2-conv-agc-pfc" => Some(preset_s2()),
        "s3-conv-pfc" => Some(preset_s3()),
        "s4-ibr" => Some(preset_s4()),
        _ => None,
    }
}

fn sync_gen(idx: usize, cost: f64) -> ResourceSpec {
    // conventional unit: slow governor with the wide mandatory deadband
    ResourceSpec {
        id: format!("sg{idx}"),
        kind: ResourceKind::SyncGen,
        p_min_mw: 150.0,
        p_max_mw: 1600.0,
        rating_mva: Some(1700.0),
        inertia_h_s: 4.5,
        p_set_mw: 150.0,
        tau_resp_s: None,
        ramp_rate_mw_per_min: Some(20.0),
        downward_only: None,
        market_participant: None,
        cost: Some(vec![(0.0, cost), (1600.0, cost + 4.0)]),
        pfc: Some(PfcSettings::droop(200.0, 5.0, 30.0)),
    }
}

fn gfm_converter(idx: usize, cost: f64) -> ResourceSpec {
    ResourceSpec {
        id: format!("gfm{idx}"),
        kind: ResourceKind::GfmConverter,
        p_min_mw: 150.0,
        p_max_mw: 1600.0,
        rating_mva: Some(1700.0),
        inertia_h_s: 2.0,
        p_set_mw: 150.0,
        tau_resp_s: None,
        ramp_rate_mw_per_min: Some(6000.0),
        downward_only: None,
        market_participant: None,
        cost: Some(vec![(0.0, cost), (1600.0, cost + 4.0)]),
        pfc: Some(PfcSettings::droop(15.0, 2.0, 0.3)),
    }
}

fn wind_plant(idx: usize, pfc_enabled: bool) -> ResourceSpec {
    let mut pfc = PfcSettings::droop(15.0, 3.0, 2.0);
    pfc.enabled = pfc_enabled;
    // semi-scheduled and pre-curtailed by 10%: the withheld 70 MW is what
    // the plant can deliver upward through PFC
    ResourceSpec {
        id: format!("w{idx}"),
        kind: ResourceKind::WindPlant,
        p_min_mw: 0.0,
        p_max_mw: 700.0,
        rating_mva: Some(750.0),
        inertia_h_s: 0.0,
        p_set_mw: 630.0,
        tau_resp_s: None,
        ramp_rate_mw_per_min: Some(2100.0),
        downward_only: Some(false),
        market_participant: Some(false),
        cost: Some(vec![(0.0, 0.0)]),
        pfc: Some(pfc),
    }
}

fn bess(idx: usize) -> ResourceSpec {
    ResourceSpec {
        id: format!("b{idx}"),
        kind: ResourceKind::Bess,
        p_min_mw: -150.0,
        p_max_mw: 150.0,
        rating_mva: Some(150.0),
        inertia_h_s: 0.0,
        p_set_mw: 0.0,
        tau_resp_s: None,
        ramp_rate_mw_per_min: Some(9_000.0),
        downward_only: None,
        market_participant: Some(false),
        cost: Some(vec![(0.0, 150.0)]),
        pfc: Some(PfcSettings::droop(15.0, 1.7, 1.0)),
    }
}

fn hvdc() -> ResourceSpec {
    ResourceSpec {
        id: "h1".into(),
        kind: ResourceKind::HvdcLink,
        p_min_mw: 0.0,
        p_max_mw: 500.0,
        rating_mva: Some(500.0),
        inertia_h_s: 0.0,
        p_set_mw: 0.0,
        tau_resp_s: None,
        ramp_rate_mw_per_min: Some(3000.0),
        downward_only: None,
        market_participant: None,
        cost: Some(vec![(0.0, 40.0)]),
        pfc: Some(PfcSettings::droop(15.0, 4.0, 1.5)),
    }
}

fn desk_fleet(wind_pfc: bool) -> Vec<ResourceSpec> {
    vec![
        sync_gen(1, 20.0),
        sync_gen(2, 22.0),
        sync_gen(3, 24.0),
        sync_gen(4, 26.0),
        wind_plant(1, wind_pfc),
        wind_plant(2, wind_pfc),
        wind_plant(3, wind_pfc),
        bess(1),
        bess(2),
        hvdc(),
    ]
}

fn base_disturbances() -> DisturbanceSpec {
    DisturbanceSpec {
        ou: Some(OuSpec {
            theta_per_s: 1.0 / 20.0,
            sigma_mw_sqrt_s: None,
            sigma_stat_mw: None,
            // stationary ±3σ band spans 10% of demand
            sigma_stat_pct: Some(10.0 / 6.0),
            mu_mw: 0.0,
        }),
        ramps: vec![
            // morning pickup, midday PV injection, evening peak
            RampSpec { start_s: 25_200.0, magnitude_pct: Some(5.0), magnitude_mw: None, duration_s: 300.0 },
            RampSpec { start_s: 43_200.0, magnitude_pct: Some(-5.0), magnitude_mw: None, duration_s: 300.0 },
            RampSpec { start_s: 64_800.0, magnitude_pct: Some(5.0), magnitude_mw: None, duration_s: 300.0 },
        ],
        jumps: Some(JumpSpec {
            magnitude_pct: Some(2.5),
            magnitude_mw: None,
            rate_per_hour: 4.0,
            duration_s: 60.0,
        }),
        trips: Vec::new(),
    }
}

fn base_spec(name: &str, wind_pfc: bool, agc_enabled: bool) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        duration_s: 86_400.0,
        seed: 1,
        demand_mw: 7000.0,
        trace_every_steps: 10,
        system: SystemParams::default(),
        agc: AgcSettings {
            enabled: agc_enabled,
            k0: 10.0,
            cycle_s: 2.0,
            bias_mw_per_hz: None,
            output_limit_mw: 150.0,
            participation: Vec::new(),
        },
        // each preset resource aggregates several physical units, so the
        // credible single infeed loss is a 500 MW unit, not a whole block
        market: MarketSettings {
            reserve_rule: ReserveRule::FixedMw { mw: 500.0 },
            ..MarketSettings::default()
        },
        disturbances: base_disturbances(),
        pfc_switches: Vec::new(),
        resources: desk_fleet(wind_pfc),
    }
}

/// Conventional operation with AGC.
fn preset_s1() -> ScenarioSpec {
    base_spec("s1-conv-agc", false, true)
}

/// Conventional + AGC, plus wind PFC at ±15 mHz.
fn preset_s2() -> ScenarioSpec {
    base_spec("s2-conv-agc-pfc", true, true)
}

/// Wind PFC without AGC.
fn preset_s3() -> ScenarioSpec {
    base_spec("s3-conv-pfc", true, false)
}

/// Synchronous machines replaced by grid-forming converters; no AGC.
fn preset_s4() -> ScenarioSpec {
    let mut spec = base_spec("s4-ibr", true, false);
    spec.resources = vec![
        gfm_converter(1, 20.0),
        gfm_converter(2, 22.0),
        gfm_converter(3, 24.0),
        gfm_converter(4, 26.0),
        wind_plant(1, true),
        wind_plant(2, true),
        wind_plant(3, true),
        bess(1),
        bess(2),
        hvdc(),
    ];
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESET_NAMES {
            let spec = preset(name).unwrap();
            assert_eq!(spec.name, name);
            let scenario = spec.resolve().unwrap();
            assert_eq!(scenario.fleet.len(), 10);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = preset("s2-conv-agc-pfc").unwrap();
        let text = spec.to_toml();
        let back = ScenarioSpec::from_toml(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn preset_pairs_differ_only_in_the_documented_flag() {
        let v = |name: &str| toml::Value::try_from(preset(name).unwrap()).unwrap();
        let diffs = |a: &toml::Value, b: &toml::Value| {
            let mut paths = Vec::new();
            diff_values("", a, b, &mut paths);
            paths
        };
        // s2 vs s3: only the AGC flag and the name
        let d = diffs(&v("s2-conv-agc-pfc"), &v("s3-conv-pfc"));
        assert_eq!(d, vec!["agc.enabled".to_string(), "name".to_string()]);
        // s1 vs s2: only wind PFC enablement and the name
        let d = diffs(&v("s1-conv-agc"), &v("s2-conv-agc-pfc"));
        assert_eq!(
            d,
            vec![
                "name".to_string(),
                "resources.4.pfc.enabled".to_string(),
                "resources.5.pfc.enabled".to_string(),
                "resources.6.pfc.enabled".to_string(),
            ]
        );
    }

    fn diff_values(path: &str, a: &toml::Value, b: &toml::Value, out: &mut Vec<String>) {
        use toml::Value;
        match (a, b) {
            (Value::Table(ta), Value::Table(tb)) => {
                let keys: std::collections::BTreeSet<_> =
                    ta.keys().chain(tb.keys()).cloned().collect();
                for k in keys {
                    let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    match (ta.get(&k), tb.get(&k)) {
                        (Some(x), Some(y)) => diff_values(&sub, x, y, out),
                        _ => out.push(sub),
                    }
                }
            }
            (Value::Array(xa), Value::Array(xb)) if xa.len() == xb.len() => {
                for (i, (x, y)) in xa.iter().zip(xb).enumerate() {
                    diff_values(&format!("{path}.{i}"), x, y, out);
                }
            }
            _ => {
                if a != b {
                    out.push(path.to_string());
                }
            }
        }
    }

    #[test]
    fn validation_catches_bad_references() {
        let mut spec = preset("s3-conv-pfc").unwrap();
        spec.disturbances.trips.push(TripEvent { time_s: 10.0, resource_id: "ghost".into() });
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn ou_sizing_requires_exactly_one_field() {
        let mut spec = preset("s3-conv-pfc").unwrap();
        let ou = spec.disturbances.ou.as_mut().unwrap();
        ou.sigma_stat_mw = Some(100.0); // now two sizing fields
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn res_defaults_to_downward_only() {
        let spec = ResourceSpec {
            id: "w".into(),
            kind: ResourceKind::WindPlant,
            p_min_mw: 0.0,
            p_max_mw: 100.0,
            rating_mva: None,
            inertia_h_s: 0.0,
            p_set_mw: 0.0,
            tau_resp_s: None,
            ramp_rate_mw_per_min: None,
            downward_only: None,
            market_participant: None,
            cost: None,
            pfc: None,
        };
        let r = spec.resolve().unwrap();
        assert!(r.downward_only);
        assert!(r.market_participant);
    }
}
