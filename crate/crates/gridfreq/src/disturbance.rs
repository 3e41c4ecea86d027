//! Seeded load perturbations: Ornstein–Uhlenbeck noise, scheduled daily
//! ramps, Poisson-arriving step jumps and contingency trips.
//!
//! Each disturbance type draws from its own stream of the master seed, so
//! toggling one does not perturb another's sequence, and identical
//! config + seed yields a bit-identical trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RNG stream ids derived from the master seed.
pub const STREAM_OU: u64 = 1;
pub const STREAM_JUMPS: u64 = 2;
pub const STREAM_FORECAST: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean-reverting load noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean-reversion rate (1/s).
    pub theta_per_s: f64,
    /// Volatility (MW/√s).
    pub sigma_mw_sqrt_s: f64,
    /// Long-run mean (MW).
    pub mu_mw: f64,
}

impl OuParams {
    /// Parameters whose stationary standard deviation is `sigma_stat_mw`:
    /// sigma = sigma_stat·√(2θ).
    pub fn from_stationary_std(sigma_stat_mw: f64, theta_per_s: f64) -> Self {
        OuParams {
            theta_per_s,
            sigma_mw_sqrt_s: sigma_stat_mw * (2.0 * theta_per_s).sqrt(),
            mu_mw: 0.0,
        }
    }

    /// Stationary standard deviation sigma/√(2θ) (MW).
    pub fn stationary_std_mw(&self) -> f64 {
        self.sigma_mw_sqrt_s / (2.0 * self.theta_per_s).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_per_s <= 0.0 {
            return Err(Error::config("ou: theta must be > 0"));
        }
        if self.sigma_mw_sqrt_s < 0.0 {
            return Err(Error::config("ou: sigma must be >= 0"));
        }
        Ok(())
    }
}

/// One Euler–Maruyama step of the OU process:
/// x' = x + θ·(μ − x)·dt + σ·√dt·z, z ~ N(0, 1).
pub fn ou_step<R: Rng>(x_mw: f64, params: &OuParams, dt_s: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    x_mw + params.theta_per_s * (params.mu_mw - x_mw) * dt_s
        + params.sigma_mw_sqrt_s * dt_s.sqrt() * z
}

/// A scheduled load ramp: linear change of `magnitude_mw` over `duration_s`
/// starting at `start_s`, held afterwards (load level shifts persist).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampEvent {
    pub start_s: f64,
    pub magnitude_mw: f64,
    pub duration_s: f64,
}

/// Sum of all ramp contributions at time `t` (MW). Overlapping ramps add.
pub fn ramp_value(t_s: f64, ramps: &[RampEvent]) -> f64 {
    ramps
        .iter()
        .map(|r| {
            if t_s <= r.start_s {
                0.0
            } else if t_s >= r.start_s + r.duration_s {
                r.magnitude_mw
            } else {
                r.magnitude_mw * (t_s - r.start_s) / r.duration_s
            }
        })
        .sum()
}

/// Stochastic jump process: Poisson arrivals, each applying a ±magnitude
/// step (sign equiprobable) that reverts after `duration_s`. Overlaps sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    pub magnitude_mw: f64,
    pub rate_per_hour: f64,
    pub duration_s: f64,
}

impl JumpParams {
    pub fn validate(&self) -> Result<()> {
        if self.rate_per_hour < 0.0 {
            return Err(Error::config("jumps: rate must be >= 0"));
        }
        if self.duration_s <= 0.0 {
            return Err(Error::config("jumps: duration must be > 0"));
        }
        Ok(())
    }
}

/// Stateful jump sampler. One Bernoulli arrival draw per step keeps the RNG
/// consumption independent of the arrival history.
#[derive(Debug, Clone)]
pub struct JumpProcess {
    params: JumpParams,
    rng: ChaCha8Rng,
    active: Vec<(f64, f64)>, // (expiry time, signed MW)
    pub arrivals: u64,
}

impl JumpProcess {
    pub fn new(params: JumpParams, seed: u64) -> Self {
        JumpProcess {
            params,
            rng: stream_rng(seed, STREAM_JUMPS),
            active: Vec::new(),
            arrivals: 0,
        }
    }

    /// Advances by `dt` and returns the active jump offset (MW) for the step
    /// starting at `t_s`.
    pub fn step(&mut self, t_s: f64, dt_s: f64) -> f64 {
        let p_arrival = self.params.rate_per_hour * dt_s / 3600.0;
        let u: f64 = self.rng.gen();
        let sign_draw: f64 = self.rng.gen();
        if u < p_arrival && self.params.magnitude_mw != 0.0 {
            let sign = if sign_draw < 0.5 { 1.0 } else { -1.0 };
            self.active
                .push((t_s + self.params.duration_s, sign * self.params.magnitude_mw));
            self.arrivals += 1;
        }
        self.active.retain(|(expiry, _)| *expiry > t_s);
        self.active.iter().map(|(_, mw)| mw).sum()
    }
}

/// Scheduled loss of a resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripEvent {
    pub time_s: f64,
    pub resource_id: String,
}

/// Additive decomposition of the load disturbance at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSample {
    pub t_s: f64,
    pub ou_mw: f64,
    pub ramp_mw: f64,
    pub jump_mw: f64,
    pub total_mw: f64,
}

/// All continuous disturbance state of one run (trips are handled by the
/// scenario loop).
#[derive(Debug, Clone)]
pub struct DisturbanceState {
    pub ou_params: OuParams,
    pub ramps: Vec<RampEvent>,
    ou_rng: ChaCha8Rng,
    ou_mw: f64,
    jumps: JumpProcess,
}

impl DisturbanceState {
    pub fn new(ou: OuParams, ramps: Vec<RampEvent>, jumps: JumpParams, seed: u64) -> Self {
        let ou_mw = ou.mu_mw;
        DisturbanceState {
            ou_params: ou,
            ramps,
            ou_rng: stream_rng(seed, STREAM_OU),
            ou_mw,
            jumps: JumpProcess::new(jumps, seed),
        }
    }

    /// Samples all components for the step starting at `t_s`. The OU and
    /// jump values are held constant across the step; ramps are evaluated
    /// continuously by the integrator.
    pub fn step(&mut self, t_s: f64, dt_s: f64) -> DisturbanceSample {
        self.ou_mw = ou_step(self.ou_mw, &self.ou_params, dt_s, &mut self.ou_rng);
        let jump_mw = self.jumps.step(t_s, dt_s);
        let ramp_mw = ramp_value(t_s, &self.ramps);
        DisturbanceSample {
            t_s,
            ou_mw: self.ou_mw,
            ramp_mw,
            jump_mw,
            total_mw: self.ou_mw + ramp_mw + jump_mw,
        }
    }

    pub fn jump_arrivals(&self) -> u64 {
        self.jumps.arrivals
    }
}
