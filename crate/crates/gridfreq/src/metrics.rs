//! Frequency-quality statistics over uniformly sampled deviation traces:
//! standard deviation, out-of-range percentages, distribution shape,
//! extremes, recovery times and accumulated time error.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dwell window a trace must stay in-band before an excursion counts as
/// recovered.
pub const RECOVERY_DWELL_S: f64 = 5.0;
/// Histogram bin width (mHz) and half-range (mHz).
pub const HISTOGRAM_BIN_MHZ: f64 = 5.0;
pub const HISTOGRAM_RANGE_MHZ: f64 = 500.0;

/// A uniformly sampled frequency-deviation trace (mHz).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    t0_s: f64,
    dt_s: f64,
    values_mhz: Vec<f64>,
}

impl FrequencyTrace {
    pub fn new(t0_s: f64, dt_s: f64, values_mhz: Vec<f64>) -> Result<Self> {
        if dt_s <= 0.0 {
            return Err(Error::config("trace: dt must be > 0"));
        }
        if values_mhz.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("trace: non-finite sample"));
        }
        Ok(FrequencyTrace { t0_s, dt_s, values_mhz })
    }

    /// Reads a two-column CSV (t_s, delta_f_mhz) with a header line.
    /// Sampling must be uniform.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (t, v) = match (cols.next(), cols.next()) {
                (Some(t), Some(v)) => (t, v),
                _ => {
                    return Err(Error::config(format!(
                        "{}: line {} needs two columns",
                        path.display(),
                        lineno + 1
                    )))
                }
            };
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::config(format!(
                        "{}: line {}: bad {what} '{s}'",
                        path.display(),
                        lineno + 1
                    ))
                })
            };
            times.push(parse(t, "time")?);
            values.push(parse(v, "deviation")?);
        }
        if times.len() < 2 {
            return Err(Error::config(format!(
                "{}: need at least two samples",
                path.display()
            )));
        }
        let dt = times[1] - times[0];
        if dt <= 0.0 {
            return Err(Error::config(format!(
                "{}: non-increasing time column",
                path.display()
            )));
        }
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::config(format!(
                    "{}: sampling is not uniform (dt {} vs {})",
                    path.display(),
                    w[1] - w[0],
                    dt
                )));
            }
        }
        FrequencyTrace::new(times[0], dt, values)
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn len(&self) -> usize {
        self.values_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_mhz.is_empty()
    }

    pub fn values_mhz(&self) -> &[f64] {
        &self.values_mhz
    }

    fn time_at(&self, idx: usize) -> f64 {
        self.t0_s + idx as f64 * self.dt_s
    }
}

/// Population standard deviation of the deviation (mHz). Two-pass.
pub fn compute_sigma(trace: &FrequencyTrace) -> Result<f64> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::config("sigma needs at least 2 samples"));
    }
    let mean = trace.values_mhz.iter().sum::<f64>() / n as f64;
    let var = trace
        .values_mhz
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(var.sqrt())
}

/// Percentage of samples with |Δf| beyond the threshold (mHz).
pub fn pct_out_of_range(trace: &FrequencyTrace, threshold_mhz: f64) -> Result<f64> {
    if threshold_mhz <= 0.0 {
        return Err(Error::config("threshold must be > 0"));
    }
    if trace.is_empty() {
        return Ok(0.0);
    }
    let out = trace
        .values_mhz
        .iter()
        .filter(|v| v.abs() > threshold_mhz)
        .count();
    Ok(100.0 * out as f64 / trace.len() as f64)
}

/// Standardized third central moment of the deviation distribution.
pub fn skewness(trace: &FrequencyTrace) -> Result<f64> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::config("skewness needs at least 2 samples"));
    }
    let mean = trace.values_mhz.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in &trace.values_mhz {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n as f64;
    m3 /= n as f64;
    if m2 <= 0.0 {
        return Err(Error::config("skewness undefined for zero variance"));
    }
    Ok(m3 / m2.powf(1.5))
}

/// Time from `event_t_s` until the trace first stays within ±band for the
/// dwell window (or until the end of the trace if shorter). `None` if it
/// never settles.
pub fn recovery_time(
    trace: &FrequencyTrace,
    event_t_s: f64,
    band_mhz: f64,
    dwell_s: f64,
) -> Option<f64> {
    let start = ((event_t_s - trace.t0_s) / trace.dt_s).ceil().max(0.0) as usize;
    if start >= trace.len() {
        return None;
    }
    let dwell_samples = (dwell_s / trace.dt_s).round() as usize;
    let mut candidate: Option<usize> = None;
    let mut run = 0usize;
    for i in start..trace.len() {
        if trace.values_mhz[i].abs() <= band_mhz {
            if candidate.is_none() {
                candidate = Some(i);
                run = 0;
            }
            run += 1;
            if run > dwell_samples {
                return candidate.map(|c| trace.time_at(c) - event_t_s);
            }
        } else {
            candidate = None;
        }
    }
    // in-band through the end of the trace counts as recovered
    candidate.map(|c| trace.time_at(c) - event_t_s)
}

/// Accumulated time error Σ (Δf/f0)·dt (s).
pub fn time_error(trace: &FrequencyTrace, f0_hz: f64) -> f64 {
    trace
        .values_mhz
        .iter()
        .map(|mhz| (mhz / 1000.0) / f0_hz * trace.dt_s)
        .sum()
}

/// Minimum and maximum instantaneous deviation (mHz).
pub fn nadir_zenith(trace: &FrequencyTrace) -> Result<(f64, f64)> {
    if trace.is_empty() {
        return Err(Error::config("nadir/zenith of an empty trace"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in &trace.values_mhz {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    Ok((lo, hi))
}

/// Fixed-bin deviation histogram: 5 mHz bins spanning ±500 mHz, with
/// out-of-range samples folded into the edge bins so counts always sum to
/// the sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_mhz: f64,
    pub lo_mhz: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn of(trace: &FrequencyTrace) -> Self {
        let nbins = (2.0 * HISTOGRAM_RANGE_MHZ / HISTOGRAM_BIN_MHZ) as usize;
        let mut counts = vec![0u64; nbins];
        for v in &trace.values_mhz {
            let idx = ((v + HISTOGRAM_RANGE_MHZ) / HISTOGRAM_BIN_MHZ).floor();
            let idx = (idx.max(0.0) as usize).min(nbins - 1);
            counts[idx] += 1;
        }
        Histogram {
            bin_width_mhz: HISTOGRAM_BIN_MHZ,
            lo_mhz: -HISTOGRAM_RANGE_MHZ,
            counts,
        }
    }

    pub fn bin_edges(&self, idx: usize) -> (f64, f64) {
        let left = self.lo_mhz + idx as f64 * self.bin_width_mhz;
        (left, left + self.bin_width_mhz)
    }
}

/// Full frequency-quality report over one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sigma_mhz: f64,
    pub pct_out_200: f64,
    pub pct_out_150: f64,
    pub nadir_mhz: f64,
    pub zenith_mhz: f64,
    pub skewness: f64,
    /// Recovery time (s) per analyzed event; None means never recovered.
    pub recovery_times_s: Vec<Option<f64>>,
    pub time_error_s: f64,
    pub histogram: Histogram,
}

impl MetricsReport {
    /// Computes all statistics; `event_times_s` are disturbance instants
    /// (e.g. trips) to score recovery against the ±150 mHz band.
    pub fn from_trace(trace: &FrequencyTrace, f0_hz: f64, event_times_s: &[f64]) -> Result<Self> {
        let (nadir, zenith) = nadir_zenith(trace)?;
        let sigma = compute_sigma(trace)?;
        let skew = if sigma > 0.0 { skewness(trace)? } else { 0.0 };
        Ok(MetricsReport {
            sigma_mhz: sigma,
            pct_out_200: pct_out_of_range(trace, 200.0)?,
            pct_out_150: pct_out_of_range(trace, 150.0)?,
            nadir_mhz: nadir,
            zenith_mhz: zenith,
            skewness: skew,
            recovery_times_s: event_times_s
                .iter()
                .map(|t| recovery_time(trace, *t, 150.0, RECOVERY_DWELL_S))
                .collect(),
            time_error_s: time_error(trace, f0_hz),
        histogram: Histogram::of(trace),
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sigma          {:>10.2} mHz", self.sigma_mhz)?;
        writeln!(f, "out of ±200mHz {:>10.3} %", self.pct_out_200)?;
        writeln!(f, "out of ±150mHz {:>10.3} %", self.pct_out_150)?;
        writeln!(f, "nadir          {:>10.2} mHz", self.nadir_mhz)?;
        writeln!(f, "zenith         {:>10.2} mHz", self.zenith_mhz)?;
        writeln!(f, "skewness       {:>10.4}", self.skewness)?;
        writeln!(f, "time error     {:>10.4} s", self.time_error_s)?;
        for (i, r) in self.recovery_times_s.iter().enumerate() {
            match r {
                Some(t) => writeln!(f, "recovery[{i}]    {t:>10.2} s")?,
                None => writeln!(f, "recovery[{i}]          never")?,
            }
        }
        Ok(())
    }
}
