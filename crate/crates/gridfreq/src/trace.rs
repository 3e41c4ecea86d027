//! Run output files: the decimated trace CSV (fixed column order), the
//! histogram CSV and the metrics report. Formatting is fixed-precision so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::metrics::{Histogram, MetricsReport};

pub const TRACE_HEADER: &str = "t_s,delta_f_mhz,p_load_mw,p_ou_mw,p_ramp_mw,p_jump_mw,p_pfc_mw,p_agc_mw,p_market_mw,time_error_s";

/// One decimated sample of the run trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t_s: f64,
    pub delta_f_mhz: f64,
    pub p_load_mw: f64,
    pub p_ou_mw: f64,
    pub p_ramp_mw: f64,
    pub p_jump_mw: f64,
    pub p_pfc_mw: f64,
    pub p_agc_mw: f64,
    pub p_market_mw: f64,
    pub time_error_s: f64,
}

impl TraceRow {
    fn write_line(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.9}",
            self.t_s,
            self.delta_f_mhz,
            self.p_load_mw,
            self.p_ou_mw,
            self.p_ramp_mw,
            self.p_jump_mw,
            self.p_pfc_mw,
            self.p_agc_mw,
            self.p_market_mw,
            self.time_error_s
        );
    }
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 96 + 128);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in rows {
        row.write_line(&mut out);
    }
    out
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    fs::write(path, trace_to_csv(rows))?;
    Ok(())
}

/// Plot-ready histogram CSV: bin_left_mhz,bin_right_mhz,count.
pub fn histogram_to_csv(hist: &Histogram) -> String {
    let mut out = String::from("bin_left_mhz,bin_right_mhz,count\n");
    for (i, count) in hist.counts.iter().enumerate() {
        let (left, right) = hist.bin_edges(i);
        let _ = writeln!(out, "{left:.1},{right:.1},{count}");
    }
    out
}

pub fn write_histogram_csv(hist: &Histogram, path: &Path) -> Result<()> {
    fs::write(path, histogram_to_csv(hist))?;
    Ok(())
}

pub fn write_report(report: &MetricsReport, events: &[String], path: &Path) -> Result<()> {
    let mut text = report.to_string();
    if !events.is_empty() {
        text.push_str("\nevents:\n");
        for e in events {
            text.push_str("  ");
            text.push_str(e);
            text.push('\n');
        }
    }
    fs::write(path, text)?;
    Ok(())
}
