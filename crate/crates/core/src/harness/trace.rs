use super::{HarnessError, Outcome};
use crate::features::FeatureVector;
use crate::geometry::{RigidTransform, Twist};
use crate::tracker::TrackerPhase;
use serde::Serialize;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: &str =
    "iter,t,xg,yg,mu20,mu11,mu02,xg_d,yg_d,mu20_d,mu11_d,mu02_d,err2,vx,vy,vz,wx,wy,wz,phase";

/// One control period.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub time: f64,
    pub observed: Option<FeatureVector>,
    pub desired: FeatureVector,
    pub error_squared: Option<f64>,
    /// Camera-frame command.
    pub commanded: Twist,
    /// Robot-frame twist after the deadband.
    pub applied: Twist,
    pub camera_pose: RigidTransform,
    pub phase: TrackerPhase,
    pub inlier_ratio: Option<f64>,
}

/// Nine significant digits in scientific notation.
fn num(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v:.8e}");
    } else {
        out.push_str("nan");
    }
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 + trace.len() * 300);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in trace {
        let _ = write!(out, "{},", r.iteration);
        num(&mut out, r.time);
        let obs = r
            .observed
            .map(|f| f.to_vector().into())
            .unwrap_or([f64::NAN; 5]);
        let des: [f64; 5] = r.desired.to_vector().into();
        let v = r.commanded.to_vector();
        let err2 = [r.error_squared.unwrap_or(f64::NAN)];
        let fields = obs
            .iter()
            .chain(des.iter())
            .chain(err2.iter())
            .chain(v.iter());
        for x in fields {
            out.push(',');
            num(&mut out, *x);
        }
        out.push(',');
        out.push_str(r.phase.as_str());
        out.push('\n');
    }
    out
}

/// Writes the CSV trace to `path`.
pub fn emit_trace(trace: &[TraceRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(trace_to_csv(trace).as_bytes())?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub outcome: Outcome,
    pub iterations: usize,
    pub final_error: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
}

pub fn emit_summary(summary: &RunSummary, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let text =
        serde_json::to_string_pretty(summary).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
