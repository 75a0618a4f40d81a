//! Pressure histories, time-averaged pressure drops and CSV summaries.

use std::fmt::Write as _;

use super::{avg_pressure, PostError, WallShearField};
use crate::fem::SimulationState;
use crate::mesh::{Mesh, PatchLabel};

pub const PA_PER_MMHG: f64 = 133.322;
pub const PRESSURE_TRACE_HEADER: &str = "t_s,p_PA_Pa,p_DA_Pa,p_FV_Pa";
pub const WSS_SUMMARY_HEADER: &str = "t_s,wss_max_Pa,wss_mean_Pa,wss_area_gt_threshold_m2";

/// Spatially averaged pressure on PA, DA and FV per recorded time; NaN where
/// the mesh has no such patch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PressureTrace {
    pub times: Vec<f64>,
    pub pa: Vec<f64>,
    pub da: Vec<f64>,
    pub fv: Vec<f64>,
}

impl PressureTrace {
    pub fn push(&mut self, t: f64, pa: f64, da: f64, fv: f64) -> Result<(), PostError> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(PostError::NonMonotoneTime(t, last));
            }
        }
        self.times.push(t);
        self.pa.push(pa);
        self.da.push(da);
        self.fv.push(fv);
        Ok(())
    }

    pub fn record(&mut self, mesh: &Mesh, state: &SimulationState) -> Result<(), PostError> {
        let p = |l| avg_pressure(mesh, state, l).unwrap_or(f64::NAN);
        self.push(state.t, p(PatchLabel::PA), p(PatchLabel::DA), p(PatchLabel::FV))
    }

    pub fn column(&self, label: PatchLabel) -> Option<&[f64]> {
        match label {
            PatchLabel::PA => Some(&self.pa),
            PatchLabel::DA => Some(&self.da),
            PatchLabel::FV => Some(&self.fv),
            PatchLabel::WALL => None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean of `p(inflow) - p(outflow)` over `[t0, t1]`, Pa.
    pub fn mean_drop(&self, inflow: PatchLabel, outflow: PatchLabel, t0: f64, t1: f64) -> Result<f64, PostError> {
        let a = self.column(inflow).ok_or(PostError::UnknownLabel(inflow))?;
        let b = self.column(outflow).ok_or(PostError::UnknownLabel(outflow))?;
        time_avg_pressure_drop(&self.times, a, b, t0, t1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(PRESSURE_TRACE_HEADER);
        s.push('\n');
        for i in 0..self.len() {
            let _ = writeln!(s, "{:.9e},{:.9e},{:.9e},{:.9e}", self.times[i], self.pa[i], self.da[i], self.fv[i]);
        }
        s
    }
}

/// Trapezoidal time mean of `p_in - p_out` over exactly `[t0, t1]`, with
/// linear interpolation at the window ends.
pub fn time_avg_pressure_drop(times: &[f64], p_in: &[f64], p_out: &[f64], t0: f64, t1: f64) -> Result<f64, PostError> {
    let covered = !times.is_empty() && t1 > t0 && times[0] <= t0 * (1.0 + 1e-12) && *times.last().unwrap() >= t1 * (1.0 - 1e-12);
    if !covered {
        let (start, end) = (times.first().copied().unwrap_or(f64::NAN), times.last().copied().unwrap_or(f64::NAN));
        return Err(PostError::WindowNotCovered { start, end, t0, t1 });
    }
    let d: Vec<f64> = p_in.iter().zip(p_out).map(|(a, b)| a - b).collect();
    let at = |t: f64| -> f64 {
        let k = times.partition_point(|&x| x < t);
        if k == 0 {
            d[0]
        } else if k == times.len() {
            d[k - 1]
        } else {
            let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
            d[k - 1] + w * (d[k] - d[k - 1])
        }
    };
    let mut pts = vec![(t0, at(t0))];
    pts.extend(times.iter().zip(&d).filter(|(t, _)| **t > t0 && **t < t1).map(|(t, v)| (*t, *v)));
    pts.push((t1, at(t1)));
    let integral: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Ok(integral / (t1 - t0))
}

/// Per-time WSS statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WssSummary {
    pub threshold: f64,
    pub rows: Vec<[f64; 4]>,
}

impl WssSummary {
    pub fn new(threshold: f64) -> Self {
        WssSummary { threshold, rows: Vec::new() }
    }

    pub fn record(&mut self, mesh: &Mesh, field: &WallShearField) {
        self.rows.push([field.t, field.max(), field.mean(mesh), field.area_above(mesh, self.threshold)]);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(WSS_SUMMARY_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{:.9e},{:.9e},{:.9e},{:.9e}", r[0], r[1], r[2], r[3]);
        }
        s
    }
}
