//! Boundary flow-rate waveforms.
//!
//! Flow rates are stored in m³/s with the outgoing-positive convention:
//! a negative value is flow entering the domain. Waveforms are periodic and
//! evaluated through a periodic cubic spline.

mod csv_io;
mod spline;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::mesh::PatchLabel;

pub use csv_io::{parse_waveform_csv, read_waveform_table, write_rectified_csv, WaveformTable, CSV_HEADER};

/// One mL/min in m³/s.
pub const ML_PER_MIN: f64 = 1e-6 / 60.0;

pub const DEFAULT_ONE_WAY_EPSILON: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum WaveformError {
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: sample times must be strictly increasing")]
    NonMonotoneTime { line: usize },
    #[error("no samples")]
    NoSamples,
    #[error("invalid waveform: {0}")]
    Invalid(String),
    #[error("no proximal inflow: mean |Q_PA| is zero")]
    NoProximalInflow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowWaveform {
    boundary: PatchLabel,
    times: Vec<f64>,
    flows: Vec<f64>,
    period: f64,
    second: Vec<f64>,
}

impl FlowWaveform {
    pub fn new(boundary: PatchLabel, times: Vec<f64>, flows: Vec<f64>, period: f64) -> Result<Self, WaveformError> {
        if times.len() != flows.len() {
            return Err(WaveformError::Invalid("time and flow arrays differ in length".into()));
        }
        if times.len() < 4 {
            return Err(WaveformError::Invalid(format!("{} needs at least 4 samples, got {}", boundary, times.len())));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(WaveformError::Invalid(format!("period {period} must be positive")));
        }
        if times.iter().chain(&flows).any(|v| !v.is_finite()) {
            return Err(WaveformError::Invalid(format!("{boundary} has non-finite samples")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WaveformError::Invalid(format!("{boundary} sample times are not strictly increasing")));
        }
        if times[0] < 0.0 || *times.last().unwrap() >= period {
            return Err(WaveformError::Invalid(format!("{boundary} sample times must lie in [0, {period})")));
        }
        let second = spline::periodic_second_derivatives(&times, &flows, period);
        Ok(FlowWaveform { boundary, times, flows, period, second })
    }

    /// Constant flow rate sampled at four equispaced times.
    pub fn constant(boundary: PatchLabel, q: f64, period: f64) -> Result<Self, WaveformError> {
        Self::from_fn(boundary, period, 4, |_| q)
    }

    /// Samples `f` at `n` equispaced times in `[0, period)`.
    pub fn from_fn(
        boundary: PatchLabel,
        period: f64,
        n: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, WaveformError> {
        let times: Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
        let flows = times.iter().map(|&t| f(t)).collect();
        Self::new(boundary, times, flows, period)
    }

    pub fn boundary(&self) -> PatchLabel {
        self.boundary
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn flows(&self) -> &[f64] {
        &self.flows
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Same samples, new period (samples must still fit inside it).
    pub fn with_period(&self, period: f64) -> Result<Self, WaveformError> {
        Self::new(self.boundary, self.times.clone(), self.flows.clone(), period)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let flows: Vec<f64> = self.flows.iter().map(|q| q * factor).collect();
        let second = self.second.iter().map(|m| m * factor).collect();
        FlowWaveform { flows, second, ..self.clone() }
    }

    /// Flow rate at time `t` (any `t`, wrapped into one period).
    pub fn sample(&self, t: f64) -> f64 {
        let n = self.times.len();
        let tau = t.rem_euclid(self.period);
        let i = match self.times.binary_search_by(|x| x.total_cmp(&tau)) {
            Ok(i) => return self.flows[i],
            Err(0) => n - 1,
            Err(i) => i - 1,
        };
        let (t0, y0, m0) = (self.times[i], self.flows[i], self.second[i]);
        let j = (i + 1) % n;
        let (t1, y1, m1) = if j == 0 {
            (self.times[0] + self.period, self.flows[0], self.second[0])
        } else {
            (self.times[j], self.flows[j], self.second[j])
        };
        let tau = if tau < t0 { tau + self.period } else { tau };
        let h = t1 - t0;
        let a = t1 - tau;
        let b = tau - t0;
        m0 * a * a * a / (6.0 * h) + m1 * b * b * b / (6.0 * h) + (y0 / h - m0 * h / 6.0) * a + (y1 / h - m1 * h / 6.0) * b
    }

    /// Periodic trapezoidal mean of `f(Q)` over one period.
    fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.times.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (t1, y1) = if i + 1 < n { (self.times[i + 1], self.flows[i + 1]) } else { (self.times[0] + self.period, self.flows[0]) };
            acc += 0.5 * (f(self.flows[i]) + f(y1)) * (t1 - self.times[i]);
        }
        acc / self.period
    }

    pub fn mean(&self) -> f64 {
        self.mean_of(|q| q)
    }

    pub fn mean_abs(&self) -> f64 {
        self.mean_of(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.flows.iter().fold(0.0, |m, q| m.max(q.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Measured,
    Rectified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSet {
    pa: FlowWaveform,
    da: FlowWaveform,
    fv: FlowWaveform,
    provenance: [Provenance; 3],
}

impl WaveformSet {
    pub fn new(pa: FlowWaveform, da: FlowWaveform, fv: FlowWaveform) -> Result<Self, WaveformError> {
        for (w, l) in [(&pa, PatchLabel::PA), (&da, PatchLabel::DA), (&fv, PatchLabel::FV)] {
            if w.boundary != l {
                return Err(WaveformError::Invalid(format!("expected a {l} waveform, got {}", w.boundary)));
            }
        }
        if pa.period != da.period || pa.period != fv.period {
            return Err(WaveformError::Invalid("PA, DA and FV waveforms must share one period".into()));
        }
        Ok(WaveformSet { pa, da, fv, provenance: [Provenance::Measured; 3] })
    }

    /// PA inflow only, DA closed, FV closing the balance: the plain-tube setup.
    pub fn through_flow(pa: FlowWaveform) -> Result<Self, WaveformError> {
        let mk = |l: PatchLabel, f: &dyn Fn(f64) -> f64| {
            FlowWaveform::new(l, pa.times.clone(), pa.flows.iter().map(|&q| f(q)).collect(), pa.period)
        };
        let da = mk(PatchLabel::DA, &|_| 0.0)?;
        let fv = mk(PatchLabel::FV, &|q| -q)?;
        Ok(WaveformSet { pa, da, fv, provenance: [Provenance::Measured, Provenance::Rectified, Provenance::Rectified] })
    }

    pub fn get(&self, label: PatchLabel) -> Option<&FlowWaveform> {
        match label {
            PatchLabel::PA => Some(&self.pa),
            PatchLabel::DA => Some(&self.da),
            PatchLabel::FV => Some(&self.fv),
            PatchLabel::WALL => None,
        }
    }

    pub fn pa(&self) -> &FlowWaveform {
        &self.pa
    }

    pub fn da(&self) -> &FlowWaveform {
        &self.da
    }

    pub fn fv(&self) -> &FlowWaveform {
        &self.fv
    }

    pub fn period(&self) -> f64 {
        self.pa.period
    }

    pub fn provenance(&self, label: PatchLabel) -> Option<Provenance> {
        match label {
            PatchLabel::PA => Some(self.provenance[0]),
            PatchLabel::DA => Some(self.provenance[1]),
            PatchLabel::FV => Some(self.provenance[2]),
            PatchLabel::WALL => None,
        }
    }

    pub fn with_period(&self, period: f64) -> Result<Self, WaveformError> {
        Ok(WaveformSet {
            pa: self.pa.with_period(period)?,
            da: self.da.with_period(period)?,
            fv: self.fv.with_period(period)?,
            provenance: self.provenance,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WaveformSet { pa: self.pa.scaled(factor), da: self.da.scaled(factor), fv: self.fv.scaled(factor), provenance: self.provenance }
    }
}

/// Replaces the DA waveform by the mass-conservation closure
/// `Q_DA = -Q_FV - Q_PA`, sample by sample.
///
/// PA and FV are the trusted boundaries and pass through untouched; they must
/// share sample times.
pub fn rectify(set: &WaveformSet) -> Result<WaveformSet, WaveformError> {
    if set.pa.times != set.fv.times {
        return Err(WaveformError::Invalid("PA and FV must share sample times to rectify".into()));
    }
    let flows = set.pa.flows.iter().zip(&set.fv.flows).map(|(pa, fv)| -fv - pa).collect();
    let da = FlowWaveform::new(PatchLabel::DA, set.pa.times.clone(), flows, set.pa.period)?;
    Ok(WaveformSet {
        pa: set.pa.clone(),
        da,
        fv: set.fv.clone(),
        provenance: [set.provenance[0], Provenance::Rectified, set.provenance[2]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowType {
    Splitting,
    Merging,
    OneWay,
}

impl FlowType {
    pub fn code(self) -> &'static str {
        match self {
            FlowType::Splitting => "S",
            FlowType::Merging => "M",
            FlowType::OneWay => "O",
        }
    }
}

impl fmt::Display for FlowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub flow_type: FlowType,
    /// Mean DA flow divided by the mean proximal inflow magnitude.
    pub mean_da_rel: f64,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type={} mean_QDA_rel={:.6}", self.flow_type, self.mean_da_rel)
    }
}

/// Classifies by the period-mean DA flow relative to the mean |Q_PA|:
/// within `epsilon_rel` it is one-way, outgoing DA splits, incoming merges.
pub fn classify(set: &WaveformSet, epsilon_rel: f64) -> Result<Classification, WaveformError> {
    let proximal = set.pa.mean_abs();
    if proximal == 0.0 {
        return Err(WaveformError::NoProximalInflow);
    }
    let rel = set.da.mean() / proximal;
    let flow_type = if rel.abs() <= epsilon_rel {
        FlowType::OneWay
    } else if rel > 0.0 {
        FlowType::Splitting
    } else {
        FlowType::Merging
    };
    Ok(Classification { flow_type, mean_da_rel: rel })
}
