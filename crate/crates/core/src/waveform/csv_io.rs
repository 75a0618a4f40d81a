//! Waveform CSV input and rectified CSV output.
//!
//! Columns are `t_s,Q_PA_mL_min,Q_DA_mL_min,Q_FV_mL_min`. Lines starting with
//! `#` are comments; `# period_s=<T>` sets the period, otherwise it is taken
//! as the last sample time plus the first sampling interval.

use std::fmt::Write as _;
use std::path::Path;

use super::{FlowWaveform, WaveformError, WaveformSet, ML_PER_MIN};
use crate::mesh::PatchLabel;

pub const CSV_HEADER: [&str; 4] = ["t_s", "Q_PA_mL_min", "Q_DA_mL_min", "Q_FV_mL_min"];

/// Parsed waveform file. The original text of every field is kept so the
/// trusted columns can be written back unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformTable {
    pub period: f64,
    pub period_declared: bool,
    /// Raw fields per row, in header order.
    pub raw: Vec<[String; 4]>,
    /// Parsed values per row, in header order (flows in mL/min).
    pub values: Vec<[f64; 4]>,
}

impl WaveformTable {
    pub fn parse(text: &str) -> Result<Self, WaveformError> {
        let mut declared = None;
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("period_s=") {
                    let v: f64 = v.trim().parse().map_err(|_| WaveformError::MalformedRow {
                        line: i + 1,
                        message: format!("invalid period `{}`", v.trim()),
                    })?;
                    declared = Some(v);
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
        let mut col = [0usize; 4];
        for (k, name) in CSV_HEADER.iter().enumerate() {
            col[k] = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| WaveformError::MissingColumn(name.to_string()))?;
        }
        let mut raw = Vec::new();
        let mut values: Vec<[f64; 4]> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(e, 0))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let mut r: [String; 4] = Default::default();
            let mut v = [0.0f64; 4];
            for k in 0..4 {
                let tok = rec.get(col[k]).ok_or_else(|| WaveformError::MalformedRow {
                    line,
                    message: format!("missing `{}` value", CSV_HEADER[k]),
                })?;
                v[k] = tok.parse().map_err(|_| WaveformError::MalformedRow {
                    line,
                    message: format!("`{tok}` is not a number"),
                })?;
                if !v[k].is_finite() {
                    return Err(WaveformError::MalformedRow { line, message: format!("`{tok}` is not finite") });
                }
                r[k] = tok.to_string();
            }
            if let Some(prev) = values.last() {
                if v[0] <= prev[0] {
                    return Err(WaveformError::NonMonotoneTime { line });
                }
            }
            raw.push(r);
            values.push(v);
        }
        if values.is_empty() {
            return Err(WaveformError::NoSamples);
        }
        let period = match declared {
            Some(p) => p,
            None if values.len() >= 2 => values[values.len() - 1][0] + (values[1][0] - values[0][0]),
            None => return Err(WaveformError::Invalid("cannot infer the period from one sample".into())),
        };
        Ok(WaveformTable { period, period_declared: declared.is_some(), raw, values })
    }

    /// Waveforms in m³/s.
    pub fn to_set(&self) -> Result<WaveformSet, WaveformError> {
        let times: Vec<f64> = self.values.iter().map(|v| v[0]).collect();
        let column = |k: usize, l: PatchLabel| {
            FlowWaveform::new(l, times.clone(), self.values.iter().map(|v| v[k] * ML_PER_MIN).collect(), self.period)
        };
        WaveformSet::new(column(1, PatchLabel::PA)?, column(2, PatchLabel::DA)?, column(3, PatchLabel::FV)?)
    }

    /// CSV text with DA replaced by `-FV - PA`; every other field is the
    /// original token.
    pub fn rectified_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# period_s={}", self.period);
        s.push_str(&CSV_HEADER.join(","));
        s.push('\n');
        for (r, v) in self.raw.iter().zip(&self.values) {
            let da = -v[3] - v[1];
            let _ = writeln!(s, "{},{},{},{}", r[0], r[1], da, r[3]);
        }
        s
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> WaveformError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    WaveformError::MalformedRow { line, message }
}

pub fn read_waveform_table(path: impl AsRef<Path>) -> Result<WaveformTable, WaveformError> {
    WaveformTable::parse(&std::fs::read_to_string(path)?)
}

pub fn parse_waveform_csv(text: &str) -> Result<WaveformSet, WaveformError> {
    WaveformTable::parse(text)?.to_set()
}

pub fn write_rectified_csv(table: &WaveformTable, path: impl AsRef<Path>) -> Result<(), WaveformError> {
    std::fs::write(path, table.rectified_csv())?;
    Ok(())
}
