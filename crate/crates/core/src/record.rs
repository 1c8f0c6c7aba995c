use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::BasisState;

/// Magnetization time series started from one computational basis state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorSeries {
    #[serde(serialize_with = "serialize_state")]
    pub initial: BasisState,
    /// `⟨S^z_tot⟩` after `k` steps, `k = 0..=n_steps`.
    pub sz: Vec<f64>,
    /// `⟨S^y_tot⟩` after `k` steps.
    pub sy: Vec<f64>,
}

fn serialize_state<S: serde::Serializer>(s: &BasisState, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(&s.to_string())
}

impl SectorSeries {
    pub fn magnetization(&self) -> f64 {
        self.initial.magnetization()
    }
}

/// `C_z(t) = Tr{S^z_tot(t) S^z_tot}` and `C_y(t) = Tr{S^y_tot(t) S^z_tot}` on a
/// uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRecord {
    pub times: Vec<f64>,
    pub cz: Vec<f64>,
    pub cy: Vec<f64>,
    pub per_sector: Option<Vec<SectorSeries>>,
    /// Samples that carry data; anything past this index is zero padding.
    pub measured_len: usize,
}

impl CorrelationRecord {
    pub fn new(times: Vec<f64>, cz: Vec<f64>, cy: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if cz.len() != times.len() || cy.len() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: cz.len().min(cy.len()),
            });
        }
        let measured_len = times.len();
        Ok(CorrelationRecord {
            times,
            cz,
            cy,
            per_sector: None,
            measured_len,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sampling interval; `None` for a single-sample record.
    pub fn step(&self) -> Option<f64> {
        (self.times.len() > 1).then(|| self.times[1] - self.times[0])
    }

    /// Checks that the grid starts at 0 and is uniform to `rel_tol`.
    pub fn uniform_step(&self, rel_tol: f64) -> Result<f64> {
        let tau = self
            .step()
            .ok_or_else(|| Error::InvalidParameter("need at least two samples".into()))?;
        if self.times[0] != 0.0 || !(tau > 0.0) {
            return Err(Error::InvalidParameter("time grid must start at 0 and ascend".into()));
        }
        for (k, &t) in self.times.iter().enumerate() {
            if (t - k as f64 * tau).abs() > rel_tol * tau * (k.max(1) as f64) {
                return Err(Error::InvalidParameter(format!(
                    "time grid is not uniform at sample {k}"
                )));
            }
        }
        Ok(tau)
    }

    pub fn scaled(&self, a: f64) -> CorrelationRecord {
        CorrelationRecord {
            times: self.times.clone(),
            cz: self.cz.iter().map(|v| a * v).collect(),
            cy: self.cy.iter().map(|v| a * v).collect(),
            per_sector: None,
            measured_len: self.measured_len,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,C_z,C_y\n");
        for k in 0..self.len() {
            let _ = writeln!(out, "{:.12e},{:.15e},{:.15e}", self.times[k], self.cz[k], self.cy[k]);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut cz = Vec::new();
        let mut cy = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || no == 0 && line.starts_with('t') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse("<csv>", no + 1, "expected t,C_z,C_y"));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse("<csv>", no + 1, e.to_string()))
            };
            times.push(parse(fields[0])?);
            cz.push(parse(fields[1])?);
            cy.push(parse(fields[2])?);
        }
        CorrelationRecord::new(times, cz, cy)
    }
}
