//! From correlation records to spectra.
//!
//! The transform is the one-sided discrete sum
//! `A(ω_k) = τ·Re Σ_j e^{−iω_k t_j − Γt_j} C_z(t_j) − τ·Im Σ_j e^{−iω_k t_j − Γt_j} C_y(t_j)`
//! on the grid `ω_k = 2πk/(Lτ)` spanning `[−π/τ, π/τ)`, evaluated with an FFT.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::C64;
use crate::record::CorrelationRecord;
use crate::spin_system::FrameConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumMeta {
    pub tau: f64,
    pub n_steps: usize,
    pub padded_length: usize,
    pub gamma_window: f64,
    pub symmetrized: bool,
    pub reference_ppm: f64,
    pub larmor_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_rad_s: Vec<f64>,
    pub freq_ppm: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub meta: SpectrumMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Grid index of the sampled maximum.
    pub index: usize,
    /// Parabola-refined position, rad/s.
    pub omega: f64,
    pub ppm: f64,
    pub height: f64,
}

/// Next power of two at least eight times the record length.
pub fn default_padding(len: usize) -> usize {
    (8 * len.max(1)).next_power_of_two()
}

/// Appends exact zeros on the same time grid.
pub fn zero_pad(record: &CorrelationRecord, target_length: usize) -> Result<CorrelationRecord> {
    let len = record.len();
    if target_length < len {
        return Err(Error::InvalidParameter(format!(
            "cannot pad a record of length {len} down to {target_length}"
        )));
    }
    let mut out = record.clone();
    if target_length == len {
        return Ok(out);
    }
    let tau = record.uniform_step(1e-9)?;
    out.times.extend((len..target_length).map(|k| k as f64 * tau));
    out.cz.resize(target_length, 0.0);
    out.cy.resize(target_length, 0.0);
    Ok(out)
}

fn forward_fft(values: impl Iterator<Item = C64>, len: usize) -> Vec<C64> {
    let mut buf: Vec<C64> = values.collect();
    debug_assert_eq!(buf.len(), len);
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf
}

pub fn spectrum_from_record(
    record: &CorrelationRecord,
    gamma_window: f64,
    frame: &FrameConfig,
    symmetrize: bool,
) -> Result<Spectrum> {
    if record.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !(gamma_window >= 0.0) || !gamma_window.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "window rate must be >= 0, got {gamma_window}"
        )));
    }
    let tau = record.uniform_step(1e-9)?;
    let len = record.len();
    let window: Vec<f64> = record.times.iter().map(|t| (-gamma_window * t).exp()).collect();

    let fz = forward_fft(
        record.cz.iter().zip(&window).map(|(c, w)| C64::from(c * w)),
        len,
    );
    let fy = (!symmetrize).then(|| {
        forward_fft(
            record.cy.iter().zip(&window).map(|(c, w)| C64::from(c * w)),
            len,
        )
    });

    let half = (len / 2) as isize;
    let k_min = -half;
    let k_max = len as isize - half; // exclusive
    let mut freq_rad_s = Vec::with_capacity(len);
    let mut amplitude = Vec::with_capacity(len);
    for k in k_min..k_max {
        let m = k.rem_euclid(len as isize) as usize;
        let omega = 2.0 * PI * k as f64 / (len as f64 * tau);
        let mut a = tau * fz[m].re;
        if let Some(fy) = &fy {
            a -= tau * fy[m].im;
        }
        freq_rad_s.push(omega);
        amplitude.push(a);
    }
    let freq_ppm = freq_rad_s.iter().map(|&w| frame.ppm_of(w)).collect();
    Ok(Spectrum {
        freq_rad_s,
        freq_ppm,
        amplitude,
        meta: SpectrumMeta {
            tau,
            n_steps: record.measured_len.saturating_sub(1),
            padded_length: len,
            gamma_window,
            symmetrized: symmetrize,
            reference_ppm: frame.reference_ppm,
            larmor_hz: frame.larmor_hz,
        },
    })
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Grid spacing in rad/s.
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / (self.meta.padded_length as f64 * self.meta.tau)
    }

    /// Index of the grid point at `−ω_k` for the point at `ω_k`, if on the grid.
    pub fn mirror_index(&self, index: usize) -> Option<usize> {
        let mirror = 2 * (self.len() / 2);
        (index <= mirror && mirror - index < self.len()).then(|| mirror - index)
    }

    /// `Σ_k A(ω_k)·Δω`.
    pub fn integrated(&self) -> f64 {
        self.amplitude.iter().sum::<f64>() * self.bin_width()
    }

    /// Local maxima at or above `rel_threshold × max`, refined by a parabola
    /// through the three samples around each maximum.
    pub fn find_peaks(&self, rel_threshold: f64) -> Vec<Peak> {
        let a = &self.amplitude;
        let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if a.len() < 3 || !(max > 0.0) {
            return Vec::new();
        }
        let dw = self.bin_width();
        let frame = self.frame();
        (1..a.len() - 1)
            .filter(|&i| a[i] > a[i - 1] && a[i] >= a[i + 1] && a[i] >= rel_threshold * max)
            .map(|i| {
                let (y0, y1, y2) = (a[i - 1], a[i], a[i + 1]);
                let denom = y0 - 2.0 * y1 + y2;
                let d = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
                let omega = self.freq_rad_s[i] + d * dw;
                Peak {
                    index: i,
                    omega,
                    ppm: frame.ppm_of(omega),
                    height: y1 - 0.25 * (y0 - y2) * d,
                }
            })
            .collect()
    }

    /// Full width at half maximum (rad/s) of the peak sampled at `index`,
    /// from linear interpolation of the half-height crossings.
    pub fn fwhm_at(&self, index: usize) -> Option<f64> {
        let a = &self.amplitude;
        let w = &self.freq_rad_s;
        let half = a[index] / 2.0;
        if !(half > 0.0) {
            return None;
        }
        let mut l = index;
        while l > 0 && a[l] > half {
            l -= 1;
        }
        if a[l] > half {
            return None;
        }
        let mut r = index;
        while r + 1 < a.len() && a[r] > half {
            r += 1;
        }
        if a[r] > half {
            return None;
        }
        let cross = |lo: usize, hi: usize| w[lo] + (half - a[lo]) / (a[hi] - a[lo]) * (w[hi] - w[lo]);
        Some(cross(r - 1, r) - cross(l, l + 1))
    }

    pub fn frame(&self) -> FrameConfig {
        FrameConfig {
            reference_ppm: self.meta.reference_ppm,
            larmor_hz: self.meta.larmor_hz,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ppm,rad_s,amplitude\n");
        for k in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.12},{:.12e},{:.15e}",
                self.freq_ppm[k], self.freq_rad_s[k], self.amplitude[k]
            );
        }
        out
    }

    /// Two whitespace-separated columns, ppm and amplitude.
    pub fn to_plot_text(&self) -> String {
        let mut out = String::from("# ppm amplitude\n");
        for k in 0..self.len() {
            let _ = writeln!(out, "{:.12} {:.15e}", self.freq_ppm[k], self.amplitude[k]);
        }
        out
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.meta)?)
    }

    /// Writes `<stem>.csv`, `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write_files(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let files = [
            (dir.join(format!("{stem}.csv")), self.to_csv()),
            (dir.join(format!("{stem}.json")), self.metadata_json()?),
            (dir.join(format!("{stem}.txt")), self.to_plot_text()),
        ];
        let mut written = Vec::new();
        for (path, body) in files {
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
