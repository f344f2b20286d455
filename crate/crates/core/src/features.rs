//! Hand-crafted features: HEOG peak polarity and magnitude, NEMG short-term
//! RMS envelopes with baseline normalization and their peaks, and yaw
//! variation.
//!
//! Peak searches are restricted to t in (0, 2] s after the switch: all
//! stimulus-locked activity finishes well before that, and the bound keeps
//! late drift out of the features.

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Peak-search window after the switch instant, seconds.
pub const PEAK_WINDOW_S: (f64, f64) = (0.0, 2.0);
/// Yaw plateau window, seconds after the switch (stable from about 1 s).
pub const YAW_PLATEAU_S: (f64, f64) = (1.5, 2.5);

/// Short-term RMS framing: 0.1 s frames, 0.05 s hop, first 0.5 s as the
/// normalization reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub frame_s: f64,
    pub hop_s: f64,
    pub baseline_s: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams { frame_s: 0.1, hop_s: 0.05, baseline_s: 0.5 }
    }
}

impl EnvelopeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_s > 0.0 && self.hop_s <= self.frame_s) {
            return Err(Error::config(format!(
                "hop ({}) must satisfy 0 < hop <= frame ({})",
                self.hop_s, self.frame_s
            )));
        }
        if self.baseline_s < self.frame_s {
            return Err(Error::config(format!(
                "baseline ({}) must cover at least one frame ({})",
                self.baseline_s, self.frame_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeogFeatures {
    /// Sign of the waveform at its absolute extremum: -1, 0 or +1.
    pub polarity: f64,
    pub abs_peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NemgPeaks {
    pub left: f64,
    pub right: f64,
}

/// Per-segment feature set. Absent modalities stay `None` rather than
/// defaulting to zero, so a missing channel can never masquerade as data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub heog: Option<HeogFeatures>,
    pub nemg: Option<NemgPeaks>,
    pub yaw_variation: Option<f64>,
}

impl FeatureVector {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        if let Some(h) = &self.heog {
            if !finite(h.polarity) || !finite(h.abs_peak) {
                return Err(Error::validation("non-finite HEOG features".to_string()));
            }
        }
        if let Some(n) = &self.nemg {
            if !finite(n.left) || !finite(n.right) {
                return Err(Error::validation("non-finite NEMG features".to_string()));
            }
        }
        if let Some(y) = self.yaw_variation {
            if !finite(y) {
                return Err(Error::validation("non-finite yaw feature".to_string()));
            }
        }
        Ok(())
    }
}

fn window_indices(w: &Waveform, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
    (0..w.len()).filter(move |&i| {
        let t = w.time_at(i);
        t > lo && t <= hi
    })
}

/// HEOG peak polarity and absolute value over the post-switch window.
///
/// Polarity is 0 only for an identically zero window.
pub fn heog_peak_features(w: &Waveform) -> Result<HeogFeatures> {
    let mut peak = f64::NEG_INFINITY;
    let mut signed = 0.0;
    let mut seen = false;
    for i in window_indices(w, PEAK_WINDOW_S.0, PEAK_WINDOW_S.1) {
        seen = true;
        let v = w.samples[i];
        if v.abs() > peak {
            peak = v.abs();
            signed = v;
        }
    }
    if !seen {
        return Err(Error::validation(
            "waveform does not cover the (0, 2] s peak window".to_string(),
        ));
    }
    Ok(HeogFeatures { polarity: signed.signum() * if peak == 0.0 { 0.0 } else { 1.0 }, abs_peak: peak })
}

/// Sliding-frame RMS envelope.
///
/// Frame count is floor((N - frame) / hop) + 1; the output rate is one value
/// per hop and the time origin moves to the first frame's center.
pub fn short_term_rms(w: &Waveform, p: &EnvelopeParams) -> Result<Waveform> {
    p.validate()?;
    let frame = (p.frame_s * w.rate_hz).round() as usize;
    let hop = (p.hop_s * w.rate_hz).round() as usize;
    if frame == 0 || hop == 0 {
        return Err(Error::config(format!(
            "frame/hop too short for rate {} Hz",
            w.rate_hz
        )));
    }
    if w.len() < frame {
        return Err(Error::degenerate(format!(
            "segment of {} samples is shorter than one {frame}-sample frame",
            w.len()
        )));
    }
    let n_frames = (w.len() - frame) / hop + 1;
    let samples = (0..n_frames)
        .map(|k| {
            let start = k * hop;
            let sum_sq: f64 = w.samples[start..start + frame].iter().map(|x| x * x).sum();
            (sum_sq / frame as f64).sqrt()
        })
        .collect();
    Ok(Waveform::new(samples, w.rate_hz / hop as f64, w.t0_s + p.frame_s / 2.0))
}

/// Divide an envelope by the mean of its frames whose centers fall within the
/// first `baseline_s` of the underlying segment. The baseline region then
/// averages exactly 1.
pub fn normalize_envelope(env: &Waveform, p: &EnvelopeParams) -> Result<Waveform> {
    p.validate()?;
    let segment_start = env.t0_s - p.frame_s / 2.0;
    let baseline_end = segment_start + p.baseline_s;
    let baseline: Vec<f64> = env
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| env.time_at(*i) < baseline_end)
        .map(|(_, &v)| v)
        .collect();
    if baseline.is_empty() {
        return Err(Error::degenerate(
            "envelope has no frames in the baseline window".to_string(),
        ));
    }
    let mean = baseline.iter().sum::<f64>() / baseline.len() as f64;
    if mean <= 0.0 {
        return Err(Error::degenerate(format!(
            "baseline mean {mean} must be positive"
        )));
    }
    Ok(Waveform::new(
        env.samples.iter().map(|&v| v / mean).collect(),
        env.rate_hz,
        env.t0_s,
    ))
}

/// Peaks of the two normalized SCM envelopes over the post-switch window.
pub fn nemg_peak_features(env_left: &Waveform, env_right: &Waveform) -> Result<NemgPeaks> {
    if env_left.len() != env_right.len() {
        return Err(Error::validation(format!(
            "envelope lengths differ: {} vs {}",
            env_left.len(),
            env_right.len()
        )));
    }
    let peak = |env: &Waveform| -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for i in window_indices(env, PEAK_WINDOW_S.0, PEAK_WINDOW_S.1) {
            best = best.max(env.samples[i]);
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::validation(
                "envelope does not cover the (0, 2] s peak window".to_string(),
            ));
        }
        Ok(best)
    };
    Ok(NemgPeaks { left: peak(env_left)?, right: peak(env_right)? })
}

/// Yaw variation: plateau mean (t in [1.5, 2.5] s) minus pre-switch baseline
/// mean (t in [-0.5, 0) s). Robust to constant offsets and slow drift.
pub fn yaw_variation(yaw: &Waveform) -> Result<f64> {
    let mean_over = |lo: f64, hi: f64| -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..yaw.len() {
            let t = yaw.time_at(i);
            if t >= lo && t < hi {
                sum += yaw.samples[i];
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    };
    let baseline = mean_over(-0.5, 0.0).ok_or_else(|| {
        Error::validation("yaw trace does not cover the 0.5 s pre-switch baseline".to_string())
    })?;
    let plateau = mean_over(YAW_PLATEAU_S.0, YAW_PLATEAU_S.1 + 1e-12).ok_or_else(|| {
        Error::validation("yaw trace does not cover the plateau window".to_string())
    })?;
    Ok(plateau - baseline)
}
