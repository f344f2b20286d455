//! Deterministic preprocessing: zero-phase IIR filtering, resampling,
//! trigger-based segmentation and per-subject normalization.

mod design;

pub use design::{cascade_gain, Biquad};

use crate::error::{Error, Result};

/// Uniformly sampled real-valued channel.
///
/// `t0_s` is the time of the first sample relative to the switching instant;
/// segments clipped around a switch use the convention t0 = -0.5 s.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub rate_hz: f64,
    pub t0_s: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate_hz: f64, t0_s: f64) -> Self {
        debug_assert!(rate_hz > 0.0);
        Waveform { samples, rate_hz, t0_s }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.t0_s + i as f64 / self.rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    /// Linear interpolation at time `t`, clamped to the waveform's span.
    pub fn sample_at(&self, t: f64) -> f64 {
        assert!(!self.is_empty(), "cannot sample an empty waveform");
        let pos = (t - self.t0_s) * self.rate_hz;
        if pos <= 0.0 {
            return self.samples[0];
        }
        let last = self.len() - 1;
        if pos >= last as f64 {
            return self.samples[last];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// IIR filter specification (Butterworth family, designed at apply time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSpec {
    Lowpass { corner_hz: f64, order: usize, zero_phase: bool },
    Bandpass { low_hz: f64, high_hz: f64, order: usize, zero_phase: bool },
}

impl FilterSpec {
    /// Zero-phase 4th-order lowpass, the default for all pipeline filters.
    pub fn lowpass(corner_hz: f64) -> Self {
        FilterSpec::Lowpass { corner_hz, order: 4, zero_phase: true }
    }

    pub fn bandpass(low_hz: f64, high_hz: f64) -> Self {
        FilterSpec::Bandpass { low_hz, high_hz, order: 4, zero_phase: true }
    }

    fn design(&self, rate_hz: f64) -> Result<Vec<Biquad>> {
        match *self {
            FilterSpec::Lowpass { corner_hz, order, .. } => {
                design::butter_lowpass(order, corner_hz, rate_hz)
            }
            FilterSpec::Bandpass { low_hz, high_hz, order, .. } => {
                design::butter_bandpass(order, low_hz, high_hz, rate_hz)
            }
        }
    }

    fn zero_phase(&self) -> bool {
        match *self {
            FilterSpec::Lowpass { zero_phase, .. } | FilterSpec::Bandpass { zero_phase, .. } => {
                zero_phase
            }
        }
    }
}

/// Run a biquad cascade over a signal (direct form II transposed).
fn run_cascade(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in sos {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b0 * xin + s1;
            s1 = s.b1 * xin - s.a1 * out + s2;
            s2 = s.b2 * xin - s.a2 * out;
            *v = out;
        }
    }
    y
}

/// Odd (antisymmetric about the endpoints) reflection padding.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(2.0 * x[0] - x[i]);
    }
    out.extend_from_slice(x);
    for i in 1..=pad {
        out.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    out
}

/// Apply the filter; zero-phase specs run forward-backward over 1 s of
/// reflect padding at each end, which is discarded afterwards.
///
/// Output length, rate and time origin match the input.
pub fn apply_filter(w: &Waveform, spec: &FilterSpec) -> Result<Waveform> {
    let sos = spec.design(w.rate_hz)?;
    if w.is_empty() {
        return Ok(w.clone());
    }
    let samples = if spec.zero_phase() {
        let pad = w.rate_hz.round() as usize;
        let padded = reflect_pad(&w.samples, pad);
        let pad = (padded.len() - w.len()) / 2;
        let fwd = run_cascade(&sos, &padded);
        let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
        rev = run_cascade(&sos, &rev);
        rev.reverse();
        rev[pad..pad + w.len()].to_vec()
    } else {
        run_cascade(&sos, &w.samples)
    };
    Ok(Waveform::new(samples, w.rate_hz, w.t0_s))
}

/// Resample to `target_hz`, preserving duration within one output period.
///
/// Downsampling first applies a zero-phase anti-alias lowpass at
/// 0.45 x target rate, then linearly interpolates on the filtered signal.
pub fn resample(w: &Waveform, target_hz: f64) -> Result<Waveform> {
    if target_hz <= 0.0 {
        return Err(Error::config(format!("target rate must be positive, got {target_hz}")));
    }
    if (target_hz - w.rate_hz).abs() < 1e-12 {
        return Ok(w.clone());
    }
    let filtered;
    let source = if target_hz < w.rate_hz {
        filtered = apply_filter(w, &FilterSpec::lowpass(0.45 * target_hz))?;
        &filtered
    } else {
        w
    };

    let n_out = (w.len() as f64 * target_hz / w.rate_hz).round() as usize;
    let ratio = w.rate_hz / target_hz;
    let last = source.len().saturating_sub(1) as f64;
    let samples = (0..n_out)
        .map(|i| {
            let pos = (i as f64 * ratio).min(last);
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            if frac == 0.0 {
                source.samples[j]
            } else {
                source.samples[j] * (1.0 - frac) + source.samples[j + 1] * frac
            }
        })
        .collect();
    Ok(Waveform::new(samples, target_hz, w.t0_s))
}

/// Clip fixed-length segments around trigger instants.
///
/// Each segment spans `[trigger - pre_s, trigger + post_s)` and gets
/// t0 = -pre_s. Triggers without enough history or future are all reported
/// in one error.
pub fn clip_segments(
    continuous: &Waveform,
    triggers_s: &[f64],
    pre_s: f64,
    post_s: f64,
) -> Result<Vec<Waveform>> {
    let n_seg = ((pre_s + post_s) * continuous.rate_hz).round() as usize;
    let mut bad = Vec::new();
    let mut out = Vec::with_capacity(triggers_s.len());
    for (idx, &t) in triggers_s.iter().enumerate() {
        let start = ((t - pre_s - continuous.t0_s) * continuous.rate_hz).round() as i64;
        if start < 0 || start as usize + n_seg > continuous.len() {
            bad.push((idx, t));
            continue;
        }
        let start = start as usize;
        out.push(Waveform::new(
            continuous.samples[start..start + n_seg].to_vec(),
            continuous.rate_hz,
            -pre_s,
        ));
    }
    if !bad.is_empty() {
        let list: Vec<String> = bad
            .iter()
            .map(|(i, t)| format!("trigger {i} at {t:.3} s"))
            .collect();
        return Err(Error::validation(format!(
            "triggers too close to the recording edge: {}",
            list.join(", ")
        )));
    }
    Ok(out)
}

/// Normalize one subject's channel group by its global max-abs sample.
///
/// All waveforms in the group are divided by the same scale, so relative
/// shapes are preserved and the group's max-abs becomes exactly 1.
/// Returns the scale that was divided out.
pub fn normalize_subject(group: &mut [&mut Waveform]) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::degenerate("empty normalization group".to_string()));
    }
    let peak = group.iter().map(|w| w.max_abs()).fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Err(Error::degenerate(
            "all-zero channel group cannot be normalized".to_string(),
        ));
    }
    for w in group.iter_mut() {
        for v in w.samples.iter_mut() {
            *v /= peak;
        }
    }
    Ok(peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(f: f64, rate: f64, dur: f64) -> Waveform {
        let n = (dur * rate).round() as usize;
        Waveform::new(
            (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect(),
            rate,
            0.0,
        )
    }

    /// Steady-state amplitude over the interior of the signal.
    fn interior_amp(w: &Waveform) -> f64 {
        let skip = (0.5 * w.rate_hz) as usize;
        w.samples[skip..w.len() - skip]
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    #[test]
    fn lowpass_passes_dc() {
        let w = Waveform::new(vec![3.25; 320], 64.0, -0.5);
        let y = apply_filter(&w, &FilterSpec::lowpass(10.0)).unwrap();
        assert_eq!(y.len(), 320);
        // Edge-transient tolerance band of 0.25 s at each end.
        let band = (0.25 * 64.0) as usize;
        for &v in &y.samples[band..y.len() - band] {
            assert!((v - 3.25).abs() < 1e-9, "DC distorted: {v}");
        }
    }

    #[test]
    fn lowpass_attenuates_25hz_to_1e_2() {
        let w = sine(25.0, 64.0, 5.0);
        let y = apply_filter(&w, &FilterSpec::lowpass(10.0)).unwrap();
        let amp = interior_amp(&y);
        assert!(amp <= 0.01, "25 Hz residual amplitude {amp}");
    }

    #[test]
    fn sine_injection_matches_analytic_response() {
        // At a moderately attenuated frequency the measured steady-state
        // amplitude must agree with the analytic magnitude response applied
        // twice (forward-backward filtering squares the gain).
        let w = sine(14.0, 64.0, 8.0);
        let y = apply_filter(&w, &FilterSpec::lowpass(10.0)).unwrap();
        let amp = interior_amp(&y);
        let sos = FilterSpec::lowpass(10.0).design(64.0).unwrap();
        let expected = cascade_gain(&sos, 14.0, 64.0).powi(2);
        assert!(
            (amp - expected).abs() < 0.05 * expected,
            "measured {amp}, analytic {expected}"
        );
    }

    #[test]
    fn lowpass_passes_1hz_within_1db() {
        let w = sine(1.0, 64.0, 8.0);
        let y = apply_filter(&w, &FilterSpec::lowpass(10.0)).unwrap();
        let amp = interior_amp(&y);
        assert!(amp > 0.891 && amp < 1.122, "1 Hz amplitude {amp}");
    }

    #[test]
    fn bandpass_rejects_10_and_400hz_by_40db() {
        for f in [10.0, 400.0] {
            let w = sine(f, 1000.0, 5.0);
            let y = apply_filter(&w, &FilterSpec::bandpass(40.0, 250.0)).unwrap();
            let amp = interior_amp(&y);
            assert!(amp <= 0.01, "{f} Hz residual amplitude {amp}");
        }
    }

    #[test]
    fn bandpass_passes_band_center() {
        let w = sine(100.0, 1000.0, 5.0);
        let y = apply_filter(&w, &FilterSpec::bandpass(40.0, 250.0)).unwrap();
        let amp = interior_amp(&y);
        assert!(amp > 0.95 && amp < 1.05, "100 Hz amplitude {amp}");
    }

    #[test]
    fn zero_phase_preserves_symmetric_pulse_argmax() {
        // Symmetric triangular pulse centered at sample 160.
        let n = 320;
        let c = 160i64;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let d = (i as i64 - c).abs() as f64;
                (1.0 - d / 40.0).max(0.0)
            })
            .collect();
        let w = Waveform::new(samples, 64.0, -0.5);
        let y = apply_filter(&w, &FilterSpec::lowpass(10.0)).unwrap();
        let argmax = y
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as i64;
        assert!((argmax - c).abs() <= 1, "argmax moved to {argmax}");
    }

    #[test]
    fn filter_is_linear() {
        let x = sine(3.0, 64.0, 5.0);
        let y = sine(7.0, 64.0, 5.0);
        let spec = FilterSpec::lowpass(10.0);
        let (a, b) = (2.5, -1.25);
        let combined = Waveform::new(
            x.samples
                .iter()
                .zip(&y.samples)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
            64.0,
            0.0,
        );
        let lhs = apply_filter(&combined, &spec).unwrap();
        let fx = apply_filter(&x, &spec).unwrap();
        let fy = apply_filter(&y, &spec).unwrap();
        let scale = lhs.max_abs().max(1e-30);
        for i in 0..lhs.len() {
            let rhs = a * fx.samples[i] + b * fy.samples[i];
            assert!(
                (lhs.samples[i] - rhs).abs() / scale < 1e-9,
                "nonlinearity at sample {i}"
            );
        }
    }

    #[test]
    fn corner_at_nyquist_is_config_error() {
        let w = sine(1.0, 64.0, 1.0);
        assert!(matches!(
            apply_filter(&w, &FilterSpec::lowpass(32.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn resample_integer_factor_halves_length() {
        let w = sine(5.0, 1000.0, 2.5);
        assert_eq!(w.len(), 2500);
        let y = resample(&w, 500.0).unwrap();
        assert_eq!(y.len(), 1250);
        assert_eq!(y.rate_hz, 500.0);
        assert_eq!(y.t0_s, w.t0_s);
    }

    #[test]
    fn resample_5s_to_64hz_gives_320() {
        let w = sine(5.0, 1000.0, 5.0);
        let y = resample(&w, 64.0).unwrap();
        assert_eq!(y.len(), 320);
    }

    #[test]
    fn resample_preserves_5hz_amplitude() {
        let w = sine(5.0, 1000.0, 5.0);
        let y = resample(&w, 64.0).unwrap();
        let amp = interior_amp(&y);
        assert!((amp - 1.0).abs() <= 0.02, "5 Hz amplitude {amp}");
    }

    #[test]
    fn resample_twice_matches_direct_on_lowband_content() {
        let w = sine(5.0, 1000.0, 5.0);
        let direct = resample(&w, 64.0).unwrap();
        let via = resample(&resample(&w, 500.0).unwrap(), 64.0).unwrap();
        assert_eq!(direct.len(), via.len());
        for i in (0.5 * 64.0) as usize..direct.len() - 32 {
            assert!(
                (direct.samples[i] - via.samples[i]).abs() < 0.02,
                "two-step resample deviates at {i}"
            );
        }
    }

    #[test]
    fn clip_produces_expected_segments() {
        // 105 s trial at 250 Hz with 20 triggers, one every 5 s starting at 2.5 s.
        let n = (105.0 * 250.0) as usize;
        let cont = Waveform::new(vec![0.0; n], 250.0, 0.0);
        let triggers: Vec<f64> = (0..20).map(|i| 2.5 + 5.0 * i as f64).collect();
        let segs = clip_segments(&cont, &triggers, 0.5, 4.5).unwrap();
        assert_eq!(segs.len(), 20);
        for s in &segs {
            assert_eq!(s.len(), 1250);
            assert_eq!(s.t0_s, -0.5);
        }
    }

    #[test]
    fn clip_no_triggers_is_empty() {
        let cont = Waveform::new(vec![0.0; 1000], 250.0, 0.0);
        assert!(clip_segments(&cont, &[], 0.5, 4.5).unwrap().is_empty());
    }

    #[test]
    fn clip_trigger_near_edge_errors_with_index() {
        let cont = Waveform::new(vec![0.0; 2500], 250.0, 0.0);
        let err = clip_segments(&cont, &[0.2], 0.5, 4.5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("trigger 0"), "message: {msg}");
    }

    #[test]
    fn normalize_scales_to_unit_peak() {
        let mut a = Waveform::new(vec![60.0, -240.0, 120.0], 64.0, -0.5);
        let mut b = Waveform::new(vec![12.0, 48.0], 64.0, -0.5);
        let scale = normalize_subject(&mut [&mut a, &mut b]).unwrap();
        assert_eq!(scale, 240.0);
        assert_eq!(a.samples, vec![0.25, -1.0, 0.5]);
        assert_eq!(b.samples, vec![0.05, 0.2]);
    }

    #[test]
    fn normalize_is_idempotent_and_scale_free() {
        let base = vec![0.5, -1.0, 0.25];
        let mut w1 = Waveform::new(base.clone(), 64.0, 0.0);
        normalize_subject(&mut [&mut w1]).unwrap();
        let once = w1.samples.clone();
        normalize_subject(&mut [&mut w1]).unwrap();
        assert_eq!(w1.samples, once, "not idempotent");

        // Positive homogeneity of degree zero: scaling raw data changes nothing.
        let mut w2 = Waveform::new(base.iter().map(|x| x * 7.5).collect(), 64.0, 0.0);
        normalize_subject(&mut [&mut w2]).unwrap();
        for (x, y) in once.iter().zip(&w2.samples) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_subjects_independently() {
        let mut s1 = Waveform::new(vec![100.0, 50.0], 64.0, 0.0);
        let mut s2 = Waveform::new(vec![10.0, 2.5], 64.0, 0.0);
        normalize_subject(&mut [&mut s1]).unwrap();
        normalize_subject(&mut [&mut s2]).unwrap();
        // Each subject's peak maps to 1; cross-subject ratios are not preserved.
        assert_eq!(s1.samples, vec![1.0, 0.5]);
        assert_eq!(s2.samples, vec![1.0, 0.25]);
    }

    #[test]
    fn normalize_all_zero_group_errors() {
        let mut w = Waveform::new(vec![0.0; 8], 64.0, 0.0);
        assert!(matches!(
            normalize_subject(&mut [&mut w]),
            Err(Error::DegenerateInput(_))
        ));
    }
}
