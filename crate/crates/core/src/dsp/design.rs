//! Butterworth IIR design in zero-pole-gain form, emitted as biquad cascades.
//!
//! The design path mirrors the classic analog-prototype route: unit
//! Butterworth poles, frequency pre-warp, lowpass/bandpass transform in the
//! s-plane, bilinear transform to the z-plane, then pairing of conjugate
//! poles into second-order sections.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section, normalized so a0 = 1.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex frequency response at normalized angular frequency w (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = Complex64::from_polar(1.0, -2.0 * w);
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (Complex64::new(1.0, 0.0) + self.a1 * z1 + self.a2 * z2)
    }
}

/// Magnitude response of a biquad cascade at frequency `f_hz` for sample rate `rate_hz`.
pub fn cascade_gain(sos: &[Biquad], f_hz: f64, rate_hz: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f_hz / rate_hz;
    sos.iter()
        .map(|s| s.response(w).norm())
        .product()
}

/// Analog Butterworth prototype poles (unit cutoff, left half-plane).
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Bilinear transform of one s-plane point with fs = 2 convention (fs2 = 4).
fn bilinear_point(s: Complex64) -> Complex64 {
    let fs2 = Complex64::new(4.0, 0.0);
    (fs2 + s) / (fs2 - s)
}

fn validate_corner(f: f64, rate_hz: f64) -> Result<()> {
    let nyquist = rate_hz / 2.0;
    if !(f > 0.0 && f < nyquist) {
        return Err(Error::config(format!(
            "filter corner {f} Hz must lie strictly inside (0, {nyquist}) Hz at rate {rate_hz} Hz"
        )));
    }
    Ok(())
}

fn validate_order(order: usize) -> Result<()> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::config(format!(
            "filter order must be a positive even integer, got {order}"
        )));
    }
    Ok(())
}

/// Group digital poles into conjugate-pair biquads with the given numerator
/// template, distributing the overall gain evenly across sections.
fn sections_from_poles(
    poles: &[Complex64],
    numerator: (f64, f64, f64),
    gain: f64,
) -> Result<Vec<Biquad>> {
    // Even-order Butterworth designs have strictly complex poles; keep the
    // upper-half representatives, each standing for a conjugate pair.
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    if upper.len() * 2 != poles.len() {
        return Err(Error::config(
            "internal filter design error: expected conjugate pole pairs".to_string(),
        ));
    }
    // Sections ordered from least to most resonant keeps intermediate signals tame.
    upper.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());

    if gain <= 0.0 || !gain.is_finite() {
        return Err(Error::config(format!(
            "internal filter design error: non-positive overall gain {gain}"
        )));
    }
    let per_section = gain.powf(1.0 / upper.len() as f64);
    Ok(upper
        .into_iter()
        .map(|p| Biquad {
            b0: numerator.0 * per_section,
            b1: numerator.1 * per_section,
            b2: numerator.2 * per_section,
            a1: -2.0 * p.re,
            a2: p.norm_sqr(),
        })
        .collect())
}

/// Digital Butterworth lowpass as a biquad cascade.
pub fn butter_lowpass(order: usize, corner_hz: f64, rate_hz: f64) -> Result<Vec<Biquad>> {
    validate_order(order)?;
    validate_corner(corner_hz, rate_hz)?;

    let wn = corner_hz / (rate_hz / 2.0);
    let warped = 4.0 * (std::f64::consts::PI * wn / 2.0).tan();

    let analog: Vec<Complex64> = prototype_poles(order).iter().map(|p| p * warped).collect();
    let k_analog = warped.powi(order as i32);

    let digital: Vec<Complex64> = analog.iter().map(|&p| bilinear_point(p)).collect();
    // Gain through bilinear: k * prod(fs2 - z_analog) / prod(fs2 - p_analog);
    // the analog design has no finite zeros, so the numerator product is 1.
    let denom: Complex64 = analog
        .iter()
        .map(|&p| Complex64::new(4.0, 0.0) - p)
        .product();
    let k_digital = k_analog * (Complex64::new(1.0, 0.0) / denom).re;

    // All transformed zeros sit at z = -1: numerator (1 + z^-1)^2 per section.
    sections_from_poles(&digital, (1.0, 2.0, 1.0), k_digital)
}

/// Digital Butterworth bandpass as a biquad cascade (2x`order` poles).
pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, rate_hz: f64) -> Result<Vec<Biquad>> {
    validate_order(order)?;
    validate_corner(low_hz, rate_hz)?;
    validate_corner(high_hz, rate_hz)?;
    if low_hz >= high_hz {
        return Err(Error::config(format!(
            "bandpass corners must satisfy low < high, got {low_hz} >= {high_hz}"
        )));
    }

    let w1 = 4.0 * (std::f64::consts::PI * low_hz / rate_hz).tan();
    let w2 = 4.0 * (std::f64::consts::PI * high_hz / rate_hz).tan();
    let bw = w2 - w1;
    let wo_sq = w1 * w2;

    // Lowpass-to-bandpass: each prototype pole splits into two.
    let mut analog = Vec::with_capacity(2 * order);
    for p in prototype_poles(order) {
        let scaled = p * (bw / 2.0);
        let disc = (scaled * scaled - wo_sq).sqrt();
        analog.push(scaled + disc);
        analog.push(scaled - disc);
    }
    let k_analog = bw.powi(order as i32);

    let digital: Vec<Complex64> = analog.iter().map(|&p| bilinear_point(p)).collect();
    // Analog zeros: `order` of them at s = 0, mapping to z = +1; the gain
    // numerator product over those zeros is fs2^order.
    let denom: Complex64 = analog
        .iter()
        .map(|&p| Complex64::new(4.0, 0.0) - p)
        .product();
    let k_digital = k_analog * (Complex64::new(4.0f64.powi(order as i32), 0.0) / denom).re;

    // Each section carries one zero at +1 and one at -1: (1 - z^-2).
    sections_from_poles(&digital, (1.0, 0.0, -1.0), k_digital)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn lowpass_dc_gain_is_unity() {
        let sos = butter_lowpass(4, 10.0, 64.0).unwrap();
        assert!((cascade_gain(&sos, 0.0, 64.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lowpass_corner_is_3db() {
        let sos = butter_lowpass(4, 10.0, 64.0).unwrap();
        let g = db(cascade_gain(&sos, 10.0, 64.0));
        assert!((g + 3.0103).abs() < 0.05, "corner gain {g} dB");
    }

    #[test]
    fn lowpass_stopband_rolls_off() {
        let sos = butter_lowpass(4, 10.0, 64.0).unwrap();
        // 4th order: at least 40 dB down one octave plus above the corner.
        assert!(db(cascade_gain(&sos, 25.0, 64.0)) < -40.0);
    }

    #[test]
    fn bandpass_center_passes_and_edges_are_3db() {
        let sos = butter_bandpass(4, 40.0, 250.0, 1000.0).unwrap();
        let center = (40.0f64 * 250.0).sqrt();
        assert!(db(cascade_gain(&sos, center, 1000.0)).abs() < 0.1);
        assert!((db(cascade_gain(&sos, 40.0, 1000.0)) + 3.0103).abs() < 0.1);
        assert!((db(cascade_gain(&sos, 250.0, 1000.0)) + 3.0103).abs() < 0.1);
    }

    #[test]
    fn bandpass_rejects_out_of_band() {
        let sos = butter_bandpass(4, 40.0, 250.0, 1000.0).unwrap();
        assert!(db(cascade_gain(&sos, 10.0, 1000.0)) < -40.0);
        assert!(db(cascade_gain(&sos, 400.0, 1000.0)) < -40.0);
        assert!(cascade_gain(&sos, 0.0, 1000.0) < 1e-9);
    }

    #[test]
    fn sections_are_stable() {
        for sos in [
            butter_lowpass(4, 10.0, 64.0).unwrap(),
            butter_lowpass(4, 28.8, 64.0).unwrap(),
            butter_bandpass(4, 40.0, 250.0, 1000.0).unwrap(),
        ] {
            for s in sos {
                // Stability: poles of z^2 + a1 z + a2 inside the unit circle.
                assert!(s.a2 < 1.0 && s.a1.abs() < 1.0 + s.a2);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(butter_lowpass(3, 10.0, 64.0).is_err());
        assert!(butter_lowpass(4, 32.0, 64.0).is_err());
        assert!(butter_lowpass(4, 0.0, 64.0).is_err());
        assert!(butter_bandpass(4, 250.0, 40.0, 1000.0).is_err());
        assert!(butter_bandpass(4, 40.0, 500.0, 1000.0).is_err());
    }
}
