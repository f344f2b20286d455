//! Parametric generator of raw-rate synthetic HEOG, NEMG and 9-axis IMU
//! signals for gaze-switch segments.
//!
//! The morphology is pulse-based: an eye component of the gaze shift drives
//! the HEOG peak, a head component drives the contralateral SCM burst and the
//! yaw trajectory. Amplitude scales, onsets, decay constants and noise levels
//! are free parameters chosen so that mean waveforms show a saccade peak near
//! 0.4 s, an SCM burst rising near 0.1 s and peaking near 0.4 s, and a yaw
//! ramp from about 0.2 s that stabilizes at 1 s. Only timing, polarity and
//! amplitude monotonicity are contractual.
//!
//! Each segment draws from counter-derived substreams keyed by
//! (master seed, subject, trial, switch index, channel), so generation is
//! deterministic and parallelizable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;

use crate::dsp::{apply_filter, FilterSpec, Waveform};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Segment time base: 5 s clipped from 0.5 s before the switch.
pub const SEGMENT_PRE_S: f64 = 0.5;
pub const SEGMENT_POST_S: f64 = 4.5;
pub const SEGMENT_DURATION_S: f64 = 5.0;

/// Acquisition rates.
pub const HEOG_RATE_HEAD_FIXED_HZ: f64 = 250.0;
pub const HEOG_RATE_HEAD_FREE_HZ: f64 = 1000.0;
pub const NEMG_RATE_HZ: f64 = 1000.0;
pub const IMU_RATE_HZ: f64 = 30.0;

/// HEOG generative constants (microvolt scale).
pub const HEOG_GAIN_UV_PER_DEG: f64 = 14.0;
pub const HEOG_RISE_S: f64 = 0.2;
pub const HEOG_DECAY_TAU_S: f64 = 3.0;
pub const HEOG_DRIFT_MAX_UV_PER_S: f64 = 2.0;
pub const HEOG_NOISE_SIGMA_UV: f64 = 45.0;
const HEOG_NOISE_CORNER_HZ: f64 = 1.5;

/// NEMG generative constants.
pub const NEMG_BURST_PEAK_S: f64 = 0.4;
const NEMG_BURST_DECAY_TAU_S: f64 = 0.8;
const NEMG_GAIN_MAX: f64 = 0.9;
const NEMG_GAIN_EXPONENT: f64 = 0.9;
const NEMG_GAIN_JITTER_SIGMA: f64 = 0.15;
const NEMG_ADDITIVE_NOISE: f64 = 0.25;
const NEMG_IPSI_DIP: f64 = 0.2;
const NEMG_IPSI_FLOOR: f64 = 0.2;

/// IMU generative constants.
pub const YAW_SETTLE_S: f64 = 1.0;
const IMU_GYRO_NOISE_DPS: f64 = 0.15;
const IMU_ACCEL_NOISE_G: f64 = 0.005;
const IMU_MAG_NOISE: f64 = 0.003;
const GYRO_BIAS_SIGMA_DPS: f64 = 0.4;

/// Head-fixed stimulus azimuths; positive azimuth is to the listener's left.
pub const HEAD_FIXED_POSITIONS_DEG: [f64; 5] = [-45.0, -30.0, 0.0, 30.0, 45.0];
/// Head-free gaze-variation magnitudes, one per trial.
pub const HEAD_FREE_MAGNITUDES_DEG: [f64; 3] = [30.0, 60.0, 90.0];
/// Switches per head-free trial (alternating direction).
pub const HEAD_FREE_SWITCHES_PER_TRIAL: usize = 40;

/// Which experiment a segment belongs to; fixes the label set and rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    HeadFixed,
    HeadFree,
}

impl ExperimentKind {
    /// The ordered label set (ascending delta); class_index is the position here.
    pub fn deltas(&self) -> &'static [f64] {
        match self {
            ExperimentKind::HeadFixed => &[
                -90.0, -75.0, -60.0, -45.0, -30.0, -15.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0,
            ],
            ExperimentKind::HeadFree => &[-90.0, -60.0, -30.0, 30.0, 60.0, 90.0],
        }
    }

    pub fn class_count(&self) -> usize {
        self.deltas().len()
    }

    pub fn heog_rate_hz(&self) -> f64 {
        match self {
            ExperimentKind::HeadFixed => HEOG_RATE_HEAD_FIXED_HZ,
            ExperimentKind::HeadFree => HEOG_RATE_HEAD_FREE_HZ,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::HeadFixed => "head_fixed",
            ExperimentKind::HeadFree => "head_free",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "head_fixed" => Ok(ExperimentKind::HeadFixed),
            "head_free" => Ok(ExperimentKind::HeadFree),
            other => Err(Error::validation(format!("unknown experiment kind `{other}`"))),
        }
    }
}

/// Labeled eye-gaze variation: signed degrees plus its class index within the
/// experiment's label set. Positive delta is a leftward gaze change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeShift {
    pub delta_deg: f64,
    pub class_index: usize,
    pub experiment: ExperimentKind,
}

impl GazeShift {
    pub fn new(delta_deg: f64, experiment: ExperimentKind) -> Result<Self> {
        let deltas = experiment.deltas();
        match deltas.iter().position(|&d| d == delta_deg) {
            Some(class_index) => Ok(GazeShift { delta_deg, class_index, experiment }),
            None => Err(Error::validation(format!(
                "delta {delta_deg} deg is not a valid {} gaze variation",
                experiment.name()
            ))),
        }
    }

    pub fn from_class_index(class_index: usize, experiment: ExperimentKind) -> Result<Self> {
        experiment
            .deltas()
            .get(class_index)
            .map(|&delta_deg| GazeShift { delta_deg, class_index, experiment })
            .ok_or_else(|| {
                Error::validation(format!(
                    "class index {class_index} out of range for {}",
                    experiment.name()
                ))
            })
    }
}

/// Per-trial gaze strategy: how much of the shift the head executes, response
/// latencies, and sensor imperfections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyProfile {
    /// Share of the gaze variation executed by head rotation, in [0, 1].
    pub head_fraction: f64,
    pub eye_onset_s: f64,
    pub head_onset_s: f64,
    pub emg_onset_s: f64,
    pub noise_scale: f64,
    pub gyro_bias_dps: f64,
}

impl StrategyProfile {
    /// Noise-free, bias-free profile with nominal onsets; handy for oracles.
    pub fn ideal(head_fraction: f64) -> Self {
        StrategyProfile {
            head_fraction,
            eye_onset_s: 0.2,
            head_onset_s: 0.2,
            emg_onset_s: 0.1,
            noise_scale: 0.0,
            gyro_bias_dps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.head_fraction) {
            return Err(Error::config(format!(
                "head_fraction must be in [0, 1], got {}",
                self.head_fraction
            )));
        }
        for (name, v) in [
            ("eye_onset_s", self.eye_onset_s),
            ("head_onset_s", self.head_onset_s),
            ("emg_onset_s", self.emg_onset_s),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 1) s, got {v}")));
            }
        }
        if self.noise_scale < 0.0 {
            return Err(Error::config(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

/// Dataset generation plan.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub experiment: ExperimentKind,
    pub n_subjects: usize,
    pub n_trials_per_subject: usize,
    pub master_seed: u64,
    pub degraded_nemg: bool,
    pub noise_scale: f64,
    /// (mean, spread) of the per-trial head_fraction draw (head-free only).
    pub strategy_mean: f64,
    pub strategy_spread: f64,
}

impl GeneratorConfig {
    /// 4 subjects x 10 trials x 20 switching conditions = 800 segments.
    pub fn head_fixed_default() -> Self {
        GeneratorConfig {
            experiment: ExperimentKind::HeadFixed,
            n_subjects: 4,
            n_trials_per_subject: 10,
            master_seed: 42,
            degraded_nemg: false,
            noise_scale: 1.0,
            strategy_mean: 0.0,
            strategy_spread: 0.0,
        }
    }

    /// 17 subjects x 3 trials x 40 switches = 2040 segments.
    pub fn head_free_default() -> Self {
        GeneratorConfig {
            experiment: ExperimentKind::HeadFree,
            n_subjects: 17,
            n_trials_per_subject: 3,
            master_seed: 42,
            degraded_nemg: false,
            noise_scale: 1.0,
            strategy_mean: 0.6,
            strategy_spread: 0.15,
        }
    }

    pub fn switches_per_trial(&self) -> usize {
        match self.experiment {
            ExperimentKind::HeadFixed => head_fixed_pairs().len(),
            ExperimentKind::HeadFree => HEAD_FREE_SWITCHES_PER_TRIAL,
        }
    }

    pub fn expected_segments(&self) -> usize {
        self.n_subjects * self.n_trials_per_subject * self.switches_per_trial()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.n_trials_per_subject == 0 {
            return Err(Error::config("subject and trial counts must be >= 1".to_string()));
        }
        if self.noise_scale < 0.0 || !self.noise_scale.is_finite() {
            return Err(Error::config(format!(
                "noise_scale must be a finite value >= 0, got {}",
                self.noise_scale
            )));
        }
        if self.experiment == ExperimentKind::HeadFree {
            let m = self.strategy_mean;
            let s = self.strategy_spread;
            if !(0.0 < m && m < 1.0) {
                return Err(Error::config(format!("strategy_mean must be in (0, 1), got {m}")));
            }
            if s < 0.0 || s * s >= m * (1.0 - m) {
                return Err(Error::config(format!(
                    "strategy_spread {s} is infeasible for mean {m}"
                )));
            }
        }
        Ok(())
    }
}

/// 9-axis IMU record at 30 Hz. The true yaw trajectory rides along for oracle
/// tests; the classification pipeline never reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSeries {
    pub rate_hz: f64,
    pub t0_s: f64,
    pub gyro_rps: Vec<[f64; 3]>,
    pub accel_g: Vec<[f64; 3]>,
    pub mag: Vec<[f64; 3]>,
    pub true_yaw_deg: Vec<f64>,
}

impl ImuSeries {
    pub fn len(&self) -> usize {
        self.gyro_rps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gyro_rps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gyro_rps.len();
        if self.accel_g.len() != n || self.mag.len() != n || self.true_yaw_deg.len() != n {
            return Err(Error::validation("IMU channels must have equal length".to_string()));
        }
        Ok(())
    }
}

/// Left/right sternocleidomastoid channel pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NemgPair {
    pub left: Waveform,
    pub right: Waveform,
}

/// One labeled 5 s multimodal record.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub subject: usize,
    pub trial: usize,
    pub switch_index: usize,
    pub shift: GazeShift,
    pub heog: Waveform,
    pub nemg: Option<NemgPair>,
    pub imu: Option<ImuSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GeneratorConfig,
    pub segments: Vec<Segment>,
}

impl Dataset {
    pub fn experiment(&self) -> ExperimentKind {
        self.config.experiment
    }

    pub fn class_count(&self) -> usize {
        self.config.experiment.class_count()
    }
}

fn sample_times(rate_hz: f64) -> impl Iterator<Item = f64> {
    let n = (SEGMENT_DURATION_S * rate_hz).round() as usize;
    (0..n).map(move |i| -SEGMENT_PRE_S + i as f64 / rate_hz)
}

/// Saccade pulse shape: raised-cosine rise over HEOG_RISE_S, then exponential
/// decay toward baseline. Peaks at exactly 1.
fn saccade_pulse(t: f64, onset_s: f64) -> f64 {
    if t <= onset_s {
        return 0.0;
    }
    let peak_t = onset_s + HEOG_RISE_S;
    if t < peak_t {
        0.5 * (1.0 - (std::f64::consts::PI * (t - onset_s) / HEOG_RISE_S).cos())
    } else {
        (-(t - peak_t) / HEOG_DECAY_TAU_S).exp()
    }
}

/// Unit-variance low-frequency Gaussian noise (one-pole smoothed, rescaled to
/// its realized standard deviation).
fn lowfreq_noise(n: usize, rate_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let alpha = (-2.0 * std::f64::consts::PI * HEOG_NOISE_CORNER_HZ / rate_hz).exp();
    let mut out = Vec::with_capacity(n);
    let mut state = 0.0;
    for _ in 0..n {
        state = alpha * state + (1.0 - alpha) * normal.sample(rng);
        out.push(state);
    }
    let var = out.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        for v in out.iter_mut() {
            *v *= inv;
        }
    }
    out
}

/// Synthesize one HEOG segment at the acquisition rate.
///
/// The eye executes (1 - head_fraction) of the shift; the signal is a scaled
/// saccade pulse plus a small random baseline drift and low-frequency noise.
/// Positive deflection corresponds to a leftward gaze change.
pub fn gen_heog(
    shift: &GazeShift,
    strategy: &StrategyProfile,
    rate_hz: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Waveform> {
    strategy.validate()?;
    if rate_hz != HEOG_RATE_HEAD_FIXED_HZ && rate_hz != HEOG_RATE_HEAD_FREE_HZ {
        return Err(Error::config(format!(
            "HEOG rate must be {HEOG_RATE_HEAD_FIXED_HZ} or {HEOG_RATE_HEAD_FREE_HZ} Hz, got {rate_hz}"
        )));
    }

    let eye_deg = (1.0 - strategy.head_fraction) * shift.delta_deg;
    let amplitude = HEOG_GAIN_UV_PER_DEG * eye_deg;
    let drift = rng.random_range(-HEOG_DRIFT_MAX_UV_PER_S..=HEOG_DRIFT_MAX_UV_PER_S);

    let n = (SEGMENT_DURATION_S * rate_hz).round() as usize;
    let noise = if strategy.noise_scale > 0.0 {
        lowfreq_noise(n, rate_hz, rng)
    } else {
        vec![0.0; n]
    };
    let sigma = HEOG_NOISE_SIGMA_UV * strategy.noise_scale;

    let samples = sample_times(rate_hz)
        .zip(noise)
        .map(|(t, nz)| amplitude * saccade_pulse(t, strategy.eye_onset_s) + drift * t + sigma * nz)
        .collect();
    Ok(Waveform::new(samples, rate_hz, -SEGMENT_PRE_S))
}

/// SCM activation gain as a function of the absolute head rotation (degrees).
/// Monotone increasing with a(0) = 0.
pub fn scm_gain(head_deg_abs: f64) -> f64 {
    NEMG_GAIN_MAX * (head_deg_abs / 90.0).powf(NEMG_GAIN_EXPONENT)
}

/// Burst shape shared by both SCM envelopes: raised-cosine rise from the EMG
/// onset to 0.4 s, then exponential decay back to rest.
fn scm_burst(t: f64, onset_s: f64) -> f64 {
    if t <= onset_s {
        return 0.0;
    }
    let peak_t = NEMG_BURST_PEAK_S.max(onset_s + 0.05);
    if t < peak_t {
        0.5 * (1.0 - (std::f64::consts::PI * (t - onset_s) / (peak_t - onset_s)).cos())
    } else {
        (-(t - peak_t) / NEMG_BURST_DECAY_TAU_S).exp()
    }
}

/// Deterministic left/right SCM amplitude envelopes at the NEMG rate
/// (no electrode gain jitter). Baseline level is 1.
///
/// A leftward head turn (positive head component) activates the right SCM;
/// the ipsilateral side dips. In degraded mode both sides take the
/// contralateral form, destroying direction information.
pub fn nemg_envelopes(
    shift: &GazeShift,
    strategy: &StrategyProfile,
    degraded: bool,
) -> (Vec<f64>, Vec<f64>) {
    nemg_envelopes_with_gains(shift, strategy, degraded, 1.0, 1.0)
}

fn nemg_envelopes_with_gains(
    shift: &GazeShift,
    strategy: &StrategyProfile,
    degraded: bool,
    gain_left: f64,
    gain_right: f64,
) -> (Vec<f64>, Vec<f64>) {
    let head_deg = strategy.head_fraction * shift.delta_deg;
    let a = scm_gain(head_deg.abs());
    let leftward = head_deg > 0.0;

    let mut left = Vec::new();
    let mut right = Vec::new();
    for t in sample_times(NEMG_RATE_HZ) {
        let burst = scm_burst(t, strategy.emg_onset_s);
        let contra = |g: f64| 1.0 + g * a * burst;
        let ipsi = |g: f64| (1.0 - NEMG_IPSI_DIP * g * a * burst).max(NEMG_IPSI_FLOOR);
        let (l, r) = if degraded {
            (contra(gain_left), contra(gain_right))
        } else if leftward {
            (ipsi(gain_left), contra(gain_right))
        } else {
            (contra(gain_left), ipsi(gain_right))
        };
        left.push(l);
        right.push(r);
    }
    (left, right)
}

/// Band-limited (40-250 Hz) unit-variance noise carrier at the NEMG rate.
fn emg_carrier(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let white: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let w = Waveform::new(white, NEMG_RATE_HZ, -SEGMENT_PRE_S);
    let mut filtered = apply_filter(&w, &FilterSpec::bandpass(40.0, 250.0))
        .expect("static NEMG carrier band is valid")
        .samples;
    let var = filtered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        for v in filtered.iter_mut() {
            *v *= inv;
        }
    }
    filtered
}

/// Synthesize the raw left/right SCM waveform pair at 1 kHz.
///
/// Each side is its amplitude envelope (with a per-segment lognormal
/// electrode-gain jitter) multiplying an independent band-limited noise
/// carrier, plus a sensor noise floor scaled by `noise_scale`.
pub fn gen_nemg(
    shift: &GazeShift,
    strategy: &StrategyProfile,
    degraded: bool,
    rng: &mut ChaCha8Rng,
) -> Result<NemgPair> {
    strategy.validate()?;
    let normal = Normal::new(0.0, NEMG_GAIN_JITTER_SIGMA).unwrap();
    let gain_left = normal.sample(rng).exp();
    let gain_right = normal.sample(rng).exp();
    let (env_l, env_r) = nemg_envelopes_with_gains(shift, strategy, degraded, gain_left, gain_right);

    let n = env_l.len();
    let noise_amp = NEMG_ADDITIVE_NOISE * strategy.noise_scale;
    let mut make_side = |env: &[f64]| -> Vec<f64> {
        let carrier = emg_carrier(n, rng);
        let floor = if noise_amp > 0.0 {
            emg_carrier(n, rng)
        } else {
            vec![0.0; n]
        };
        env.iter()
            .zip(carrier)
            .zip(floor)
            .map(|((&e, c), f)| e * c + noise_amp * f)
            .collect()
    };
    let left = make_side(&env_l);
    let right = make_side(&env_r);
    Ok(NemgPair {
        left: Waveform::new(left, NEMG_RATE_HZ, -SEGMENT_PRE_S),
        right: Waveform::new(right, NEMG_RATE_HZ, -SEGMENT_PRE_S),
    })
}

/// True yaw trajectory: smoothstep from the head onset to the settle time.
pub fn true_yaw_deg(t: f64, head_deg: f64, onset_s: f64) -> f64 {
    if t <= onset_s {
        return 0.0;
    }
    if t >= YAW_SETTLE_S {
        return head_deg;
    }
    let u = (t - onset_s) / (YAW_SETTLE_S - onset_s);
    head_deg * u * u * (3.0 - 2.0 * u)
}

fn d_true_yaw_dps(t: f64, head_deg: f64, onset_s: f64) -> f64 {
    if t <= onset_s || t >= YAW_SETTLE_S {
        return 0.0;
    }
    let span = YAW_SETTLE_S - onset_s;
    let u = (t - onset_s) / span;
    head_deg * 6.0 * u * (1.0 - u) / span
}

/// Synthesize the 9-axis IMU record for a segment (150 samples at 30 Hz).
///
/// Gravity stays (0, 0, 1) g under pure yaw; the magnetometer sees the
/// horizontal earth field rotated into the body frame and is renormalized
/// after noise. The gyro z axis carries the yaw rate plus the trial's bias.
pub fn gen_imu(
    shift: &GazeShift,
    strategy: &StrategyProfile,
    rng: &mut ChaCha8Rng,
) -> Result<ImuSeries> {
    strategy.validate()?;
    let head_deg = strategy.head_fraction * shift.delta_deg;
    let ns = strategy.noise_scale;
    let gyro_noise = Normal::new(0.0, (IMU_GYRO_NOISE_DPS * ns).to_radians().max(0.0)).unwrap();
    let accel_noise = Normal::new(0.0, IMU_ACCEL_NOISE_G * ns).unwrap();
    let mag_noise = Normal::new(0.0, IMU_MAG_NOISE * ns).unwrap();
    let bias_rps = strategy.gyro_bias_dps.to_radians();

    let mut series = ImuSeries {
        rate_hz: IMU_RATE_HZ,
        t0_s: -SEGMENT_PRE_S,
        gyro_rps: Vec::new(),
        accel_g: Vec::new(),
        mag: Vec::new(),
        true_yaw_deg: Vec::new(),
    };
    for t in sample_times(IMU_RATE_HZ) {
        let yaw = true_yaw_deg(t, head_deg, strategy.head_onset_s);
        let rate_rps = d_true_yaw_dps(t, head_deg, strategy.head_onset_s).to_radians();

        let gyro = [
            if ns > 0.0 { gyro_noise.sample(rng) } else { 0.0 },
            if ns > 0.0 { gyro_noise.sample(rng) } else { 0.0 },
            rate_rps + bias_rps + if ns > 0.0 { gyro_noise.sample(rng) } else { 0.0 },
        ];
        let accel = [
            if ns > 0.0 { accel_noise.sample(rng) } else { 0.0 },
            if ns > 0.0 { accel_noise.sample(rng) } else { 0.0 },
            1.0 + if ns > 0.0 { accel_noise.sample(rng) } else { 0.0 },
        ];
        let (s, c) = yaw.to_radians().sin_cos();
        let mut mag = [
            c + if ns > 0.0 { mag_noise.sample(rng) } else { 0.0 },
            -s + if ns > 0.0 { mag_noise.sample(rng) } else { 0.0 },
            if ns > 0.0 { mag_noise.sample(rng) } else { 0.0 },
        ];
        let norm = (mag[0] * mag[0] + mag[1] * mag[1] + mag[2] * mag[2]).sqrt();
        if norm > 0.0 {
            for v in mag.iter_mut() {
                *v /= norm;
            }
        }

        series.gyro_rps.push(gyro);
        series.accel_g.push(accel);
        series.mag.push(mag);
        series.true_yaw_deg.push(yaw);
    }
    Ok(series)
}

/// All 20 ordered position pairs of the head-fixed stimulus layout.
pub fn head_fixed_pairs() -> Vec<(f64, f64)> {
    let mut pairs = Vec::with_capacity(20);
    for &from in &HEAD_FIXED_POSITIONS_DEG {
        for &to in &HEAD_FIXED_POSITIONS_DEG {
            if from != to {
                pairs.push((from, to));
            }
        }
    }
    pairs
}

fn draw_strategy(config: &GeneratorConfig, subject: usize, trial: usize) -> StrategyProfile {
    let mut rng = stream(config.master_seed, &[tag::STRATEGY, subject as u64, trial as u64]);
    let head_fraction = match config.experiment {
        ExperimentKind::HeadFixed => 0.0,
        ExperimentKind::HeadFree => {
            if config.strategy_spread > 0.0 {
                let m = config.strategy_mean;
                let nu = m * (1.0 - m) / (config.strategy_spread * config.strategy_spread) - 1.0;
                let beta = Beta::new(m * nu, (1.0 - m) * nu).expect("validated strategy shape");
                beta.sample(&mut rng).clamp(0.1, 0.95)
            } else {
                config.strategy_mean.clamp(0.1, 0.95)
            }
        }
    };
    let draw = |rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64| {
        Normal::new(mean, sd).unwrap().sample(rng).clamp(lo, hi)
    };
    StrategyProfile {
        head_fraction,
        eye_onset_s: draw(&mut rng, 0.2, 0.03, 0.05, 0.45),
        head_onset_s: draw(&mut rng, 0.2, 0.04, 0.05, 0.5),
        emg_onset_s: draw(&mut rng, 0.1, 0.02, 0.02, 0.3),
        noise_scale: config.noise_scale,
        gyro_bias_dps: Normal::new(0.0, GYRO_BIAS_SIGMA_DPS).unwrap().sample(&mut rng),
    }
}

/// The (switch_index -> delta) plan for one trial.
fn trial_deltas(config: &GeneratorConfig, trial: usize) -> Vec<f64> {
    match config.experiment {
        ExperimentKind::HeadFixed => {
            head_fixed_pairs().iter().map(|&(from, to)| to - from).collect()
        }
        ExperimentKind::HeadFree => {
            let magnitude = HEAD_FREE_MAGNITUDES_DEG[trial % HEAD_FREE_MAGNITUDES_DEG.len()];
            (0..HEAD_FREE_SWITCHES_PER_TRIAL)
                .map(|k| if k % 2 == 0 { magnitude } else { -magnitude })
                .collect()
        }
    }
}

fn gen_segment(
    config: &GeneratorConfig,
    strategy: &StrategyProfile,
    subject: usize,
    trial: usize,
    switch_index: usize,
    delta_deg: f64,
) -> Result<Segment> {
    let shift = GazeShift::new(delta_deg, config.experiment)?;
    let path = |channel: u64| {
        stream(
            config.master_seed,
            &[channel, subject as u64, trial as u64, switch_index as u64],
        )
    };

    let heog = gen_heog(
        &shift,
        strategy,
        config.experiment.heog_rate_hz(),
        &mut path(tag::HEOG),
    )?;
    let (nemg, imu) = match config.experiment {
        ExperimentKind::HeadFixed => (None, None),
        ExperimentKind::HeadFree => (
            Some(gen_nemg(&shift, strategy, config.degraded_nemg, &mut path(tag::NEMG))?),
            Some(gen_imu(&shift, strategy, &mut path(tag::IMU))?),
        ),
    };
    Ok(Segment { subject, trial, switch_index, shift, heog, nemg, imu })
}

/// Generate the full dataset for a plan. Deterministic in (config, seed);
/// segments are generated in parallel over independent substreams.
pub fn gen_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;

    let mut specs = Vec::with_capacity(config.expected_segments());
    for subject in 0..config.n_subjects {
        for trial in 0..config.n_trials_per_subject {
            let strategy = draw_strategy(config, subject, trial);
            for (switch_index, delta) in trial_deltas(config, trial).into_iter().enumerate() {
                specs.push((subject, trial, switch_index, delta, strategy));
            }
        }
    }

    let segments: Result<Vec<Segment>> = specs
        .par_iter()
        .map(|&(subject, trial, switch_index, delta, strategy)| {
            gen_segment(config, &strategy, subject, trial, switch_index, delta)
        })
        .collect();

    Ok(Dataset { config: config.clone(), segments: segments? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn seg_rng(seed: u64) -> ChaCha8Rng {
        stream(seed, &[99])
    }

    fn peak_in_window(w: &Waveform) -> (f64, f64) {
        // (time of extremum, signed value) over t in (0, 2].
        let mut best = (0.0, 0.0f64);
        for (i, &v) in w.samples.iter().enumerate() {
            let t = w.time_at(i);
            if t > 0.0 && t <= 2.0 && v.abs() > best.1.abs() {
                best = (t, v);
            }
        }
        best
    }

    #[test]
    fn heog_noise_free_peak_is_at_0_4s() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFixed).unwrap();
        let strategy = StrategyProfile::ideal(0.0);
        let w = gen_heog(&shift, &strategy, 250.0, &mut seg_rng(1)).unwrap();
        assert_eq!(w.len(), 1250);
        let (t_peak, v_peak) = peak_in_window(&w);
        assert!((t_peak - 0.4).abs() < 0.02, "peak at {t_peak} s");
        assert!(v_peak > 0.0, "leftward shift must give a positive peak");
        assert!(w.samples.iter().all(|x| x.is_finite()));
        // Decays toward baseline afterwards.
        let late = w.sample_at(4.4);
        assert!(late.abs() < 0.4 * v_peak.abs());
    }

    #[test]
    fn heog_with_full_head_fraction_is_pure_drift() {
        let shift = GazeShift::new(60.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(1.0);
        let w = gen_heog(&shift, &strategy, 1000.0, &mut seg_rng(2)).unwrap();
        // Eye component is zero, noise is off: the waveform is exactly b*t.
        let b = w.samples[1] - w.samples[0];
        for (i, &v) in w.samples.iter().enumerate() {
            let t = w.time_at(i);
            assert!((v - b * 1000.0 * t).abs() < 1e-9, "sample {i} deviates from drift");
        }
    }

    #[test]
    fn heog_peak_ordering_over_seeds() {
        // Monte-Carlo over 200 seeds: mean |peak| strictly increases with |delta|.
        let strategy = StrategyProfile {
            noise_scale: 1.0,
            ..StrategyProfile::ideal(0.0)
        };
        let mut means = Vec::new();
        for &mag in &[15.0, 30.0, 45.0, 60.0, 75.0, 90.0] {
            let shift = GazeShift::new(mag, ExperimentKind::HeadFixed).unwrap();
            let mut sum = 0.0;
            for seed in 0..200u64 {
                let mut rng = stream(seed, &[7, mag as u64]);
                let w = gen_heog(&shift, &strategy, 250.0, &mut rng).unwrap();
                sum += peak_in_window(&w).1.abs();
            }
            means.push(sum / 200.0);
        }
        for pair in means.windows(2) {
            assert!(pair[1] > pair[0], "mean peaks not increasing: {means:?}");
        }
    }

    #[test]
    fn heog_peak_monotone_in_delta_noise_free() {
        for s in [0.0, 0.5] {
            let strategy = StrategyProfile::ideal(s);
            let mut prev = -1.0;
            for &mag in &[15.0, 30.0, 45.0, 60.0, 75.0, 90.0] {
                let shift = GazeShift::new(mag, ExperimentKind::HeadFixed).unwrap();
                let w = gen_heog(&shift, &strategy, 250.0, &mut seg_rng(mag as u64)).unwrap();
                let peak = peak_in_window(&w).1.abs();
                assert!(peak > prev, "peak not increasing at |delta|={mag}, s={s}");
                prev = peak;
            }
        }
    }

    #[test]
    fn heog_rejects_unknown_rate() {
        let shift = GazeShift::new(30.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(0.0);
        assert!(matches!(
            gen_heog(&shift, &strategy, 500.0, &mut seg_rng(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nemg_envelopes_flat_at_zero_head_fraction() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(0.0);
        let (l, r) = nemg_envelopes(&shift, &strategy, false);
        assert!(l.iter().all(|&x| x == 1.0));
        assert!(r.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn nemg_contralateral_side_rises_ipsilateral_dips() {
        // Leftward head turn: right SCM bursts, left SCM dips.
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(0.5);
        let (l, r) = nemg_envelopes(&shift, &strategy, false);
        let at = |env: &[f64], t: f64| env[((t + SEGMENT_PRE_S) * NEMG_RATE_HZ) as usize];
        assert!(at(&r, 0.4) > 1.1, "right SCM should burst near 0.4 s");
        assert!(at(&l, 0.4) < 0.95, "left SCM should dip");
        // Burst peaks near 0.4 s.
        let peak_idx = r.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        let peak_t = -SEGMENT_PRE_S + peak_idx as f64 / NEMG_RATE_HZ;
        assert!((peak_t - 0.4).abs() < 0.05, "burst peak at {peak_t} s");
        // Rightward head turn mirrors.
        let shift = GazeShift::new(-90.0, ExperimentKind::HeadFree).unwrap();
        let (l2, r2) = nemg_envelopes(&shift, &strategy, false);
        assert!(at(&l2, 0.4) > 1.1 && at(&r2, 0.4) < 0.95);
    }

    #[test]
    fn nemg_degraded_uses_contralateral_form_on_both_sides() {
        let shift = GazeShift::new(60.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(0.6);
        let (l, r) = nemg_envelopes(&shift, &strategy, true);
        assert_eq!(l, r);
        assert!(l.iter().cloned().fold(0.0f64, f64::max) > 1.1);
    }

    #[test]
    fn nemg_gain_is_monotone_with_zero_at_rest() {
        assert_eq!(scm_gain(0.0), 0.0);
        let mut prev = 0.0;
        for mag in [10.0, 27.0, 45.0, 60.0, 85.5] {
            let g = scm_gain(mag);
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn nemg_raw_waveforms_are_finite_and_equal_length() {
        let shift = GazeShift::new(-60.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile {
            noise_scale: 1.0,
            ..StrategyProfile::ideal(0.7)
        };
        let pair = gen_nemg(&shift, &strategy, false, &mut seg_rng(4)).unwrap();
        assert_eq!(pair.left.len(), 5000);
        assert_eq!(pair.right.len(), 5000);
        assert!(pair.left.samples.iter().all(|x| x.is_finite()));
        assert!(pair.right.samples.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn imu_zero_head_fraction_leaves_only_bias_and_noise() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile {
            gyro_bias_dps: 1.5,
            ..StrategyProfile::ideal(0.0)
        };
        let imu = gen_imu(&shift, &strategy, &mut seg_rng(5)).unwrap();
        assert_eq!(imu.len(), 150);
        imu.validate().unwrap();
        assert!(imu.true_yaw_deg.iter().all(|&y| y == 0.0));
        for g in &imu.gyro_rps {
            assert!((g[2] - 1.5f64.to_radians()).abs() < 1e-12);
        }
    }

    #[test]
    fn imu_true_yaw_plateaus_at_head_component() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(1.0);
        let imu = gen_imu(&shift, &strategy, &mut seg_rng(6)).unwrap();
        for (i, &y) in imu.true_yaw_deg.iter().enumerate() {
            let t = imu.t0_s + i as f64 / imu.rate_hz;
            if t >= YAW_SETTLE_S {
                assert_eq!(y, 90.0, "plateau broken at t={t}");
            }
            if t <= strategy.head_onset_s {
                assert_eq!(y, 0.0);
            }
        }
        // Mag vectors stay unit norm.
        for m in &imu.mag {
            let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn head_fixed_plan_counts_match_layout() {
        let pairs = head_fixed_pairs();
        assert_eq!(pairs.len(), 20);
        let config = GeneratorConfig::head_fixed_default();
        let deltas = trial_deltas(&config, 0);
        for &mag in &[15.0, 30.0, 45.0, 75.0] {
            for sign in [1.0, -1.0] {
                let count = deltas.iter().filter(|&&d| d == sign * mag).count();
                assert_eq!(count, 2, "expected 2 segments at delta {}", sign * mag);
            }
        }
        for &mag in &[60.0, 90.0] {
            for sign in [1.0, -1.0] {
                let count = deltas.iter().filter(|&&d| d == sign * mag).count();
                assert_eq!(count, 1, "expected 1 segment at delta {}", sign * mag);
            }
        }
    }

    #[test]
    fn default_head_fixed_dataset_has_800_segments() {
        let ds = gen_dataset(&GeneratorConfig::head_fixed_default()).unwrap();
        assert_eq!(ds.segments.len(), 800);
        assert_eq!(ds.class_count(), 12);
        assert!(ds.segments.iter().all(|s| s.nemg.is_none() && s.imu.is_none()));
        assert!(ds.segments.iter().all(|s| s.heog.rate_hz == 250.0));
    }

    #[test]
    fn default_head_free_dataset_has_2040_segments_340_per_class() {
        let ds = gen_dataset(&GeneratorConfig::head_free_default()).unwrap();
        assert_eq!(ds.segments.len(), 2040);
        let mut per_class = vec![0usize; ds.class_count()];
        for s in &ds.segments {
            per_class[s.shift.class_index] += 1;
        }
        assert!(per_class.iter().all(|&c| c == 340), "per-class counts {per_class:?}");
        assert!(ds.segments.iter().all(|s| s.nemg.is_some() && s.imu.is_some()));
    }

    #[test]
    fn single_trial_head_free_alternates_direction() {
        let config = GeneratorConfig {
            n_subjects: 1,
            n_trials_per_subject: 1,
            ..GeneratorConfig::head_free_default()
        };
        let ds = gen_dataset(&config).unwrap();
        assert_eq!(ds.segments.len(), 40);
        let pos = ds.segments.iter().filter(|s| s.shift.delta_deg == 30.0).count();
        let neg = ds.segments.iter().filter(|s| s.shift.delta_deg == -30.0).count();
        assert_eq!((pos, neg), (20, 20));
    }

    #[test]
    fn dataset_generation_is_bit_deterministic() {
        let config = GeneratorConfig {
            n_subjects: 2,
            n_trials_per_subject: 1,
            ..GeneratorConfig::head_free_default()
        };
        let a = gen_dataset(&config).unwrap();
        let b = gen_dataset(&config).unwrap();
        assert_eq!(a.segments.len(), b.segments.len());
        for (x, y) in a.segments.iter().zip(&b.segments) {
            assert_eq!(x.heog.samples.len(), y.heog.samples.len());
            for (u, v) in x.heog.samples.iter().zip(&y.heog.samples) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
            let (xn, yn) = (x.nemg.as_ref().unwrap(), y.nemg.as_ref().unwrap());
            for (u, v) in xn.left.samples.iter().zip(&yn.left.samples) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn heog_channel_is_independent_of_degraded_flag() {
        let base = GeneratorConfig {
            n_subjects: 1,
            n_trials_per_subject: 1,
            ..GeneratorConfig::head_free_default()
        };
        let degraded = GeneratorConfig { degraded_nemg: true, ..base.clone() };
        let a = gen_dataset(&base).unwrap();
        let b = gen_dataset(&degraded).unwrap();
        for (x, y) in a.segments.iter().zip(&b.segments) {
            for (u, v) in x.heog.samples.iter().zip(&y.heog.samples) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
            for (u, v) in x
                .imu
                .as_ref()
                .unwrap()
                .true_yaw_deg
                .iter()
                .zip(&y.imu.as_ref().unwrap().true_yaw_deg)
            {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = GeneratorConfig::head_free_default();
        c.n_subjects = 0;
        assert!(gen_dataset(&c).is_err());
        let mut c = GeneratorConfig::head_free_default();
        c.noise_scale = -1.0;
        assert!(c.validate().is_err());
        let mut c = GeneratorConfig::head_free_default();
        c.strategy_spread = 0.9;
        assert!(c.validate().is_err());
        assert!(GazeShift::new(20.0, ExperimentKind::HeadFree).is_err());
        assert!(GazeShift::new(15.0, ExperimentKind::HeadFree).is_err());
        assert!(GazeShift::new(15.0, ExperimentKind::HeadFixed).is_ok());
    }

    #[test]
    fn class_index_is_a_bijection() {
        for kind in [ExperimentKind::HeadFixed, ExperimentKind::HeadFree] {
            for (i, &d) in kind.deltas().iter().enumerate() {
                let shift = GazeShift::new(d, kind).unwrap();
                assert_eq!(shift.class_index, i);
                let back = GazeShift::from_class_index(i, kind).unwrap();
                assert_eq!(back.delta_deg, d);
            }
        }
    }
}
