//! Madgwick gradient-descent orientation filter.
//!
//! Fuses gyroscope integration with an accelerometer/magnetometer correction
//! step to estimate orientation, from which the horizontal head rotation
//! (yaw) is extracted. Earth frame: z up, gravity measured as (0, 0, 1) g at
//! rest, magnetic reference horizontal along +x; positive yaw is a leftward
//! (counterclockwise from above) rotation.

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::synthgen::ImuSeries;

/// Unit quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Rotation of `angle_rad` about the unit axis `(ax, ay, az)`.
    pub fn from_axis_angle(ax: f64, ay: f64, az: f64, angle_rad: f64) -> Self {
        let half = angle_rad / 2.0;
        let s = half.sin();
        Quaternion::new(half.cos(), ax * s, ay * s, az * s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product.
    pub fn mul(&self, r: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }

    /// Rotate a vector by this quaternion (q v q*).
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let p = Quaternion::new(0.0, v[0], v[1], v[2]);
        let r = self.mul(&p).mul(&self.conjugate());
        [r.x, r.y, r.z]
    }
}

/// Filter gain and initialization policy.
#[derive(Debug, Clone, Copy)]
pub struct FusionConfig {
    /// Gradient-step gain; 0 degenerates to pure gyro integration.
    pub beta: f64,
    /// Initial orientation; `None` derives tilt and heading algebraically
    /// from the first accelerometer + magnetometer sample.
    pub init: Option<Quaternion>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { beta: 0.1, init: None }
    }
}

impl FusionConfig {
    pub fn with_beta(beta: f64) -> Self {
        FusionConfig { beta, init: None }
    }

    fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

fn normalize3(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n <= 0.0 || !n.is_finite() {
        return None;
    }
    Some([v[0] / n, v[1] / n, v[2] / n])
}

/// One MARG update step.
///
/// Returns the new unit quaternion and whether the accel/mag corrective term
/// was applied. A zero-norm accelerometer or magnetometer sample degrades the
/// step to gyro-only integration (flag false) instead of failing.
pub fn madgwick_update(
    q: Quaternion,
    gyro_rps: [f64; 3],
    accel: [f64; 3],
    mag: [f64; 3],
    dt_s: f64,
    cfg: &FusionConfig,
) -> Result<(Quaternion, bool)> {
    cfg.validate()?;
    if dt_s <= 0.0 {
        return Err(Error::validation(format!("dt must be positive, got {dt_s}")));
    }

    // Rate of change from the gyroscope: dq/dt = 1/2 q (0, w).
    let omega = Quaternion::new(0.0, gyro_rps[0], gyro_rps[1], gyro_rps[2]);
    let gd = q.mul(&omega);
    let mut dq = Quaternion::new(0.5 * gd.w, 0.5 * gd.x, 0.5 * gd.y, 0.5 * gd.z);

    let mut corrected = false;
    if cfg.beta > 0.0 {
        if let (Some(a), Some(m)) = (normalize3(accel), normalize3(mag)) {
            // Earth-frame flux reference from the current estimate, flattened
            // into the x-z plane.
            let h = q.rotate(m);
            let bx = (h[0] * h[0] + h[1] * h[1]).sqrt();
            let bz = h[2];

            let (q1, q2, q3, q4) = (q.w, q.x, q.y, q.z);

            // Objective: predicted gravity / flux in the body frame minus the
            // measurements.
            let f1 = 2.0 * (q2 * q4 - q1 * q3) - a[0];
            let f2 = 2.0 * (q1 * q2 + q3 * q4) - a[1];
            let f3 = 2.0 * (0.5 - q2 * q2 - q3 * q3) - a[2];
            let f4 = 2.0 * bx * (0.5 - q3 * q3 - q4 * q4) + 2.0 * bz * (q2 * q4 - q1 * q3) - m[0];
            let f5 = 2.0 * bx * (q2 * q3 - q1 * q4) + 2.0 * bz * (q1 * q2 + q3 * q4) - m[1];
            let f6 = 2.0 * bx * (q1 * q3 + q2 * q4) + 2.0 * bz * (0.5 - q2 * q2 - q3 * q3) - m[2];

            // Gradient J^T f of the stacked objective.
            let mut g = [
                -2.0 * q3 * f1 + 2.0 * q2 * f2
                    - 2.0 * bz * q3 * f4
                    + (-2.0 * bx * q4 + 2.0 * bz * q2) * f5
                    + 2.0 * bx * q3 * f6,
                2.0 * q4 * f1 + 2.0 * q1 * f2 - 4.0 * q2 * f3
                    + 2.0 * bz * q4 * f4
                    + (2.0 * bx * q3 + 2.0 * bz * q1) * f5
                    + (2.0 * bx * q4 - 4.0 * bz * q2) * f6,
                -2.0 * q1 * f1 + 2.0 * q4 * f2 - 4.0 * q3 * f3
                    + (-4.0 * bx * q3 - 2.0 * bz * q1) * f4
                    + (2.0 * bx * q2 + 2.0 * bz * q4) * f5
                    + (2.0 * bx * q1 - 4.0 * bz * q3) * f6,
                2.0 * q2 * f1 + 2.0 * q3 * f2
                    + (-4.0 * bx * q4 + 2.0 * bz * q2) * f4
                    + (-2.0 * bx * q1 + 2.0 * bz * q3) * f5
                    + 2.0 * bx * q2 * f6,
            ];
            let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]).sqrt();
            // Below this the objective is minimized to numerical precision;
            // normalizing a near-zero gradient would amplify rounding noise
            // into full beta-steps.
            if gn > 1e-9 {
                for v in g.iter_mut() {
                    *v /= gn;
                }
                dq.w -= cfg.beta * g[0];
                dq.x -= cfg.beta * g[1];
                dq.y -= cfg.beta * g[2];
                dq.z -= cfg.beta * g[3];
            }
            corrected = true;
        }
    }

    let next = Quaternion::new(
        q.w + dq.w * dt_s,
        q.x + dq.x * dt_s,
        q.y + dq.y * dt_s,
        q.z + dq.z * dt_s,
    )
    .normalized();
    Ok((next, corrected))
}

/// Yaw in degrees from a unit quaternion (Z-Y-X Euler); result in (-180, 180].
pub fn yaw_from_quaternion(q: &Quaternion) -> f64 {
    let siny = 2.0 * (q.w * q.z + q.x * q.y);
    let cosy = 1.0 - 2.0 * (q.y * q.y + q.z * q.z);
    let mut deg = siny.atan2(cosy).to_degrees();
    if deg <= -180.0 {
        deg += 360.0;
    }
    deg
}

/// Algebraic tilt + heading from one accel/mag observation; removes the
/// startup transient a fixed identity init would cause on 5 s segments.
pub fn init_from_observation(accel: [f64; 3], mag: [f64; 3]) -> Quaternion {
    let a = match normalize3(accel) {
        Some(a) => a,
        None => return Quaternion::IDENTITY,
    };
    let roll = a[1].atan2(a[2]);
    let pitch = (-a[0]).atan2((a[1] * a[1] + a[2] * a[2]).sqrt());
    let q_tilt = Quaternion::from_axis_angle(0.0, 1.0, 0.0, pitch)
        .mul(&Quaternion::from_axis_angle(1.0, 0.0, 0.0, roll));

    let heading = match normalize3(mag) {
        Some(m) => {
            let mh = q_tilt.rotate(m);
            (-mh[1]).atan2(mh[0])
        }
        None => 0.0,
    };
    Quaternion::from_axis_angle(0.0, 0.0, 1.0, heading).mul(&q_tilt)
}

/// Stateful filter used by the segment pipeline.
#[derive(Debug, Clone)]
pub struct MadgwickFilter {
    cfg: FusionConfig,
    q: Quaternion,
    initialized: bool,
    skipped_corrections: usize,
}

impl MadgwickFilter {
    pub fn new(cfg: FusionConfig) -> Result<Self> {
        cfg.validate()?;
        let (q, initialized) = match cfg.init {
            Some(q) => (q.normalized(), true),
            None => (Quaternion::IDENTITY, false),
        };
        Ok(MadgwickFilter { cfg, q, initialized, skipped_corrections: 0 })
    }

    pub fn orientation(&self) -> Quaternion {
        self.q
    }

    /// Steps where a zero-norm accel or mag sample forced a gyro-only update.
    pub fn skipped_corrections(&self) -> usize {
        self.skipped_corrections
    }

    pub fn update(
        &mut self,
        gyro_rps: [f64; 3],
        accel: [f64; 3],
        mag: [f64; 3],
        dt_s: f64,
    ) -> Result<Quaternion> {
        if !self.initialized {
            self.q = init_from_observation(accel, mag);
            self.initialized = true;
        }
        let (q, corrected) = madgwick_update(self.q, gyro_rps, accel, mag, dt_s, &self.cfg)?;
        if self.cfg.beta > 0.0 && !corrected {
            self.skipped_corrections += 1;
        }
        self.q = q;
        debug_assert!((self.q.norm() - 1.0).abs() < 1e-9);
        Ok(self.q)
    }
}

/// Run the filter over an IMU series: one yaw sample per IMU sample, at the
/// series rate and time origin. The first ~0.3 s is filter convergence and is
/// excluded from feature baselines downstream.
pub fn estimate_yaw_series(imu: &ImuSeries, cfg: &FusionConfig) -> Result<Waveform> {
    if imu.is_empty() {
        return Err(Error::validation("empty IMU series".to_string()));
    }
    imu.validate()?;
    let dt = 1.0 / imu.rate_hz;
    let mut filter = MadgwickFilter::new(*cfg)?;
    let mut yaw = Vec::with_capacity(imu.len());
    for i in 0..imu.len() {
        let q = filter.update(imu.gyro_rps[i], imu.accel_g[i], imu.mag[i], dt)?;
        yaw.push(yaw_from_quaternion(&q));
    }
    Ok(Waveform::new(yaw, imu.rate_hz, imu.t0_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::synthgen::{gen_imu, ExperimentKind, GazeShift, StrategyProfile};

    const MAG_REF: [f64; 3] = [1.0, 0.0, 0.0];
    const GRAVITY: [f64; 3] = [0.0, 0.0, 1.0];

    /// Body-frame magnetometer reading at yaw `psi` (degrees).
    fn mag_at(psi_deg: f64) -> [f64; 3] {
        let r = psi_deg.to_radians();
        [r.cos(), -r.sin(), 0.0]
    }

    #[test]
    fn equilibrium_leaves_identity_unchanged() {
        let cfg = FusionConfig::default();
        let (q, corrected) =
            madgwick_update(Quaternion::IDENTITY, [0.0; 3], GRAVITY, MAG_REF, 1.0 / 30.0, &cfg)
                .unwrap();
        assert!(corrected);
        assert!((q.w - 1.0).abs() < 1e-12);
        assert!(q.x.abs() < 1e-12 && q.y.abs() < 1e-12 && q.z.abs() < 1e-12);
    }

    #[test]
    fn beta_zero_is_pure_gyro_integration() {
        // 1 deg/s about z for 10 s at 30 Hz.
        let cfg = FusionConfig::with_beta(0.0);
        let mut q = Quaternion::IDENTITY;
        let dt = 1.0 / 30.0;
        let gyro = [0.0, 0.0, 1.0f64.to_radians()];
        for _ in 0..300 {
            let (next, corrected) = madgwick_update(q, gyro, GRAVITY, MAG_REF, dt, &cfg).unwrap();
            assert!(!corrected);
            q = next;
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
        let yaw = yaw_from_quaternion(&q);
        assert!((yaw - 10.0).abs() < 0.05, "yaw {yaw}");

        // Matches the closed-form axis-angle quaternion for the same rotation.
        let oracle = Quaternion::from_axis_angle(0.0, 0.0, 1.0, 10.0f64.to_radians());
        assert!((yaw_from_quaternion(&oracle) - yaw).abs() < 0.05);
    }

    #[test]
    fn tracks_ideal_rotation_with_correction() {
        // 30 deg/s for 3 s with ideal sensors, beta = 0.1.
        let cfg = FusionConfig::with_beta(0.1);
        let dt = 1.0 / 30.0;
        let mut q = init_from_observation(GRAVITY, mag_at(0.0));
        for i in 0..90 {
            let psi = 30.0 * (i as f64) * dt;
            let gyro = [0.0, 0.0, 30.0f64.to_radians()];
            let (next, _) = madgwick_update(q, gyro, GRAVITY, mag_at(psi), dt, &cfg).unwrap();
            q = next;
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
        let yaw = yaw_from_quaternion(&q);
        assert!((yaw - 90.0).abs() < 2.0, "yaw {yaw}");
    }

    #[test]
    fn yaw_of_identity_is_zero() {
        assert_eq!(yaw_from_quaternion(&Quaternion::IDENTITY), 0.0);
    }

    #[test]
    fn yaw_of_axis_angle_quaternion() {
        let q = Quaternion::from_axis_angle(0.0, 0.0, 1.0, 90.0f64.to_radians());
        assert!((yaw_from_quaternion(&q) - 90.0).abs() < 1e-12);
        let q = Quaternion::from_axis_angle(0.0, 0.0, 1.0, -120.0f64.to_radians());
        assert!((yaw_from_quaternion(&q) + 120.0).abs() < 1e-12);
    }

    #[test]
    fn yaw_matches_rotation_matrix_extraction() {
        // Rotation-matrix oracle: yaw = atan2(R21, R11) of the body-to-earth
        // matrix built from the quaternion.
        use rand::Rng;
        let mut rng = stream(17, &[1]);
        for _ in 0..50 {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalized();
            let r11 = 1.0 - 2.0 * (q.y * q.y + q.z * q.z);
            let r21 = 2.0 * (q.x * q.y + q.w * q.z);
            let oracle = r21.atan2(r11).to_degrees();
            let got = yaw_from_quaternion(&q);
            assert!((got - oracle).abs() < 1e-9, "got {got}, oracle {oracle}");
        }
    }

    #[test]
    fn zero_norm_sensor_degrades_to_gyro_only() {
        let cfg = FusionConfig::with_beta(0.1);
        let (q, corrected) =
            madgwick_update(Quaternion::IDENTITY, [0.0; 3], GRAVITY, [0.0; 3], 1.0 / 30.0, &cfg)
                .unwrap();
        assert!(!corrected);
        assert!((q.w - 1.0).abs() < 1e-12);

        let mut filter = MadgwickFilter::new(cfg).unwrap();
        filter.update([0.0; 3], GRAVITY, MAG_REF, 1.0 / 30.0).unwrap();
        filter.update([0.0; 3], [0.0; 3], MAG_REF, 1.0 / 30.0).unwrap();
        assert_eq!(filter.skipped_corrections(), 1);
    }

    #[test]
    fn estimate_is_invariant_to_positive_mag_scaling() {
        // Only the magnetometer direction is used. Power-of-two scales leave
        // the normalized vector bit-identical; arbitrary scales agree to
        // rounding error.
        let run = |scale: f64| {
            let cfg = FusionConfig::with_beta(0.1);
            let dt = 1.0 / 30.0;
            let mut q = init_from_observation(GRAVITY, mag_at(10.0));
            for i in 0..60 {
                let psi = 10.0 + 5.0 * i as f64 * dt;
                let gyro = [0.0, 0.0, 5.0f64.to_radians()];
                let m = mag_at(psi);
                let scaled = [m[0] * scale, m[1] * scale, m[2] * scale];
                q = madgwick_update(q, gyro, GRAVITY, scaled, dt, &cfg).unwrap().0;
            }
            yaw_from_quaternion(&q)
        };
        let reference = run(1.0);
        for c in [0.25, 8.0, 1024.0] {
            assert_eq!(run(c).to_bits(), reference.to_bits(), "scale {c}");
        }
        let d = (run(37.5) - reference).abs();
        assert!(d < 1e-9, "diff {d:e}");
    }

    #[test]
    fn monotone_input_gives_monotone_estimate() {
        let cfg = FusionConfig::default();
        let dt = 1.0 / 30.0;
        let mut q = init_from_observation(GRAVITY, mag_at(0.0));
        let mut prev = yaw_from_quaternion(&q);
        for i in 0..120 {
            let psi = 20.0 * (i as f64) * dt;
            let gyro = [0.0, 0.0, 20.0f64.to_radians()];
            q = madgwick_update(q, gyro, GRAVITY, mag_at(psi), dt, &cfg).unwrap().0;
            let yaw = yaw_from_quaternion(&q);
            assert!(yaw >= prev - 0.5, "yaw regressed: {prev} -> {yaw}");
            prev = yaw;
        }
    }

    #[test]
    fn init_from_observation_recovers_heading() {
        for psi in [-150.0, -45.0, 0.0, 30.0, 90.0, 179.0] {
            let q = init_from_observation(GRAVITY, mag_at(psi));
            let yaw = yaw_from_quaternion(&q);
            assert!((yaw - psi).abs() < 1e-9, "psi {psi}, yaw {yaw}");
        }
    }

    #[test]
    fn stationary_series_estimates_zero_yaw() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile {
            noise_scale: 1.0,
            ..StrategyProfile::ideal(0.0)
        };
        let imu = gen_imu(&shift, &strategy, &mut stream(3, &[0])).unwrap();
        let yaw = estimate_yaw_series(&imu, &FusionConfig::default()).unwrap();
        assert_eq!(yaw.len(), imu.len());
        for (i, &y) in yaw.samples.iter().enumerate() {
            if yaw.time_at(i) > yaw.t0_s + 0.3 {
                assert!(y.abs() < 0.5, "stationary yaw {y} at sample {i}");
            }
        }
    }

    #[test]
    fn recovers_generated_plateau_yaw() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile::ideal(1.0);
        let imu = gen_imu(&shift, &strategy, &mut stream(4, &[0])).unwrap();
        let yaw = estimate_yaw_series(&imu, &FusionConfig::default()).unwrap();
        // Generator-stored truth is the oracle: plateau at +90 from 1 s on.
        let last = *yaw.samples.last().unwrap();
        let truth = *imu.true_yaw_deg.last().unwrap();
        assert_eq!(truth, 90.0);
        assert!((last - truth).abs() < 2.0, "plateau yaw {last}");
    }

    #[test]
    fn gyro_bias_with_beta_zero_reproduces_drift() {
        let shift = GazeShift::new(90.0, ExperimentKind::HeadFree).unwrap();
        let strategy = StrategyProfile {
            gyro_bias_dps: 1.0,
            ..StrategyProfile::ideal(0.0)
        };
        let imu = gen_imu(&shift, &strategy, &mut stream(5, &[0])).unwrap();
        let yaw = estimate_yaw_series(&imu, &FusionConfig::with_beta(0.0)).unwrap();
        // Linear drift of 1 deg/s over the 5 s segment.
        let slope = (yaw.samples.last().unwrap() - yaw.samples[0])
            / (yaw.duration_s() - 1.0 / yaw.rate_hz);
        assert!((slope - 1.0).abs() < 0.02, "drift slope {slope} deg/s");
    }

    #[test]
    fn invalid_config_and_dt_are_rejected() {
        assert!(MadgwickFilter::new(FusionConfig::with_beta(-0.1)).is_err());
        let cfg = FusionConfig::default();
        assert!(
            madgwick_update(Quaternion::IDENTITY, [0.0; 3], GRAVITY, MAG_REF, 0.0, &cfg).is_err()
        );
    }
}
