//! Constant-velocity Kalman filter on the 8-dim bbox state
//! (x_c, y_c, aspect, height, and their per-frame rates).

use nalgebra::{Cholesky, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Detection, FrameClock, Track, TrackState};

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;
pub type MeasurementMatrix = SMatrix<f64, 4, 4>;

/// Noise scales. Position and height noise grow with bbox height so gating
/// stays scale-invariant across camera depth; aspect-ratio noise is absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanNoise {
    /// Process/measurement position weight (std = w_pos * height).
    pub w_pos: f64,
    /// Process velocity weight (std = w_vel * height).
    pub w_vel: f64,
    /// Process noise std for the aspect ratio.
    pub process_aspect: f64,
    /// Process noise std for the aspect-ratio rate.
    pub process_aspect_vel: f64,
    /// Measurement noise std for the aspect ratio.
    pub measurement_aspect: f64,
}

impl Default for KalmanNoise {
    fn default() -> Self {
        KalmanNoise {
            w_pos: 1.0 / 20.0,
            w_vel: 1.0 / 160.0,
            process_aspect: 1e-2,
            process_aspect_vel: 1e-5,
            measurement_aspect: 1e-1,
        }
    }
}

/// The motion model: transition/observation matrices plus noise scales.
#[derive(Debug, Clone, Copy, Default)]
pub struct KalmanFilter {
    pub noise: KalmanNoise,
}

impl KalmanFilter {
    pub fn new(noise: KalmanNoise) -> Self {
        KalmanFilter { noise }
    }

    /// Identity plus position<-velocity coupling over `dt` frames.
    pub fn transition_matrix(dt: f64) -> StateMatrix {
        let mut f = StateMatrix::identity();
        for i in 0..4 {
            f[(i, i + 4)] = dt;
        }
        f
    }

    /// Picks (x_c, y_c, aspect, height) out of the state.
    pub fn observation_matrix() -> SMatrix<f64, 4, 8> {
        let mut c = SMatrix::<f64, 4, 8>::zeros();
        for i in 0..4 {
            c[(i, i)] = 1.0;
        }
        c
    }

    fn process_noise(&self, height: f64) -> StateMatrix {
        let n = &self.noise;
        let std = [
            n.w_pos * height,
            n.w_pos * height,
            n.process_aspect,
            n.w_pos * height,
            n.w_vel * height,
            n.w_vel * height,
            n.process_aspect_vel,
            n.w_vel * height,
        ];
        StateMatrix::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)))
    }

    fn measurement_noise(&self, height: f64) -> MeasurementMatrix {
        let n = &self.noise;
        let std = [
            n.w_pos * height,
            n.w_pos * height,
            n.measurement_aspect,
            n.w_pos * height,
        ];
        MeasurementMatrix::from_diagonal(&Measurement::from_iterator(std.iter().map(|s| s * s)))
    }

    /// New distribution around a first measurement, velocities at zero with
    /// wide uncertainty.
    pub fn initiate(&self, measurement: &Measurement) -> (StateVector, StateMatrix) {
        let mut mean = StateVector::zeros();
        for i in 0..4 {
            mean[i] = measurement[i];
        }
        let h = measurement[3];
        let n = &self.noise;
        let std = [
            2.0 * n.w_pos * h,
            2.0 * n.w_pos * h,
            n.process_aspect,
            2.0 * n.w_pos * h,
            10.0 * n.w_vel * h,
            10.0 * n.w_vel * h,
            n.process_aspect_vel,
            10.0 * n.w_vel * h,
        ];
        let cov =
            StateMatrix::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
        (mean, cov)
    }

    /// Prediction over `dt` frames: x <- F x, P <- F P F^T + Q.
    pub fn predict(
        &self,
        mean: &StateVector,
        cov: &StateMatrix,
        dt: f64,
    ) -> (StateVector, StateMatrix) {
        let f = Self::transition_matrix(dt);
        let q = self.process_noise(mean[3]);
        let mean = f * mean;
        let cov = f * cov * f.transpose() + q;
        (mean, symmetrize8(&cov))
    }

    /// Projects the state distribution into measurement space
    /// (adds measurement noise).
    pub fn project(&self, mean: &StateVector, cov: &StateMatrix) -> (Measurement, MeasurementMatrix) {
        let c = Self::observation_matrix();
        let r = self.measurement_noise(mean[3]);
        let y = c * mean;
        let s = c * cov * c.transpose() + r;
        (y, symmetrize4(&s))
    }

    /// Measurement update. Fails when the innovation covariance is not
    /// positive definite, which signals a mis-scaled noise configuration.
    pub fn update(
        &self,
        mean: &StateVector,
        cov: &StateMatrix,
        measurement: &Measurement,
    ) -> Result<(StateVector, StateMatrix)> {
        let (projected_mean, s) = self.project(mean, cov);
        let chol = Cholesky::new(s).ok_or_else(|| {
            Error::Numerical("innovation covariance is not positive definite".into())
        })?;
        let c = Self::observation_matrix();
        let gain = cov * c.transpose() * chol.inverse();
        let innovation = measurement - projected_mean;
        let new_mean = mean + gain * innovation;
        let new_cov = (StateMatrix::identity() - gain * c) * cov;
        Ok((new_mean, symmetrize8(&new_cov)))
    }
}

/// Squared Mahalanobis distance of a residual under covariance `s`.
pub fn mahalanobis_squared(residual: &Measurement, s: &MeasurementMatrix) -> Result<f64> {
    let chol = Cholesky::new(*s)
        .ok_or_else(|| Error::Numerical("singular projected covariance".into()))?;
    let solved = chol.solve(residual);
    Ok(residual.dot(&solved))
}

fn symmetrize8(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

fn symmetrize4(m: &MeasurementMatrix) -> MeasurementMatrix {
    (m + m.transpose()) * 0.5
}

/// Advances a track by the clock's frame step and bumps its staleness.
pub fn kalman_predict(track: &mut Track, kf: &KalmanFilter, clock: &FrameClock) {
    let (mean, cov) = kf.predict(
        &track.state.to_vector(),
        &track.covariance,
        clock.n_skip as f64,
    );
    track.state = TrackState::from_vector(&mean);
    track.covariance = cov;
    track.age += 1;
    track.time_since_update += 1;
}

/// Folds a matched detection into a track.
pub fn kalman_update(track: &mut Track, kf: &KalmanFilter, det: &Detection) -> Result<()> {
    let z = det.bbox.to_xyah();
    let (mean, cov) = kf.update(&track.state.to_vector(), &track.covariance, &z)?;
    track.state = TrackState::from_vector(&mean);
    track.covariance = cov;
    track.hits += 1;
    track.time_since_update = 0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, ClassLabel, TrackStatus};
    use approx::assert_relative_eq;

    fn track_with_state(state: [f64; 8]) -> Track {
        Track {
            track_id: 1,
            state: TrackState::from_vector(&StateVector::from_column_slice(&state)),
            covariance: StateMatrix::identity(),
            gallery: Default::default(),
            status: TrackStatus::Confirmed,
            age: 0,
            hits: 0,
            time_since_update: 0,
            class_label: ClassLabel::Pedestrian,
        }
    }

    #[test]
    fn predict_zero_velocity_keeps_position() {
        let kf = KalmanFilter::default();
        let clock = FrameClock::new(7.0, 1).unwrap();
        let mut track = track_with_state([100.0, 100.0, 0.5, 80.0, 0.0, 0.0, 0.0, 0.0]);
        kalman_predict(&mut track, &kf, &clock);
        assert_eq!(track.state.x_c, 100.0);
        assert_eq!(track.state.y_c, 100.0);
        assert_eq!(track.state.aspect, 0.5);
        assert_eq!(track.state.height, 80.0);
        assert_eq!(track.time_since_update, 1);
    }

    #[test]
    fn predict_constant_velocity_step() {
        let kf = KalmanFilter::default();
        let clock = FrameClock::new(7.0, 1).unwrap();
        let mut track = track_with_state([100.0, 100.0, 0.5, 80.0, 2.0, -1.0, 0.0, 0.0]);
        kalman_predict(&mut track, &kf, &clock);
        assert_eq!(track.state.x_c, 102.0);
        assert_eq!(track.state.y_c, 99.0);
    }

    #[test]
    fn predict_three_skips_matches_repeated_single_steps() {
        let kf = KalmanFilter::default();
        let start = [100.0, 100.0, 0.5, 80.0, 2.0, -1.0, 0.0, 0.0];

        let mut skip3 = track_with_state(start);
        kalman_predict(&mut skip3, &kf, &FrameClock::new(7.0, 3).unwrap());
        assert_eq!(skip3.state.x_c, 106.0);
        assert_eq!(skip3.state.y_c, 97.0);

        // oracle: three single-frame predictions land on the same mean
        let mut stepped = track_with_state(start);
        let clock1 = FrameClock::new(7.0, 1).unwrap();
        for _ in 0..3 {
            kalman_predict(&mut stepped, &kf, &clock1);
        }
        assert_relative_eq!(stepped.state.x_c, skip3.state.x_c, epsilon = 1e-12);
        assert_relative_eq!(stepped.state.y_c, skip3.state.y_c, epsilon = 1e-12);
        assert_relative_eq!(stepped.state.height, skip3.state.height, epsilon = 1e-12);
    }

    #[test]
    fn update_with_zero_innovation_keeps_mean() {
        let kf = KalmanFilter::default();
        let mut track = track_with_state([100.0, 100.0, 0.5, 80.0, 0.0, 0.0, 0.0, 0.0]);
        let det = Detection::new(
            1,
            BBox::from_xyah(100.0, 100.0, 0.5, 80.0),
            ClassLabel::Pedestrian,
            1.0,
        );
        kalman_update(&mut track, &kf, &det).unwrap();
        assert_relative_eq!(track.state.x_c, 100.0, epsilon = 1e-9);
        assert_relative_eq!(track.state.y_c, 100.0, epsilon = 1e-9);
        assert_relative_eq!(track.state.aspect, 0.5, epsilon = 1e-9);
        assert_relative_eq!(track.state.height, 80.0, epsilon = 1e-9);
        assert_eq!(track.time_since_update, 0);
        assert_eq!(track.hits, 1);
    }

    #[test]
    fn update_with_zero_measurement_noise_snaps_to_measurement() {
        let kf = KalmanFilter::new(KalmanNoise {
            w_pos: 0.0,
            measurement_aspect: 0.0,
            ..KalmanNoise::default()
        });
        let mut track = track_with_state([100.0, 100.0, 0.5, 80.0, 0.0, 0.0, 0.0, 0.0]);
        let det = Detection::new(
            1,
            BBox::from_xyah(110.0, 95.0, 0.6, 90.0),
            ClassLabel::Pedestrian,
            1.0,
        );
        kalman_update(&mut track, &kf, &det).unwrap();
        assert_relative_eq!(track.state.x_c, 110.0, epsilon = 1e-9);
        assert_relative_eq!(track.state.y_c, 95.0, epsilon = 1e-9);
        assert_relative_eq!(track.state.aspect, 0.6, epsilon = 1e-9);
        assert_relative_eq!(track.state.height, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn update_matches_scalar_kalman_oracle() {
        // Diagonal P and R decouple the coordinates, so each posterior
        // coordinate obeys the 1-D update x + p/(p+r) * (z - x).
        let kf = KalmanFilter::default();
        let mut track = track_with_state([100.0, 100.0, 0.5, 80.0, 0.0, 0.0, 0.0, 0.0]);
        track.covariance = StateMatrix::identity() * 4.0;
        let det = Detection::new(
            1,
            BBox::from_xyah(104.0, 98.0, 0.55, 84.0),
            ClassLabel::Pedestrian,
            1.0,
        );
        let h = 80.0;
        let r = [
            (h / 20.0) * (h / 20.0),
            (h / 20.0) * (h / 20.0),
            1e-1 * 1e-1,
            (h / 20.0) * (h / 20.0),
        ];
        let prior = [100.0, 100.0, 0.5, 80.0];
        let z = [104.0, 98.0, 0.55, 84.0];
        let expected: Vec<f64> = (0..4)
            .map(|i| prior[i] + 4.0 / (4.0 + r[i]) * (z[i] - prior[i]))
            .collect();
        kalman_update(&mut track, &kf, &det).unwrap();
        assert_relative_eq!(track.state.x_c, expected[0], epsilon = 1e-9);
        assert_relative_eq!(track.state.y_c, expected[1], epsilon = 1e-9);
        assert_relative_eq!(track.state.aspect, expected[2], epsilon = 1e-9);
        assert_relative_eq!(track.state.height, expected[3], epsilon = 1e-9);
    }

    #[test]
    fn covariance_stays_symmetric_over_cycles() {
        let kf = KalmanFilter::default();
        let clock = FrameClock::new(7.0, 1).unwrap();
        let mut track = track_with_state([100.0, 100.0, 0.5, 80.0, 1.0, 1.0, 0.0, 0.0]);
        let det = Detection::new(
            1,
            BBox::from_xyah(101.0, 101.0, 0.5, 80.0),
            ClassLabel::Pedestrian,
            1.0,
        );
        for _ in 0..1000 {
            kalman_predict(&mut track, &kf, &clock);
            kalman_update(&mut track, &kf, &det).unwrap();
            let asym = (track.covariance - track.covariance.transpose()).abs().max();
            assert!(asym < 1e-9);
        }
    }

    #[test]
    fn mahalanobis_identity_is_squared_euclidean() {
        let s = MeasurementMatrix::identity();
        let r = Measurement::new(1.0, 2.0, 0.0, 0.0);
        assert_relative_eq!(mahalanobis_squared(&r, &s).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn mahalanobis_diagonal_quadratic_form() {
        let s = MeasurementMatrix::from_diagonal(&Measurement::new(4.0, 1.0, 1.0, 1.0));
        let r = Measurement::new(2.0, 0.0, 0.0, 0.0);
        assert_relative_eq!(mahalanobis_squared(&r, &s).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mahalanobis_singular_covariance_fails() {
        let s = MeasurementMatrix::zeros();
        let r = Measurement::new(1.0, 0.0, 0.0, 0.0);
        assert!(mahalanobis_squared(&r, &s).is_err());
    }
}
