use chrono::{Duration, NaiveDate};
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::mixture::{arr2, mat2, measurement_mixture, reduce_mixture};
use super::model::CategoryModel;
use crate::classify::LinearRegionClassifier;
use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// How the white-noise acceleration is discretised over one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseIntegration {
    /// Continuous white noise: Q = s2 [[dt^3/3, dt^2/2], [dt^2/2, dt]].
    #[default]
    Continuous,
    /// Piecewise-constant acceleration: Q = s2 [[dt^4/4, dt^3/2], [dt^3/2, dt^2]].
    Discrete,
}

/// Nearly-constant-velocity dynamics per axis, time in years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub sigma2: f64,
    pub prior_position_var: f64,
    pub prior_velocity_var: f64,
    pub integration: NoiseIntegration,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            sigma2: 0.01,
            prior_position_var: 16.0,
            prior_velocity_var: 0.09,
            integration: NoiseIntegration::Continuous,
        }
    }
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) || !ok(self.prior_position_var) || !ok(self.prior_velocity_var) {
            return Err(Error::invalid("motion model variances must be positive"));
        }
        Ok(())
    }

    pub fn transition(&self, dt: f64) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 1)] = dt;
        f[(2, 3)] = dt;
        f
    }

    pub fn process_noise(&self, dt: f64) -> Matrix4<f64> {
        let (pp, pv, vv) = match self.integration {
            NoiseIntegration::Continuous => (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt),
            NoiseIntegration::Discrete => (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt.powi(2)),
        };
        let mut q = Matrix4::zeros();
        for o in [0, 2] {
            q[(o, o)] = self.sigma2 * pp;
            q[(o, o + 1)] = self.sigma2 * pv;
            q[(o + 1, o)] = self.sigma2 * pv;
            q[(o + 1, o + 1)] = self.sigma2 * vv;
        }
        q
    }
}

/// Mind-state `[x1, x1', x2, x2']` with covariance at a date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub mean: [f64; 4],
    /// Row-major 4x4.
    pub covariance: [[f64; 4]; 4],
    pub time: NaiveDate,
}

impl StateEstimate {
    /// Independent prior: positions around `position`, zero velocity.
    pub fn prior(motion: &MotionModel, position: [f64; 2], time: NaiveDate) -> Self {
        let mut cov = [[0.0; 4]; 4];
        cov[0][0] = motion.prior_position_var;
        cov[1][1] = motion.prior_velocity_var;
        cov[2][2] = motion.prior_position_var;
        cov[3][3] = motion.prior_velocity_var;
        Self {
            mean: [position[0], 0.0, position[1], 0.0],
            covariance: cov,
            time,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.mean[0], self.mean[2]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.mean[1], self.mean[3]]
    }

    pub fn position_covariance(&self) -> [[f64; 2]; 2] {
        let c = &self.covariance;
        [[c[0][0], c[0][2]], [c[2][0], c[2][2]]]
    }

    fn mean_vec(&self) -> Vector4<f64> {
        Vector4::from_column_slice(&self.mean)
    }

    fn cov_mat(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.covariance[i][j])
    }

    fn from_parts(mean: Vector4<f64>, cov: Matrix4<f64>, time: NaiveDate) -> Self {
        Self {
            mean: [mean[0], mean[1], mean[2], mean[3]],
            covariance: std::array::from_fn(|i| std::array::from_fn(|j| cov[(i, j)])),
            time,
        }
    }
}

/// Source of the measurement covariance for an update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasurementNoise {
    /// The same covariance for every measurement.
    Fixed([[f64; 2]; 2]),
    /// Covariance of the category measurement mixture at the predicted
    /// position.
    StateDependent(CategoryModel),
}

impl MeasurementNoise {
    pub fn covariance_at(&self, position: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            MeasurementNoise::Fixed(r) => *r,
            MeasurementNoise::StateDependent(model) => reduce_mixture(&measurement_mixture(position, model)).cov,
        }
    }
}

/// Elapsed time in years.
pub fn years_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

/// Predict-only propagation by `dt` years.
pub fn predict(est: &StateEstimate, dt: f64, motion: &MotionModel, time: NaiveDate) -> StateEstimate {
    let f = motion.transition(dt);
    let mean = f * est.mean_vec();
    let mut cov = f * est.cov_mat() * f.transpose() + motion.process_noise(dt);
    cov = 0.5 * (cov + cov.transpose());
    StateEstimate::from_parts(mean, cov, time)
}

fn h() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// Kalman update of a predicted state with measurement `z` and covariance `r`.
pub fn update(pred: &StateEstimate, z: [f64; 2], r: [[f64; 2]; 2]) -> Result<StateEstimate> {
    let h = h();
    let p = pred.cov_mat();
    let x = pred.mean_vec();
    let s = h * p * h.transpose() + mat2(&r);
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::numerical(format!("innovation covariance singular: {:?}", arr2(&s))))?;
    let k = p * h.transpose() * s_inv;
    let innovation = Vector2::new(z[0], z[1]) - h * x;
    let mean = x + k * innovation;
    let mut cov = (Matrix4::identity() - k * h) * p;
    cov = 0.5 * (cov + cov.transpose());
    if cov.cholesky().is_none() {
        return Err(Error::numerical(format!(
            "posterior covariance not positive definite at {}: mean {:?}, covariance {:?}",
            pred.time,
            mean.as_slice(),
            cov.as_slice()
        )));
    }
    Ok(StateEstimate::from_parts(mean, cov, pred.time))
}

/// Predict to `t`, build the measurement covariance at the predicted
/// position, then update with `z`.
pub fn kalman_step(
    prior: &StateEstimate,
    z: [f64; 2],
    t: NaiveDate,
    motion: &MotionModel,
    noise: &MeasurementNoise,
) -> Result<StateEstimate> {
    Ok(kalman_step_detailed(prior, z, t, motion, noise)?.0)
}

/// As [`kalman_step`], also returning the measurement covariance used.
pub fn kalman_step_detailed(
    prior: &StateEstimate,
    z: [f64; 2],
    t: NaiveDate,
    motion: &MotionModel,
    noise: &MeasurementNoise,
) -> Result<(StateEstimate, [[f64; 2]; 2])> {
    if t < prior.time {
        return Err(Error::invalid(format!("measurement at {t} precedes state at {}", prior.time)));
    }
    let pred = predict(prior, years_between(prior.time, t), motion, t);
    let r = noise.covariance_at(pred.position());
    if Matrix2::from_fn(|i, j| r[i][j]).cholesky().is_none() {
        return Err(Error::numerical(format!("measurement covariance not positive definite: {r:?}")));
    }
    Ok((update(&pred, z, r)?, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackStep {
    pub estimate: StateEstimate,
    pub z: [f64; 2],
    pub region_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub person_id: String,
    pub steps: Vec<TrackStep>,
}

/// Runs the filter over one person's measurements, which must be in
/// non-decreasing time order and not precede the prior.
pub fn track_person(
    person_id: &str,
    measurements: &[(NaiveDate, [f64; 2])],
    motion: &MotionModel,
    noise: &MeasurementNoise,
    prior: &StateEstimate,
    regions: Option<&LinearRegionClassifier>,
) -> Result<Track> {
    motion.validate()?;
    if measurements.is_empty() {
        return Err(Error::InsufficientData(format!("person `{person_id}` has no measurements")));
    }
    if let Some(w) = measurements.windows(2).find(|w| w[1].0 < w[0].0) {
        return Err(Error::invalid(format!("measurements out of order: {} after {}", w[1].0, w[0].0)));
    }
    let mut state = prior.clone();
    let mut steps = Vec::with_capacity(measurements.len());
    for &(t, z) in measurements {
        state = kalman_step(&state, z, t, motion, noise)?;
        steps.push(TrackStep {
            region_label: regions.map(|r| r.predict(state.position()).to_string()),
            estimate: state.clone(),
            z,
        });
    }
    Ok(Track {
        person_id: person_id.to_string(),
        steps,
    })
}

/// Propagates the last state `horizon` years ahead without updating.
pub fn predict_future(track: &Track, horizon: f64, motion: &MotionModel) -> Result<StateEstimate> {
    let last = track
        .steps
        .last()
        .ok_or_else(|| Error::InsufficientData("empty track".into()))?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon must be non-negative"));
    }
    let time = last.estimate.time + Duration::days((horizon * DAYS_PER_YEAR).round() as i64);
    Ok(predict(&last.estimate, horizon, motion, time))
}

/// CSV with header `time,x1,x1_vel,x2,x2_vel,cov_0..cov_15,region_label,z1,z2`.
pub fn write_track_csv<W: std::io::Write>(w: W, track: &Track) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["time", "x1", "x1_vel", "x2", "x2_vel"].iter().map(|s| s.to_string()).collect();
    header.extend((0..16).map(|i| format!("cov_{i}")));
    header.extend(["region_label", "z1", "z2"].iter().map(|s| s.to_string()));
    out.write_record(&header)?;
    for s in &track.steps {
        let e = &s.estimate;
        let mut row = vec![e.time.to_string()];
        row.extend(e.mean.iter().map(f64::to_string));
        row.extend(e.covariance.iter().flatten().map(f64::to_string));
        row.push(s.region_label.clone().unwrap_or_default());
        row.push(s.z[0].to_string());
        row.push(s.z[1].to_string());
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + Duration::days(n)
    }

    fn unit_prior() -> StateEstimate {
        let m = MotionModel {
            prior_position_var: 1.0,
            ..Default::default()
        };
        StateEstimate::prior(&m, [0.0, 0.0], day(0))
    }

    #[test]
    fn conjugate_update() {
        let r = MeasurementNoise::Fixed([[1.0, 0.0], [0.0, 1.0]]);
        let post = kalman_step(&unit_prior(), [1.0, 1.0], day(0), &MotionModel::default(), &r).unwrap();
        assert!((post.mean[0] - 0.5).abs() < 1e-15 && (post.mean[2] - 0.5).abs() < 1e-15);
        assert!((post.covariance[0][0] - 0.5).abs() < 1e-15 && (post.covariance[2][2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn repeated_measurements_converge() {
        let motion = MotionModel {
            sigma2: 0.0,
            ..Default::default()
        };
        let r = MeasurementNoise::Fixed([[1.0, 0.0], [0.0, 1.0]]);
        let mut s = StateEstimate::prior(&motion, [0.0, 0.0], day(0));
        for i in 0..100 {
            s = kalman_step(&s, [1.0, -1.0], day(i), &motion, &r).unwrap();
        }
        assert!((s.position()[0] - 1.0).abs() < 1e-3 && (s.position()[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn process_noise_blocks() {
        let m = MotionModel::default();
        let q = m.process_noise(2.0);
        assert!((q[(0, 0)] - 0.01 * 8.0 / 3.0).abs() < 1e-15);
        assert!((q[(0, 1)] - 0.02).abs() < 1e-15);
        assert!((q[(3, 3)] - 0.02).abs() < 1e-15);
        assert_eq!(q[(0, 2)], 0.0);
        let d = MotionModel {
            integration: NoiseIntegration::Discrete,
            ..m
        }
        .process_noise(2.0);
        assert!((d[(0, 0)] - 0.04).abs() < 1e-15 && (d[(1, 1)] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn rejects_backwards_time() {
        let r = MeasurementNoise::Fixed([[1.0, 0.0], [0.0, 1.0]]);
        let p = StateEstimate::prior(&MotionModel::default(), [0.0, 0.0], day(5));
        assert!(kalman_step(&p, [0.0, 0.0], day(4), &MotionModel::default(), &r).is_err());
        let ms = [(day(6), [0.0, 0.0]), (day(5), [0.0, 0.0])];
        assert!(track_person("x", &ms, &MotionModel::default(), &r, &p, None).is_err());
    }

    #[test]
    fn single_quote_lands_between_prior_and_measurement() {
        let m = MotionModel::default();
        let r = MeasurementNoise::Fixed([[0.5, 0.1], [0.1, 0.4]]);
        let p = StateEstimate::prior(&m, [0.0, 0.0], day(0));
        let t = track_person("x", &[(day(30), [2.0, -1.0])], &m, &r, &p, None).unwrap();
        let pos = t.steps[0].estimate.position();
        assert!(pos[0] > 0.0 && pos[0] < 2.0);
        assert!(pos[1] < 0.0 && pos[1] > -1.0);
    }

    #[test]
    fn future_moves_with_velocity() {
        let m = MotionModel::default();
        let mut e = StateEstimate::prior(&m, [1.0, 2.0], day(0));
        e.mean[1] = 0.3;
        e.mean[3] = -0.2;
        let track = Track {
            person_id: "x".into(),
            steps: vec![TrackStep {
                estimate: e,
                z: [0.0, 0.0],
                region_label: None,
            }],
        };
        let f = predict_future(&track, 2.5, &m).unwrap();
        assert!((f.mean[0] - 1.75).abs() < 1e-15 && (f.mean[2] - 1.5).abs() < 1e-15);
        let mut last = 0.0;
        for h in [0.0, 0.5, 1.0, 5.0, 20.0] {
            let c = predict_future(&track, h, &m).unwrap().covariance;
            let tr = c[0][0] + c[2][2];
            assert!(tr >= last);
            last = tr;
        }
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let m = MotionModel::default();
        let r = MeasurementNoise::Fixed([[1.0, 0.0], [0.0, 1.0]]);
        let p = StateEstimate::prior(&m, [0.0, 0.0], day(0));
        let ms: Vec<_> = (0..4).map(|i| (day(i * 40), [i as f64, 0.0])).collect();
        let t = track_person("x", &ms, &m, &r, &p, None).unwrap();
        let mut buf = Vec::new();
        write_track_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("time,x1,x1_vel,x2,x2_vel,cov_0,"));
        assert!(lines[0].ends_with("cov_15,region_label,z1,z2"));
        assert_eq!(lines[1].split(',').count(), 24);
    }
}
