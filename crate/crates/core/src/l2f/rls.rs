//! Exponentially weighted recursive least squares on the per-axis aero regressors.

use serde::Serialize;

use super::aircraft::{AeroModel, IDX_ALPHA, IDX_BETA, IDX_DA, N_REG};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Online estimate of the three moment-coefficient axes.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub model: AeroModel,
    /// Parameter covariance per axis (9×9).
    pub cov: [Matrix; 3],
    pub forgetting: f64,
    pub last_publish: Option<f64>,
    pub samples: usize,
    pub skipped: usize,
}

/// The coefficients used by the gain schedule and their variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyCoefficients {
    pub c_l_da: f64,
    pub c_m_alpha: f64,
    pub c_n_beta: f64,
    /// Covariance diagonal, in units of the observation noise variance.
    pub var: [f64; 3],
}

impl LearnedModel {
    pub fn new(prior: AeroModel, p0: f64, forgetting: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::InvalidArgument("initial covariance must be positive".into()));
        }
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::InvalidArgument(format!("forgetting factor {forgetting} outside (0, 1]")));
        }
        let p = Matrix::identity(N_REG, N_REG) * p0;
        Ok(Self { model: prior, cov: [p.clone(), p.clone(), p], forgetting, last_publish: None, samples: 0, skipped: 0 })
    }

    /// One Joseph-form update of `axis` with regressors `phi` and observed coefficient `y`.
    /// Returns `false` when the sample was skipped.
    pub fn update_axis(&mut self, axis: usize, phi: &[f64; N_REG], y: f64) -> bool {
        if phi.iter().any(|v| !v.is_finite()) || !y.is_finite() {
            log::debug!("skipping non-finite sample on axis {axis}");
            self.skipped += 1;
            return false;
        }
        let h = Vector::from_column_slice(phi);
        let p_pred = &self.cov[axis] / self.forgetting;
        let ph = &p_pred * &h;
        let s = 1.0 + h.dot(&ph);
        let k = ph / s;
        let theta = self.model.axis_mut(axis);
        let innovation = y - theta.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
        for (t, kk) in theta.iter_mut().zip(k.iter()) {
            *t += kk * innovation;
        }
        let ikh = Matrix::identity(N_REG, N_REG) - &k * h.transpose();
        let p = &ikh * p_pred * ikh.transpose() + &k * k.transpose();
        self.cov[axis] = (&p + p.transpose()) * 0.5;
        true
    }

    /// Updates all three axes from one sample.
    pub fn update(&mut self, phi: &[f64; N_REG], y: &[f64; 3]) {
        let mut ok = true;
        for (axis, yk) in y.iter().enumerate() {
            ok &= self.update_axis(axis, phi, *yk);
        }
        if ok {
            self.samples += 1;
        }
    }

    pub fn key(&self) -> KeyCoefficients {
        let var = [self.cov[0][(IDX_DA, IDX_DA)], self.cov[1][(IDX_ALPHA, IDX_ALPHA)], self.cov[2][(IDX_BETA, IDX_BETA)]];
        KeyCoefficients {
            c_l_da: self.model.c_l_da(),
            c_m_alpha: self.model.c_m_alpha(),
            c_n_beta: self.model.c_n_beta(),
            var,
        }
    }
}

/// Functional form of [`LearnedModel::update_axis`].
pub fn rls_update(model: &LearnedModel, regressors: &[f64; N_REG], observed: f64, axis: usize) -> LearnedModel {
    let mut next = model.clone();
    next.update_axis(axis, regressors, observed);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth() -> AeroModel {
        super::super::aircraft::AircraftParams::synthetic().aero
    }

    fn zero() -> AeroModel {
        AeroModel { cl: [0.0; N_REG], cm: [0.0; N_REG], cn: [0.0; N_REG] }
    }

    fn sample(rng: &mut ChaCha8Rng) -> [f64; N_REG] {
        let mut phi = [1.0; N_REG];
        for v in phi.iter_mut().skip(1) {
            *v = rng.random_range(-0.2..0.2);
        }
        phi
    }

    #[test]
    fn zero_innovation_keeps_coefficients() {
        let mut m = LearnedModel::new(truth(), 10.0, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = sample(&mut rng);
        let y = truth().coefficients(&phi);
        m.update(&phi, &y);
        assert_eq!(m.model, truth());
    }

    #[test]
    fn recovers_noiseless_linear_truth() {
        let mut m = LearnedModel::new(zero(), 1e8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let phi = sample(&mut rng);
            m.update(&phi, &truth().coefficients(&phi));
        }
        for axis in 0..3 {
            for (a, b) in m.model.axis(axis).iter().zip(truth().axis(axis)) {
                assert!((a - b).abs() < 1e-6, "axis {axis}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn matches_regularized_batch_solve() {
        let p0 = 50.0;
        let prior = AeroModel { cm: [0.1; N_REG], ..zero() };
        let mut m = LearnedModel::new(prior, p0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut info = Matrix::identity(N_REG, N_REG) / p0;
        let mut rhs = Vector::from_column_slice(&prior.cm) / p0;
        for _ in 0..200 {
            let phi = sample(&mut rng);
            let y: f64 = rng.random_range(-1.0..1.0);
            m.update_axis(1, &phi, y);
            let h = Vector::from_column_slice(&phi);
            info += &h * h.transpose();
            rhs += h * y;
        }
        let batch = info.lu().solve(&rhs).unwrap();
        for (a, b) in m.model.cm.iter().zip(batch.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn non_finite_sample_is_skipped() {
        let mut m = LearnedModel::new(zero(), 1.0, 1.0).unwrap();
        let mut phi = [0.1; N_REG];
        phi[3] = f64::NAN;
        m.update(&phi, &[0.0; 3]);
        assert_eq!(m.skipped, 3);
        assert_eq!(m.samples, 0);
        assert_eq!(m.model, zero());
    }

    #[test]
    fn covariance_stays_spd() {
        let mut m = LearnedModel::new(zero(), 1e4, 0.98).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let phi = sample(&mut rng);
            m.update(&phi, &[0.0; 3]);
        }
        for p in &m.cov {
            assert!(crate::linalg::is_spd(p));
        }
    }
}
