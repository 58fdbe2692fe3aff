use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{psd_cholesky, FilterConfig, FilterState};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// `2n + 1` points: the mean, then `mean + L e_i` for `i = 0..n`, then
/// `mean - L e_i`, where `L` is the lower-triangular factor of
/// `(n + kappa) P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

/// `W0 = kappa / (n + kappa)`, `Wi = 1 / (2 (n + kappa))`.
pub fn ukf_weights(n: usize, kappa: f64) -> Result<Vec<f64>> {
    let spread = n as f64 + kappa;
    if !(spread > 0.0) {
        return Err(Error::InvalidArgument(format!("n + kappa must be positive, got {spread}")));
    }
    let mut w = vec![1.0 / (2.0 * spread); 2 * n + 1];
    w[0] = kappa / spread;
    Ok(w)
}

pub fn sigma_points(mean: &DVector<f64>, covariance: &DMatrix<f64>, kappa: f64) -> Result<SigmaPoints> {
    let n = mean.len();
    let weights = ukf_weights(n, kappa)?;
    let scaled = covariance * (n as f64 + kappa);
    let root = match psd_cholesky(&scaled) {
        Ok(l) => l,
        Err(first) => {
            let jitter = 1e-12 * covariance.trace() / n as f64;
            debug!("sigma point factorization failed ({first}); retrying with jitter {jitter:e}");
            let sym = (&scaled + scaled.transpose()) * 0.5;
            let jittered = sym + DMatrix::identity(n, n) * (jitter * (n as f64 + kappa));
            psd_cholesky(&jittered)?
        }
    };
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mean.clone());
    for i in 0..n {
        points.push(mean + root.column(i));
    }
    for i in 0..n {
        points.push(mean - root.column(i));
    }
    Ok(SigmaPoints { points, weights })
}

/// Unscented measurement update. Sigma points pass through the full output
/// including feedthrough.
pub fn update_ukf(
    m: &ModelSpec,
    cfg: &FilterConfig,
    s: &FilterState,
    measured_output: f64,
    measured_input: f64,
) -> Result<FilterState> {
    s.check_dim(m)?;
    let sp = sigma_points(&s.mean, &s.covariance, cfg.kappa)?;
    let outputs: Vec<f64> = sp
        .points
        .iter()
        .map(|x| m.measured_output(x, measured_input))
        .collect();
    let y_hat: f64 = sp.weights.iter().zip(&outputs).map(|(w, y)| w * y).sum();
    let mut innovation_var = cfg.r;
    let mut cross = DVector::zeros(s.state_dim());
    for ((w, y), x) in sp.weights.iter().zip(&outputs).zip(&sp.points) {
        let dy = y - y_hat;
        innovation_var += w * dy * dy;
        cross.axpy(w * dy, &(x - &s.mean), 1.0);
    }
    if !(innovation_var.is_finite() && innovation_var > 0.0) {
        return Err(Error::NumericalBreakdown(format!(
            "innovation variance {innovation_var:e}"
        )));
    }
    let gain = cross / innovation_var;
    let mean = &s.mean + &gain * (measured_output - y_hat);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown("non-finite state estimate".into()));
    }
    let covariance = &s.covariance - &gain * gain.transpose() * innovation_var;
    let mut next = FilterState { mean, covariance };
    next.symmetrize();
    Ok(next)
}
