use nalgebra::{DMatrix, DVector};

use super::{FilterConfig, FilterState};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Scalar-measurement update with gain from `h_row`, predicted output
/// `y_hat` and innovation variance `r_eff + H P H^T`; Joseph-form covariance.
fn joseph_update(
    s: &FilterState,
    h_row: &DVector<f64>,
    y_hat: f64,
    r_eff: f64,
    measured_output: f64,
) -> Result<FilterState> {
    let p = &s.covariance;
    let ph = p * h_row;
    let innovation_var = h_row.dot(&ph) + r_eff;
    if !(innovation_var.is_finite() && innovation_var > 0.0) {
        return Err(Error::NumericalBreakdown(format!(
            "innovation variance {innovation_var:e}"
        )));
    }
    let gain = ph / innovation_var;
    let innovation = measured_output - y_hat;
    let n = s.state_dim();
    let i_kh = DMatrix::identity(n, n) - &gain * h_row.transpose();
    let covariance = &i_kh * p * i_kh.transpose() + &gain * gain.transpose() * r_eff;
    let mean = &s.mean + &gain * innovation;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown("non-finite state estimate".into()));
    }
    let mut next = FilterState { mean, covariance };
    next.symmetrize();
    Ok(next)
}

/// First-order EKF measurement update.
pub fn update_ekf1(
    m: &ModelSpec,
    cfg: &FilterConfig,
    s: &FilterState,
    measured_output: f64,
    measured_input: f64,
) -> Result<FilterState> {
    s.check_dim(m)?;
    let h = m.output_gradient(&s.mean);
    let y_hat = m.measured_output(&s.mean, measured_input);
    joseph_update(s, &h, y_hat, cfg.r, measured_output)
}

/// Second-order EKF measurement update using the model's output Hessian.
pub fn update_ekf2(
    m: &ModelSpec,
    cfg: &FilterConfig,
    s: &FilterState,
    measured_output: f64,
    measured_input: f64,
) -> Result<FilterState> {
    let hess = m.output_hessian(&s.mean);
    update_ekf2_with_hessian(m, cfg, s, measured_output, measured_input, &hess)
}

/// Second-order EKF update with an explicit output Hessian. The predicted
/// output gains `tr(Hess P) / 2` and the innovation variance
/// `tr((Hess P)^2) / 2`; the latter enters the Joseph form as extra
/// measurement noise.
pub fn update_ekf2_with_hessian(
    m: &ModelSpec,
    cfg: &FilterConfig,
    s: &FilterState,
    measured_output: f64,
    measured_input: f64,
    hessian: &DMatrix<f64>,
) -> Result<FilterState> {
    s.check_dim(m)?;
    if hessian.shape() != s.covariance.shape() {
        return Err(Error::DimensionMismatch {
            expected: s.state_dim(),
            actual: hessian.nrows(),
        });
    }
    let hp = hessian * &s.covariance;
    let h = m.output_gradient(&s.mean);
    let y_hat = m.measured_output(&s.mean, measured_input) + 0.5 * hp.trace();
    let r_eff = cfg.r + 0.5 * (&hp * &hp).trace();
    joseph_update(s, &h, y_hat, r_eff, measured_output)
}
