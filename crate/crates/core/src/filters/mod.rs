//! Nonlinear Kalman filters over any [`ModelSpec`].
//!
//! All variants share the exact linear time update; they differ in how the
//! polynomial output is handled in the measurement update.

mod cholesky;
mod ekf;
mod ukf;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Discretization, ModelSpec};

pub use cholesky::psd_cholesky;
pub use ekf::{update_ekf1, update_ekf2, update_ekf2_with_hessian};
pub use ukf::{sigma_points, ukf_weights, update_ukf, SigmaPoints};

/// Diagonal of the initial covariance for `[v1, v2, z, bias, bias]`.
pub const DEFAULT_P0_DIAGONAL: [f64; 5] = [0.01, 0.0016, 0.01, 0.0625, 0.0625];
pub const DEFAULT_PROCESS_NOISE: f64 = 1e-8;
/// (6 mV)^2
pub const DEFAULT_MEASUREMENT_VARIANCE: f64 = 3.6e-5;
pub const DEFAULT_KAPPA: f64 = 4.0;
pub const DEFAULT_DT: f64 = 1.0;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ekf1,
    Ekf2,
    Ukf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Ekf1, FilterKind::Ekf2, FilterKind::Ukf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ekf1 => "ekf1",
            FilterKind::Ekf2 => "ekf2",
            FilterKind::Ukf => "ukf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown filter kind {s:?}")))
    }
}

/// Checks symmetry (to `SYMMETRY_TOL` relative) and that no eigenvalue is
/// below `PSD_TOL` relative to the largest.
fn check_covariance(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("{name} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if min_eig < PSD_TOL * scale {
        return Err(Error::InvalidArgument(format!(
            "{name} is not positive semidefinite (eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub p0: DMatrix<f64>,
    pub q0: DMatrix<f64>,
    /// Measurement noise variance (V^2).
    pub r: f64,
    pub kappa: f64,
    /// Step (s).
    pub dt: f64,
}

impl FilterConfig {
    pub fn new(p0: DMatrix<f64>, q0: DMatrix<f64>, r: f64, kappa: f64, dt: f64) -> Result<Self> {
        let c = Self { p0, q0, r, kappa, dt };
        c.validate()?;
        Ok(c)
    }

    /// Default tuning for an `n`-state model: the leading `n` entries of
    /// [`DEFAULT_P0_DIAGONAL`], `1e-8 I` process noise, `(6 mV)^2`
    /// measurement noise, `kappa = 4`, 1 s step.
    pub fn default_tuning(n: usize) -> Result<Self> {
        if n == 0 || n > DEFAULT_P0_DIAGONAL.len() {
            return Err(Error::InvalidArgument(format!("no default tuning for {n} states")));
        }
        Self::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(&DEFAULT_P0_DIAGONAL[..n])),
            DMatrix::identity(n, n) * DEFAULT_PROCESS_NOISE,
            DEFAULT_MEASUREMENT_VARIANCE,
            DEFAULT_KAPPA,
            DEFAULT_DT,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.p0.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        check_covariance("p0", &self.p0)?;
        check_covariance("q0", &self.q0)?;
        let n = self.p0.nrows();
        if self.q0.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.q0.nrows(),
            });
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {}", self.r)));
        }
        if !(self.kappa.is_finite() && n as f64 + self.kappa > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "n + kappa must be positive, got {}",
                n as f64 + self.kappa
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    fn check_model(&self, m: &ModelSpec) -> Result<()> {
        if self.state_dim() != m.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.state_dim(),
                actual: self.state_dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl FilterState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: covariance.nrows(),
            });
        }
        Ok(Self { mean, covariance })
    }

    /// Mean `x0` with the configured initial covariance.
    pub fn initial(cfg: &FilterConfig, x0: DVector<f64>) -> Result<Self> {
        Self::new(x0, cfg.p0.clone())
    }

    pub fn state_dim(&self) -> usize {
        self.mean.len()
    }

    /// Symmetry and PSD check used by tests and after long runs.
    pub fn is_valid(&self) -> bool {
        check_covariance("covariance", &self.covariance).is_ok()
    }

    fn symmetrize(&mut self) {
        let t = self.covariance.transpose();
        self.covariance += t;
        self.covariance *= 0.5;
    }

    fn check_dim(&self, m: &ModelSpec) -> Result<()> {
        if self.state_dim() != m.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: m.state_dim(),
                actual: self.state_dim(),
            });
        }
        Ok(())
    }
}

fn predict_with(d: &Discretization, q0: &DMatrix<f64>, s: &FilterState, u: f64) -> FilterState {
    let mut next = FilterState {
        mean: d.step(&s.mean, u),
        covariance: &d.phi * &s.covariance * d.phi.transpose() + q0,
    };
    next.symmetrize();
    next
}

/// Exact time update over `cfg.dt` with the input held at `measured_input`.
pub fn predict(
    m: &ModelSpec,
    cfg: &FilterConfig,
    s: &FilterState,
    measured_input: f64,
) -> Result<FilterState> {
    cfg.check_model(m)?;
    s.check_dim(m)?;
    let d = m.discretize(cfg.dt)?;
    Ok(predict_with(&d, &cfg.q0, s, measured_input))
}

/// A model, its tuning and one update rule, with the discretization cached.
#[derive(Debug, Clone)]
pub struct Filter {
    model: ModelSpec,
    config: FilterConfig,
    kind: FilterKind,
    discretization: Discretization,
}

impl Filter {
    pub fn new(model: ModelSpec, config: FilterConfig, kind: FilterKind) -> Result<Self> {
        config.validate()?;
        config.check_model(&model)?;
        let discretization = model.discretize(config.dt)?;
        Ok(Self {
            model,
            config,
            kind,
            discretization,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn initial_state(&self, x0: DVector<f64>) -> Result<FilterState> {
        let s = FilterState::initial(&self.config, x0)?;
        s.check_dim(&self.model)?;
        Ok(s)
    }

    pub fn predict(&self, s: &FilterState, measured_input: f64) -> FilterState {
        predict_with(&self.discretization, &self.config.q0, s, measured_input)
    }

    pub fn update(&self, s: &FilterState, measured_output: f64, measured_input: f64) -> Result<FilterState> {
        let (m, c) = (&self.model, &self.config);
        match self.kind {
            FilterKind::Ekf1 => update_ekf1(m, c, s, measured_output, measured_input),
            FilterKind::Ekf2 => update_ekf2(m, c, s, measured_output, measured_input),
            FilterKind::Ukf => update_ukf(m, c, s, measured_output, measured_input),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_original_model, Variant};
    use crate::params::{kokam_ocv, kokam_params};

    #[test]
    fn default_tuning() {
        let c = FilterConfig::default_tuning(4).unwrap();
        assert_eq!(c.p0.diagonal().as_slice(), &[0.01, 0.0016, 0.01, 0.0625]);
        assert_eq!(c.q0, DMatrix::identity(4, 4) * 1e-8);
        assert_eq!(c.r, 3.6e-5);
        assert_eq!(c.kappa, 4.0);
        assert_eq!(FilterConfig::default_tuning(3).unwrap().p0.nrows(), 3);
        assert!(FilterConfig::default_tuning(0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = FilterConfig::default_tuning(3).unwrap();
        c.r = 0.0;
        assert!(c.validate().is_err());
        let mut c = FilterConfig::default_tuning(3).unwrap();
        c.kappa = -3.0;
        assert!(c.validate().is_err());
        let mut c = FilterConfig::default_tuning(3).unwrap();
        c.p0[(0, 1)] = 0.5;
        assert!(c.validate().is_err());
        let mut c = FilterConfig::default_tuning(3).unwrap();
        c.q0[(1, 1)] = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_names() {
        for k in FilterKind::ALL {
            assert_eq!(k.name().parse::<FilterKind>().unwrap(), k);
        }
        assert!("ekf3".parse::<FilterKind>().is_err());
    }

    #[test]
    fn zero_covariance_stays_zero() {
        let m = build_original_model(&kokam_params(), &kokam_ocv()).unwrap();
        let mut cfg = FilterConfig::default_tuning(3).unwrap();
        cfg.q0 = DMatrix::zeros(3, 3);
        let s = FilterState::new(DVector::from_vec(vec![0.0, 0.0, 0.5]), DMatrix::zeros(3, 3)).unwrap();
        let s = predict(&m, &cfg, &s, 0.7).unwrap();
        assert_eq!(s.covariance, DMatrix::zeros(3, 3));
    }

    #[test]
    fn zero_input_predict_decays() {
        let p = kokam_params();
        let m = build_original_model(&p, &kokam_ocv()).unwrap();
        let cfg = FilterConfig::default_tuning(3).unwrap();
        let s = FilterState::initial(&cfg, DVector::from_vec(vec![0.02, 0.01, 0.6])).unwrap();
        let s = predict(&m, &cfg, &s, 0.0).unwrap();
        assert!((s.mean[0] - 0.02 * (-1.0 / p.tau1()).exp()).abs() < 1e-16);
        assert!((s.mean[1] - 0.01 * (-1.0 / p.tau2()).exp()).abs() < 1e-16);
        assert_eq!(s.mean[2], 0.6);
    }

    #[test]
    fn voltage_bias_row_untouched_by_predict() {
        let m = Variant::VoltageBias.build(&kokam_params(), &kokam_ocv()).unwrap();
        let cfg = FilterConfig::default_tuning(4).unwrap();
        let mut s = FilterState::initial(&cfg, DVector::from_vec(vec![0.0, 0.0, 0.9, 0.05])).unwrap();
        s.covariance[(3, 2)] = 0.001;
        s.covariance[(2, 3)] = 0.001;
        let next = predict(&m, &cfg, &s, 1.3).unwrap();
        assert_eq!(next.mean[3], 0.05);
        assert!((next.covariance[(3, 3)] - (s.covariance[(3, 3)] + 1e-8)).abs() < 1e-18);
        // the cross term with SOC moves with SOC, not with the bias
        let phi = m.discretize(1.0).unwrap().phi;
        assert_eq!(phi.row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = build_original_model(&kokam_params(), &kokam_ocv()).unwrap();
        let cfg = FilterConfig::default_tuning(4).unwrap();
        assert!(Filter::new(m, cfg, FilterKind::Ukf).is_err());
    }
}
