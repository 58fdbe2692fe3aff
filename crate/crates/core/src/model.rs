//! Input-affine state-space description shared by the simulator, the
//! observability analyzer and the filters.
//!
//! Every variant built here has the form
//!
//! ```text
//! dx/dt = A x + g u
//! y     = V_OC(x[soc]) + c . x + d u
//! ```
//!
//! with a constant drift matrix `A`, a constant input vector `g`, a linear
//! output part `c` and scalar feedthrough `d`. The only nonlinearity is the
//! OCV term.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocv::OcvPolynomial;
use crate::params::EcmParams;

/// Index of the SOC coordinate in every variant.
pub const SOC_INDEX: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `[v1, v2, z]`
    Original,
    /// `[v1, v2, z, ve]`, constant bias on the voltage sensor.
    VoltageBias,
    /// `[v1, v2, z, ie]`, constant bias on the current sensor.
    CurrentBias,
    /// `[v1, v2, z, ve, ie]`
    DualBias,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Original,
        Variant::VoltageBias,
        Variant::CurrentBias,
        Variant::DualBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::VoltageBias => "voltage-bias",
            Variant::CurrentBias => "current-bias",
            Variant::DualBias => "dual-bias",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            Variant::Original => 3,
            Variant::VoltageBias | Variant::CurrentBias => 4,
            Variant::DualBias => 5,
        }
    }

    pub fn build(self, p: &EcmParams, ocv: &OcvPolynomial) -> Result<ModelSpec> {
        match self {
            Variant::Original => build_original_model(p, ocv),
            Variant::VoltageBias => crate::augmented::build_voltage_bias_model(p, ocv),
            Variant::CurrentBias => crate::augmented::build_current_bias_model(p, ocv),
            Variant::DualBias => crate::augmented::build_dual_bias_model(p, ocv),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// Exact zero-order-hold discretization `x' = phi x + gamma u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub phi: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub dt: f64,
}

impl Discretization {
    pub fn step(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        &self.phi * x + &self.gamma * u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    variant: Variant,
    drift: DMatrix<f64>,
    input: DVector<f64>,
    output_linear: DVector<f64>,
    ocv: OcvPolynomial,
    feedthrough: f64,
    state_names: Vec<&'static str>,
    voltage_bias_index: Option<usize>,
    current_bias_index: Option<usize>,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        variant: Variant,
        drift: DMatrix<f64>,
        input: DVector<f64>,
        output_linear: DVector<f64>,
        ocv: OcvPolynomial,
        feedthrough: f64,
        state_names: Vec<&'static str>,
        voltage_bias_index: Option<usize>,
        current_bias_index: Option<usize>,
    ) -> Self {
        let n = variant.state_dim();
        debug_assert_eq!(drift.shape(), (n, n));
        debug_assert_eq!(input.len(), n);
        debug_assert_eq!(output_linear.len(), n);
        debug_assert_eq!(state_names.len(), n);
        Self {
            variant,
            drift,
            input,
            output_linear,
            ocv,
            feedthrough,
            state_names,
            voltage_bias_index,
            current_bias_index,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn state_dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn soc_index(&self) -> usize {
        SOC_INDEX
    }

    pub fn state_names(&self) -> &[&'static str] {
        &self.state_names
    }

    pub fn voltage_bias_index(&self) -> Option<usize> {
        self.voltage_bias_index
    }

    pub fn current_bias_index(&self) -> Option<usize> {
        self.current_bias_index
    }

    pub fn ocv(&self) -> &OcvPolynomial {
        &self.ocv
    }

    /// Same structure with a different OCV curve.
    pub fn with_ocv(&self, ocv: OcvPolynomial) -> Self {
        Self {
            ocv,
            ..self.clone()
        }
    }

    /// The constant matrix `A` of the linear drift.
    pub fn drift_matrix(&self) -> &DMatrix<f64> {
        &self.drift
    }

    /// The linear part `c` of the output map.
    pub fn output_linear(&self) -> &DVector<f64> {
        &self.output_linear
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.drift * x
    }

    /// State-independent for every variant; `x` is accepted for interface symmetry.
    pub fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.drift.clone()
    }

    pub fn input_vector(&self) -> &DVector<f64> {
        &self.input
    }

    /// `h(x)`, the output without feedthrough.
    pub fn output(&self, x: &DVector<f64>) -> f64 {
        self.ocv.value(x[SOC_INDEX]) + self.output_linear.dot(x)
    }

    pub fn output_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.output_linear.clone();
        g[SOC_INDEX] += self.ocv.eval(x[SOC_INDEX], 1);
        g
    }

    /// Only the SOC-SOC entry is nonzero.
    pub fn output_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut h = DMatrix::zeros(n, n);
        h[(SOC_INDEX, SOC_INDEX)] = self.ocv.eval(x[SOC_INDEX], 2);
        h
    }

    pub fn feedthrough(&self) -> f64 {
        self.feedthrough
    }

    /// Measured output `h(x) + d u`.
    pub fn measured_output(&self, x: &DVector<f64>, u: f64) -> f64 {
        self.output(x) + self.feedthrough * u
    }

    /// Characteristic length of each coordinate, used to scale finite
    /// difference steps. The OCV varies on a ~0.1 SOC scale; every other
    /// coordinate enters linearly.
    pub fn coordinate_scales(&self) -> DVector<f64> {
        let mut s = DVector::from_element(self.state_dim(), 1.0);
        s[SOC_INDEX] = 0.1;
        s
    }

    /// Exact discretization over `dt` via the exponential of the augmented
    /// matrix `[[A, g], [0, 0]] dt`.
    pub fn discretize(&self, dt: f64) -> Result<Discretization> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n = self.state_dim();
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.drift * dt));
        aug.view_mut((0, n), (n, 1)).copy_from(&(&self.input * dt));
        let e = aug.exp();
        Ok(Discretization {
            phi: e.view((0, 0), (n, n)).into_owned(),
            gamma: e.view((0, n), (n, 1)).column(0).into_owned(),
            dt,
        })
    }

    /// Propagates `x0` under zero-order-held inputs. Returns the state at
    /// each sample and the measured output there (no clamping).
    pub fn simulate(
        &self,
        x0: &DVector<f64>,
        inputs: &[f64],
        dt: f64,
    ) -> Result<Vec<(DVector<f64>, f64)>> {
        if x0.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                actual: x0.len(),
            });
        }
        let d = self.discretize(dt)?;
        let mut x = x0.clone();
        let mut out = Vec::with_capacity(inputs.len());
        for &u in inputs {
            let y = self.measured_output(&x, u);
            let next = d.step(&x, u);
            out.push((std::mem::replace(&mut x, next), y));
        }
        Ok(out)
    }
}

/// `[v1, v2, z]` model: `A = diag(-1/tau1, -1/tau2, 0)`,
/// `g = [1/c1, 1/c2, -1/Q]`, `h = V_OC(z) - v1 - v2`, feedthrough `-rs`.
pub fn build_original_model(p: &EcmParams, ocv: &OcvPolynomial) -> Result<ModelSpec> {
    p.validate()?;
    let drift = DMatrix::from_diagonal(&DVector::from_vec(vec![
        -1.0 / p.tau1(),
        -1.0 / p.tau2(),
        0.0,
    ]));
    let input = DVector::from_vec(vec![1.0 / p.c1, 1.0 / p.c2, -1.0 / p.capacity_q]);
    let output_linear = DVector::from_vec(vec![-1.0, -1.0, 0.0]);
    Ok(ModelSpec::assemble(
        Variant::Original,
        drift,
        input,
        output_linear,
        ocv.clone(),
        -p.rs,
        vec!["v1", "v2", "z"],
        None,
        None,
    ))
}
