//! Bias-augmented variants of the circuit model.
//!
//! Sensor biases are constant states: their rows of the drift matrix are
//! zero. A voltage bias `ve` adds to the output. A current bias `ie` means
//! the cell sees `I = I_m - ie` while the filter is driven by the measured
//! `I_m`, so `ie` couples into the drift with the negated input vector and
//! into the output through `+ rs ie`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{ModelSpec, Variant, SOC_INDEX};
use crate::ocv::OcvPolynomial;
use crate::params::EcmParams;

struct Layout {
    variant: Variant,
    voltage_bias: Option<usize>,
    current_bias: Option<usize>,
    names: Vec<&'static str>,
}

fn build(p: &EcmParams, ocv: &OcvPolynomial, layout: Layout) -> Result<ModelSpec> {
    p.validate()?;
    let n = layout.variant.state_dim();
    let mut drift = DMatrix::zeros(n, n);
    drift[(0, 0)] = -1.0 / p.tau1();
    drift[(1, 1)] = -1.0 / p.tau2();
    let mut input = DVector::zeros(n);
    input[0] = 1.0 / p.c1;
    input[1] = 1.0 / p.c2;
    input[SOC_INDEX] = -1.0 / p.capacity_q;
    let mut output = DVector::zeros(n);
    output[0] = -1.0;
    output[1] = -1.0;
    if let Some(i) = layout.voltage_bias {
        output[i] = 1.0;
    }
    if let Some(i) = layout.current_bias {
        for r in 0..3 {
            drift[(r, i)] = -input[r];
        }
        output[i] = p.rs;
    }
    Ok(ModelSpec::assemble(
        layout.variant,
        drift,
        input,
        output,
        ocv.clone(),
        -p.rs,
        layout.names,
        layout.voltage_bias,
        layout.current_bias,
    ))
}

/// `[v1, v2, z, ve]` with measured output `V_OC(z) - v1 - v2 - I rs + ve`.
pub fn build_voltage_bias_model(p: &EcmParams, ocv: &OcvPolynomial) -> Result<ModelSpec> {
    build(
        p,
        ocv,
        Layout {
            variant: Variant::VoltageBias,
            voltage_bias: Some(3),
            current_bias: None,
            names: vec!["v1", "v2", "z", "ve"],
        },
    )
}

/// `[v1, v2, z, ie]` driven by the measured current; fourth drift column
/// `[-1/c1, -1/c2, 1/Q, 0]`, output `V_OC(z) - v1 - v2 - I_m rs + ie rs`.
pub fn build_current_bias_model(p: &EcmParams, ocv: &OcvPolynomial) -> Result<ModelSpec> {
    build(
        p,
        ocv,
        Layout {
            variant: Variant::CurrentBias,
            voltage_bias: None,
            current_bias: Some(3),
            names: vec!["v1", "v2", "z", "ie"],
        },
    )
}

/// `[v1, v2, z, ve, ie]`; both constructions combined. Meant for
/// conditioning studies, not estimation.
pub fn build_dual_bias_model(p: &EcmParams, ocv: &OcvPolynomial) -> Result<ModelSpec> {
    build(
        p,
        ocv,
        Layout {
            variant: Variant::DualBias,
            voltage_bias: Some(3),
            current_bias: Some(4),
            names: vec!["v1", "v2", "z", "ve", "ie"],
        },
    )
}
