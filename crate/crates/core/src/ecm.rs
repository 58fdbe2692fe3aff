//! Truth-path simulation of the physical cell.

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocv::OcvPolynomial;
use crate::params::EcmParams;

/// Physical state: RC-pair voltages (V) and normalised SOC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmState {
    pub v1: f64,
    pub v2: f64,
    pub z: f64,
}

impl EcmState {
    pub fn new(v1: f64, v2: f64, z: f64) -> Self {
        Self { v1, v2, z }
    }

    pub fn at_rest(z: f64) -> Self {
        Self::new(0.0, 0.0, z)
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.v1, self.v2, self.z])
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2])
    }
}

/// One exact zero-order-hold step. Positive current discharges.
pub fn discretize_step(p: &EcmParams, x: EcmState, current: f64, dt: f64) -> EcmState {
    let e1 = (-dt / p.tau1()).exp();
    let e2 = (-dt / p.tau2()).exp();
    EcmState {
        v1: e1 * x.v1 + p.r1 * (1.0 - e1) * current,
        v2: e2 * x.v2 + p.r2 * (1.0 - e2) * current,
        z: x.z - dt * current / p.capacity_q,
    }
}

/// Terminal voltage `V_OC(z) - v1 - v2 - I rs`.
pub fn terminal_voltage(p: &EcmParams, ocv: &OcvPolynomial, x: EcmState, current: f64) -> f64 {
    ocv.value(x.z) - x.v1 - x.v2 - current * p.rs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub t: f64,
    pub state: EcmState,
    pub current: f64,
    pub terminal_voltage: f64,
    /// SOC was clamped into [0, 1] on the way into this sample.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<SimSample>,
}

impl Trajectory {
    pub fn saturation_events(&self) -> usize {
        self.samples.iter().filter(|s| s.saturated).count()
    }

    pub fn soc(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.z).collect()
    }

    pub fn terminal_voltages(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.terminal_voltage).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Simulates the cell from `x0` under currents sampled every `dt` and held
/// in between. Sample `k` is at `t = k dt` and carries the state before
/// current `currents[k]` is applied, plus the terminal voltage under that
/// current. SOC leaving [0, 1] is clamped and flagged.
pub fn simulate(
    p: &EcmParams,
    ocv: &OcvPolynomial,
    x0: EcmState,
    currents: &[f64],
    dt: f64,
) -> Result<Trajectory> {
    p.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut samples = Vec::with_capacity(currents.len());
    let mut x = x0;
    let mut saturated = false;
    for (k, &i) in currents.iter().enumerate() {
        samples.push(SimSample {
            t: k as f64 * dt,
            state: x,
            current: i,
            terminal_voltage: terminal_voltage(p, ocv, x, i),
            saturated,
        });
        x = discretize_step(p, x, i, dt);
        saturated = !(0.0..=1.0).contains(&x.z);
        if saturated {
            warn!("truth SOC {} left [0, 1] at t = {}; clamped", x.z, (k + 1) as f64 * dt);
            x.z = x.z.clamp(0.0, 1.0);
        }
    }
    Ok(Trajectory { dt, samples })
}
