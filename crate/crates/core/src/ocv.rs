//! Open-circuit voltage as a polynomial in state of charge.
//!
//! Coefficients are stored in ascending order (`a_0 + a_1 z + ... + a_d z^d`).
//! High-degree monomial fits carry coefficients in the 1e5..1e6 range whose
//! terms cancel down to a few volts, so plain Horner evaluation loses six or
//! more digits. Evaluation here uses compensated Horner (error-free
//! transformations), which returns the value as if computed in twice the
//! working precision and then rounded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SOC interval on which a fitted curve is trusted.
pub const DEFAULT_VALIDITY: (f64, f64) = (0.10, 1.00);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvPolynomial {
    coefficients: Vec<f64>,
    validity: (f64, f64),
}

impl OcvPolynomial {
    /// Builds a polynomial from ascending coefficients. At least two
    /// coefficients are required (degree >= 1); trailing zeros are allowed.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidPolynomial(format!(
                "degree must be at least 1, got {} coefficient(s)",
                coefficients.len()
            )));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidPolynomial(format!("non-finite coefficient {c}")));
        }
        Ok(Self {
            coefficients,
            validity: DEFAULT_VALIDITY,
        })
    }

    /// `a0 + a1 * z`.
    pub fn linear(a0: f64, a1: f64) -> Result<Self> {
        Self::new(vec![a0, a1])
    }

    pub fn with_validity(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "validity range [{lo}, {hi}] is empty or not finite"
            )));
        }
        self.validity = (lo, hi);
        Ok(self)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn validity(&self) -> (f64, f64) {
        self.validity
    }

    /// True when `z` lies inside the range the fit is trusted on.
    pub fn in_validity_range(&self, z: f64) -> bool {
        z >= self.validity.0 && z <= self.validity.1
    }

    /// Coefficients of the `order`-th derivative, ascending. Empty when the
    /// order exceeds the degree.
    pub fn derivative_coefficients(&self, order: usize) -> Vec<f64> {
        if order > self.degree() {
            return Vec::new();
        }
        self.coefficients
            .iter()
            .enumerate()
            .skip(order)
            .map(|(k, &a)| a * falling_factorial(k, order))
            .collect()
    }

    /// `d^order V_OC / dZ^order` evaluated at `z`.
    pub fn eval(&self, z: f64, order: usize) -> f64 {
        if order > self.degree() {
            return 0.0;
        }
        if order == 0 {
            return compensated_horner(&self.coefficients, z);
        }
        compensated_horner(&self.derivative_coefficients(order), z)
    }

    pub fn value(&self, z: f64) -> f64 {
        self.eval(z, 0)
    }
}

/// Free-function form of [`OcvPolynomial::eval`].
pub fn ocv_eval(p: &OcvPolynomial, z: f64, order: usize) -> f64 {
    p.eval(z, order)
}

/// k (k-1) ... (k-order+1)
fn falling_factorial(k: usize, order: usize) -> f64 {
    ((k + 1 - order)..=k).fold(1.0, |acc, i| acc * i as f64)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated Horner scheme over ascending coefficients.
pub(crate) fn compensated_horner(coefficients: &[f64], x: f64) -> f64 {
    let mut iter = coefficients.iter().rev();
    let Some(&lead) = iter.next() else {
        return 0.0;
    };
    let mut s = lead;
    let mut c = 0.0;
    for &a in iter {
        let (p, pi) = two_prod(s, x);
        let (next, sigma) = two_sum(p, a);
        s = next;
        c = c * x + (pi + sigma);
    }
    s + c
}
