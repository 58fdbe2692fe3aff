//! Lie derivatives of the output along the drift and input fields.
//!
//! A word `[w_1, ..., w_s]` denotes `L_{w_s} ... L_{w_1} h`: `w_1` is applied
//! first. Three routes produce gradient rows:
//!
//! * [`lie_gradient_closed_form`]: the textbook rows for the original and
//!   voltage-bias models, the structural recursion for the others.
//! * [`lie_gradient_structural`]: exact recursion on the shape shared by all
//!   variants (linear drift, constant input, polynomial OCV on one coordinate).
//! * [`lie_gradient_numeric`]: nested finite differences, used as an oracle.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Variant};
use crate::ocv::OcvPolynomial;
use crate::params::EcmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VectorField {
    /// `f(x) = A x`
    Drift,
    /// `g`, the input vector
    Input,
}

impl VectorField {
    pub fn symbol(self) -> char {
        match self {
            VectorField::Drift => 'f',
            VectorField::Input => 'g',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'f' => Some(VectorField::Drift),
            'g' => Some(VectorField::Input),
            _ => None,
        }
    }

    /// Value of the field at `x`.
    pub fn eval(self, m: &ModelSpec, x: &DVector<f64>) -> DVector<f64> {
        match self {
            VectorField::Drift => m.drift(x),
            VectorField::Input => m.input_vector().clone(),
        }
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Parses a word such as `"ffg"` (applied left to right).
pub fn parse_word(s: &str) -> Result<Vec<VectorField>> {
    s.chars()
        .map(|c| {
            VectorField::from_symbol(c)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown vector field '{c}' in word {s:?}")))
        })
        .collect()
}

pub fn pure_word(field: VectorField, k: usize) -> Vec<VectorField> {
    vec![field; k]
}

pub fn is_mixed(word: &[VectorField]) -> bool {
    word.windows(2).any(|w| w[0] != w[1])
}

/// Row label: `dh`, `dL_f^2 h`, `dL_g^1 h`, or for mixed words the operators
/// outermost first, e.g. `dL_g L_f h` for `[f, g]`.
pub fn word_label(word: &[VectorField]) -> String {
    if word.is_empty() {
        return "dh".to_string();
    }
    if !is_mixed(word) {
        return format!("dL_{}^{} h", word[0], word.len());
    }
    let ops: Vec<String> = word.iter().rev().map(|w| format!("L_{w}")).collect();
    format!("d{} h", ops.join(" "))
}

/// `linear . x + sum co * l(x)^p * V^(j)(z)` with `l(x) = a . x` the SOC rate
/// of the drift. Additive constants are dropped because they have no gradient.
#[derive(Debug, Clone, PartialEq)]
struct LieExpression {
    linear: DVector<f64>,
    terms: BTreeMap<(usize, usize), f64>,
}

/// Exact Lie recursion for models whose SOC drift rate `l(x) = a . x` is
/// itself invariant under the drift (`a^T A = 0`).
pub struct StructuralLie<'a> {
    model: &'a ModelSpec,
    soc_rate: DVector<f64>,
}

impl<'a> StructuralLie<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        let a = model.drift_matrix();
        let soc_rate = a.row(model.soc_index()).transpose();
        let residual = a.transpose() * &soc_rate;
        let scale = soc_rate.amax() * a.amax();
        if residual.amax() > 1e-14 * scale {
            return Err(Error::UnsupportedStructure(format!(
                "SOC rate of the drift is not invariant under the drift (residual {:e})",
                residual.amax()
            )));
        }
        Ok(Self { model, soc_rate })
    }

    fn output(&self) -> LieExpression {
        LieExpression {
            linear: self.model.output_linear().clone(),
            terms: BTreeMap::from([((0, 0), 1.0)]),
        }
    }

    fn apply(&self, e: &LieExpression, field: VectorField) -> LieExpression {
        let degree = self.model.ocv().degree();
        let s = self.model.soc_index();
        let mut terms = BTreeMap::new();
        let mut push = |key: (usize, usize), co: f64| {
            if co != 0.0 && key.0 <= degree {
                *terms.entry(key).or_insert(0.0) += co;
            }
        };
        match field {
            VectorField::Drift => {
                let linear = self.model.drift_matrix().transpose() * &e.linear;
                for (&(j, p), &co) in &e.terms {
                    push((j + 1, p + 1), co);
                }
                LieExpression { linear, terms }
            }
            VectorField::Input => {
                let g = self.model.input_vector();
                let rate_along_g = self.soc_rate.dot(g);
                for (&(j, p), &co) in &e.terms {
                    push((j + 1, p), co * g[s]);
                    if p > 0 {
                        push((j, p - 1), co * p as f64 * rate_along_g);
                    }
                }
                LieExpression {
                    linear: DVector::zeros(e.linear.len()),
                    terms,
                }
            }
        }
    }

    fn gradient(&self, e: &LieExpression, x: &DVector<f64>) -> DVector<f64> {
        let ocv = self.model.ocv();
        let s = self.model.soc_index();
        let z = x[s];
        let rate = self.soc_rate.dot(x);
        let mut grad = e.linear.clone();
        for (&(j, p), &co) in &e.terms {
            grad[s] += co * rate.powi(p as i32) * ocv.eval(z, j + 1);
            if p > 0 {
                let w = co * p as f64 * rate.powi(p as i32 - 1) * ocv.eval(z, j);
                grad.axpy(w, &self.soc_rate, 1.0);
            }
        }
        grad
    }

    pub fn gradient_of_word(&self, word: &[VectorField], x: &DVector<f64>) -> DVector<f64> {
        let e = word.iter().fold(self.output(), |e, &w| self.apply(&e, w));
        self.gradient(&e, x)
    }
}

/// Gradient of `L_word h` at `x0` via the exact structural recursion.
pub fn lie_gradient_structural(
    m: &ModelSpec,
    word: &[VectorField],
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(m, x0)?;
    Ok(StructuralLie::new(m)?.gradient_of_word(word, x0))
}

/// Gradient of `L_kind^k h`.
///
/// Original and voltage-bias models use
/// `dL_f^k h = [-1/(-tau1)^k, -1/(-tau2)^k, 0, ..]` and
/// `dL_g^k h = [0, 0, V^(k+1)(z) / (-Q)^k, ..]`. The current-bias and
/// dual-bias models have no compact form and go through the structural
/// recursion.
pub fn lie_gradient_closed_form(
    variant: Variant,
    p: &EcmParams,
    ocv: &OcvPolynomial,
    kind: VectorField,
    k: usize,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("Lie derivative order must be at least 1".into()));
    }
    p.validate()?;
    let n = variant.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x0.len(),
        });
    }
    match variant {
        Variant::Original | Variant::VoltageBias => {
            let mut row = DVector::zeros(n);
            let k = k as i32;
            match kind {
                VectorField::Drift => {
                    row[0] = -1.0 / (-p.tau1()).powi(k);
                    row[1] = -1.0 / (-p.tau2()).powi(k);
                }
                VectorField::Input => {
                    row[2] = ocv.eval(x0[2], k as usize + 1) / (-p.capacity_q).powi(k);
                }
            }
            Ok(row)
        }
        Variant::CurrentBias | Variant::DualBias => {
            let m = variant.build(p, ocv)?;
            lie_gradient_structural(&m, &pure_word(kind, k), x0)
        }
    }
}

/// Default half-width of the outer difference, in units of each coordinate's
/// characteristic length (see [`ModelSpec::coordinate_scales`]).
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Largest state dimension the numeric oracle handles.
pub const MAX_NUMERIC_DIM: usize = 8;

const RICHARDSON_LEVELS: usize = 2;
const TRUNCATION_WARN: f64 = 1e-4;

type Point = [TwoFloat; MAX_NUMERIC_DIM];

const ZERO: Point = [TwoFloat::from_f64(0.0); MAX_NUMERIC_DIM];

/// Numeric gradient together with a Richardson-based error estimate
/// (max-abs, relative to the row's max-abs entry).
#[derive(Debug, Clone, PartialEq)]
pub struct NumericGradient {
    pub row: DVector<f64>,
    pub relative_error_estimate: f64,
}

/// Central differences of `phi` at half-widths `h, h/2, ...`, Richardson
/// extrapolated. Returns the estimate and the size of the last correction.
fn richardson<F: Fn(f64) -> TwoFloat>(phi: F, h: f64) -> (TwoFloat, TwoFloat) {
    let mut table = [[TwoFloat::from(0.0); RICHARDSON_LEVELS]; RICHARDSON_LEVELS];
    for i in 0..RICHARDSON_LEVELS {
        let t = h / (1u32 << i) as f64;
        table[i][0] = (phi(t) - phi(-t)) / (2.0 * t);
        let mut factor = 1.0;
        for l in 1..=i {
            factor *= 4.0;
            table[i][l] = (table[i][l - 1] * factor - table[i - 1][l - 1]) / (factor - 1.0);
        }
    }
    let last = RICHARDSON_LEVELS - 1;
    (table[last][last], (table[last][last] - table[last][last - 1]).abs())
}

/// Nested-difference evaluator in double-double arithmetic. Differencing
/// five levels deep amplifies rounding by ~1/h^5, which plain f64 cannot
/// absorb at steps small enough to keep truncation error down.
struct NumericLie<'a> {
    ocv: &'a [f64],
    soc: usize,
    n: usize,
    drift: [[f64; MAX_NUMERIC_DIM]; MAX_NUMERIC_DIM],
    input: Point,
    output_linear: [f64; MAX_NUMERIC_DIM],
    scales: [f64; MAX_NUMERIC_DIM],
    step: f64,
}

impl<'a> NumericLie<'a> {
    fn new(model: &'a ModelSpec, step: f64) -> Self {
        let n = model.state_dim();
        let mut drift = [[0.0; MAX_NUMERIC_DIM]; MAX_NUMERIC_DIM];
        let mut input = ZERO;
        let mut output_linear = [0.0; MAX_NUMERIC_DIM];
        let mut scales = [0.0; MAX_NUMERIC_DIM];
        let scale = model.coordinate_scales();
        for i in 0..n {
            for j in 0..n {
                drift[i][j] = model.drift_matrix()[(i, j)];
            }
            input[i] = TwoFloat::from(model.input_vector()[i]);
            output_linear[i] = model.output_linear()[i];
            scales[i] = scale[i];
        }
        Self {
            ocv: model.ocv().coefficients(),
            soc: model.soc_index(),
            n,
            drift,
            input,
            output_linear,
            scales,
            step,
        }
    }

    fn output(&self, x: &Point) -> TwoFloat {
        let z = x[self.soc];
        let ocv = self
            .ocv
            .iter()
            .rev()
            .fold(TwoFloat::from(0.0), |acc, &a| acc * z + a);
        (0..self.n).fold(ocv, |acc, i| acc + x[i] * self.output_linear[i])
    }

    fn field(&self, field: VectorField, x: &Point) -> Point {
        match field {
            VectorField::Drift => {
                let mut v = ZERO;
                for (i, vi) in v.iter_mut().enumerate().take(self.n) {
                    *vi = (0..self.n).fold(TwoFloat::from(0.0), |acc, j| acc + x[j] * self.drift[i][j]);
                }
                v
            }
            VectorField::Input => self.input,
        }
    }

    /// `L_word h (x)` by nested directional differences.
    fn value(&self, word: &[VectorField], x: &Point) -> TwoFloat {
        let Some((&outer, inner)) = word.split_last() else {
            return self.output(x);
        };
        let v = self.field(outer, x);
        let reach = (0..self.n)
            .map(|i| v[i].hi().abs() / self.scales[i])
            .fold(0.0, f64::max);
        if reach == 0.0 {
            return TwoFloat::from(0.0);
        }
        let t = self.step / reach;
        let shifted = |s: f64| {
            let mut y = *x;
            for i in 0..self.n {
                y[i] += v[i] * (s * t);
            }
            self.value(inner, &y)
        };
        richardson(shifted, 1.0).0 / t
    }

    fn gradient(&self, word: &[VectorField], x: &Point) -> NumericGradient {
        let mut row = DVector::zeros(self.n);
        let mut err = DVector::zeros(self.n);
        for i in 0..self.n {
            let (d, e) = richardson(
                |s| {
                    let mut y = *x;
                    y[i] += s;
                    self.value(word, &y)
                },
                self.step * self.scales[i],
            );
            row[i] = f64::from(d);
            err[i] = f64::from(e);
        }
        let scale = row.amax();
        let relative_error_estimate = if scale > 0.0 { err.amax() / scale } else { err.amax() };
        NumericGradient {
            row,
            relative_error_estimate,
        }
    }
}

/// Finite-difference oracle for `d L_word h` at `x0` with an error estimate.
pub fn lie_gradient_numeric_detailed(
    m: &ModelSpec,
    word: &[VectorField],
    x0: &DVector<f64>,
    step: f64,
) -> Result<NumericGradient> {
    check_dim(m, x0)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if m.state_dim() > MAX_NUMERIC_DIM {
        return Err(Error::InvalidArgument(format!(
            "numeric oracle supports at most {MAX_NUMERIC_DIM} states"
        )));
    }
    let mut x = ZERO;
    for (xi, v) in x.iter_mut().zip(x0.iter()) {
        *xi = TwoFloat::from(*v);
    }
    let g = NumericLie::new(m, step).gradient(word, &x);
    if g.relative_error_estimate > TRUNCATION_WARN {
        warn!(
            "numeric {} at {:?}: estimated relative error {:.1e}",
            word_label(word),
            x0.as_slice(),
            g.relative_error_estimate
        );
    }
    Ok(g)
}

/// Finite-difference oracle for `d L_word h` at `x0`. The empty word gives
/// the output gradient.
pub fn lie_gradient_numeric(
    m: &ModelSpec,
    word: &[VectorField],
    x0: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    lie_gradient_numeric_detailed(m, word, x0, step).map(|g| g.row)
}

fn check_dim(m: &ModelSpec, x: &DVector<f64>) -> Result<()> {
    if x.len() != m.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.state_dim(),
            actual: x.len(),
        });
    }
    Ok(())
}
