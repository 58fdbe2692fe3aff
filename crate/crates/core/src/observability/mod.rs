//! Local observability: Lie-derivative codistributions, numeric rank tests and
//! the linearized observability matrix.

mod lie;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Variant};
use crate::ocv::OcvPolynomial;
use crate::params::EcmParams;

pub use lie::{
    is_mixed, lie_gradient_closed_form, lie_gradient_numeric, lie_gradient_numeric_detailed,
    lie_gradient_structural, parse_word, pure_word, word_label, NumericGradient, StructuralLie,
    VectorField, DEFAULT_FD_STEP,
};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_ILL_CONDITIONED: f64 = 1e6;
/// Highest Lie-derivative order assembled by default.
pub const DEFAULT_MAX_ORDER: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct CodistributionRow {
    pub label: String,
    pub word: Vec<VectorField>,
    pub gradient: DVector<f64>,
}

/// Gradient rows of iterated Lie derivatives at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Codistribution {
    rows: Vec<CodistributionRow>,
    evaluation_point: DVector<f64>,
    notes: Vec<String>,
}

impl Codistribution {
    pub fn new(evaluation_point: DVector<f64>, rows: Vec<CodistributionRow>) -> Result<Self> {
        let n = evaluation_point.len();
        if let Some(r) = rows.iter().find(|r| r.gradient.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: r.gradient.len(),
            });
        }
        Ok(Self {
            rows,
            evaluation_point,
            notes: Vec::new(),
        })
    }

    pub fn rows(&self) -> &[CodistributionRow] {
        &self.rows
    }

    pub fn evaluation_point(&self) -> &DVector<f64> {
        &self.evaluation_point
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, label: &str) -> Option<&CodistributionRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Rows stacked into a matrix, one gradient per row.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.evaluation_point.len();
        DMatrix::from_fn(self.rows.len(), n, |i, j| self.rows[i].gradient[j])
    }

    /// Keeps the rows whose label is in `labels`, in the given order.
    pub fn select(&self, labels: &[&str]) -> Result<Self> {
        let rows = labels
            .iter()
            .map(|l| {
                self.row(l)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("no row labelled {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            evaluation_point: self.evaluation_point.clone(),
            notes: self.notes.clone(),
        })
    }
}

/// `dh`, then `dL_f^k h` and `dL_g^k h` alternating for `k = 1..=max_order`.
/// Mixed words are left out.
pub fn assemble_codistribution(
    m: &ModelSpec,
    x0: &DVector<f64>,
    max_order: usize,
) -> Result<Codistribution> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("max_order must be at least 1".into()));
    }
    if x0.len() != m.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.state_dim(),
            actual: x0.len(),
        });
    }
    let lie = StructuralLie::new(m)?;
    let mut words = vec![Vec::new()];
    for k in 1..=max_order {
        words.push(pure_word(VectorField::Drift, k));
        words.push(pure_word(VectorField::Input, k));
    }
    let rows = words
        .into_iter()
        .map(|word| CodistributionRow {
            label: word_label(&word),
            gradient: lie.gradient_of_word(&word, x0),
            word,
        })
        .collect();
    let mut c = Codistribution::new(x0.clone(), rows)?;
    c.notes.push("mixed f/g words omitted".to_string());
    let a = m.drift_matrix();
    if (a[(0, 0)] - a[(1, 1)]).abs() <= 1e-12 * a[(0, 0)].abs().max(a[(1, 1)].abs()) {
        c.notes.push("RC time constants coincide".to_string());
    }
    let z = x0[m.soc_index()];
    if !m.ocv().in_validity_range(z) {
        let (lo, hi) = m.ocv().validity();
        c.notes.push(format!("SOC {z} outside OCV validity range [{lo}, {hi}]"));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Observable,
    /// Full rank, but the normalized rows have a condition number above the
    /// configured threshold.
    IllConditioned,
    /// Fewer than `n` independent rows. The rank test is only sufficient, so
    /// this is not a proof of unobservability.
    RankDeficient,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Observable => "observable",
            Verdict::IllConditioned => "ill-conditioned",
            Verdict::RankDeficient => "rank-deficient",
        }
    }

    pub fn is_full_rank(self) -> bool {
        self != Verdict::RankDeficient
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Verdict::Observable, Verdict::IllConditioned, Verdict::RankDeficient]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown verdict {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOptions {
    /// Singular values below `rel_tol * sigma_max` do not count.
    pub rel_tol: f64,
    pub ill_conditioned_threshold: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_RANK_TOL,
            ill_conditioned_threshold: DEFAULT_ILL_CONDITIONED,
        }
    }
}

impl RankOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rank tolerance must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if !(self.ill_conditioned_threshold > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ill-conditioning threshold must exceed 1, got {}",
                self.ill_conditioned_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub numeric_rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `sigma_max / sigma_n`; infinite when fewer than `n` rows survive or
    /// `sigma_n` is zero.
    pub condition_number: f64,
    pub verdict: Verdict,
    pub normalization: String,
    pub dropped_rows: Vec<String>,
    pub explanation: Option<String>,
}

/// Rank of `rows` after scaling each nonzero row to unit Euclidean norm.
fn rank_of_rows(
    rows: &DMatrix<f64>,
    labels: &[String],
    n: usize,
    opts: &RankOptions,
) -> Result<RankReport> {
    opts.validate()?;
    if rows.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: rows.ncols(),
        });
    }
    let mut kept = Vec::new();
    let mut dropped_rows = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let r = rows.row(i);
        let norm = r.norm();
        if norm > 0.0 && norm.is_finite() {
            kept.push(r / norm);
        } else {
            dropped_rows.push(label.clone());
        }
    }
    let normalization = "unit Euclidean norm per row; zero rows dropped".to_string();
    if kept.is_empty() {
        return Ok(RankReport {
            numeric_rank: 0,
            singular_values: Vec::new(),
            condition_number: f64::INFINITY,
            verdict: Verdict::RankDeficient,
            normalization,
            dropped_rows,
            explanation: Some("all rows are zero".into()),
        });
    }
    let normalized = DMatrix::from_rows(&kept);
    let mut singular_values: Vec<f64> = normalized.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = singular_values[0];
    let numeric_rank = singular_values
        .iter()
        .filter(|s| **s >= opts.rel_tol * sigma_max)
        .count();
    let condition_number = match singular_values.get(n - 1) {
        Some(&s) if s > 0.0 => sigma_max / s,
        _ => f64::INFINITY,
    };
    let (verdict, explanation) = if kept.len() < n {
        (
            Verdict::RankDeficient,
            Some(format!("only {} nonzero rows for {} states", kept.len(), n)),
        )
    } else if numeric_rank < n {
        (
            Verdict::RankDeficient,
            Some(format!("numeric rank {numeric_rank} < {n}")),
        )
    } else if condition_number > opts.ill_conditioned_threshold {
        (
            Verdict::IllConditioned,
            Some(format!(
                "condition number {condition_number:.3e} exceeds {:.1e}",
                opts.ill_conditioned_threshold
            )),
        )
    } else {
        (Verdict::Observable, None)
    };
    Ok(RankReport {
        numeric_rank,
        singular_values,
        condition_number,
        verdict,
        normalization,
        dropped_rows,
        explanation,
    })
}

/// Numeric rank test of a codistribution for an `n`-state system.
pub fn rank_test(c: &Codistribution, n: usize, opts: &RankOptions) -> Result<RankReport> {
    let labels: Vec<String> = c.rows.iter().map(|r| r.label.clone()).collect();
    rank_of_rows(&c.matrix(), &labels, n, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedObservability {
    /// `[C; C A; ...; C A^(n-1)]`
    pub matrix: DMatrix<f64>,
    pub report: RankReport,
}

/// Kalman observability matrix of the model linearized at `x0`.
pub fn linearized_observability(
    m: &ModelSpec,
    x0: &DVector<f64>,
    opts: &RankOptions,
) -> Result<LinearizedObservability> {
    let n = m.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x0.len(),
        });
    }
    let a = m.drift_jacobian(x0);
    let mut row = m.output_gradient(x0).transpose();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        matrix.set_row(i, &row);
        row = &row * &a;
    }
    let labels: Vec<String> = (0..n).map(|i| format!("C A^{i}")).collect();
    let report = rank_of_rows(&matrix, &labels, n, opts)?;
    Ok(LinearizedObservability { matrix, report })
}

/// Evaluation point used by the sweep: relaxed cell, zero biases.
pub fn rest_state(m: &ModelSpec, z: f64) -> DVector<f64> {
    let mut x = DVector::zeros(m.state_dim());
    x[m.soc_index()] = z;
    x
}

/// `start, start + step, ...` up to `stop` inclusive (within 1e-9 of a step).
/// Values are rounded to 12 decimals so that 0.1 + 18 * 0.05 is exactly 1.
pub fn soc_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
        return Err(Error::InvalidArgument(format!(
            "bad grid {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub z: f64,
    pub nonlinear: RankReport,
    pub linearized: RankReport,
}

/// Rank and conditioning of `variant` at every SOC in `z_grid`, in grid order.
pub fn condition_sweep(
    variant: Variant,
    p: &EcmParams,
    ocv: &OcvPolynomial,
    z_grid: &[f64],
    max_order: usize,
    opts: &RankOptions,
) -> Result<Vec<SweepPoint>> {
    if let Some(z) = z_grid.iter().find(|z| !(0.0..=1.0).contains(*z)) {
        return Err(Error::InvalidArgument(format!("grid point {z} outside [0, 1]")));
    }
    let m = variant.build(p, ocv)?;
    z_grid
        .par_iter()
        .map(|&z| {
            let x0 = rest_state(&m, z);
            let c = assemble_codistribution(&m, &x0, max_order)?;
            Ok(SweepPoint {
                z,
                nonlinear: rank_test(&c, m.state_dim(), opts)?,
                linearized: linearized_observability(&m, &x0, opts)?.report,
            })
        })
        .collect()
}

/// One CSV line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub z: f64,
    pub nonlinear_rank: usize,
    pub cond_number: f64,
    pub linearized_rank: usize,
    pub verdict: Verdict,
}

impl From<&SweepPoint> for SweepRecord {
    fn from(p: &SweepPoint) -> Self {
        Self {
            z: p.z,
            nonlinear_rank: p.nonlinear.numeric_rank,
            cond_number: p.nonlinear.condition_number,
            linearized_rank: p.linearized.numeric_rank,
            verdict: p.nonlinear.verdict,
        }
    }
}

pub fn write_sweep_csv<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(SweepRecord::from(p))?;
    }
    out.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}
