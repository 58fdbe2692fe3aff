use std::ops::Range;

use crate::error::{Error, Result};

fn check_window(a: &[f64], b: &[f64], window: &Range<usize>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if window.end > a.len() {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} exceeds series of length {}",
            a.len()
        )));
    }
    Ok(())
}

/// Root-mean-square difference of two aligned series over the sample
/// indices in `window`.
pub fn rmse(a: &[f64], b: &[f64], window: Range<usize>) -> Result<f64> {
    check_window(a, b, &window)?;
    let sum: f64 = a[window.clone()]
        .iter()
        .zip(&b[window.clone()])
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / window.len() as f64).sqrt())
}

/// Largest absolute difference over `window`.
pub fn max_abs_error(a: &[f64], b: &[f64], window: Range<usize>) -> Result<f64> {
    check_window(a, b, &window)?;
    Ok(a[window.clone()]
        .iter()
        .zip(&b[window])
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
}
