use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of one synthetic driving cycle (s).
pub const CYCLE_PERIOD: usize = 1000;
/// Mean discharge rate of the synthetic urban cycles, in C. At this rate
/// one period removes about 15 % of the capacity.
pub const URBAN_MEAN_C_RATE: f64 = 0.54;
/// Default peak current, in C.
pub const DEFAULT_C_RATE_CAP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleKind {
    UdcLike,
    FudsLike,
    Constant,
    Rest,
}

impl CycleKind {
    pub const ALL: [CycleKind; 4] = [
        CycleKind::UdcLike,
        CycleKind::FudsLike,
        CycleKind::Constant,
        CycleKind::Rest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CycleKind::UdcLike => "udc-like",
            CycleKind::FudsLike => "fuds-like",
            CycleKind::Constant => "constant",
            CycleKind::Rest => "rest",
        }
    }
}

impl fmt::Display for CycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CycleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CycleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown cycle kind {s:?}")))
    }
}

/// Current profile sampled every second. Sample `k` is held over
/// `[k, k + 1)` s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    pub label: String,
    pub seed: u64,
    /// A, positive discharges.
    pub currents: Vec<f64>,
}

impl DriveCycle {
    pub const DT: f64 = 1.0;

    pub fn from_currents(label: impl Into<String>, currents: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            seed: 0,
            currents,
        }
    }

    pub fn len(&self) -> usize {
        self.currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.currents.is_empty()
    }

    /// Duration (s).
    pub fn duration(&self) -> f64 {
        self.currents.len() as f64 * Self::DT
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.currents
            .iter()
            .enumerate()
            .map(|(k, &i)| (k as f64 * Self::DT, i))
    }

    pub fn mean_current(&self) -> f64 {
        self.currents.iter().sum::<f64>() / self.currents.len().max(1) as f64
    }

    pub fn peak_current(&self) -> f64 {
        self.currents.iter().fold(0.0f64, |m, i| m.max(i.abs()))
    }
}

struct Shape {
    min_segment: usize,
    max_segment: usize,
    rest_probability: f64,
    charge_probability: f64,
    /// Drawn levels in C before rescaling.
    discharge_range: (f64, f64),
    charge_range: (f64, f64),
}

const UDC_SHAPE: Shape = Shape {
    min_segment: 10,
    max_segment: 30,
    rest_probability: 0.25,
    charge_probability: 0.15,
    discharge_range: (0.2, 2.0),
    charge_range: (0.1, 0.6),
};

const FUDS_SHAPE: Shape = Shape {
    min_segment: 5,
    max_segment: 15,
    rest_probability: 0.2,
    charge_probability: 0.25,
    discharge_range: (0.2, 2.5),
    charge_range: (0.1, 1.0),
};

/// One period of piecewise-constant levels (in C). The first segment always
/// discharges so a cycle started at full charge does not overcharge.
fn base_period(shape: &Shape, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut levels = Vec::with_capacity(CYCLE_PERIOD);
    let mut first = true;
    let mut previous = 0.0;
    while levels.len() < CYCLE_PERIOD {
        let len = rng.random_range(shape.min_segment..=shape.max_segment);
        let draw: f64 = rng.random();
        let level = if first {
            rng.random_range(1.0..=shape.discharge_range.1)
        } else if draw < shape.rest_probability && previous != 0.0 {
            0.0
        } else if draw < shape.rest_probability + shape.charge_probability {
            -rng.random_range(shape.charge_range.0..=shape.charge_range.1)
        } else {
            rng.random_range(shape.discharge_range.0..=shape.discharge_range.1)
        };
        first = false;
        previous = level;
        levels.extend(std::iter::repeat_n(level, len));
    }
    levels.truncate(CYCLE_PERIOD);
    levels
}

/// Rescales the discharge segments so the period mean hits `target` while
/// no level exceeds `cap` (all in C). Clipping moves the mean, so this
/// alternates scaling and clipping; if the cap makes the target unreachable
/// the mean ends up below it.
fn fit_mean(levels: &mut [f64], target: f64, cap: f64) {
    for _ in 0..20 {
        let n = levels.len() as f64;
        let pos: f64 = levels.iter().filter(|l| **l > 0.0 && **l < cap).sum::<f64>() / n;
        let fixed: f64 = levels.iter().filter(|l| **l <= 0.0 || **l >= cap).sum::<f64>() / n;
        if pos <= 0.0 {
            break;
        }
        let scale = (target - fixed) / pos;
        if (scale - 1.0).abs() < 1e-12 {
            break;
        }
        for l in levels.iter_mut() {
            if *l > 0.0 && *l < cap {
                *l = (*l * scale).min(cap);
            }
        }
    }
    for l in levels.iter_mut() {
        *l = l.clamp(-cap, cap);
    }
}

/// Synthetic current profile of `duration` seconds.
///
/// `udc-like` and `fuds-like` repeat a seeded 1000 s pattern of held levels
/// (5 to 30 s segments with rests and short charging pulses) whose mean is
/// [`URBAN_MEAN_C_RATE`]. `constant` holds `c_rate_cap` throughout; `rest`
/// is all zeros. `one_c_current` is the 1C current in A.
pub fn synthesize_cycle(
    kind: CycleKind,
    duration: f64,
    seed: u64,
    c_rate_cap: f64,
    one_c_current: f64,
) -> Result<DriveCycle> {
    if !(duration.is_finite() && duration >= DriveCycle::DT) {
        return Err(Error::InvalidArgument(format!(
            "cycle duration must be at least one sample, got {duration}"
        )));
    }
    if !(c_rate_cap.is_finite() && c_rate_cap > 0.0) {
        return Err(Error::InvalidArgument(format!("C-rate cap must be positive, got {c_rate_cap}")));
    }
    if !(one_c_current.is_finite() && one_c_current > 0.0) {
        return Err(Error::InvalidArgument(format!("1C current must be positive, got {one_c_current}")));
    }
    let n = (duration / DriveCycle::DT).round() as usize;
    let currents = match kind {
        CycleKind::Rest => vec![0.0; n],
        CycleKind::Constant => vec![c_rate_cap * one_c_current; n],
        CycleKind::UdcLike | CycleKind::FudsLike => {
            let shape = if kind == CycleKind::UdcLike { &UDC_SHAPE } else { &FUDS_SHAPE };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut period = base_period(shape, &mut rng);
            fit_mean(&mut period, URBAN_MEAN_C_RATE, c_rate_cap);
            period.iter().cycle().take(n).map(|l| l * one_c_current).collect()
        }
    };
    Ok(DriveCycle {
        label: kind.name().to_string(),
        seed,
        currents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_C: f64 = 0.74;

    #[test]
    fn constant_one_c() {
        let c = synthesize_cycle(CycleKind::Constant, 3600.0, 99, 1.0, ONE_C).unwrap();
        assert_eq!(c.len(), 3600);
        assert!(c.currents.iter().all(|&i| i == 0.74));
    }

    #[test]
    fn rest_is_zero() {
        let c = synthesize_cycle(CycleKind::Rest, 120.0, 1, 3.0, ONE_C).unwrap();
        assert!(c.currents.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn urban_cycles_shape() {
        for kind in [CycleKind::UdcLike, CycleKind::FudsLike] {
            for seed in 0..20 {
                let c = synthesize_cycle(kind, 2000.0, seed, 3.0, ONE_C).unwrap();
                assert_eq!(c.len(), 2000);
                assert!(c.peak_current() <= 3.0 * ONE_C + 1e-12);
                let mean = c.mean_current();
                assert!((mean - URBAN_MEAN_C_RATE * ONE_C).abs() < 1e-9, "{kind} {seed}: {mean}");
                assert!(c.currents[0] > 0.0);
                assert!(c.currents.iter().any(|&i| i == 0.0));
                assert!(c.currents.iter().any(|&i| i < 0.0));
                assert_eq!(c.currents[..1000], c.currents[1000..]);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = synthesize_cycle(CycleKind::UdcLike, 1500.0, 42, 3.0, ONE_C).unwrap();
        let b = synthesize_cycle(CycleKind::UdcLike, 1500.0, 42, 3.0, ONE_C).unwrap();
        let c = synthesize_cycle(CycleKind::UdcLike, 1500.0, 43, 3.0, ONE_C).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.currents, c.currents);
    }

    #[test]
    fn low_cap_is_respected() {
        let c = synthesize_cycle(CycleKind::FudsLike, 1000.0, 3, 0.5, ONE_C).unwrap();
        assert!(c.peak_current() <= 0.5 * ONE_C + 1e-12);
        assert!(c.mean_current() > 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synthesize_cycle(CycleKind::Rest, 0.0, 0, 1.0, ONE_C).is_err());
        assert!(synthesize_cycle(CycleKind::Rest, 10.0, 0, 0.0, ONE_C).is_err());
        assert!("udc".parse::<CycleKind>().is_err());
        assert_eq!("fuds-like".parse::<CycleKind>().unwrap(), CycleKind::FudsLike);
    }
}
