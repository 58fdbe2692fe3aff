//! Circuit parameters and the built-in cell parameter set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocv::OcvPolynomial;

/// Ampere-seconds per milliampere-hour.
pub const AS_PER_MAH: f64 = 3.6;

/// Constants of the two-RC-pair equivalent circuit.
///
/// Resistances in ohm, capacitances in farad, capacity in ampere-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmParams {
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    pub c2: f64,
    pub rs: f64,
    pub capacity_q: f64,
}

impl EcmParams {
    pub fn new(r1: f64, r2: f64, c1: f64, c2: f64, rs: f64, capacity_q: f64) -> Result<Self> {
        let p = Self {
            r1,
            r2,
            c1,
            c2,
            rs,
            capacity_q,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("r1", self.r1),
            ("r2", self.r2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("rs", self.rs),
            ("capacity_q", self.capacity_q),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        Ok(())
    }

    pub fn tau1(&self) -> f64 {
        self.r1 * self.c1
    }

    pub fn tau2(&self) -> f64 {
        self.r2 * self.c2
    }

    /// Two RC pairs with (numerically) equal time constants collapse into one,
    /// which makes the relaxation voltages individually unobservable.
    pub fn time_constants_coincide(&self, rel_tol: f64) -> bool {
        let (t1, t2) = (self.tau1(), self.tau2());
        (t1 - t2).abs() <= rel_tol * t1.max(t2)
    }

    /// Current that empties the cell in one hour (A).
    pub fn one_c_current(&self) -> f64 {
        self.capacity_q / 3600.0
    }

    /// Copy with `c2` adjusted so that `tau2 == tau1`.
    pub fn with_equal_time_constants(&self) -> Self {
        Self {
            c2: self.tau1() / self.r2,
            ..*self
        }
    }
}

/// Name of the built-in parameter set.
pub const KOKAM_SLPB533459: &str = "kokam-slpb533459";

/// OCV coefficients as printed for the 740 mAh NMC pouch cell, rounded to
/// three significant figures.
///
/// These are kept for reference only. At this precision the degree-12
/// monomial sum does not describe a physical curve (it evaluates to
/// ~323 V at 85 % SOC); see [`KOKAM_OCV_COEFFICIENTS`].
pub const PRINTED_OCV_COEFFICIENTS: [f64; 13] = [
    2.83, 2.41e1, -4.19e2, 4.28e3, -2.73e4, 1.16e5, -3.38e5, 6.88e5, -9.70e5, 9.27e5, -5.71e5,
    2.05e5, -3.24e4,
];

/// Full-precision OCV coefficients for the built-in cell.
///
/// Every entry rounds to the corresponding [`PRINTED_OCV_COEFFICIENTS`]
/// value at three significant figures. Within those rounding intervals the
/// coefficients are the smoothest (minimum integrated squared curvature on
/// SOC 0.10..1.00) that pass through 4.025 V at 85 % SOC and 4.123 V at
/// 95 % SOC with a non-negative slope. Outside roughly [0, 1.05] the curve
/// diverges quickly, as any curve consistent with the printed table must.
pub const KOKAM_OCV_COEFFICIENTS: [f64; 13] = [
    2.825_010_000_517_294_5e0,
    2.405_010_000_100_000_4e1,
    -4.194_989_999_955_343_5e2,
    4.275_010_000_038_526_4e3,
    -2.727_829_053_533_730_6e4,
    1.158_695_951_804_208_5e5,
    -3.384_989_999_951_095_7e5,
    6.883_363_757_350_629_9e5,
    -9.700_007_506_568_353_9e5,
    9.265_010_002_794_330_9e5,
    -5.711_212_320_195_852_1e5,
    2.046_641_940_731_031_9e5,
    -3.235_010_232_831_015_3e4,
];

/// Identified circuit constants of the built-in cell (740 mAh capacity).
pub fn kokam_params() -> EcmParams {
    EcmParams {
        r1: 2.85e-2,
        r2: 4.44e-2,
        c1: 4.78e2,
        c2: 1.83e4,
        rs: 5.55e-2,
        capacity_q: 740.0 * AS_PER_MAH,
    }
}

pub fn kokam_ocv() -> OcvPolynomial {
    OcvPolynomial::new(KOKAM_OCV_COEFFICIENTS.to_vec()).expect("built-in coefficients are valid")
}

/// A named parameter set: circuit constants plus OCV curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CellModel {
    pub name: String,
    pub params: EcmParams,
    pub ocv: OcvPolynomial,
}

impl CellModel {
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            KOKAM_SLPB533459 => Some(Self {
                name: name.to_string(),
                params: kokam_params(),
                ocv: kokam_ocv(),
            }),
            _ => None,
        }
    }
}
