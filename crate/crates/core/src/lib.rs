//! Two-RC-pair equivalent circuit battery model, its nonlinear and
//! linearized observability analysis, sensor-bias augmented variants and
//! EKF/EKF2/UKF state-of-charge estimation on synthetic drive cycles.
//!
//! ```
//! use bmsobs_core::{kokam_ocv, kokam_params, rank_test, assemble_codistribution, rest_state};
//! use bmsobs_core::{RankOptions, Variant};
//!
//! let m = Variant::VoltageBias.build(&kokam_params(), &kokam_ocv()).unwrap();
//! let c = assemble_codistribution(&m, &rest_state(&m, 0.5), 6).unwrap();
//! let report = rank_test(&c, m.state_dim(), &RankOptions::default()).unwrap();
//! assert_eq!(report.numeric_rank, 4);
//! ```

pub mod augmented;
pub mod ecm;
pub mod error;
pub mod filters;
pub mod harness;
pub mod model;
pub mod observability;
pub mod ocv;
pub mod params;

pub use augmented::{build_current_bias_model, build_dual_bias_model, build_voltage_bias_model};
pub use ecm::{EcmState, Trajectory};
pub use error::{Error, Result};
pub use filters::{Filter, FilterConfig, FilterKind, FilterState};
pub use harness::{DriveCycle, Scenario, ScenarioResult};
pub use model::{build_original_model, ModelSpec, Variant, SOC_INDEX};
pub use observability::{
    assemble_codistribution, condition_sweep, rank_test, rest_state, Codistribution, RankOptions,
    RankReport, Verdict,
};
pub use ocv::OcvPolynomial;
pub use params::{kokam_ocv, kokam_params, CellModel, EcmParams};
