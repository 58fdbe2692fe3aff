//! TOML run configuration. Every key is optional; missing keys fall back to
//! the built-in scenario named by `scenario.preset` (default
//! `paper-fig5-ukf`). Units: V, A, s, F, ohm, A s.
//!
//! ```toml
//! [scenario]
//! preset = "paper-fig5-ukf"
//! seed = 7
//! variant = "voltage-bias"
//! voltage_bias = 0.1            # V
//! initial_soc_guess = 0.95
//!
//! [scenario.filter]
//! kind = "ukf"
//! kappa = 4.0
//! p0_diagonal = [0.01, 0.0016, 0.01, 0.0625]
//!
//! [output]
//! trace = "trace.csv"
//! ```

use std::path::{Path, PathBuf};

use bmsobs_core::filters::{FilterConfig, FilterKind};
use bmsobs_core::harness::{preset, synthesize_cycle, CycleKind, InitialGuess, Scenario};
use bmsobs_core::model::Variant;
use bmsobs_core::params::{CellModel, EcmParams};
use bmsobs_core::{EcmState, OcvPolynomial};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_PRESET: &str = "paper-fig5-ukf";
pub const DEFAULT_CYCLE_DURATION: f64 = 2000.0;

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub observability: ObservabilitySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub preset: Option<String>,
    pub name: Option<String>,
    /// Drives the cycle and the noise unless they set their own seeds.
    pub seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub variant: Option<Variant>,
    /// Built-in parameter set name.
    pub cell: Option<String>,
    pub voltage_bias: Option<f64>,
    pub current_bias: Option<f64>,
    pub voltage_noise_sigma: Option<f64>,
    pub current_noise_sigma: Option<f64>,
    /// True SOC at t = 0, RC pairs relaxed.
    pub true_initial_soc: Option<f64>,
    pub initial_soc_guess: Option<f64>,
    pub initial_state_guess: Option<Vec<f64>>,
    pub start_from_truth: Option<bool>,
    /// `[start, end]` in s; the end is exclusive.
    pub eval_window: Option<[f64; 2]>,
    pub cycle: Option<CycleSection>,
    pub params: Option<ParamsSection>,
    pub ocv: Option<OcvSection>,
    pub filter: Option<FilterSection>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSection {
    pub kind: Option<CycleKind>,
    pub duration: Option<f64>,
    /// Peak current in C.
    pub c_rate_cap: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub rs: Option<f64>,
    pub capacity_q: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcvSection {
    /// Ascending powers of SOC.
    pub coefficients: Vec<f64>,
    pub validity: Option<[f64; 2]>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub kind: Option<FilterKind>,
    pub kappa: Option<f64>,
    /// V^2.
    pub r: Option<f64>,
    pub dt: Option<f64>,
    pub p0_diagonal: Option<Vec<f64>>,
    pub q0_diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilitySection {
    pub variant: Option<Variant>,
    /// `start:stop:step`.
    pub grid: Option<String>,
    pub max_order: Option<usize>,
    pub rank_tol: Option<f64>,
    pub ill_conditioned_threshold: Option<f64>,
    pub tau_equal: Option<bool>,
    pub expect_observable: Option<bool>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads and parses `path`; a missing file is [`CliError::MissingInput`].
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::MissingInput(format!("{}: {e}", path.display()))
            } else {
                CliError::Runtime(format!("{}: {e}", path.display()))
            }
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// Overrides taken from command-line flags.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub filter: Option<FilterKind>,
}

impl ScenarioSection {
    /// Applies `cell`, `params` and `ocv` on top of the given base model.
    pub fn cell_model(
        &self,
        base_params: EcmParams,
        base_ocv: OcvPolynomial,
    ) -> Result<(EcmParams, OcvPolynomial), CliError> {
        let (mut params, mut ocv) = (base_params, base_ocv);
        if let Some(cell) = &self.cell {
            let c = CellModel::builtin(cell)
                .ok_or_else(|| field_error("scenario.cell", format!("unknown cell {cell:?}")))?;
            params = c.params;
            ocv = c.ocv;
        }
        if let Some(p) = &self.params {
            for (slot, v) in [
                (&mut params.r1, p.r1),
                (&mut params.r2, p.r2),
                (&mut params.c1, p.c1),
                (&mut params.c2, p.c2),
                (&mut params.rs, p.rs),
                (&mut params.capacity_q, p.capacity_q),
            ] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            params.validate().map_err(|e| field_error("scenario.params", e))?;
        }
        if let Some(o) = &self.ocv {
            let mut poly = OcvPolynomial::new(o.coefficients.clone())
                .map_err(|e| field_error("scenario.ocv.coefficients", e))?;
            if let Some([lo, hi]) = o.validity {
                poly = poly
                    .with_validity(lo, hi)
                    .map_err(|e| field_error("scenario.ocv.validity", e))?;
            }
            ocv = poly;
        }
        Ok((params, ocv))
    }

    /// Resolves the section into a validated scenario. `default_seed`
    /// applies when neither the flags nor the file set one.
    pub fn build(&self, ov: &Overrides, default_seed: u64) -> Result<Scenario, CliError> {
        let seed = ov.seed.or(self.seed).unwrap_or(default_seed);
        let preset_name = self.preset.as_deref().unwrap_or(DEFAULT_PRESET);
        let mut sc = preset(preset_name, seed).map_err(|e| field_error("scenario.preset", e))?;
        sc.name = self.name.clone().unwrap_or_else(|| preset_name.to_string());

        let (params, ocv) = self.cell_model(sc.params, sc.ocv.clone())?;
        sc.params = params;
        sc.ocv = ocv;

        let cyc = self.cycle.clone().unwrap_or_default();
        sc.cycle = synthesize_cycle(
            cyc.kind.unwrap_or(CycleKind::UdcLike),
            cyc.duration.unwrap_or(DEFAULT_CYCLE_DURATION),
            cyc.seed.unwrap_or(seed),
            cyc.c_rate_cap.unwrap_or(bmsobs_core::harness::DEFAULT_C_RATE_CAP),
            sc.params.one_c_current(),
        )
        .map_err(|e| field_error("scenario.cycle", e))?;

        if let Some(v) = self.voltage_bias {
            sc.voltage_bias = v;
        }
        if let Some(v) = self.current_bias {
            sc.current_bias = v;
        }
        if let Some(v) = self.voltage_noise_sigma {
            sc.voltage_noise_sigma = v;
        }
        if let Some(v) = self.current_noise_sigma {
            sc.current_noise_sigma = v;
        }
        sc.noise_seed = self.noise_seed.unwrap_or(seed);
        if let Some(z) = self.true_initial_soc {
            sc.true_initial = EcmState::at_rest(z);
        }

        let guesses = [
            self.initial_soc_guess.is_some(),
            self.initial_state_guess.is_some(),
            self.start_from_truth == Some(true),
        ];
        if guesses.iter().filter(|g| **g).count() > 1 {
            return Err(field_error(
                "scenario.initial_soc_guess",
                "set at most one of initial_soc_guess, initial_state_guess, start_from_truth",
            ));
        }
        if let Some(z) = self.initial_soc_guess {
            sc.estimator_initial = InitialGuess::Soc(z);
        }
        if let Some(x) = &self.initial_state_guess {
            sc.estimator_initial = InitialGuess::State(x.clone());
        }
        if self.start_from_truth == Some(true) {
            sc.estimator_initial = InitialGuess::Truth;
        }

        let variant_changed = ov.variant.or(self.variant).is_some_and(|v| v != sc.variant);
        sc.variant = ov.variant.or(self.variant).unwrap_or(sc.variant);
        let f = self.filter.clone().unwrap_or_default();
        sc.filter = ov.filter.or(f.kind).unwrap_or(sc.filter);
        if variant_changed || self.filter.is_some() {
            sc.config = filter_config(&f, sc.variant.state_dim())?;
        }
        if let Some([a, b]) = self.eval_window {
            sc.eval_window = (a, b);
        }
        sc.validate().map_err(|e| field_error("scenario", e))?;
        Ok(sc)
    }
}

fn filter_config(f: &FilterSection, n: usize) -> Result<FilterConfig, CliError> {
    let mut c = FilterConfig::default_tuning(n).map_err(|e| field_error("scenario.variant", e))?;
    let diag = |field: &str, d: &[f64]| {
        if d.len() != n {
            return Err(field_error(field, format!("expected {n} entries, got {}", d.len())));
        }
        Ok(DMatrix::from_diagonal(&DVector::from_row_slice(d)))
    };
    if let Some(d) = &f.p0_diagonal {
        c.p0 = diag("scenario.filter.p0_diagonal", d)?;
    }
    if let Some(d) = &f.q0_diagonal {
        c.q0 = diag("scenario.filter.q0_diagonal", d)?;
    }
    if let Some(v) = f.kappa {
        c.kappa = v;
    }
    if let Some(v) = f.r {
        c.r = v;
    }
    if let Some(v) = f.dt {
        c.dt = v;
    }
    c.validate().map_err(|e| field_error("scenario.filter", e))?;
    Ok(c)
}
