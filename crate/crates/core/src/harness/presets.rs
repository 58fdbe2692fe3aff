use super::{synthesize_cycle, CycleKind, InitialGuess, Scenario, DEFAULT_C_RATE_CAP};
use crate::ecm::EcmState;
use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterKind};
use crate::model::Variant;
use crate::params::{kokam_ocv, kokam_params};

/// 6 mV.
pub const DEFAULT_VOLTAGE_NOISE_SIGMA: f64 = 6e-3;
/// 5 mA.
pub const DEFAULT_CURRENT_NOISE_SIGMA: f64 = 5e-3;

pub const PRESET_NAMES: [&str; 6] = [
    "paper-fig4",
    "paper-fig5-ekf1",
    "paper-fig5-ekf2",
    "paper-fig5-ukf",
    "paper-current-bias-ekf1",
    "paper-current-bias-ukf",
];

const CYCLE_DURATION: f64 = 2000.0;
const EVAL_WINDOW: (f64, f64) = (1000.0, 2000.0);
const VOLTAGE_BIAS: f64 = 0.1;
const CURRENT_BIAS: f64 = -0.1;
const WRONG_SOC_GUESS: f64 = 0.95;

/// Two synthetic urban cycles from full charge, estimation over the second.
fn base(name: &str, seed: u64, variant: Variant, filter: FilterKind) -> Result<Scenario> {
    let params = kokam_params();
    let cycle = synthesize_cycle(
        CycleKind::UdcLike,
        CYCLE_DURATION,
        seed,
        DEFAULT_C_RATE_CAP,
        params.one_c_current(),
    )?;
    Ok(Scenario {
        name: name.to_string(),
        params,
        ocv: kokam_ocv(),
        cycle,
        true_initial: EcmState::at_rest(1.0),
        voltage_bias: 0.0,
        current_bias: 0.0,
        voltage_noise_sigma: DEFAULT_VOLTAGE_NOISE_SIGMA,
        current_noise_sigma: DEFAULT_CURRENT_NOISE_SIGMA,
        noise_seed: seed,
        estimator_initial: InitialGuess::Soc(WRONG_SOC_GUESS),
        variant,
        filter,
        config: FilterConfig::default_tuning(variant.state_dim())?,
        eval_window: EVAL_WINDOW,
    })
}

/// Built-in scenario by name. `seed` drives both the cycle and the noise.
///
/// The voltage-bias scenarios add 100 mV to the measured voltage and start
/// the estimate at 95 % SOC. The current-bias scenarios add -100 mA to the
/// measured current and start the estimate at the true state.
pub fn preset(name: &str, seed: u64) -> Result<Scenario> {
    let voltage = |variant, filter| -> Result<Scenario> {
        let mut sc = base(name, seed, variant, filter)?;
        sc.voltage_bias = VOLTAGE_BIAS;
        Ok(sc)
    };
    let current = |variant, filter| -> Result<Scenario> {
        let mut sc = base(name, seed, variant, filter)?;
        sc.current_bias = CURRENT_BIAS;
        sc.estimator_initial = InitialGuess::Truth;
        Ok(sc)
    };
    match name {
        "paper-fig4" => voltage(Variant::Original, FilterKind::Ekf1),
        "paper-fig5-ekf1" => voltage(Variant::VoltageBias, FilterKind::Ekf1),
        "paper-fig5-ekf2" => voltage(Variant::VoltageBias, FilterKind::Ekf2),
        "paper-fig5-ukf" => voltage(Variant::VoltageBias, FilterKind::Ukf),
        "paper-current-bias-ekf1" => current(Variant::Original, FilterKind::Ekf1),
        "paper-current-bias-ukf" => current(Variant::CurrentBias, FilterKind::Ukf),
        _ => Err(Error::InvalidArgument(format!(
            "unknown scenario {name:?} (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
