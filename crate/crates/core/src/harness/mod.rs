//! Synthetic experiments: drive cycles, biased noisy measurements, filter
//! runs and error metrics.

mod cycle;
mod metrics;
mod presets;
mod trace;

use std::fmt::Write as _;
use std::ops::Range;

use log::warn;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::ecm::{simulate, EcmState, Trajectory};
use crate::error::{Error, Result};
use crate::filters::{Filter, FilterConfig, FilterKind};
use crate::model::{Variant, SOC_INDEX};
use crate::ocv::OcvPolynomial;
use crate::params::EcmParams;

pub use cycle::{
    synthesize_cycle, CycleKind, DriveCycle, CYCLE_PERIOD, DEFAULT_C_RATE_CAP, URBAN_MEAN_C_RATE,
};
pub use metrics::{max_abs_error, rmse};
pub use presets::{preset, DEFAULT_CURRENT_NOISE_SIGMA, DEFAULT_VOLTAGE_NOISE_SIGMA, PRESET_NAMES};
pub use trace::{read_trace_csv, write_trace_csv, TraceRow, TRACE_HEADER};

/// Starting estimate of the filter.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// True physical state at the start time, biases zero.
    Truth,
    /// Relaxed RC pairs at the given SOC, biases zero.
    Soc(f64),
    /// Full state vector in the model's ordering.
    State(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: EcmParams,
    pub ocv: OcvPolynomial,
    pub cycle: DriveCycle,
    pub true_initial: EcmState,
    /// V, added to the measured voltage.
    pub voltage_bias: f64,
    /// A, added to the measured current.
    pub current_bias: f64,
    pub voltage_noise_sigma: f64,
    pub current_noise_sigma: f64,
    pub noise_seed: u64,
    pub estimator_initial: InitialGuess,
    pub variant: Variant,
    pub filter: FilterKind,
    pub config: FilterConfig,
    /// `[start, end)` in seconds. Estimation starts at `start`.
    pub eval_window: (f64, f64),
}

/// Which sensor bias a trace reports in its `bias_*` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackedBias {
    Voltage,
    Current,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.config.validate()?;
        if self.config.state_dim() != self.variant.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.variant.state_dim(),
                actual: self.config.state_dim(),
            });
        }
        if self.config.dt != DriveCycle::DT {
            return Err(Error::InvalidArgument(format!(
                "filter step {} s differs from the cycle sampling {} s",
                self.config.dt,
                DriveCycle::DT
            )));
        }
        for (name, v) in [
            ("voltage_bias", self.voltage_bias),
            ("current_bias", self.current_bias),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("voltage_noise_sigma", self.voltage_noise_sigma),
            ("current_noise_sigma", self.current_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let InitialGuess::State(x) = &self.estimator_initial {
            if x.len() != self.variant.state_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.variant.state_dim(),
                    actual: x.len(),
                });
            }
        }
        self.window_indices().map(|_| ())
    }

    /// Evaluation window as sample indices.
    pub fn window_indices(&self) -> Result<Range<usize>> {
        let (start, end) = self.eval_window;
        let span = self.cycle.duration();
        if !(start >= 0.0 && start < end && end <= span) {
            return Err(Error::InvalidArgument(format!(
                "evaluation window [{start}, {end}) s is not inside the cycle span [0, {span}) s"
            )));
        }
        let to_index = |t: f64| {
            let k = t / DriveCycle::DT;
            if (k - k.round()).abs() > 1e-9 {
                Err(Error::InvalidArgument(format!("window bound {t} s is not on the sample grid")))
            } else {
                Ok(k.round() as usize)
            }
        };
        Ok(to_index(start)?..to_index(end)?)
    }

    pub fn tracked_bias(&self) -> TrackedBias {
        match self.variant {
            Variant::VoltageBias | Variant::DualBias => TrackedBias::Voltage,
            Variant::CurrentBias => TrackedBias::Current,
            Variant::Original if self.voltage_bias == 0.0 && self.current_bias != 0.0 => {
                TrackedBias::Current
            }
            Variant::Original => TrackedBias::Voltage,
        }
    }

    fn true_bias(&self) -> f64 {
        match self.tracked_bias() {
            TrackedBias::Voltage => self.voltage_bias,
            TrackedBias::Current => self.current_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub voltage: Vec<f64>,
    pub current: Vec<f64>,
}

/// Biased, noisy sensor streams for `truth`. The noise stream is a ChaCha8
/// generator seeded with `seed`; each step draws the voltage noise then the
/// current noise.
pub fn make_measurements(sc: &Scenario, truth: &Trajectory, seed: u64) -> Result<Measurements> {
    if truth.len() != sc.cycle.len() {
        return Err(Error::DimensionMismatch {
            expected: sc.cycle.len(),
            actual: truth.len(),
        });
    }
    let v_noise = Normal::new(0.0, sc.voltage_noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("voltage noise: {e}")))?;
    let i_noise = Normal::new(0.0, sc.current_noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("current noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut voltage = Vec::with_capacity(truth.len());
    let mut current = Vec::with_capacity(truth.len());
    for s in &truth.samples {
        let dv = v_noise.sample(&mut rng);
        let di = i_noise.sample(&mut rng);
        voltage.push(s.terminal_voltage + sc.voltage_bias + dv);
        current.push(s.current + sc.current_bias + di);
    }
    Ok(Measurements { voltage, current })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// A posteriori state in the model's ordering.
    pub state: Vec<f64>,
    pub covariance_diagonal: Vec<f64>,
    /// Model output at the posterior state and measured current.
    pub v_est: f64,
    pub bias_est: Option<f64>,
    pub p_bias: Option<f64>,
}

impl Estimate {
    pub fn soc(&self) -> f64 {
        self.state[SOC_INDEX]
    }

    pub fn p_soc(&self) -> f64 {
        self.covariance_diagonal[SOC_INDEX]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub true_state: EcmState,
    pub current_true: f64,
    pub v_true: f64,
    pub v_meas: f64,
    pub i_meas: f64,
    pub bias_true: f64,
    /// `None` before the estimation start and after a failure.
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterFailure {
    pub t: f64,
    pub message: String,
}

/// Metrics over the evaluation window. On a failed run they cover the
/// estimated prefix of the window and are NaN if that prefix is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMetrics {
    pub soc_rmse: f64,
    pub soc_max_error: f64,
    /// Present when the model estimates the tracked bias.
    pub bias_rmse: Option<f64>,
    pub bias_max_error: Option<f64>,
    pub window_samples: usize,
    pub saturation_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub variant: Variant,
    pub filter: FilterKind,
    pub tracked_bias: TrackedBias,
    pub eval_window: (f64, f64),
    pub records: Vec<TraceRecord>,
    pub metrics: ScenarioMetrics,
    pub failure: Option<FilterFailure>,
}

impl ScenarioResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.records.iter().map(TraceRow::from_record).collect()
    }

    /// Line-oriented `key: value` summary.
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.name);
        let _ = writeln!(s, "variant: {}", self.variant);
        let _ = writeln!(s, "filter: {}", self.filter);
        let _ = writeln!(s, "window: [{}, {}) s", self.eval_window.0, self.eval_window.1);
        let _ = writeln!(s, "window_samples: {}", m.window_samples);
        let _ = writeln!(s, "soc_rmse: {:.6} ({:.3} %)", m.soc_rmse, 100.0 * m.soc_rmse);
        let _ = writeln!(s, "soc_max_error: {:.6}", m.soc_max_error);
        let unit = match self.tracked_bias {
            TrackedBias::Voltage => ("mV", "voltage"),
            TrackedBias::Current => ("mA", "current"),
        };
        let _ = writeln!(s, "tracked_bias: {}", unit.1);
        match (m.bias_rmse, m.bias_max_error) {
            (Some(r), Some(x)) => {
                let _ = writeln!(s, "bias_rmse: {:.6} ({:.3} {})", r, 1e3 * r, unit.0);
                let _ = writeln!(s, "bias_max_error: {x:.6}");
            }
            _ => {
                let _ = writeln!(s, "bias_rmse: n/a");
                let _ = writeln!(s, "bias_max_error: n/a");
            }
        }
        let _ = writeln!(s, "saturation_events: {}", m.saturation_events);
        match &self.failure {
            None => {
                let _ = writeln!(s, "status: ok");
            }
            Some(f) => {
                let _ = writeln!(s, "status: failed at t = {} s: {}", f.t, f.message);
            }
        }
        s
    }
}

fn initial_vector(sc: &Scenario, truth_at_start: EcmState) -> DVector<f64> {
    let n = sc.variant.state_dim();
    match &sc.estimator_initial {
        InitialGuess::State(x) => DVector::from_row_slice(x),
        InitialGuess::Truth | InitialGuess::Soc(_) => {
            let phys = match sc.estimator_initial {
                InitialGuess::Soc(z) => EcmState::at_rest(z),
                _ => truth_at_start,
            };
            let mut x = DVector::zeros(n);
            x[0] = phys.v1;
            x[1] = phys.v2;
            x[SOC_INDEX] = phys.z;
            x
        }
    }
}

fn compute_metrics(
    records: &[TraceRecord],
    window: Range<usize>,
    has_bias_state: bool,
    saturation_events: usize,
) -> ScenarioMetrics {
    let estimated: Vec<&TraceRecord> = records[window]
        .iter()
        .take_while(|r| r.estimate.is_some())
        .collect();
    let n = estimated.len();
    let soc_true: Vec<f64> = estimated.iter().map(|r| r.true_state.z).collect();
    let soc_est: Vec<f64> = estimated.iter().map(|r| r.estimate.as_ref().unwrap().soc()).collect();
    let or_nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
    let soc_rmse = or_nan(rmse(&soc_true, &soc_est, 0..n));
    let soc_max_error = or_nan(max_abs_error(&soc_true, &soc_est, 0..n));
    let bias_est: Option<Vec<f64>> = estimated
        .iter()
        .map(|r| r.estimate.as_ref().unwrap().bias_est)
        .collect();
    let (bias_rmse, bias_max_error) = match bias_est {
        Some(b) if has_bias_state => {
            let t: Vec<f64> = estimated.iter().map(|r| r.bias_true).collect();
            (Some(or_nan(rmse(&t, &b, 0..n))), Some(or_nan(max_abs_error(&t, &b, 0..n))))
        }
        _ => (None, None),
    };
    ScenarioMetrics {
        soc_rmse,
        soc_max_error,
        bias_rmse,
        bias_max_error,
        window_samples: n,
        saturation_events,
    }
}

/// Simulates the truth over the whole cycle, then runs the filter from the
/// start of the evaluation window to the end of the cycle. A filter
/// breakdown ends the run early and is reported in `failure`.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioResult> {
    sc.validate()?;
    let window = sc.window_indices()?;
    let truth = simulate(&sc.params, &sc.ocv, sc.true_initial, &sc.cycle.currents, DriveCycle::DT)?;
    let meas = make_measurements(sc, &truth, sc.noise_seed)?;
    let model = sc.variant.build(&sc.params, &sc.ocv)?;
    let bias_index = match sc.tracked_bias() {
        TrackedBias::Voltage => model.voltage_bias_index(),
        TrackedBias::Current => model.current_bias_index(),
    };
    let filter = Filter::new(model, sc.config.clone(), sc.filter)?;
    let bias_true = sc.true_bias();

    let mut records: Vec<TraceRecord> = truth
        .samples
        .iter()
        .zip(meas.voltage.iter().zip(&meas.current))
        .map(|(s, (&v, &i))| TraceRecord {
            t: s.t,
            true_state: s.state,
            current_true: s.current,
            v_true: s.terminal_voltage,
            v_meas: v,
            i_meas: i,
            bias_true,
            estimate: None,
        })
        .collect();

    let start = window.start;
    let mut state = filter.initial_state(initial_vector(sc, truth.samples[start].state))?;
    let mut failure = None;
    for k in start..records.len() {
        if k > start {
            state = filter.predict(&state, meas.current[k - 1]);
        }
        match filter.update(&state, meas.voltage[k], meas.current[k]) {
            Ok(post) => state = post,
            Err(e) => {
                warn!("{}: filter failed at t = {} s: {e}", sc.name, records[k].t);
                failure = Some(FilterFailure {
                    t: records[k].t,
                    message: e.to_string(),
                });
                break;
            }
        }
        let diag: Vec<f64> = state.covariance.diagonal().iter().copied().collect();
        records[k].estimate = Some(Estimate {
            v_est: filter.model().measured_output(&state.mean, meas.current[k]),
            bias_est: bias_index.map(|i| state.mean[i]),
            p_bias: bias_index.map(|i| diag[i]),
            state: state.mean.iter().copied().collect(),
            covariance_diagonal: diag,
        });
    }

    let metrics = compute_metrics(&records, window, bias_index.is_some(), truth.saturation_events());
    Ok(ScenarioResult {
        name: sc.name.clone(),
        variant: sc.variant,
        filter: sc.filter,
        tracked_bias: sc.tracked_bias(),
        eval_window: sc.eval_window,
        records,
        metrics,
        failure,
    })
}

/// Runs independent scenarios in parallel. Results come back sorted by id.
pub fn run_batch(scenarios: Vec<(String, Scenario)>) -> Vec<(String, Result<ScenarioResult>)> {
    let mut out: Vec<(String, Result<ScenarioResult>)> = scenarios
        .into_par_iter()
        .map(|(id, sc)| {
            let r = run_scenario(&sc);
            (id, r)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_scenario(kind: FilterKind) -> Scenario {
        let mut sc = preset("paper-fig5-ukf", 3).unwrap();
        sc.filter = kind;
        sc.voltage_bias = 0.0;
        sc.voltage_noise_sigma = 0.0;
        sc.current_noise_sigma = 0.0;
        sc.estimator_initial = InitialGuess::Truth;
        sc.config.p0 = nalgebra::DMatrix::zeros(4, 4);
        sc.config.q0 = nalgebra::DMatrix::zeros(4, 4);
        sc
    }

    #[test]
    fn measurements_without_noise_or_bias_equal_truth() {
        let mut sc = quiet_scenario(FilterKind::Ekf1);
        let truth = simulate(&sc.params, &sc.ocv, sc.true_initial, &sc.cycle.currents, 1.0).unwrap();
        let m = make_measurements(&sc, &truth, 1).unwrap();
        assert_eq!(m.voltage, truth.terminal_voltages());
        assert_eq!(m.current, sc.cycle.currents);

        sc.voltage_bias = 0.1;
        sc.current_bias = -0.1;
        let m = make_measurements(&sc, &truth, 1).unwrap();
        for (k, s) in truth.samples.iter().enumerate() {
            assert!((m.voltage[k] - s.terminal_voltage - 0.1).abs() < 1e-14);
            assert!((m.current[k] - s.current + 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let sc = preset("paper-fig5-ukf", 3).unwrap();
        let truth = simulate(&sc.params, &sc.ocv, sc.true_initial, &sc.cycle.currents, 1.0).unwrap();
        let a = make_measurements(&sc, &truth, 5).unwrap();
        let b = make_measurements(&sc, &truth, 5).unwrap();
        let c = make_measurements(&sc, &truth, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.voltage, c.voltage);
        let resid: Vec<f64> = a
            .voltage
            .iter()
            .zip(&truth.samples)
            .map(|(v, s)| v - s.terminal_voltage - sc.voltage_bias)
            .collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd - sc.voltage_noise_sigma).abs() < 0.1 * sc.voltage_noise_sigma);
    }

    #[test]
    fn perfect_information_is_exact() {
        for kind in FilterKind::ALL {
            let r = run_scenario(&quiet_scenario(kind)).unwrap();
            assert!(!r.failed());
            assert!(r.metrics.soc_rmse <= 1e-6, "{kind}: {}", r.metrics.soc_rmse);
            assert_eq!(r.metrics.window_samples, 1000);
        }
    }

    #[test]
    fn records_cover_the_cycle() {
        let r = run_scenario(&preset("paper-fig4", 1).unwrap()).unwrap();
        assert_eq!(r.records.len(), 2000);
        assert!(r.records[..1000].iter().all(|x| x.estimate.is_none()));
        assert!(r.records[1000..].iter().all(|x| x.estimate.is_some()));
        assert_eq!(r.metrics.bias_rmse, None);
        assert_eq!(r.tracked_bias, TrackedBias::Voltage);
    }

    #[test]
    fn failure_is_reported_not_raised() {
        let mut sc = quiet_scenario(FilterKind::Ekf1);
        // a wildly wrong SOC drives the polynomial far outside its range
        sc.estimator_initial = InitialGuess::Soc(1e150);
        let r = run_scenario(&sc).unwrap();
        assert!(r.failed());
        assert!(r.metrics.soc_rmse.is_nan());
        assert!(r.summary().contains("status: failed"));
    }

    #[test]
    fn validation() {
        let mut sc = preset("paper-fig4", 1).unwrap();
        sc.eval_window = (1000.0, 2500.0);
        assert!(run_scenario(&sc).is_err());
        let mut sc = preset("paper-fig4", 1).unwrap();
        sc.eval_window = (1000.5, 2000.0);
        assert!(sc.validate().is_err());
        let mut sc = preset("paper-fig4", 1).unwrap();
        sc.config = FilterConfig::default_tuning(4).unwrap();
        assert!(sc.validate().is_err());
        let mut sc = preset("paper-fig4", 1).unwrap();
        sc.voltage_noise_sigma = -1.0;
        assert!(sc.validate().is_err());
        let mut sc = preset("paper-fig4", 1).unwrap();
        sc.estimator_initial = InitialGuess::State(vec![0.0; 4]);
        assert!(sc.validate().is_err());
    }

    #[test]
    fn batch_is_sorted() {
        let ids = ["b", "a", "c"];
        let batch = ids
            .iter()
            .map(|id| (id.to_string(), quiet_scenario(FilterKind::Ekf1)))
            .collect();
        let out = run_batch(batch);
        let got: Vec<&str> = out.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(got, vec!["a", "b", "c"]);
        let m0 = &out[0].1.as_ref().unwrap().metrics;
        assert!(out.iter().all(|(_, r)| &r.as_ref().unwrap().metrics == m0));
    }
}
