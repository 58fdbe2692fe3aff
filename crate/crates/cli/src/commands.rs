use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use bmsobs_core::filters::FilterKind;
use bmsobs_core::harness::{run_batch, run_scenario, write_trace_csv, PRESET_NAMES};
use bmsobs_core::model::Variant;
use bmsobs_core::observability::{
    condition_sweep, soc_grid, write_sweep_csv, SweepPoint, DEFAULT_ILL_CONDITIONED,
    DEFAULT_MAX_ORDER, DEFAULT_RANK_TOL,
};
use bmsobs_core::{
    assemble_codistribution, kokam_ocv, kokam_params, rest_state, RankOptions, Scenario,
    ScenarioResult, Verdict,
};

use crate::config::{Overrides, RunConfig, ScenarioSection};
use crate::error::CliError;
use crate::{default_seed, CompareArgs, ObservabilityArgs, ScenarioArgs};

pub const DEFAULT_GRID: &str = "0.1:1.0:0.01";

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| io_err(path, e))
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Parses `start:stop:step`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([a, b, c]) => {
            soc_grid(*a, *b, *c).map_err(|e| CliError::Usage(format!("--grid {s:?}: {e}")))
        }
        _ => Err(CliError::Usage(format!("--grid expects start:stop:step, got {s:?}"))),
    }
}

pub fn observability(a: &ObservabilityArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_ref())?;
    let obs = &cfg.observability;
    let variant = a.variant.or(obs.variant).unwrap_or(Variant::Original);
    let grid_text = a.grid.clone().or_else(|| obs.grid.clone());
    let grid = parse_grid(grid_text.as_deref().unwrap_or(DEFAULT_GRID)).map_err(|e| match e {
        CliError::Usage(m) if a.grid.is_none() => CliError::Config(format!("observability.grid: {m}")),
        other => other,
    })?;
    let max_order = a.max_order.or(obs.max_order).unwrap_or(DEFAULT_MAX_ORDER);
    let opts = RankOptions {
        rel_tol: obs.rank_tol.unwrap_or(DEFAULT_RANK_TOL),
        ill_conditioned_threshold: obs.ill_conditioned_threshold.unwrap_or(DEFAULT_ILL_CONDITIONED),
    };
    let (mut params, ocv) = cfg.scenario.cell_model(kokam_params(), kokam_ocv())?;
    if a.tau_equal || obs.tau_equal == Some(true) {
        params = params.with_equal_time_constants();
    }
    let points = condition_sweep(variant, &params, &ocv, &grid, max_order, &opts)?;

    let out = a.out.clone().or_else(|| cfg.output.sweep.clone());
    let report = sweep_report(variant, &points, &params, &ocv, max_order)?;
    match &out {
        Some(path) => {
            write_sweep_csv(create(path)?, &points)?;
            print!("{report}");
        }
        None => {
            write_sweep_csv(io::stdout().lock(), &points)?;
            eprint!("{report}");
        }
    }
    if let Some(path) = &cfg.output.report {
        write_text(path, &report)?;
    }

    let expect = a.expect_observable || obs.expect_observable == Some(true);
    let deficient: Vec<f64> = points
        .iter()
        .filter(|p| p.nonlinear.verdict == Verdict::RankDeficient)
        .map(|p| p.z)
        .collect();
    if expect && !deficient.is_empty() {
        return Err(CliError::Expectation(format!(
            "expected full rank, {} grid point(s) are rank-deficient (first at z = {})",
            deficient.len(),
            deficient[0]
        )));
    }
    Ok(())
}

fn sweep_report(
    variant: Variant,
    points: &[SweepPoint],
    params: &bmsobs_core::EcmParams,
    ocv: &bmsobs_core::OcvPolynomial,
    max_order: usize,
) -> Result<String, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "variant: {variant} ({} states)", variant.state_dim());
    let _ = writeln!(s, "grid_points: {}", points.len());
    let _ = writeln!(s, "max_order: {max_order}");
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in points {
        *counts.entry(p.nonlinear.verdict.name()).or_default() += 1;
    }
    for v in [Verdict::Observable, Verdict::IllConditioned, Verdict::RankDeficient] {
        let _ = writeln!(s, "{}: {}", v.name(), counts.get(v.name()).copied().unwrap_or(0));
    }
    let conds: Vec<f64> = points.iter().map(|p| p.nonlinear.condition_number).collect();
    if !conds.is_empty() {
        let lo = conds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = conds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(s, "cond_number: min {lo:.4e}, max {hi:.4e}");
    }
    let mut lin: Vec<usize> = points.iter().map(|p| p.linearized.numeric_rank).collect();
    lin.sort_unstable();
    lin.dedup();
    let _ = writeln!(s, "linearized_ranks: {lin:?}");
    if let Some(first) = points.first() {
        let m = variant.build(params, ocv)?;
        let c = assemble_codistribution(&m, &rest_state(&m, first.z), max_order)?;
        for note in c.notes() {
            let _ = writeln!(s, "note: {note}");
        }
        if let Some(e) = &first.nonlinear.explanation {
            let _ = writeln!(s, "note: at z = {}: {e}", first.z);
        }
    }
    Ok(s)
}

pub fn scenario(a: &ScenarioArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_ref())?;
    let mut section: ScenarioSection = cfg.scenario.clone();
    if let Some(name) = &a.name {
        if !PRESET_NAMES.contains(&name.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown scenario {name:?}; known: {}",
                PRESET_NAMES.join(", ")
            )));
        }
        section.preset = Some(name.clone());
        if section.name.is_none() {
            section.name = Some(name.clone());
        }
    }
    let seed = match a.seed.or(section.seed) {
        Some(s) => s,
        None => default_seed()?,
    };
    let ov = Overrides {
        seed: a.seed,
        variant: a.variant,
        filter: a.filter,
    };
    let sc = section.build(&ov, seed)?;
    let result = run_scenario(&sc)?;
    let summary = result.summary();

    match a.out.clone().or_else(|| cfg.output.trace.clone()) {
        Some(path) => {
            let mut w = create(&path)?;
            write_trace_csv(&result, &mut w)?;
            w.flush().map_err(|e| io_err(&path, e))?;
            print!("{summary}");
        }
        None => {
            write_trace_csv(&result, io::stdout().lock())?;
            eprint!("{summary}");
        }
    }
    if let Some(path) = &cfg.output.report {
        write_text(path, &summary)?;
    }
    match &result.failure {
        Some(f) => Err(CliError::Runtime(format!(
            "filter failed at t = {} s: {}",
            f.t, f.message
        ))),
        None => Ok(()),
    }
}

/// Resolves a compare argument: a built-in name or a TOML config path.
fn resolve_entry(entry: &str, seed_flag: Option<u64>) -> Result<Scenario, CliError> {
    let ov = Overrides {
        seed: seed_flag,
        ..Overrides::default()
    };
    if PRESET_NAMES.contains(&entry) {
        let section = ScenarioSection {
            preset: Some(entry.to_string()),
            ..ScenarioSection::default()
        };
        let seed = match seed_flag {
            Some(s) => s,
            None => default_seed()?,
        };
        return section.build(&ov, seed);
    }
    if entry.ends_with(".toml") || Path::new(entry).exists() {
        let cfg = RunConfig::load(Path::new(entry))?;
        let seed = match seed_flag.or(cfg.scenario.seed) {
            Some(s) => s,
            None => default_seed()?,
        };
        let mut sc = cfg.scenario.build(&ov, seed)?;
        if cfg.scenario.name.is_none() {
            sc.name = entry.to_string();
        }
        return Ok(sc);
    }
    Err(CliError::Usage(format!(
        "{entry:?} is neither a known scenario ({}) nor a .toml file",
        PRESET_NAMES.join(", ")
    )))
}

/// Fields that must match for a comparison to be meaningful.
fn same_truth(a: &Scenario, b: &Scenario) -> Result<(), String> {
    let checks = [
        ("cell parameters", a.params == b.params),
        ("OCV curve", a.ocv == b.ocv),
        ("drive cycle", a.cycle == b.cycle),
        ("true initial state", a.true_initial == b.true_initial),
        ("voltage bias", a.voltage_bias == b.voltage_bias),
        ("current bias", a.current_bias == b.current_bias),
        ("voltage noise", a.voltage_noise_sigma == b.voltage_noise_sigma),
        ("current noise", a.current_noise_sigma == b.current_noise_sigma),
        ("noise seed", a.noise_seed == b.noise_seed),
        ("evaluation window", a.eval_window == b.eval_window),
        ("estimator initial guess", a.estimator_initial == b.estimator_initial),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        Some((what, _)) => Err((*what).to_string()),
        None => Ok(()),
    }
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    if a.scenarios.len() < 2 {
        return Err(CliError::Usage("compare needs at least two scenarios".into()));
    }
    let mut scenarios = Vec::with_capacity(a.scenarios.len());
    for entry in &a.scenarios {
        scenarios.push(resolve_entry(entry, a.seed)?);
    }
    for (entry, sc) in a.scenarios.iter().zip(&scenarios).skip(1) {
        same_truth(&scenarios[0], sc).map_err(|what| {
            CliError::Usage(format!(
                "{entry:?} differs from {:?} in its {what}; compare needs a shared truth",
                a.scenarios[0]
            ))
        })?;
    }

    let width = a.scenarios.len().to_string().len();
    let batch: Vec<(String, Scenario)> = scenarios
        .into_iter()
        .enumerate()
        .map(|(i, sc)| (format!("{i:0width$}"), sc))
        .collect();
    let mut results: Vec<(usize, ScenarioResult)> = Vec::new();
    for (id, r) in run_batch(batch) {
        let i: usize = id.parse().expect("batch ids are indices");
        results.push((i, r?));
    }
    // Stable: equal RMSEs keep command-line order.
    results.sort_by(|x, y| x.1.metrics.soc_rmse.total_cmp(&y.1.metrics.soc_rmse).then(x.0.cmp(&y.0)));

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<4} {:<32} {:<13} {:<6} {:>10} {:>10} {:>12} {}",
        "rank", "scenario", "variant", "filter", "soc_rmse", "soc_max", "bias_rmse", "status"
    );
    for (rank, (i, r)) in results.iter().enumerate() {
        let bias = r
            .metrics
            .bias_rmse
            .map(|b| format!("{b:.6}"))
            .unwrap_or_else(|| "n/a".into());
        let status = match &r.failure {
            None => "ok".to_string(),
            Some(f) => format!("failed at t = {} s", f.t),
        };
        let _ = writeln!(
            table,
            "{:<4} {:<32} {:<13} {:<6} {:>10.6} {:>10.6} {:>12} {}",
            rank + 1,
            a.scenarios[*i],
            r.variant.name(),
            r.filter.name(),
            r.metrics.soc_rmse,
            r.metrics.soc_max_error,
            bias,
            status
        );
    }
    let ordering = check_filter_ordering(&results);
    if let Err(msg) = &ordering {
        let _ = writeln!(table, "ordering violated: {msg}");
    }
    print!("{table}");
    if let Some(path) = &a.out {
        write_text(path, &table)?;
    }
    ordering.map_err(CliError::Expectation)
}

/// With voltage-bias runs of all three filters present, the SOC errors must
/// satisfy ukf <= ekf2 <= ekf1.
fn check_filter_ordering(results: &[(usize, ScenarioResult)]) -> Result<(), String> {
    let rmse = |k: FilterKind| {
        results
            .iter()
            .filter(|(_, r)| r.variant == Variant::VoltageBias && r.filter == k)
            .map(|(_, r)| r.metrics.soc_rmse)
            .next()
    };
    let (Some(ukf), Some(ekf2), Some(ekf1)) =
        (rmse(FilterKind::Ukf), rmse(FilterKind::Ekf2), rmse(FilterKind::Ekf1))
    else {
        return Ok(());
    };
    if ukf <= ekf2 && ekf2 <= ekf1 {
        Ok(())
    } else {
        Err(format!(
            "expected ukf <= ekf2 <= ekf1 on the voltage-bias model, got ukf {ukf:.6}, ekf2 {ekf2:.6}, ekf1 {ekf1:.6}"
        ))
    }
}
