//! Experiment orchestration: configured runs, assumption verification, and
//! sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use thiserror::Error;

use crate::algorithms::{
    damsco_round, dashco_round, make_schedule, CommMode, DamscoHistory, DamscoState, DashcoState,
    DerivedSchedule, EngineError, Schedule, ScheduleError,
};
use crate::compression::{estimate_contraction, eta_sq_for, CompressionError, CompressorSpec};
use crate::config::{ConfigError, ExperimentConfig, Method};
use crate::metrics::{consensus_error, MetricsRecord, RunDiagnostics, RunRecord};
use crate::problems::{make_problem, GradientOracle, ProblemError, ProblemInstance};
use crate::rng::{stream_for, StreamKind};
use crate::topology::{build_mixing, MixingMatrix, TopologyError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status for the CLI: 2 for config parsing, 3 for
    /// infeasible schedules, 4 for non-finite state, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Schedule(_) => 3,
            HarnessError::Engine(EngineError::NonFiniteState { .. }) => 4,
            _ => 1,
        }
    }
}

/// Knobs that do not change trajectories (except `comm_mode`, which is
/// bitwise-equivalent by construction).
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub comm_mode: CommMode,
    /// Record measured wall-clock time in the CSV. Off by default: output
    /// bytes are then a pure function of the config.
    pub include_timing: bool,
    /// Retain the full per-round history needed by the z-sequence check
    /// (DAMSCo only).
    pub keep_history: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            comm_mode: CommMode::SharedEstimates,
            include_timing: false,
            keep_history: false,
        }
    }
}

/// Everything a finished run hands back.
pub struct ExperimentOutput {
    pub record: RunRecord,
    pub schedule: DerivedSchedule,
    pub final_x: Array2<f64>,
    pub history: Option<DamscoHistory>,
    pub include_timing: bool,
}

impl ExperimentOutput {
    pub fn to_csv(&self) -> String {
        crate::metrics::to_csv(&self.record.records, self.include_timing)
    }
}

/// Instantiated experiment pieces shared by `run` and `verify`.
pub struct Instantiated {
    pub problem: ProblemInstance,
    pub oracle: GradientOracle,
    pub mixing: MixingMatrix,
    pub compressor_x: CompressorSpec,
    pub compressor_g: CompressorSpec,
    pub schedule: Result<DerivedSchedule, ScheduleError>,
}

/// Materialize the config: problem, oracle, mixing matrix, compressors, and
/// the derived schedule.
pub fn instantiate(config: &ExperimentConfig) -> Result<Instantiated, HarnessError> {
    config.validate()?;
    let topo = config.topology_spec()?;
    let mixing = build_mixing(&topo, config.topology.weighting)?;
    let problem = make_problem(
        &config.problem_spec()?,
        config.n,
        config.d,
        config.master_seed,
        config.heterogeneity_mode()?,
    )?;
    let oracle = config.oracle_spec()?;
    let compressor_x = config.compressor_x_spec()?;
    let compressor_g = config.compressor_g_spec()?;
    let eta_sq_x = eta_sq_for(&compressor_x, config.d)?;
    let eta_sq_g = eta_sq_for(&compressor_g, config.d)?;
    let derivation = config.derivation(problem.smoothness, mixing.rho(), eta_sq_x, eta_sq_g)?;
    let schedule = make_schedule(&derivation);
    Ok(Instantiated {
        problem,
        oracle,
        mixing,
        compressor_x,
        compressor_g,
        schedule,
    })
}

/// Execute a configured experiment. Deterministic output for a fixed config:
/// same records, same bytes.
pub fn run_experiment(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutput, HarnessError> {
    let parts = instantiate(config)?;
    let schedule = parts.schedule?;
    if !schedule.all_satisfied() {
        for violation in schedule.violations() {
            crate::log::warn(&format!(
                "schedule condition violated: {} = {:e} > {:e}",
                violation.name, violation.value, violation.bound
            ));
        }
    }
    let n = config.n;
    let d = config.d;
    let seed = config.master_seed;
    let start = Instant::now();
    let mut records = Vec::new();
    let mut diagnostics = RunDiagnostics::default();
    let mut bytes_cum = 0u64;

    let mut push_record = |t: u64, x: &Array2<f64>, bytes_cum: u64| -> Result<(), HarnessError> {
        let x_mean: Vec<f64> = (0..d)
            .map(|k| (0..n).map(|i| x[[i, k]]).sum::<f64>() / n as f64)
            .collect();
        let grad = parts.problem.global_gradient(&x_mean)?;
        records.push(MetricsRecord {
            t,
            consensus_error: consensus_error(x),
            stationarity: grad.iter().map(|g| g * g).sum(),
            objective: parts.problem.global_value(&x_mean)?,
            comm_bytes_cum: bytes_cum,
            wallclock_ns: start.elapsed().as_nanos() as u64,
        });
        Ok(())
    };

    let (final_x, history) = match (&schedule.schedule, config.method) {
        (Schedule::Damsco(params), Method::Damsco) => {
            let mut state = DamscoState::new(n, d, opts.comm_mode);
            let mut history = opts
                .keep_history
                .then(|| DamscoHistory::new(&state, *params));
            for round in 1..=config.t {
                let out = damsco_round(
                    &mut state,
                    &parts.problem,
                    &parts.oracle,
                    &parts.mixing,
                    &parts.compressor_x,
                    params,
                    seed,
                )?;
                bytes_cum += out.bytes;
                diagnostics.merge(&out.residuals);
                if let Some(h) = history.as_mut() {
                    h.record(&state, &out);
                }
                if round % config.record_every == 0 || round == config.t {
                    push_record(round, &state.x, bytes_cum)?;
                }
            }
            (state.x, history)
        }
        (Schedule::Dashco(params), Method::Dashco) => {
            let mut state = DashcoState::new(n, d, opts.comm_mode);
            for round in 1..=config.t {
                let out = dashco_round(
                    &mut state,
                    &parts.problem,
                    &parts.oracle,
                    &parts.mixing,
                    &parts.compressor_x,
                    &parts.compressor_g,
                    params,
                    seed,
                )?;
                bytes_cum += out.bytes;
                diagnostics.merge(&out.residuals);
                if round % config.record_every == 0 || round == config.t {
                    push_record(round, &state.x, bytes_cum)?;
                }
            }
            (state.x, None)
        }
        (derived, method) => {
            return Err(ConfigError::Validation(format!(
                "schedule derivation produced {derived:?} but method is {method:?}"
            ))
            .into());
        }
    };

    Ok(ExperimentOutput {
        record: RunRecord {
            records,
            diagnostics,
        },
        schedule,
        final_x,
        history,
        include_timing: opts.include_timing,
    })
}

/// Run and write the CSV to `out_path`.
pub fn run_to_file(
    config: &ExperimentConfig,
    opts: &RunOptions,
    out_path: &Path,
) -> Result<ExperimentOutput, HarnessError> {
    let output = run_experiment(config, opts)?;
    std::fs::write(out_path, output.to_csv())?;
    Ok(output)
}

/// One line of the assumption report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

/// The `verify` subcommand: instantiate the config and check every modeling
/// assumption the experiment relies on.
pub fn verify(config: &ExperimentConfig) -> Result<Vec<CheckLine>, HarnessError> {
    config.validate()?;
    let mut lines = Vec::new();

    // Mixing-matrix invariants (nonnegativity, stochasticity, sparsity
    // pattern, and rho < 1 are all enforced by the validated constructor).
    let topo = config.topology_spec()?;
    let mixing = match build_mixing(&topo, config.topology.weighting) {
        Ok(m) => {
            lines.push(CheckLine {
                name: "mixing matrix invariants".into(),
                passed: true,
                details: format!("rho = {:.6}", m.rho()),
            });
            Some(m)
        }
        Err(e) => {
            lines.push(CheckLine {
                name: "mixing matrix invariants".into(),
                passed: false,
                details: e.to_string(),
            });
            None
        }
    };

    // Compression contraction, Monte Carlo against the certified bound.
    let mut contraction_line = |label: &str, spec: &CompressorSpec| -> Result<(), HarnessError> {
        let bound = eta_sq_for(spec, config.d)?;
        let mut rng = stream_for(config.master_seed, StreamKind::ContractionProbe, 0, 0);
        let estimate = estimate_contraction(spec, config.d, 100_000, &mut rng)?;
        lines.push(CheckLine {
            name: format!("compression contraction ({label})"),
            passed: estimate <= bound + 0.02,
            details: format!("estimate {estimate:.4} vs certified {bound:.4} + 0.02"),
        });
        Ok(())
    };
    let spec_x = config.compressor_x_spec()?;
    contraction_line("model channel", &spec_x)?;
    let spec_g = config.compressor_g_spec()?;
    if config.method == Method::Dashco && spec_g != spec_x {
        contraction_line("gradient channel", &spec_g)?;
    }

    // Problem smoothness probe.
    let problem = make_problem(
        &config.problem_spec()?,
        config.n,
        config.d,
        config.master_seed,
        config.heterogeneity_mode()?,
    )?;
    let mut worst_excess: f64 = 0.0;
    let mut rng = stream_for(config.master_seed, StreamKind::ProblemGen, 7, 7);
    use rand_distr::{Distribution, StandardNormal};
    for _ in 0..100 {
        let x: Vec<f64> = (0..config.d)
            .map(|_| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let y: Vec<f64> = (0..config.d)
            .map(|_| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        for i in 0..config.n {
            let gx = problem.full_gradient(i, &x)?;
            let gy = problem.full_gradient(i, &y)?;
            let dg: f64 = gx
                .iter()
                .zip(gy.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let dx: f64 = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst_excess = worst_excess.max(dg - problem.smoothness * dx);
        }
    }
    lines.push(CheckLine {
        name: "smoothness probe".into(),
        passed: worst_excess <= 1e-8,
        details: format!(
            "max ‖∇f_i(x)−∇f_i(y)‖ − L‖x−y‖ = {worst_excess:.3e} (L = {:.4})",
            problem.smoothness
        ),
    });

    // Oracle unbiasedness and variance at a probe point.
    let oracle = config.oracle_spec()?;
    let probe: Vec<f64> = (0..config.d).map(|k| 0.25 * (k as f64 + 1.0)).collect();
    let exact = problem.full_gradient(0, &probe)?;
    let trials = 100_000usize;
    let mut mean = vec![0.0; config.d];
    let mut var = 0.0;
    for t in 0..trials {
        let mut rng = stream_for(config.master_seed, StreamKind::Gradient, 0, t as u64);
        let g = problem.sample_gradient(0, &probe, &oracle, &mut rng)?;
        let mut dev = 0.0;
        for k in 0..config.d {
            mean[k] += g[k] / trials as f64;
            dev += (g[k] - exact[k]) * (g[k] - exact[k]);
        }
        var += dev / trials as f64;
    }
    // Clipping intentionally biases the oracle; skip the mean test then.
    if oracle.clip_b_inf.is_none() {
        let tol = 4.0 * oracle.noise_sigma / (trials as f64).sqrt() + 1e-12;
        let worst = mean
            .iter()
            .zip(exact.iter())
            .map(|(m, e)| (m - e).abs())
            .fold(0.0, f64::max);
        lines.push(CheckLine {
            name: "oracle unbiasedness".into(),
            passed: worst <= tol,
            details: format!("max coordinate bias {worst:.3e} vs 4σ/√N = {tol:.3e}"),
        });
    }
    let sigma_sq = oracle.noise_sigma * oracle.noise_sigma;
    let var_tol = 0.05 * sigma_sq + 1e-12;
    lines.push(CheckLine {
        name: "oracle variance".into(),
        passed: var <= sigma_sq + var_tol,
        details: format!("E‖g−∇f‖² = {var:.4e} vs σ² = {sigma_sq:.4e}"),
    });

    // Schedule inequality chain.
    if let Some(mixing) = &mixing {
        let eta_sq_x = eta_sq_for(&spec_x, config.d)?;
        let eta_sq_g = eta_sq_for(&spec_g, config.d)?;
        let derivation =
            config.derivation(problem.smoothness, mixing.rho(), eta_sq_x, eta_sq_g)?;
        match make_schedule(&derivation) {
            Ok(schedule) => {
                let binding = schedule
                    .binding_constraint
                    .clone()
                    .unwrap_or_else(|| "none (manual)".into());
                lines.push(CheckLine {
                    name: "schedule inequality chain".into(),
                    passed: schedule.all_satisfied(),
                    details: format!("binding constraint: {binding}"),
                });
            }
            Err(e) => lines.push(CheckLine {
                name: "schedule inequality chain".into(),
                passed: false,
                details: e.to_string(),
            }),
        }
    }

    Ok(lines)
}

/// Values accepted by `sweep --vary key=v1,v2,...`.
pub fn parse_vary(arg: &str) -> Result<(String, Vec<String>), ConfigError> {
    let (key, values) = arg.split_once('=').ok_or_else(|| {
        ConfigError::Validation(format!("--vary expects key=v1,v2,..., got {arg}"))
    })?;
    let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
    if key.is_empty() || values.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(ConfigError::Validation(format!("malformed --vary argument: {arg}")));
    }
    Ok((key.to_string(), values))
}

/// Override a dotted key in raw TOML and re-validate.
pub fn override_key(
    config_text: &str,
    key: &str,
    value: &str,
) -> Result<ExperimentConfig, ConfigError> {
    let mut doc: toml::Value =
        toml::from_str(config_text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let parsed: toml::Value = if let Ok(i) = value.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = value.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = value.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(value.to_string())
    };
    let mut cursor = &mut doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (idx, part) in parts.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| {
            ConfigError::Validation(format!("key path {key} does not address a table"))
        })?;
        if idx == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            break;
        }
        cursor = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let text = toml::to_string(&doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
    ExperimentConfig::from_toml(&text)
}

/// One sweep leg: the overridden value and where its CSV landed.
pub struct SweepLeg {
    pub value: String,
    pub out_path: PathBuf,
    pub output: ExperimentOutput,
}

/// Run the config once per value of `key`, writing one CSV per leg.
pub fn sweep(
    config_text: &str,
    key: &str,
    values: &[String],
    out_stem: &Path,
    opts: &RunOptions,
) -> Result<Vec<SweepLeg>, HarnessError> {
    let mut legs = Vec::new();
    for value in values {
        let config = override_key(config_text, key, value)?;
        let out_path = sweep_leg_path(out_stem, key, value);
        let output = run_to_file(&config, opts, &out_path)?;
        legs.push(SweepLeg {
            value: value.clone(),
            out_path,
            output,
        });
    }
    Ok(legs)
}

fn sweep_leg_path(out_stem: &Path, key: &str, value: &str) -> PathBuf {
    let stem = out_stem
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    let ext = out_stem
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    let file = format!("{stem}_{key}={value}.{ext}");
    out_stem.with_file_name(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    const BASE: &str = r#"
method = "dashco"
t = 40
n = 4
d = 2
record_every = 10
master_seed = 7

[problem]
family = "hetero_quadratic"
span = [0.0, 4.0]

[topology]
kind = "ring"

[compressor]
kind = "identity"

[schedule]
derivation = "manual"
alpha = 0.05
beta1 = 0.0
gamma_x = 1.0
gamma_g = 1.0
"#;

    #[test]
    fn zero_rounds_yields_header_only_csv() {
        let config = ExperimentConfig::from_toml(&BASE.replace("t = 40", "t = 0")).unwrap();
        let out = run_experiment(&config, &RunOptions::default()).unwrap();
        assert!(out.record.records.is_empty());
        assert_eq!(out.to_csv(), format!("{}\n", crate::metrics::CSV_HEADER));
    }

    #[test]
    fn identical_configs_give_identical_bytes() {
        let config = ExperimentConfig::from_toml(BASE).unwrap();
        let a = run_experiment(&config, &RunOptions::default()).unwrap();
        let b = run_experiment(&config, &RunOptions::default()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn records_land_on_schedule() {
        let config = ExperimentConfig::from_toml(&BASE.replace("t = 40", "t = 45")).unwrap();
        let out = run_experiment(&config, &RunOptions::default()).unwrap();
        let ts: Vec<u64> = out.record.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![10, 20, 30, 40, 45]);
        let bytes: Vec<u64> = out.record.records.iter().map(|r| r.comm_bytes_cum).collect();
        assert!(bytes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn top_k_byte_accounting_is_exact() {
        // DAMSCo sends one sparse message per agent per round: an 8-byte
        // header plus 12 bytes per kept coordinate, k = ⌈ratio·d⌉.
        let config = ExperimentConfig::from_toml(
            r#"
method = "damsco"
t = 30
n = 4
d = 10
record_every = 30
master_seed = 3

[problem]
family = "hetero_quadratic"
span = [0.0, 4.0]

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.3

[schedule]
derivation = "manual"
alpha = 0.05
beta1 = 0.9
beta2 = 0.999
delta = 1e-8
gamma = 0.5
"#,
        )
        .unwrap();
        let out = run_experiment(&config, &RunOptions::default()).unwrap();
        let last = out.record.records.last().unwrap();
        let k = (0.3f64 * 10.0).ceil() as u64;
        assert_eq!(last.comm_bytes_cum, 4 * 30 * (8 + 12 * k));
    }

    #[test]
    fn override_key_changes_nested_values() {
        let config = override_key(BASE, "schedule.alpha", "0.1").unwrap();
        match config.schedule.alpha {
            Some(a) => assert!((a - 0.1).abs() < 1e-15),
            None => panic!("alpha not set"),
        }
        let config = override_key(BASE, "n", "8").unwrap();
        assert_eq!(config.n, 8);
    }

    #[test]
    fn verify_reports_identity_contraction_as_zero() {
        let config = ExperimentConfig::from_toml(BASE).unwrap();
        let lines = verify(&config).unwrap();
        let contraction = lines
            .iter()
            .find(|l| l.name.contains("contraction"))
            .unwrap();
        assert!(contraction.passed);
        assert!(contraction.details.contains("estimate 0.0000"));
        assert!(lines.iter().all(|l| l.passed), "{lines:?}");
    }

    #[test]
    fn sweep_writes_one_csv_per_value() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("out.csv");
        let legs = sweep(
            BASE,
            "n",
            &["4".to_string(), "8".to_string()],
            &stem,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(legs.len(), 2);
        for leg in &legs {
            assert!(leg.out_path.exists());
            let text = std::fs::read_to_string(&leg.out_path).unwrap();
            assert!(text.starts_with(crate::metrics::CSV_HEADER));
        }
    }
}
