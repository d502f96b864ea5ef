//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantities. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines).

use std::time::Instant;

use ndarray::Array2;

use dcopt::algorithms::{
    damsco_round, dashco_round, z_sequence_check, CommMode, DamscoParams, DamscoState,
    DashcoParams, DashcoState,
};
use dcopt::compression::{estimate_contraction, eta_sq_for, CompressorSpec, Sparsity};
use dcopt::config::ExperimentConfig;
use dcopt::harness::{run_experiment, RunOptions};
use dcopt::linalg::mix_rows;
use dcopt::metrics::{rate_summary, speedup_report};
use dcopt::problems::{make_problem, FamilySpec, GradientOracle, HeterogeneityMode};
use dcopt::rng::{stream_for, StreamKind};
use dcopt::topology::{build_mixing, Topology, Weighting};

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Criterion 1: compression contraction certificates, Monte Carlo with 10⁵
/// samples at d = 16; random_k and gossip must also be tight from below.
#[test]
fn criterion_1_assumption_certification() {
    let start = Instant::now();
    let d = 16;
    let cases: [(&str, CompressorSpec, bool); 5] = [
        ("identity", CompressorSpec::identity(), false),
        ("top_k(0.3d)", CompressorSpec::top_k(Sparsity::Ratio(0.3)), false),
        ("random_k(0.5d)", CompressorSpec::random_k(Sparsity::Ratio(0.5)), true),
        ("qsgd(s=2)", CompressorSpec::qsgd(2), false),
        ("gossip(0.9)", CompressorSpec::gossip(0.9), true),
    ];
    for (label, spec, tight) in &cases {
        let bound = eta_sq_for(spec, d).unwrap();
        let mut rng = stream_for(2024, StreamKind::ContractionProbe, 0, 0);
        let estimate = estimate_contraction(spec, d, 100_000, &mut rng).unwrap();
        assert!(
            estimate <= bound + 0.02,
            "{label}: estimate {estimate} exceeds certified {bound} + 0.02"
        );
        if *tight {
            assert!(
                estimate >= bound - 0.02,
                "{label}: estimate {estimate} is not tight against {bound}"
            );
        }
        println!("  {label}: estimate {estimate:.4}, certified eta^2 {bound:.4}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS criterion 1: assumption certification ({elapsed:?})");
}

/// Criterion 2: mixing invariants for every built matrix, and the exact
/// ring-4 lazy-Metropolis spectral value against the eigenvalue oracle.
#[test]
fn criterion_2_mixing_invariants() {
    let topologies = [
        Topology::Ring { n: 4 },
        Topology::Ring { n: 5 },
        Topology::Grid { rows: 3, cols: 3 },
        Topology::Complete { n: 6 },
        Topology::Custom {
            n: 5,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)],
        },
    ];
    let weightings = [
        Weighting::Metropolis,
        Weighting::LazyMetropolis,
        Weighting::UniformNeighbor,
    ];
    for topo in &topologies {
        let adjacency = topo.adjacency().unwrap();
        for weighting in weightings {
            let m = build_mixing(topo, weighting).unwrap();
            let w = m.weights();
            let n = m.n();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| w[[i, j]]).sum();
                let col: f64 = (0..n).map(|j| w[[j, i]]).sum();
                assert!((row - 1.0).abs() <= 1e-12, "{topo:?} {weighting:?} row {i}");
                assert!((col - 1.0).abs() <= 1e-12, "{topo:?} {weighting:?} col {i}");
                for j in 0..n {
                    assert!(w[[i, j]] >= 0.0);
                    if i != j && !adjacency[i][j] {
                        assert_eq!(w[[i, j]], 0.0, "sparsity pattern violated at ({i},{j})");
                    }
                }
            }
            assert!(m.rho() < 1.0);
            // Independent oracle: plain power iteration on (W−J)ᵀ(W−J).
            let oracle = power_iteration_oracle(w);
            assert!(
                (m.rho() - oracle).abs() <= 1e-8,
                "{topo:?} {weighting:?}: rho {} vs oracle {oracle}",
                m.rho()
            );
        }
    }

    // Eigendecomposition oracle for the ring-4 lazy-Metropolis circulant:
    // eigenvalues are 1/2 + cos(2πk/4)/2 = {1, 1/2, 0, 1/2}, so ρ = 1/2.
    let ring4 = build_mixing(&Topology::Ring { n: 4 }, Weighting::LazyMetropolis).unwrap();
    let analytic = (1..4)
        .map(|k| 0.5 + 0.5 * (2.0 * std::f64::consts::PI * k as f64 / 4.0).cos())
        .map(f64::abs)
        .fold(0.0, f64::max);
    assert!((analytic - 0.5).abs() < 1e-15);
    assert!(
        (ring4.rho() - 0.5).abs() <= 1e-10,
        "ring-4 rho {} != 1/2",
        ring4.rho()
    );
    println!("PASS criterion 2: mixing invariants and ring-4 spectral value");
}

fn power_iteration_oracle(w: &Array2<f64>) -> f64 {
    let n = w.nrows();
    let a = Array2::from_shape_fn((n, n), |(i, j)| w[[i, j]] - 1.0 / n as f64);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    for _ in 0..500_000 {
        // u = aᵀ a v
        let mut av = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                av[i] += a[[i, j]] * v[j];
            }
        }
        let mut u = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                u[i] += a[[j, i]] * av[j];
            }
        }
        let rayleigh: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (ui, vi) in u.iter().zip(v.iter_mut()) {
            *vi = ui / norm;
        }
        if (rayleigh - lambda).abs() <= 1e-16 * rayleigh.abs().max(1.0) {
            lambda = rayleigh;
            break;
        }
        lambda = rayleigh;
    }
    lambda.max(0.0).sqrt()
}

/// Criterion 3: degenerate equivalences against standalone references.
#[test]
fn criterion_3_degenerate_equivalence() {
    let start = Instant::now();
    let seed = 99;
    let rounds = 100;

    // (a) DAMSCo with n = 1, Q = identity, γ = 1 against a standalone
    // AMSGrad loop.
    let problem = make_problem(
        &FamilySpec::NonconvexRegression {
            samples_per_agent: 30,
            lambda: 0.1,
            classes: 10,
            noise: 0.1,
        },
        1,
        6,
        seed,
        HeterogeneityMode::IidShuffle,
    )
    .unwrap();
    let oracle = GradientOracle::gaussian(0.05);
    let mixing = build_mixing(&Topology::Complete { n: 1 }, Weighting::UniformNeighbor).unwrap();
    let params = DamscoParams {
        alpha: 0.05,
        beta1: 0.9,
        beta2: 0.999,
        delta: 1e-8,
        gamma: 1.0,
    };
    let mut state = DamscoState::new(1, 6, CommMode::SharedEstimates);

    // Standalone AMSGrad reference, driven by the same oracle streams.
    let d = 6;
    let mut x = vec![0.0f64; d];
    let mut m = vec![0.0f64; d];
    let mut u_hat = vec![0.0f64; d];
    let mut u = vec![0.0f64; d];
    let mut worst = 0.0f64;
    for t in 0..rounds {
        damsco_round(
            &mut state,
            &problem,
            &oracle,
            &mixing,
            &CompressorSpec::identity(),
            &params,
            seed,
        )
        .unwrap();
        let mut rng = stream_for(seed, StreamKind::Gradient, 0, t);
        let g = problem.sample_gradient(0, &x, &oracle, &mut rng).unwrap();
        for k in 0..d {
            m[k] = params.beta1 * m[k] + (1.0 - params.beta1) * g[k];
            u_hat[k] = params.beta2 * u_hat[k] + (1.0 - params.beta2) * g[k] * g[k];
            u[k] = u[k].max(u_hat[k]);
            x[k] -= params.alpha * m[k] / (u[k] + params.delta).sqrt();
        }
        for k in 0..d {
            worst = worst.max((state.x[[0, k]] - x[k]).abs());
        }
    }
    assert!(worst <= 1e-12, "DAMSCo vs AMSGrad deviation {worst}");
    println!("  DAMSCo(n=1, Q=I, gamma=1) vs AMSGrad: max deviation {worst:.2e}");

    // (b) DaSHCo with β₁ = 0, Q = identity, γ_x = γ_g = 1 against a
    // gradient-tracking SGD loop.
    let n = 4;
    let d = 6;
    let problem = make_problem(
        &FamilySpec::NonconvexRegression {
            samples_per_agent: 30,
            lambda: 0.1,
            classes: 10,
            noise: 0.1,
        },
        n,
        d,
        seed + 1,
        HeterogeneityMode::IidShuffle,
    )
    .unwrap();
    let oracle = GradientOracle::gaussian(0.05);
    let mixing = build_mixing(&Topology::Ring { n }, Weighting::LazyMetropolis).unwrap();
    let params = DashcoParams {
        alpha: 0.05,
        beta1: 0.0,
        gamma_x: 1.0,
        gamma_g: 1.0,
    };
    let mut state = DashcoState::new(n, d, CommMode::SharedEstimates);

    let mut x_ref = Array2::<f64>::zeros((n, d));
    let mut g_ref = Array2::<f64>::zeros((n, d));
    let mut f_prev = Array2::<f64>::zeros((n, d));
    let mut worst = 0.0f64;
    for t in 0..rounds {
        dashco_round(
            &mut state,
            &problem,
            &oracle,
            &mixing,
            &CompressorSpec::identity(),
            &CompressorSpec::identity(),
            &params,
            seed + 1,
        )
        .unwrap();
        // Reference: G ← (G − F_prev + F)·W; X ← (X − αG)·W.
        let mut fresh = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            let xi: Vec<f64> = x_ref.row(i).to_vec();
            let mut rng = stream_for(seed + 1, StreamKind::Gradient, i as u64, t);
            let g = problem.sample_gradient(i, &xi, &oracle, &mut rng).unwrap();
            for k in 0..d {
                fresh[[i, k]] = g[k];
            }
        }
        let g_half = Array2::from_shape_fn((n, d), |(i, k)| {
            g_ref[[i, k]] - f_prev[[i, k]] + fresh[[i, k]]
        });
        g_ref = mix_rows(&g_half, mixing.weights());
        let x_half = Array2::from_shape_fn((n, d), |(i, k)| {
            x_ref[[i, k]] - params.alpha * g_ref[[i, k]]
        });
        x_ref = mix_rows(&x_half, mixing.weights());
        f_prev = fresh;
        worst = worst.max(max_abs_diff(&state.x, &x_ref));
    }
    assert!(worst <= 1e-12, "DaSHCo vs gradient tracking deviation {worst}");
    println!("  DaSHCo(beta1=0, Q=I, gamma=1) vs tracking SGD: max deviation {worst:.2e}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS criterion 3: degenerate equivalences ({elapsed:?})");
}

/// Criterion 4: per-round identities: DAMSCo mean preservation and
/// u-monotonicity, the z-sequence residual, the DaSHCo tracking-mean
/// identity, and bitwise cache honesty between communication modes.
#[test]
fn criterion_4_per_round_identities() {
    // DAMSCo with compression and noise, history retained.
    let config = ExperimentConfig::from_toml(
        r#"
method = "damsco"
t = 300
n = 4
d = 3
record_every = 10
master_seed = 5

[problem]
family = "hetero_quadratic"
span = [0.0, 6.0]

[oracle]
sigma = 0.2

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.5

[schedule]
derivation = "manual"
alpha = 0.05
beta1 = 0.9
beta2 = 0.99
delta = 1e-6
gamma = 0.4
"#,
    )
    .unwrap();
    let opts = RunOptions {
        keep_history: true,
        ..RunOptions::default()
    };
    let out = run_experiment(&config, &opts).unwrap();
    let diag = out.record.diagnostics;
    assert!(
        diag.mean_preservation <= 1e-12,
        "mean preservation residual {}",
        diag.mean_preservation
    );
    assert_eq!(diag.u_monotonicity_violations, 0);
    assert!(
        diag.cache_consistency <= 1e-10,
        "v-cache drift {}",
        diag.cache_consistency
    );
    let residual = z_sequence_check(out.history.as_ref().unwrap()).unwrap();
    assert!(residual <= 1e-9, "z-sequence residual {residual}");
    println!(
        "  DAMSCo: mean-preservation {:.2e}, z-residual {residual:.2e}, cache drift {:.2e}",
        diag.mean_preservation, diag.cache_consistency
    );

    // The same identities also hold with identity compression.
    let identity_config = {
        let mut c = config.clone();
        c.compressor = Some(dcopt::config::CompressorSection {
            kind: dcopt::config::CompressorKindName::Identity,
            k: None,
            ratio: None,
            s: None,
            p: None,
        });
        c
    };
    let out_id = run_experiment(&identity_config, &opts).unwrap();
    let residual_id = z_sequence_check(out_id.history.as_ref().unwrap()).unwrap();
    assert!(residual_id <= 1e-9, "z-sequence residual {residual_id}");

    // DaSHCo tracking-mean identity.
    let dashco_config = ExperimentConfig::from_toml(
        r#"
method = "dashco"
t = 300
n = 5
d = 3
record_every = 10
master_seed = 6

[problem]
family = "hetero_quadratic"
span = [0.0, 6.0]

[oracle]
sigma = 0.2

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.5

[schedule]
derivation = "manual"
alpha = 0.03
beta1 = 0.8
gamma_x = 0.3
gamma_g = 0.3
"#,
    )
    .unwrap();
    let out = run_experiment(&dashco_config, &RunOptions::default()).unwrap();
    assert!(
        out.record.diagnostics.tracking_mean <= 1e-10,
        "tracking-mean residual {}",
        out.record.diagnostics.tracking_mean
    );
    println!(
        "  DaSHCo: tracking-mean residual {:.2e}",
        out.record.diagnostics.tracking_mean
    );

    // Cache honesty: delta-only replica communication must reproduce the
    // full-gossip trajectory bitwise, for both engines.
    for cfg in [&config, &dashco_config] {
        let shared = run_experiment(
            cfg,
            &RunOptions {
                comm_mode: CommMode::SharedEstimates,
                ..RunOptions::default()
            },
        )
        .unwrap();
        let replicas = run_experiment(
            cfg,
            &RunOptions {
                comm_mode: CommMode::DeltaReplicas,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(
            shared.to_csv(),
            replicas.to_csv(),
            "recorded trajectories differ between communication modes"
        );
        let bitwise_equal = shared
            .final_x
            .iter()
            .zip(replicas.final_x.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(bitwise_equal, "final states differ bitwise");
    }
    println!("  cache honesty: delta-replica trajectories bitwise equal to full gossip");
    println!("PASS criterion 4: per-round identities");
}

/// Criterion 5: with coordinate clipping at B∞ = 1, the first and second
/// moments stay inside their clipping-implied bounds at every round and agent.
#[test]
fn criterion_5_bounded_moments() {
    let n = 4;
    let d = 3;
    let problem = make_problem(
        &FamilySpec::HeteroQuadratic {
            centers: None,
            span: Some((0.0, 10.0)),
        },
        n,
        d,
        17,
        HeterogeneityMode::IidShuffle,
    )
    .unwrap();
    let oracle = GradientOracle::gaussian(0.5).with_clip(1.0);
    let mixing = build_mixing(&Topology::Ring { n }, Weighting::LazyMetropolis).unwrap();
    let params = DamscoParams {
        alpha: 0.05,
        beta1: 0.9,
        beta2: 0.99,
        delta: 1e-8,
        gamma: 0.5,
    };
    let mut state = DamscoState::new(n, d, CommMode::SharedEstimates);
    let b_inf = 1.0f64;
    for t in 0..200 {
        damsco_round(
            &mut state,
            &problem,
            &oracle,
            &mixing,
            &CompressorSpec::top_k(Sparsity::Count(1)),
            &params,
            17,
        )
        .unwrap();
        let m_inf = state.m.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let u_inf = state.u.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(m_inf <= b_inf, "round {t}: ‖m‖∞ = {m_inf}");
        assert!(u_inf <= b_inf * b_inf, "round {t}: ‖u‖∞ = {u_inf}");
        // The running max dominates the EMA at every coordinate.
        assert!(state
            .u
            .iter()
            .zip(state.u_hat.iter())
            .all(|(u, uh)| u >= uh));
        // Sharper form: ‖u‖∞ ≤ (1 − β₂^{t+1}) B∞².
        let sharp = (1.0 - params.beta2.powi(t + 1)) * b_inf * b_inf;
        assert!(
            u_inf <= sharp + 1e-15,
            "round {t}: ‖u‖∞ = {u_inf} > (1−β₂^{{t+1}})B∞² = {sharp}"
        );
    }
    println!("PASS criterion 5: bounded moments under clipping");
}

/// Criterion 6: DaSHCo drives the heterogeneous quadratic to the analytic
/// minimizer under top-k compression on both channels.
#[test]
fn criterion_6_heterogeneous_convergence() {
    let start = Instant::now();
    let config = ExperimentConfig::from_toml(
        r#"
method = "dashco"
t = 20000
n = 5
d = 5
record_every = 100
master_seed = 11

[problem]
family = "hetero_quadratic"
span = [0.0, 10.0]

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.4

[schedule]
derivation = "manual"
alpha = 0.05
beta1 = 0.8
gamma_x = 0.3
gamma_g = 0.3
"#,
    )
    .unwrap();
    let out = run_experiment(&config, &RunOptions::default()).unwrap();
    let last = out.record.records.last().unwrap();
    assert!(
        last.stationarity <= 1e-8,
        "final ‖∇f(x̄)‖² = {}",
        last.stationarity
    );
    assert!(
        last.consensus_error <= 1e-8,
        "final consensus error = {}",
        last.consensus_error
    );

    // The analytic minimizer is the mean of the centers; recover it
    // coordinate-wise.
    let parts = dcopt::harness::instantiate(&config).unwrap();
    let minimizer = parts.problem.analytic_stationary.clone().unwrap();
    let n = config.n;
    for k in 0..config.d {
        let mean: f64 = (0..n).map(|i| out.final_x[[i, k]]).sum::<f64>() / n as f64;
        assert!(
            (mean - minimizer[k]).abs() <= 1e-4,
            "coordinate {k}: x̄ = {mean} vs c̄ = {}",
            minimizer[k]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS criterion 6: heterogeneous convergence (stationarity {:.2e}, consensus {:.2e}, {elapsed:?})",
        last.stationarity, last.consensus_error
    );
}

/// Criterion 7: rate shape: with √n/(σ√T)-scaled steps the running-average
/// metric decreases with T and the tail decay exponent sits near −1/2.
#[test]
fn criterion_7_rate_shape() {
    let start = Instant::now();
    let theta = 0.4f64;
    let sigma = 0.5f64;
    let n = 8usize;
    let mut avgs = Vec::new();
    let mut exponent_long = 0.0;
    for t in [2000u64, 8000] {
        let alpha = theta * (n as f64).sqrt() / (sigma * (t as f64).sqrt());
        let config = ExperimentConfig::from_toml(&format!(
            r#"
method = "dashco"
t = {t}
n = {n}
d = 10
record_every = 10
master_seed = 3

[problem]
family = "nonconvex_regression"
samples_per_agent = 25
lambda = 0.1
data_noise = 0.1

[oracle]
sigma = {sigma}

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.5

[schedule]
derivation = "manual"
alpha = {alpha}
beta1 = 0.9
gamma_x = {alpha}
gamma_g = {alpha}
"#
        ))
        .unwrap();
        let out = run_experiment(&config, &RunOptions::default()).unwrap();
        let summary = rate_summary(&out.record.records).unwrap();
        println!(
            "  T = {t}: avg metric {:.4e}, fitted exponent {:.3}",
            summary.avg_metric, summary.fitted_exponent
        );
        avgs.push(summary.avg_metric);
        exponent_long = summary.fitted_exponent;
    }
    assert!(
        avgs[1] < avgs[0],
        "running-average metric did not decrease with T: {avgs:?}"
    );
    assert!(
        (-0.8..=-0.3).contains(&exponent_long),
        "fitted exponent {exponent_long} outside [-0.8, -0.3]"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!("PASS criterion 7: rate shape ({elapsed:?})");
}

/// Criterion 8: linear-speedup direction on the pure-noise quadratic:
/// quadrupling the agents divides the average metric by about four.
#[test]
fn criterion_8_linear_speedup() {
    let start = Instant::now();
    let mut runs = Vec::new();
    for n in [4usize, 16] {
        let centers: Vec<String> = (0..n).map(|_| "[0.0, 0.0, 0.0, 0.0]".into()).collect();
        let config = ExperimentConfig::from_toml(&format!(
            r#"
method = "dashco"
t = 3000
n = {n}
d = 4
record_every = 1
master_seed = 21

[problem]
family = "hetero_quadratic"
centers = [{}]

[oracle]
sigma = 1.0

[topology]
kind = "complete"
weighting = "uniform_neighbor"

[compressor]
kind = "identity"

[schedule]
derivation = "manual"
alpha = 0.1
beta1 = 0.0
gamma_x = 1.0
gamma_g = 1.0
"#,
            centers.join(", ")
        ))
        .unwrap();
        let out = run_experiment(&config, &RunOptions::default()).unwrap();
        runs.push((n, out.record.records));
    }
    let report = speedup_report(&[(runs[0].0, &runs[0].1[..]), (runs[1].0, &runs[1].1[..])])
        .unwrap();
    assert!(report.monotone, "larger n did not reduce the metric");
    assert!(
        (2.8..=5.6).contains(&report.ratio),
        "speedup ratio {} outside [2.8, 5.6]",
        report.ratio
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "PASS criterion 8: linear speedup (ratio {:.2}, {elapsed:?})",
        report.ratio
    );
}

/// Criterion 9: determinism: identical configs produce identical bytes and
/// the result is invariant to the rayon thread count.
#[test]
fn criterion_9_determinism() {
    let config = ExperimentConfig::from_toml(
        r#"
method = "dashco"
t = 200
n = 6
d = 4
record_every = 10
master_seed = 33

[problem]
family = "nonconvex_regression"
samples_per_agent = 20
lambda = 0.1
data_noise = 0.1

[oracle]
sigma = 0.3

[topology]
kind = "ring"

[compressor]
kind = "random_k"
ratio = 0.5

[schedule]
derivation = "manual"
alpha = 0.02
beta1 = 0.9
gamma_x = 0.3
gamma_g = 0.3
"#,
    )
    .unwrap();
    let opts = RunOptions::default();
    let a = run_experiment(&config, &opts).unwrap().to_csv();
    let b = run_experiment(&config, &opts).unwrap().to_csv();
    assert_eq!(a, b, "two invocations differ");

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&config, &opts).unwrap().to_csv());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(|| run_experiment(&config, &opts).unwrap().to_csv());
    assert_eq!(single, many, "results depend on the thread count");
    assert_eq!(a, single, "pool runs differ from default-pool runs");
    println!("PASS criterion 9: determinism across invocations and thread counts");
}
