//! Decentralized stochastic heavy-ball with gradient tracking and compressed
//! communication.
//!
//! Each round communicates two compressed messages per agent: one for the
//! tracked-gradient estimate `g̲` and one for the model estimate `x̲`:
//!
//! ```text
//! g^{−½} ← g^{t−1} − g̃^{t−1} + g̃^t        g̲ ← g̲ + Q_g[g^{−½} − g̲]
//! g ← g^{−½} + γ_g (Σ_j W_ji g̲_j − g̲_i)
//! m ← β₁ m + (1−β₁) g                      x^{+½} ← x − α m
//! x̲ ← x̲ + Q_x[x^{+½} − x̲]                x ← x^{+½} + γ_x (Σ_j W_ji x̲_j − x̲_i)
//! ```
//!
//! The tracking recursion keeps the network mean of `g` equal to the mean of
//! the raw stochastic gradients `g̃` at every round (the mixing term is
//! mean-free); the residual of that identity is reported each round.

use ndarray::Array2;
use rayon::prelude::*;

use crate::compression::{CompressedMessage, CompressorSpec};
use crate::metrics::RunDiagnostics;
use crate::problems::{GradientOracle, ProblemInstance};
use crate::rng::{stream_for, StreamKind};
use crate::topology::MixingMatrix;

use super::{check_finite, max_abs_mean_diff, CommMode, EngineError, EstimateChannel, RoundOutput};

/// Algorithmic parameters of one DaSHCo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DashcoParams {
    pub alpha: f64,
    pub beta1: f64,
    pub gamma_x: f64,
    pub gamma_g: f64,
}

/// Full per-agent iteration memory, zero-initialized. With everything at
/// zero, round 0 computes `g^{−½} = 0 − 0 + g̃⁰ = g̃⁰`.
#[derive(Debug, Clone)]
pub struct DashcoState {
    /// Models, agent-major.
    pub x: Array2<f64>,
    /// Tracked gradients `g`.
    pub g: Array2<f64>,
    /// Last raw stochastic gradients `g̃`.
    pub g_tilde: Array2<f64>,
    /// First moments.
    pub m: Array2<f64>,
    pub(crate) x_channel: EstimateChannel,
    pub(crate) g_channel: EstimateChannel,
    pub round: u64,
}

impl DashcoState {
    pub fn new(n: usize, d: usize, mode: CommMode) -> Self {
        Self {
            x: Array2::zeros((n, d)),
            g: Array2::zeros((n, d)),
            g_tilde: Array2::zeros((n, d)),
            m: Array2::zeros((n, d)),
            x_channel: EstimateChannel::new(n, d, mode),
            g_channel: EstimateChannel::new(n, d, mode),
            round: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x_under(&self) -> &Array2<f64> {
        self.x_channel.estimates()
    }

    pub fn g_under(&self) -> &Array2<f64> {
        self.g_channel.estimates()
    }
}

/// Advance all agents by one synchronous round. Two messages per agent are
/// logged: the gradient-channel delta first, then the model-channel delta.
#[allow(clippy::too_many_arguments)]
pub fn dashco_round(
    state: &mut DashcoState,
    problem: &ProblemInstance,
    oracle: &GradientOracle,
    mixing: &MixingMatrix,
    compressor_x: &CompressorSpec,
    compressor_g: &CompressorSpec,
    params: &DashcoParams,
    master_seed: u64,
) -> Result<RoundOutput, EngineError> {
    let (n, d) = (state.n(), state.d());
    if d != problem.d {
        return Err(EngineError::DimensionMismatch {
            state_d: d,
            problem_d: problem.d,
        });
    }
    let t = state.round;

    // Phase 1 (per agent): sample g̃, form g^{t−1/2}, compress its estimate
    // delta.
    struct GradLocal {
        g_tilde: Vec<f64>,
        g_half: Vec<f64>,
        message: CompressedMessage,
    }
    let state_ref: &DashcoState = state;
    let grad_locals: Vec<Result<GradLocal, EngineError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut grad_rng = stream_for(master_seed, StreamKind::Gradient, i as u64, t);
            let x_i: Vec<f64> = state_ref.x.row(i).to_vec();
            let g_tilde = problem.sample_gradient(i, &x_i, oracle, &mut grad_rng)?;
            let g_half: Vec<f64> = (0..d)
                .map(|k| state_ref.g[[i, k]] - state_ref.g_tilde[[i, k]] + g_tilde[k])
                .collect();
            let mut comp_rng =
                stream_for(master_seed, StreamKind::CompressGradient, i as u64, t);
            let message =
                state_ref
                    .g_channel
                    .compress_delta(i, &g_half, compressor_g, &mut comp_rng)?;
            Ok(GradLocal {
                g_tilde,
                g_half,
                message,
            })
        })
        .collect();

    let mut g_half = Array2::zeros((n, d));
    let mut g_deltas = Array2::zeros((n, d));
    let mut messages = Vec::with_capacity(2 * n);
    let mut gradients = Array2::zeros((n, d));
    for (i, local) in grad_locals.into_iter().enumerate() {
        let local = local?;
        let decoded = local.message.decode();
        for k in 0..d {
            gradients[[i, k]] = local.g_tilde[k];
            g_half[[i, k]] = local.g_half[k];
            g_deltas[[i, k]] = decoded[k];
        }
        state.g_tilde.row_mut(i).assign(&ndarray::Array1::from(local.g_tilde));
        messages.push(local.message);
    }
    check_finite(&g_half, "g^{t-1/2}", t)?;
    check_finite(&g_deltas, "gradient deltas", t)?;

    // Gradient mixing: g = g^{t−1/2} + γ_g (Σ_j W_ji g̲_j − g̲_i).
    state.g_channel.apply_deltas(&g_deltas, mixing);
    let vg = state.g_channel.mixed(mixing);
    let g_under = state.g_channel.estimates();
    for i in 0..n {
        for k in 0..d {
            state.g[[i, k]] = g_half[[i, k]] + params.gamma_g * (vg[[i, k]] - g_under[[i, k]]);
        }
    }
    check_finite(&state.g, "g", t)?;
    let g_cache_residual = state.g_channel.cache_residual(mixing);

    // Phase 2 (per agent): momentum, half-step, model-estimate compression.
    let mut x_half = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            let m = params.beta1 * state.m[[i, k]] + (1.0 - params.beta1) * state.g[[i, k]];
            state.m[[i, k]] = m;
            x_half[[i, k]] = state.x[[i, k]] - params.alpha * m;
        }
    }
    check_finite(&state.m, "m", t)?;
    check_finite(&x_half, "x^{t+1/2}", t)?;

    let state_ref: &DashcoState = state;
    let x_half_ref = &x_half;
    let x_locals: Vec<Result<CompressedMessage, EngineError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let target: Vec<f64> = x_half_ref.row(i).to_vec();
            let mut comp_rng = stream_for(master_seed, StreamKind::CompressModel, i as u64, t);
            Ok(state_ref
                .x_channel
                .compress_delta(i, &target, compressor_x, &mut comp_rng)?)
        })
        .collect();
    let mut x_deltas = Array2::zeros((n, d));
    for (i, msg) in x_locals.into_iter().enumerate() {
        let msg = msg?;
        let decoded = msg.decode();
        for k in 0..d {
            x_deltas[[i, k]] = decoded[k];
        }
        messages.push(msg);
    }
    check_finite(&x_deltas, "model deltas", t)?;

    state.x_channel.apply_deltas(&x_deltas, mixing);
    let vx = state.x_channel.mixed(mixing);
    let x_under = state.x_channel.estimates();
    for i in 0..n {
        for k in 0..d {
            state.x[[i, k]] = x_half[[i, k]] + params.gamma_x * (vx[[i, k]] - x_under[[i, k]]);
        }
    }
    check_finite(&state.x, "x", t)?;

    let residuals = RunDiagnostics {
        mean_preservation: max_abs_mean_diff(&state.x, &x_half),
        tracking_mean: max_abs_mean_diff(&state.g, &state.g_tilde),
        cache_consistency: g_cache_residual.max(state.x_channel.cache_residual(mixing)),
        u_monotonicity_violations: 0,
    };
    let bytes = messages.iter().map(|m| m.encoded_bytes as u64).sum();
    state.round += 1;
    Ok(RoundOutput {
        messages,
        bytes,
        residuals,
        gradients,
    })
}
