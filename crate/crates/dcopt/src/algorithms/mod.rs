//! The iteration engines and their parameter schedules.
//!
//! Both engines advance all agents synchronously. One round consists of a
//! local phase (gradient sampling, momentum updates, compression), executed
//! per agent with RNG streams derived purely from
//! `(master_seed, purpose, agent, round)`, followed by a mixing phase over
//! the gossip matrix. Trajectories are therefore independent of agent
//! execution order and of the rayon thread count.

pub mod damsco;
pub mod dashco;
pub mod diagnostics;
pub mod schedule;

pub use damsco::{damsco_round, DamscoParams, DamscoState};
pub use dashco::{dashco_round, DashcoParams, DashcoState};
pub use diagnostics::{z_sequence_check, DamscoHistory};
pub use schedule::{
    make_schedule, ConstraintCheck, DerivedSchedule, Derivation, Schedule, ScheduleError,
};

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::compression::{compress, CompressedMessage, CompressionError, CompressorSpec};
use crate::linalg::{mix_one_row, mix_rows};
use crate::metrics::RunDiagnostics;
use crate::problems::ProblemError;
use crate::topology::MixingMatrix;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: state is {state_d}, problem is {problem_d}")]
    DimensionMismatch { state_d: usize, problem_d: usize },
    #[error("non-finite value in {what} at round {round}")]
    NonFiniteState { round: u64, what: &'static str },
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// How the simulator materializes each agent's view of its neighbors'
/// estimates.
///
/// Both modes exchange exactly the same compressed deltas and produce
/// bitwise-identical trajectories; `DeltaReplicas` additionally maintains a
/// per-agent replica of the estimate matrix that is updated *only* from the
/// received deltas, demonstrating that delta-only communication loses
/// nothing relative to re-gossiping full estimate matrices every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommMode {
    #[default]
    SharedEstimates,
    DeltaReplicas,
}

/// What one synchronous round hands back to the runner.
#[derive(Debug)]
pub struct RoundOutput {
    /// One entry per agent (two per agent for engines that also communicate
    /// gradients).
    pub messages: Vec<CompressedMessage>,
    /// Total encoded bytes of this round's messages.
    pub bytes: u64,
    /// Worst per-round identity residuals (see [`RunDiagnostics`]).
    pub residuals: RunDiagnostics,
    /// The sampled stochastic gradients of this round (agent-major), kept
    /// for diagnostic history.
    pub gradients: Array2<f64>,
}

/// Shared estimate-and-compress machinery for one communication channel
/// (the x̲ or g̲ sequence).
#[derive(Debug, Clone)]
pub(crate) struct EstimateChannel {
    /// The senders' own estimates (row `i` = agent `i`'s x̲_i).
    truth: Array2<f64>,
    /// In [`CommMode::DeltaReplicas`], `replicas[i]` is agent `i`'s
    /// delta-reconstructed copy of the whole estimate matrix.
    replicas: Option<Vec<Array2<f64>>>,
    /// Incremental neighbor-weighted cache: row `i` tracks `Σ_j W_ji x̲_j`,
    /// updated from compressed deltas only.
    v_cache: Array2<f64>,
}

impl EstimateChannel {
    pub(crate) fn new(n: usize, d: usize, mode: CommMode) -> Self {
        Self {
            truth: Array2::zeros((n, d)),
            replicas: match mode {
                CommMode::SharedEstimates => None,
                CommMode::DeltaReplicas => Some(vec![Array2::zeros((n, d)); n]),
            },
            v_cache: Array2::zeros((n, d)),
        }
    }

    pub(crate) fn estimates(&self) -> &Array2<f64> {
        &self.truth
    }

    pub(crate) fn v_cache(&self) -> &Array2<f64> {
        &self.v_cache
    }

    /// Compress `target_i − x̲_i` for one agent. Pure; does not mutate the
    /// channel.
    pub(crate) fn compress_delta(
        &self,
        agent: usize,
        target: &[f64],
        spec: &CompressorSpec,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> Result<CompressedMessage, CompressionError> {
        let row = self.truth.row(agent);
        let diff: Vec<f64> = target
            .iter()
            .zip(row.iter())
            .map(|(t, e)| t - e)
            .collect();
        compress(spec, &diff, rng)
    }

    /// Apply this round's decoded deltas: advance the senders' estimates,
    /// every replica, and the incremental mixing cache.
    pub(crate) fn apply_deltas(&mut self, deltas: &Array2<f64>, w: &MixingMatrix) {
        let (n, d) = (self.truth.nrows(), self.truth.ncols());
        for i in 0..n {
            for k in 0..d {
                self.truth[[i, k]] += deltas[[i, k]];
            }
        }
        if let Some(replicas) = &mut self.replicas {
            for replica in replicas.iter_mut() {
                for i in 0..n {
                    for k in 0..d {
                        replica[[i, k]] += deltas[[i, k]];
                    }
                }
            }
        }
        let mixed_deltas = mix_rows(deltas, w.weights());
        for i in 0..n {
            for k in 0..d {
                self.v_cache[[i, k]] += mixed_deltas[[i, k]];
            }
        }
    }

    /// The neighbor-weighted estimates `v_i = Σ_j W_ji x̲_j`, row per agent.
    /// In replica mode each row is computed from that agent's own replica;
    /// the arithmetic is identical to the shared path, so the trajectories
    /// agree bitwise.
    pub(crate) fn mixed(&self, w: &MixingMatrix) -> Array2<f64> {
        match &self.replicas {
            None => mix_rows(&self.truth, w.weights()),
            Some(replicas) => {
                let (n, d) = (self.truth.nrows(), self.truth.ncols());
                let mut out = Array2::zeros((n, d));
                for i in 0..n {
                    let row = mix_one_row(&replicas[i], w.weights(), i);
                    for k in 0..d {
                        out[[i, k]] = row[k];
                    }
                }
                out
            }
        }
    }

    /// `‖v_cache − truth·W‖∞`: how far the incremental cache has drifted
    /// from a fresh recomputation.
    pub(crate) fn cache_residual(&self, w: &MixingMatrix) -> f64 {
        let fresh = mix_rows(&self.truth, w.weights());
        self.v_cache
            .iter()
            .zip(fresh.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn max_abs_mean_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (n, d) = (a.nrows(), a.ncols());
    let mut worst = 0.0f64;
    for k in 0..d {
        let ma: f64 = (0..n).map(|i| a[[i, k]]).sum::<f64>() / n as f64;
        let mb: f64 = (0..n).map(|i| b[[i, k]]).sum::<f64>() / n as f64;
        worst = worst.max((ma - mb).abs());
    }
    worst
}

pub(crate) fn check_finite(
    arr: &Array2<f64>,
    what: &'static str,
    round: u64,
) -> Result<(), EngineError> {
    if arr.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::NonFiniteState { round, what })
    }
}

pub(crate) fn row_mean(a: &Array2<f64>) -> Array1<f64> {
    let (n, d) = (a.nrows(), a.ncols());
    let mut out = Array1::zeros(d);
    for k in 0..d {
        out[k] = (0..n).map(|i| a[[i, k]]).sum::<f64>() / n as f64;
    }
    out
}
