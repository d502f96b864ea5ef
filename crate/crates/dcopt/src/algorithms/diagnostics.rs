//! Run-history diagnostics.
//!
//! [`z_sequence_check`] verifies the one-step identity of the auxiliary
//! momentum-corrected average
//! `z^t = x̄^t + β₁/(1−β₁)(x̄^t − x̄^{t−1})` for a recorded DAMSCo run:
//!
//! ```text
//! z^{t+1} − z^t = (β₁/(1−β₁))(α/n) Σ_i m_i^{t−1} ∘ (1/√(u_i^{t−1}+δ) − 1/√(u_i^t+δ))
//!                 − (α/n) Σ_i g_i^t/√(u_i^t+δ)
//! ```
//!
//! The identity holds per realization (it does not involve the compression
//! error at all, because the gossip correction never moves the network
//! average), so the residual of any run must sit at floating-point noise.

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::damsco::{DamscoParams, DamscoState};
use super::RoundOutput;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("history unavailable: {0}")]
    HistoryUnavailable(String),
}

/// Per-round snapshots of the quantities the z-identity consumes.
#[derive(Debug, Clone)]
pub struct DamscoHistory {
    params: DamscoParams,
    /// `x̄^0, x̄^1, …` (index `t` holds the average before round `t` ran;
    /// one trailing entry for the final state).
    x_means: Vec<Array1<f64>>,
    m: Vec<Array2<f64>>,
    u: Vec<Array2<f64>>,
    g: Vec<Array2<f64>>,
}

impl DamscoHistory {
    /// Start recording from a freshly initialized (zero) state.
    pub fn new(state: &DamscoState, params: DamscoParams) -> Self {
        Self {
            params,
            x_means: vec![super::row_mean(&state.x)],
            m: Vec::new(),
            u: Vec::new(),
            g: Vec::new(),
        }
    }

    /// Record the snapshot after one completed round.
    pub fn record(&mut self, state: &DamscoState, output: &RoundOutput) {
        self.x_means.push(super::row_mean(&state.x));
        self.m.push(state.m.clone());
        self.u.push(state.u.clone());
        self.g.push(output.gradients.clone());
    }

    pub fn rounds(&self) -> usize {
        self.g.len()
    }
}

/// Maximum over recorded rounds of `‖(z^{t+1} − z^t) − RHS‖₂`.
pub fn z_sequence_check(history: &DamscoHistory) -> Result<f64, DiagnosticsError> {
    let rounds = history.rounds();
    if rounds == 0 {
        return Err(DiagnosticsError::HistoryUnavailable("no rounds recorded".into()));
    }
    if history.x_means.len() != rounds + 1
        || history.m.len() != rounds
        || history.u.len() != rounds
    {
        return Err(DiagnosticsError::HistoryUnavailable(
            "inconsistent history lengths".into(),
        ));
    }
    let p = &history.params;
    let momentum_ratio = p.beta1 / (1.0 - p.beta1);
    let n = history.m[0].nrows();
    let d = history.m[0].ncols();

    // z^t with the convention x̄^{−1} = x̄^0.
    let z = |t: usize| -> Array1<f64> {
        let prev = if t == 0 { &history.x_means[0] } else { &history.x_means[t - 1] };
        let cur = &history.x_means[t];
        Array1::from_shape_fn(d, |k| cur[k] + momentum_ratio * (cur[k] - prev[k]))
    };

    let mut worst = 0.0f64;
    for t in 0..rounds {
        let z_next = z(t + 1);
        let z_cur = z(t);
        let mut residual_sq = 0.0;
        for k in 0..d {
            // First term: m^{t−1} ∘ (1/√(u^{t−1}+δ) − 1/√(u^t+δ)), with the
            // zero-initialized m^{−1}, u^{−1} at t = 0.
            let mut first = 0.0;
            let mut second = 0.0;
            for i in 0..n {
                let (m_prev, u_prev) = if t == 0 {
                    (0.0, 0.0)
                } else {
                    (history.m[t - 1][[i, k]], history.u[t - 1][[i, k]])
                };
                let u_cur = history.u[t][[i, k]];
                first += m_prev
                    * (1.0 / (u_prev + p.delta).sqrt() - 1.0 / (u_cur + p.delta).sqrt());
                second += history.g[t][[i, k]] / (u_cur + p.delta).sqrt();
            }
            let rhs = momentum_ratio * p.alpha / n as f64 * first
                - p.alpha / n as f64 * second;
            let lhs = z_next[k] - z_cur[k];
            residual_sq += (lhs - rhs) * (lhs - rhs);
        }
        worst = worst.max(residual_sq.sqrt());
    }
    Ok(worst)
}
