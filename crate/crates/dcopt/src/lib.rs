//! Deterministic desk-scale simulator for decentralized stochastic
//! optimization with compressed communication.
//!
//! `n` agents, each holding a local objective `f_i`, cooperate to minimize
//! `f(x) = (1/n) Σ_i f_i(x)` by exchanging compressed messages with their
//! graph neighbors. Two iteration engines are provided:
//!
//! - **DAMSCo**: decentralized AMSGrad with compressed communication: one
//!   gossip round per update, per-coordinate adaptive step sizes.
//! - **DaSHCo**: decentralized stochastic heavy-ball with gradient tracking
//!   and compressed communication: two gossip rounds per update, robust to
//!   data heterogeneity.
//!
//! Supporting machinery: doubly stochastic mixing matrices with spectral
//! diagnostics ([`topology`]), contraction-certified compression operators
//! ([`compression`]), synthetic problem suites with exact and noisy gradient
//! oracles ([`problems`]), per-round evaluation metrics ([`metrics`]), and a
//! config-driven experiment harness ([`harness`]).

pub mod algorithms;
pub mod compression;
pub mod config;
pub mod harness;
pub mod linalg;
pub mod log;
pub mod metrics;
pub mod plot;
pub mod problems;
pub mod rng;
pub mod topology;
