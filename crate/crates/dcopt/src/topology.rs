//! Mixing (gossip) matrices over communication graphs.
//!
//! A mixing matrix `W` must be doubly stochastic, respect the graph's
//! sparsity pattern, and contract disagreement: `rho = ‖W − J‖₂ < 1` where
//! `J = 11ᵀ/n` is the averaging matrix. Damped variants
//! `Ŵ = γW + (1−γ)I` arise whenever a gossip step is applied with weight
//! `γ ≤ 1`; their contraction factor `ρ̂` feeds the step-size schedules.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::spectral_norm;

/// Tolerance for the doubly-stochastic row/column-sum checks.
const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("gamma must lie in (0, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("matrix violates mixing requirements: {0}")]
    InvalidMixing(String),
}

/// Communication graph shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring { n: usize },
    Grid { rows: usize, cols: usize },
    Complete { n: usize },
    /// Explicit 0-indexed undirected edge list.
    Custom { n: usize, edges: Vec<(usize, usize)> },
}

/// Rule for turning adjacency into gossip weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `W_ij = 1/(1 + max(deg_i, deg_j))` on edges, diagonal residual.
    Metropolis,
    /// Halfway between the identity and the `1/max(deg_i, deg_j)` rule:
    /// `W = (I + M)/2`. On a ring this gives self-weight 1/2 and 1/4 per
    /// neighbor.
    LazyMetropolis,
    /// `W = I − L/(deg_max + 1)` with `L` the graph Laplacian; every edge
    /// carries the same weight.
    UniformNeighbor,
}

/// A validated doubly stochastic gossip matrix with its contraction factor.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    n: usize,
    weights: Array2<f64>,
    rho: f64,
}

/// `Ŵ = γW + (1−γ)I` together with `ρ̂ = ‖Ŵ − J‖₂`.
#[derive(Debug, Clone)]
pub struct DampedMixing {
    pub gamma: f64,
    pub rho_hat: f64,
    weights: Array2<f64>,
}

impl MixingMatrix {
    /// Number of agents.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The weight matrix.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Spectral norm of `W − J`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Validate an externally supplied weight matrix against an adjacency
    /// structure and wrap it. All mixing invariants are enforced here:
    /// nonnegativity, row/column stochasticity, the sparsity pattern, and
    /// `rho < 1`.
    pub fn from_weights(
        weights: Array2<f64>,
        adjacency: &[Vec<bool>],
    ) -> Result<Self, TopologyError> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(TopologyError::NonSquare {
                rows: weights.nrows(),
                cols: weights.ncols(),
            });
        }
        if adjacency.len() != n || adjacency.iter().any(|row| row.len() != n) {
            return Err(TopologyError::InvalidDimensions(format!(
                "adjacency must be {n}x{n}"
            )));
        }
        for i in 0..n {
            let mut row_sum = 0.0;
            let mut col_sum = 0.0;
            for j in 0..n {
                let wij = weights[[i, j]];
                if wij < 0.0 {
                    return Err(TopologyError::InvalidMixing(format!(
                        "negative entry W[{i}][{j}] = {wij}"
                    )));
                }
                if i != j && !adjacency[i][j] && wij != 0.0 {
                    return Err(TopologyError::InvalidMixing(format!(
                        "W[{i}][{j}] = {wij} but ({i},{j}) is not an edge"
                    )));
                }
                row_sum += wij;
                col_sum += weights[[j, i]];
            }
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::InvalidMixing(format!(
                    "row {i} sums to {row_sum}"
                )));
            }
            if (col_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::InvalidMixing(format!(
                    "column {i} sums to {col_sum}"
                )));
            }
        }
        let rho = spectral_norm_minus_j(&weights)?;
        if rho >= 1.0 {
            return Err(TopologyError::InvalidMixing(format!(
                "rho = {rho} >= 1; the all-ones direction is not the only fixed direction"
            )));
        }
        Ok(Self { n, weights, rho })
    }
}

impl DampedMixing {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

impl Topology {
    /// Agent count implied by the shape.
    pub fn n(&self) -> usize {
        match self {
            Topology::Ring { n } | Topology::Complete { n } | Topology::Custom { n, .. } => *n,
            Topology::Grid { rows, cols } => rows * cols,
        }
    }

    /// Undirected adjacency (no self loops).
    pub fn adjacency(&self) -> Result<Vec<Vec<bool>>, TopologyError> {
        let n = self.n();
        if n == 0 {
            return Err(TopologyError::InvalidDimensions("n must be >= 1".into()));
        }
        let mut adj = vec![vec![false; n]; n];
        let mut connect = |i: usize, j: usize| {
            if i != j {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        };
        match self {
            Topology::Ring { n } => {
                for i in 0..*n {
                    connect(i, (i + 1) % n);
                }
            }
            Topology::Complete { n } => {
                for i in 0..*n {
                    for j in (i + 1)..*n {
                        connect(i, j);
                    }
                }
            }
            Topology::Grid { rows, cols } => {
                if *rows == 0 || *cols == 0 {
                    return Err(TopologyError::InvalidDimensions(
                        "grid dimensions must be positive".into(),
                    ));
                }
                for r in 0..*rows {
                    for c in 0..*cols {
                        let idx = r * cols + c;
                        if c + 1 < *cols {
                            connect(idx, idx + 1);
                        }
                        if r + 1 < *rows {
                            connect(idx, idx + cols);
                        }
                    }
                }
            }
            Topology::Custom { n, edges } => {
                for &(i, j) in edges {
                    if i >= *n || j >= *n {
                        return Err(TopologyError::InvalidDimensions(format!(
                            "edge ({i},{j}) out of range for n = {n}"
                        )));
                    }
                    connect(i, j);
                }
            }
        }
        Ok(adj)
    }
}

/// Build a validated mixing matrix for a graph and weighting rule.
///
/// Deterministic for fixed inputs; fails on disconnected graphs.
pub fn build_mixing(topology: &Topology, weighting: Weighting) -> Result<MixingMatrix, TopologyError> {
    let n = topology.n();
    let adj = topology.adjacency()?;
    if !is_connected(&adj) {
        return Err(TopologyError::DisconnectedGraph);
    }
    let degrees: Vec<usize> = adj.iter().map(|row| row.iter().filter(|&&e| e).count()).collect();
    let mut w = Array2::<f64>::zeros((n, n));
    match weighting {
        Weighting::Metropolis => {
            fill_edge_weights(&mut w, &adj, |i, j| {
                1.0 / (1.0 + degrees[i].max(degrees[j]) as f64)
            });
        }
        Weighting::LazyMetropolis => {
            // W = (I + M)/2 with M_ij = 1/max(deg_i, deg_j); the residual
            // diagonal is then at least 1/2.
            fill_edge_weights(&mut w, &adj, |i, j| {
                0.5 / degrees[i].max(degrees[j]) as f64
            });
        }
        Weighting::UniformNeighbor => {
            let deg_max = degrees.iter().copied().max().unwrap_or(0) as f64;
            fill_edge_weights(&mut w, &adj, |_, _| 1.0 / (deg_max + 1.0));
        }
    }
    MixingMatrix::from_weights(w, &adj)
}

/// Set `w[i][j]` on edges and put the residual `1 − Σ_j w_ij` on the
/// diagonal. All three weighting rules are symmetric, so the residual
/// diagonal keeps the matrix doubly stochastic.
fn fill_edge_weights(
    w: &mut Array2<f64>,
    adj: &[Vec<bool>],
    weight: impl Fn(usize, usize) -> f64,
) {
    let n = adj.len();
    for i in 0..n {
        let mut off_diag = 0.0;
        for j in 0..n {
            if i != j && adj[i][j] {
                let wij = weight(i, j);
                w[[i, j]] = wij;
                off_diag += wij;
            }
        }
        w[[i, i]] = 1.0 - off_diag;
    }
}

fn is_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if adj[i][j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Largest singular value of `W − J` where `J = 11ᵀ/n`.
pub fn spectral_norm_minus_j(w: &Array2<f64>) -> Result<f64, TopologyError> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(TopologyError::NonSquare {
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    let inv_n = 1.0 / n as f64;
    let shifted = Array2::from_shape_fn((n, n), |(i, j)| w[[i, j]] - inv_n);
    Ok(spectral_norm(&shifted))
}

/// Damp a mixing matrix: `Ŵ = γW + (1−γ)I`.
pub fn damp(w: &MixingMatrix, gamma: f64) -> Result<DampedMixing, TopologyError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(TopologyError::GammaOutOfRange(gamma));
    }
    let n = w.n();
    let mut damped = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let base = gamma * w.weights()[[i, j]];
            damped[[i, j]] = if i == j { base + (1.0 - gamma) } else { base };
        }
    }
    let rho_hat = spectral_norm_minus_j(&damped)?;
    // The spectrum of Ŵ − J on the mean-free subspace is the segment
    // γλ + (1−γ), so ρ̂ can never exceed 1 − γ(1−ρ).
    debug_assert!(rho_hat <= 1.0 - gamma * (1.0 - w.rho()) + 1e-12);
    Ok(DampedMixing {
        gamma,
        rho_hat,
        weights: damped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mix_rows;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn ring(n: usize) -> Topology {
        Topology::Ring { n }
    }

    #[test]
    fn complete_uniform_is_averaging_matrix() {
        let w = build_mixing(&Topology::Complete { n: 4 }, Weighting::UniformNeighbor).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((w.weights()[[i, j]] - 0.25).abs() < 1e-15);
            }
        }
        assert!(w.rho() < 1e-12);
    }

    #[test]
    fn ring4_lazy_metropolis_is_expected_circulant() {
        let w = build_mixing(&ring(4), Weighting::LazyMetropolis).unwrap();
        let expected = array![
            [0.5, 0.25, 0.0, 0.25],
            [0.25, 0.5, 0.25, 0.0],
            [0.0, 0.25, 0.5, 0.25],
            [0.25, 0.0, 0.25, 0.5]
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((w.weights()[[i, j]] - expected[[i, j]]).abs() < 1e-15);
            }
        }
        // Circulant eigenvalues are 1/2 + cos(2πk/4)/2 = {1, 1/2, 0, 1/2}.
        assert!((w.rho() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn two_node_ring_is_averaging() {
        for weighting in [
            Weighting::Metropolis,
            Weighting::LazyMetropolis,
            Weighting::UniformNeighbor,
        ] {
            let w = build_mixing(&ring(2), weighting).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((w.weights()[[i, j]] - 0.5).abs() < 1e-15);
                }
            }
            assert!(w.rho() < 1e-12);
        }
    }

    #[test]
    fn spectral_norm_minus_j_known_values() {
        let j = Array2::from_elem((3, 3), 1.0 / 3.0);
        assert!(spectral_norm_minus_j(&j).unwrap() < 1e-12);

        let eye: Array2<f64> = Array2::eye(2);
        assert!((spectral_norm_minus_j(&eye).unwrap() - 1.0).abs() < 1e-12);

        let ring4 = build_mixing(&ring(4), Weighting::LazyMetropolis).unwrap();
        assert!((spectral_norm_minus_j(ring4.weights()).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn non_square_rejected() {
        let rect = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            spectral_norm_minus_j(&rect),
            Err(TopologyError::NonSquare { .. })
        ));
    }

    #[test]
    fn damp_gamma_one_is_identity_operation() {
        let w = build_mixing(&ring(4), Weighting::LazyMetropolis).unwrap();
        let d = damp(&w, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.weights()[[i, j]], w.weights()[[i, j]]);
            }
        }
        assert!((d.rho_hat - w.rho()).abs() < 1e-12);
    }

    #[test]
    fn damp_of_averaging_matrix() {
        // Ŵ = γJ + (1−γ)I has eigenvalue 1−γ on the whole mean-free space.
        let w = build_mixing(&Topology::Complete { n: 5 }, Weighting::UniformNeighbor).unwrap();
        for gamma in [0.25, 0.5, 0.9] {
            let d = damp(&w, gamma).unwrap();
            assert!((d.rho_hat - (1.0 - gamma)).abs() < 1e-10, "gamma={gamma}");
        }
    }

    #[test]
    fn damp_ring4_half() {
        // Mean-free eigenvalues 0.5·{1/2, 0, 1/2} + 0.5 → ρ̂ = 0.75.
        let w = build_mixing(&ring(4), Weighting::LazyMetropolis).unwrap();
        let d = damp(&w, 0.5).unwrap();
        assert!((d.rho_hat - 0.75).abs() < 1e-10);
        assert!(d.rho_hat <= 1.0 - 0.5 * (1.0 - w.rho()) + 1e-12);
    }

    #[test]
    fn damp_rejects_bad_gamma() {
        let w = build_mixing(&ring(3), Weighting::Metropolis).unwrap();
        assert!(matches!(damp(&w, 0.0), Err(TopologyError::GammaOutOfRange(_))));
        assert!(matches!(damp(&w, 1.5), Err(TopologyError::GammaOutOfRange(_))));
    }

    #[test]
    fn disconnected_custom_graph_rejected() {
        let topo = Topology::Custom {
            n: 4,
            edges: vec![(0, 1), (2, 3)],
        };
        assert!(matches!(
            build_mixing(&topo, Weighting::Metropolis),
            Err(TopologyError::DisconnectedGraph)
        ));
    }

    #[test]
    fn identity_submitted_as_custom_weights_fails_rho_check() {
        let eye: Array2<f64> = Array2::eye(3);
        let adj = vec![
            vec![false, true, false],
            vec![true, false, true],
            vec![false, true, false],
        ];
        let err = MixingMatrix::from_weights(eye, &adj).unwrap_err();
        assert!(matches!(err, TopologyError::InvalidMixing(_)));
        assert!(err.to_string().contains("rho"));
    }

    #[test]
    fn matrix_identities_hold_for_all_builders() {
        let topos = [
            ring(5),
            Topology::Grid { rows: 3, cols: 3 },
            Topology::Complete { n: 6 },
            Topology::Custom {
                n: 5,
                edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)],
            },
        ];
        for topo in &topos {
            for weighting in [
                Weighting::Metropolis,
                Weighting::LazyMetropolis,
                Weighting::UniformNeighbor,
            ] {
                let w = build_mixing(topo, weighting).unwrap();
                let n = w.n();
                let wm = w.weights();
                // (W − I)·1 = 0.
                for i in 0..n {
                    let row_residual: f64 = (0..n).map(|j| wm[[i, j]]).sum::<f64>() - 1.0;
                    assert!(row_residual.abs() <= 1e-12);
                }
                // (W − I)(I − J) = W − I ⟺ (W − I)J = 0: expand the product
                // entrywise and compare against W − I directly.
                for i in 0..n {
                    for j in 0..n {
                        let lhs: f64 = (0..n)
                            .map(|k| {
                                let w_minus_i =
                                    wm[[i, k]] - if i == k { 1.0 } else { 0.0 };
                                let i_minus_j = if k == j { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 };
                                w_minus_i * i_minus_j
                            })
                            .sum();
                        let rhs = wm[[i, j]] - if i == j { 1.0 } else { 0.0 };
                        assert!((lhs - rhs).abs() <= 1e-12);
                    }
                }
                assert!(w.rho() < 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn gossip_mixing_preserves_the_mean(seed in 0u64..500) {
            let topo = ring(6);
            let w = build_mixing(&topo, Weighting::LazyMetropolis).unwrap();
            let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let x = Array2::from_shape_fn((6, 4), |_| next() * 10.0);
            let mixed = mix_rows(&x, w.weights());
            for k in 0..4 {
                let before: f64 = (0..6).map(|i| x[[i, k]]).sum::<f64>() / 6.0;
                let after: f64 = (0..6).map(|i| mixed[[i, k]]).sum::<f64>() / 6.0;
                prop_assert!((before - after).abs() <= 1e-12);
            }
        }
    }
}
