//! Problem suites: local objectives, gradient oracles, and heterogeneity
//! control.
//!
//! Each instance exposes exact per-agent gradients, the smoothness constant
//! `L` computed analytically per family, a lower bound on the averaged
//! objective, and (where available) the analytic stationary point. A
//! [`GradientOracle`] layers stochasticity on top: exact Gaussian noise with
//! prescribed variance, or mini-batch subsampling, optionally clipped
//! coordinate-wise to realize a hard `‖g‖∞ ≤ B∞` bound.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{spectral_norm, symmetric_eigenvalues};
use crate::rng::{stream_for, StreamKind};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unsupported family configuration: {0}")]
    UnsupportedFamily(String),
    #[error("agent index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset error: {0}")]
    Dataset(String),
}

/// How samples are distributed across agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeterogeneityMode {
    /// Shuffle the pooled dataset and deal it round-robin.
    IidShuffle,
    /// Give each agent `classes_per_agent` distinct label classes.
    LabelPartition { classes_per_agent: usize },
}

/// A heterogeneity plan together with the dissimilarity actually measured on
/// the generated instance.
#[derive(Debug, Clone)]
pub struct HeterogeneityPlan {
    pub mode: HeterogeneityMode,
    /// `max` over probe points of `(1/n) Σ_i ‖∇f(x) − ∇f_i(x)‖²`.
    pub measured_dissimilarity: f64,
}

/// Per-agent dataset: feature rows with one target each, tagged by the class
/// the sample was synthesized from (used only for partitioning).
#[derive(Debug, Clone)]
pub struct AgentData {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub classes: Vec<usize>,
}

impl AgentData {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.len() == 0
    }
}

/// Which objective family an instance belongs to, with its data.
#[derive(Debug, Clone)]
pub enum Family {
    /// `f_i(x) = ½‖x − c_i‖²`.
    HeteroQuadratic { centers: Array2<f64> },
    /// Least squares plus the smooth nonconvex regularizer
    /// `λ Σ_j x_j²/(1 + x_j²)`.
    NonconvexRegression { data: Vec<AgentData>, lambda: f64 },
    /// Binary logistic loss over per-agent datasets with ±1 targets.
    Logistic { data: Vec<AgentData> },
}

/// Parameters for [`make_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySpec {
    HeteroQuadratic {
        /// Explicit centers (n × d) or a span to spread them over.
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        span: Option<(f64, f64)>,
    },
    NonconvexRegression {
        samples_per_agent: usize,
        lambda: f64,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default)]
        noise: f64,
    },
    Logistic {
        samples_per_agent: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        /// Optional CSV to ingest instead of synthesizing data
        /// (rows = samples, last column = label).
        #[serde(default)]
        csv_path: Option<String>,
    },
}

fn default_classes() -> usize {
    10
}

/// The `n` local objectives with everything their analysis needs.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    pub d: usize,
    pub family: Family,
    /// Smoothness constant valid for every `f_i`.
    pub smoothness: f64,
    /// Lower bound on `f(x)` over all `x`.
    pub f_star_lower: f64,
    /// Stationary point of the averaged objective, when known in closed form.
    pub analytic_stationary: Option<Array1<f64>>,
    pub heterogeneity: HeterogeneityPlan,
}

/// Stochastic-gradient configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientOracle {
    pub noise_sigma: f64,
    pub noise_model: NoiseModel,
    /// When set, every sampled gradient is clamped coordinate-wise to
    /// `[-B∞, B∞]`.
    pub clip_b_inf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `g = ∇f_i(x) + z`, `z ~ N(0, (σ²/d)·I)`, so `E‖z‖² = σ²` exactly.
    GaussianAdditive,
    /// Mini-batch of `batch_size` samples drawn uniformly with replacement.
    Minibatch { batch_size: usize },
}

impl GradientOracle {
    pub fn exact() -> Self {
        Self {
            noise_sigma: 0.0,
            noise_model: NoiseModel::GaussianAdditive,
            clip_b_inf: None,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            noise_sigma: sigma,
            noise_model: NoiseModel::GaussianAdditive,
            clip_b_inf: None,
        }
    }

    pub fn with_clip(mut self, b_inf: f64) -> Self {
        self.clip_b_inf = Some(b_inf);
        self
    }
}

/// Build a problem instance. Deterministic for a fixed seed; `L` is computed
/// analytically per family.
pub fn make_problem(
    spec: &FamilySpec,
    n: usize,
    d: usize,
    seed: u64,
    mode: HeterogeneityMode,
) -> Result<ProblemInstance, ProblemError> {
    if n == 0 || d == 0 {
        return Err(ProblemError::UnsupportedFamily(
            "n and d must be >= 1".into(),
        ));
    }
    let mut rng = stream_for(seed, StreamKind::ProblemGen, 0, 0);
    let (family, smoothness, f_star_lower, analytic_stationary) = match spec {
        FamilySpec::HeteroQuadratic { centers, span } => {
            let centers = quadratic_centers(centers.as_ref(), *span, n, d, &mut rng)?;
            let mean_center = centers.mean_axis(ndarray::Axis(0)).unwrap();
            // f(x) = ½‖x − c̄‖² + (1/2n)Σ‖c_i − c̄‖², minimized at c̄.
            let spread: f64 = (0..n)
                .map(|i| {
                    (0..d)
                        .map(|k| (centers[[i, k]] - mean_center[k]).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / (2.0 * n as f64);
            (
                Family::HeteroQuadratic { centers },
                1.0,
                spread,
                Some(mean_center),
            )
        }
        FamilySpec::NonconvexRegression {
            samples_per_agent,
            lambda,
            classes,
            noise,
        } => {
            if *lambda < 0.0 {
                return Err(ProblemError::UnsupportedFamily("lambda must be >= 0".into()));
            }
            let data = synth_partitioned(
                n,
                d,
                *samples_per_agent,
                *classes,
                mode,
                SynthTarget::Regression { noise: *noise },
                &mut rng,
            )?;
            // Least-squares curvature from the per-agent Gram spectral norm,
            // plus the regularizer's curvature bound max|r''| = 2λ.
            let l_ls = data
                .iter()
                .map(|a| gram_spectral_norm(&a.features) / a.len() as f64)
                .fold(0.0f64, f64::max);
            (
                Family::NonconvexRegression {
                    data,
                    lambda: *lambda,
                },
                l_ls + 2.0 * lambda,
                0.0,
                None,
            )
        }
        FamilySpec::Logistic {
            samples_per_agent,
            classes,
            csv_path,
        } => {
            let data = if let Some(path) = csv_path {
                partition_pool(load_csv_dataset(path, d)?, n, mode, &mut rng)?
            } else {
                synth_partitioned(
                    n,
                    d,
                    *samples_per_agent,
                    *classes,
                    mode,
                    SynthTarget::BinaryLabel,
                    &mut rng,
                )?
            };
            // σ'(z) ≤ 1/4, so L = max_i ‖A_iᵀA_i‖₂ / (4 m_i).
            let l = data
                .iter()
                .map(|a| gram_spectral_norm(&a.features) / (4.0 * a.len() as f64))
                .fold(0.0f64, f64::max);
            (Family::Logistic { data }, l, 0.0, None)
        }
    };
    let mut instance = ProblemInstance {
        n,
        d,
        family,
        smoothness,
        f_star_lower,
        analytic_stationary,
        heterogeneity: HeterogeneityPlan {
            mode,
            measured_dissimilarity: 0.0,
        },
    };
    instance.heterogeneity.measured_dissimilarity = measure_dissimilarity(&instance, seed);
    Ok(instance)
}

fn quadratic_centers(
    explicit: Option<&Vec<Vec<f64>>>,
    span: Option<(f64, f64)>,
    n: usize,
    d: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Array2<f64>, ProblemError> {
    if let Some(rows) = explicit {
        if rows.len() != n || rows.iter().any(|r| r.len() != d) {
            return Err(ProblemError::UnsupportedFamily(format!(
                "centers must be {n} rows of length {d}"
            )));
        }
        let mut c = Array2::zeros((n, d));
        for (i, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                c[[i, k]] = v;
            }
        }
        return Ok(c);
    }
    let (lo, hi) = span.unwrap_or((0.0, 10.0));
    if hi <= lo {
        return Err(ProblemError::UnsupportedFamily("span must be increasing".into()));
    }
    // Evenly spaced base positions, jittered per coordinate.
    let mut c = Array2::zeros((n, d));
    for i in 0..n {
        let base = if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        };
        for k in 0..d {
            let jitter: f64 = if d > 1 { rng.random::<f64>() - 0.5 } else { 0.0 };
            c[[i, k]] = base + jitter * (hi - lo) * 0.05;
        }
    }
    Ok(c)
}

enum SynthTarget {
    Regression { noise: f64 },
    BinaryLabel,
}

/// Synthesize a `classes`-class Gaussian-blob pool and distribute it.
fn synth_partitioned(
    n: usize,
    d: usize,
    samples_per_agent: usize,
    classes: usize,
    mode: HeterogeneityMode,
    target: SynthTarget,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<AgentData>, ProblemError> {
    if samples_per_agent == 0 || classes == 0 {
        return Err(ProblemError::UnsupportedFamily(
            "samples_per_agent and classes must be >= 1".into(),
        ));
    }
    let total = n * samples_per_agent;
    let mut class_means = Array2::zeros((classes, d));
    let mut class_weights = Array2::zeros((classes, d));
    for c in 0..classes {
        for k in 0..d {
            class_means[[c, k]] = 2.0 * std_normal(rng);
            class_weights[[c, k]] = std_normal(rng);
        }
    }
    let mut pool = Vec::with_capacity(total);
    for s in 0..total {
        let class = s % classes;
        let mut x = vec![0.0f64; d];
        for (k, v) in x.iter_mut().enumerate() {
            let z = std_normal(rng);
            *v = class_means[[class, k]] + 0.5 * z;
        }
        let y = match target {
            SynthTarget::Regression { noise } => {
                let clean: f64 = (0..d).map(|k| class_weights[[class, k]] * x[k]).sum();
                let z = std_normal(rng);
                clean + noise * z
            }
            SynthTarget::BinaryLabel => {
                if class >= classes / 2 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        pool.push((x, y, class));
    }
    partition_pool(pool, n, mode, rng)
}

type PoolSample = (Vec<f64>, f64, usize);

fn partition_pool(
    mut pool: Vec<PoolSample>,
    n: usize,
    mode: HeterogeneityMode,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<AgentData>, ProblemError> {
    if pool.is_empty() {
        return Err(ProblemError::Dataset("empty sample pool".into()));
    }
    let d = pool[0].0.len();
    let mut per_agent: Vec<Vec<PoolSample>> = vec![Vec::new(); n];
    match mode {
        HeterogeneityMode::IidShuffle => {
            // Fisher–Yates, then deal round-robin.
            for i in (1..pool.len()).rev() {
                let j = rng.random_range(0..=i);
                pool.swap(i, j);
            }
            for (s, sample) in pool.into_iter().enumerate() {
                per_agent[s % n].push(sample);
            }
        }
        HeterogeneityMode::LabelPartition { classes_per_agent } => {
            let classes: usize = pool.iter().map(|s| s.2).max().unwrap() + 1;
            if classes_per_agent == 0 || classes_per_agent * n < classes {
                return Err(ProblemError::UnsupportedFamily(format!(
                    "label partition needs classes_per_agent·n >= {classes}"
                )));
            }
            // Class c is owned by agent ⌊c / classes_per_agent⌋ (wrapping),
            // so each agent holds exactly `classes_per_agent` classes when
            // classes = n · classes_per_agent.
            for sample in pool {
                let owner = (sample.2 / classes_per_agent) % n;
                per_agent[owner].push(sample);
            }
        }
    }
    per_agent
        .into_iter()
        .map(|samples| {
            if samples.is_empty() {
                return Err(ProblemError::Dataset(
                    "an agent received no samples".into(),
                ));
            }
            let m = samples.len();
            let mut features = Array2::zeros((m, d));
            let mut targets = Array1::zeros(m);
            let mut classes = Vec::with_capacity(m);
            for (row, (x, y, c)) in samples.into_iter().enumerate() {
                for (k, v) in x.into_iter().enumerate() {
                    features[[row, k]] = v;
                }
                targets[row] = y;
                classes.push(c);
            }
            Ok(AgentData {
                features,
                targets,
                classes,
            })
        })
        .collect()
}

/// Read `rows = samples, last column = label` CSV data.
pub fn load_csv_dataset(path: &str, d: usize) -> Result<Vec<PoolSample>, ProblemError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProblemError::Dataset(format!("{path}: {e}")))?;
    let mut pool = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if lineno == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue; // header row
        }
        if fields.len() != d + 1 {
            return Err(ProblemError::Dataset(format!(
                "{path}:{}: expected {} columns, got {}",
                lineno + 1,
                d + 1,
                fields.len()
            )));
        }
        let mut x = Vec::with_capacity(d);
        for f in &fields[..d] {
            x.push(f.parse::<f64>().map_err(|e| {
                ProblemError::Dataset(format!("{path}:{}: {e}", lineno + 1))
            })?);
        }
        let raw_label: f64 = fields[d]
            .parse()
            .map_err(|e| ProblemError::Dataset(format!("{path}:{}: {e}", lineno + 1)))?;
        let class = raw_label.max(0.0) as usize;
        let y = if raw_label > 0.5 { 1.0 } else { -1.0 };
        pool.push((x, y, class));
    }
    if pool.is_empty() {
        return Err(ProblemError::Dataset(format!("{path}: no samples")));
    }
    Ok(pool)
}

fn gram_spectral_norm(features: &Array2<f64>) -> f64 {
    let (m, d) = (features.nrows(), features.ncols());
    let mut gram = Array2::zeros((d, d));
    for a in 0..d {
        for b in a..d {
            let mut s = 0.0;
            for r in 0..m {
                s += features[[r, a]] * features[[r, b]];
            }
            gram[[a, b]] = s;
            gram[[b, a]] = s;
        }
    }
    symmetric_eigenvalues(&gram).into_iter().fold(0.0, f64::max)
}

impl ProblemInstance {
    fn check_agent(&self, i: usize) -> Result<(), ProblemError> {
        if i >= self.n {
            return Err(ProblemError::IndexOutOfRange { index: i, n: self.n });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.d {
            return Err(ProblemError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Local objective value `f_i(x)`.
    pub fn local_value(&self, i: usize, x: &[f64]) -> Result<f64, ProblemError> {
        self.check_agent(i)?;
        self.check_dim(x)?;
        Ok(match &self.family {
            Family::HeteroQuadratic { centers } => {
                0.5 * (0..self.d)
                    .map(|k| (x[k] - centers[[i, k]]).powi(2))
                    .sum::<f64>()
            }
            Family::NonconvexRegression { data, lambda } => {
                let a = &data[i];
                let m = a.len() as f64;
                let mut loss = 0.0;
                for r in 0..a.len() {
                    let pred: f64 = (0..self.d).map(|k| a.features[[r, k]] * x[k]).sum();
                    loss += (pred - a.targets[r]).powi(2);
                }
                loss / (2.0 * m)
                    + lambda * x.iter().map(|&v| v * v / (1.0 + v * v)).sum::<f64>()
            }
            Family::Logistic { data } => {
                let a = &data[i];
                let m = a.len() as f64;
                let mut loss = 0.0;
                for r in 0..a.len() {
                    let margin: f64 = a.targets[r]
                        * (0..self.d).map(|k| a.features[[r, k]] * x[k]).sum::<f64>();
                    loss += softplus(-margin);
                }
                loss / m
            }
        })
    }

    /// Averaged objective `f(x) = (1/n) Σ_i f_i(x)`.
    pub fn global_value(&self, x: &[f64]) -> Result<f64, ProblemError> {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.local_value(i, x)?;
        }
        Ok(acc / self.n as f64)
    }

    /// Exact local gradient `∇f_i(x)`.
    pub fn full_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_agent(i)?;
        self.check_dim(x)?;
        Ok(match &self.family {
            Family::HeteroQuadratic { centers } => {
                (0..self.d).map(|k| x[k] - centers[[i, k]]).collect()
            }
            Family::NonconvexRegression { data, lambda } => {
                let a = &data[i];
                let m = a.len() as f64;
                let mut g = vec![0.0; self.d];
                for r in 0..a.len() {
                    let resid: f64 =
                        (0..self.d).map(|k| a.features[[r, k]] * x[k]).sum::<f64>() - a.targets[r];
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += resid * a.features[[r, k]] / m;
                    }
                }
                for (gk, &v) in g.iter_mut().zip(x.iter()) {
                    // d/dv [λ v²/(1+v²)] = 2λ v / (1+v²)².
                    *gk += 2.0 * lambda * v / (1.0 + v * v).powi(2);
                }
                g
            }
            Family::Logistic { data } => {
                let a = &data[i];
                let m = a.len() as f64;
                let mut g = vec![0.0; self.d];
                for r in 0..a.len() {
                    let margin: f64 = a.targets[r]
                        * (0..self.d).map(|k| a.features[[r, k]] * x[k]).sum::<f64>();
                    let coef = -a.targets[r] * sigmoid(-margin) / m;
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += coef * a.features[[r, k]];
                    }
                }
                g
            }
        })
    }

    /// Exact gradient of the averaged objective.
    pub fn global_gradient(&self, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        let mut acc = vec![0.0; self.d];
        for i in 0..self.n {
            let g = self.full_gradient(i, x)?;
            for (a, b) in acc.iter_mut().zip(g.iter()) {
                *a += b / self.n as f64;
            }
        }
        Ok(acc)
    }

    /// Stochastic gradient per the oracle configuration. Deterministic given
    /// the RNG state.
    pub fn sample_gradient(
        &self,
        i: usize,
        x: &[f64],
        oracle: &GradientOracle,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>, ProblemError> {
        self.check_agent(i)?;
        self.check_dim(x)?;
        let mut g = match oracle.noise_model {
            NoiseModel::GaussianAdditive => {
                let mut g = self.full_gradient(i, x)?;
                if oracle.noise_sigma > 0.0 {
                    let per_coord = oracle.noise_sigma / (self.d as f64).sqrt();
                    for gk in g.iter_mut() {
                        let z = std_normal(rng);
                        *gk += per_coord * z;
                    }
                }
                g
            }
            NoiseModel::Minibatch { batch_size } => self.minibatch_gradient(i, x, batch_size, rng)?,
        };
        if let Some(b_inf) = oracle.clip_b_inf {
            for gk in g.iter_mut() {
                *gk = gk.clamp(-b_inf, b_inf);
            }
        }
        Ok(g)
    }

    fn minibatch_gradient(
        &self,
        i: usize,
        x: &[f64],
        batch_size: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>, ProblemError> {
        if batch_size == 0 {
            return Err(ProblemError::UnsupportedFamily("batch_size must be >= 1".into()));
        }
        match &self.family {
            // The quadratic has no sample pool; mini-batching degenerates to
            // the exact gradient.
            Family::HeteroQuadratic { .. } => self.full_gradient(i, x),
            Family::NonconvexRegression { data, lambda } => {
                let a = &data[i];
                let mut g = vec![0.0; self.d];
                for _ in 0..batch_size {
                    let r = rng.random_range(0..a.len());
                    let resid: f64 =
                        (0..self.d).map(|k| a.features[[r, k]] * x[k]).sum::<f64>() - a.targets[r];
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += resid * a.features[[r, k]] / batch_size as f64;
                    }
                }
                for (gk, &v) in g.iter_mut().zip(x.iter()) {
                    *gk += 2.0 * lambda * v / (1.0 + v * v).powi(2);
                }
                Ok(g)
            }
            Family::Logistic { data } => {
                let a = &data[i];
                let mut g = vec![0.0; self.d];
                for _ in 0..batch_size {
                    let r = rng.random_range(0..a.len());
                    let margin: f64 = a.targets[r]
                        * (0..self.d).map(|k| a.features[[r, k]] * x[k]).sum::<f64>();
                    let coef = -a.targets[r] * sigmoid(-margin) / batch_size as f64;
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk += coef * a.features[[r, k]];
                    }
                }
                Ok(g)
            }
        }
    }
}

fn std_normal(rng: &mut ChaCha12Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// `max` over deterministic probe points of
/// `(1/n) Σ_i ‖∇f(x) − ∇f_i(x)‖²`.
fn measure_dissimilarity(p: &ProblemInstance, seed: u64) -> f64 {
    let mut rng = stream_for(seed, StreamKind::ProblemGen, u64::MAX, 0);
    let mut worst = 0.0f64;
    for probe in 0..8 {
        let x: Vec<f64> = (0..p.d)
            .map(|_| {
                let z = std_normal(&mut rng);
                if probe == 0 {
                    0.0
                } else {
                    z
                }
            })
            .collect();
        let global = p.global_gradient(&x).expect("probe dims");
        let mut acc = 0.0;
        for i in 0..p.n {
            let gi = p.full_gradient(i, &x).expect("probe dims");
            acc += global
                .iter()
                .zip(gi.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        worst = worst.max(acc / p.n as f64);
    }
    worst
}

/// Finite-difference Hessian spectral norm at `x` (used by smoothness
/// probes).
pub fn hessian_spectral_norm(p: &ProblemInstance, i: usize, x: &[f64]) -> Result<f64, ProblemError> {
    let h = 1e-5;
    let d = p.d;
    let mut hess = Array2::zeros((d, d));
    for k in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let gp = p.full_gradient(i, &xp)?;
        let gm = p.full_gradient(i, &xm)?;
        for j in 0..d {
            hess[[j, k]] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    // Symmetrize before taking the norm; finite differences leave ~1e-9
    // asymmetry.
    let sym = Array2::from_shape_fn((d, d), |(a, b)| 0.5 * (hess[[a, b]] + hess[[b, a]]));
    Ok(spectral_norm(&sym))
}
