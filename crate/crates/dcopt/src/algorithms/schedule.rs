//! Parameter schedules: manual values or theorem-prescribed derivations.
//!
//! Derivations never clamp: they return exactly the prescribed formulas plus
//! an evaluation of every inequality in the corresponding condition chain.
//! `rho_hat` values are supplied as constants (callers typically pass the
//! base matrix's `ρ`, optionally refined through `topology::damp`);
//! contraction factors are supplied as `η²`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DamscoParams, DashcoParams};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("infeasible schedule: {0}")]
    Infeasible(String),
    #[error("invalid schedule constants: {0}")]
    InvalidConstants(String),
}

/// Parameters for one of the two methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Damsco(DamscoParams),
    Dashco(DashcoParams),
}

/// One evaluated inequality of a theorem's condition chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
}

impl ConstraintCheck {
    pub fn satisfied(&self) -> bool {
        self.value <= self.bound * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }

    /// How close the constraint is to biting (1.0 = exactly binding).
    fn tightness(&self) -> f64 {
        if self.bound <= 0.0 {
            f64::INFINITY
        } else {
            self.value / self.bound
        }
    }
}

/// A derived schedule with its evaluated condition chain.
#[derive(Debug, Clone)]
pub struct DerivedSchedule {
    pub schedule: Schedule,
    pub checks: Vec<ConstraintCheck>,
    /// Name of the tightest constraint.
    pub binding_constraint: Option<String>,
}

impl DerivedSchedule {
    pub fn all_satisfied(&self) -> bool {
        self.checks.iter().all(|c| c.satisfied())
    }

    pub fn violations(&self) -> Vec<&ConstraintCheck> {
        self.checks.iter().filter(|c| !c.satisfied()).collect()
    }

    fn with_binding(mut self) -> Self {
        self.binding_constraint = self
            .checks
            .iter()
            .max_by(|a, b| a.tightness().partial_cmp(&b.tightness()).unwrap())
            .map(|c| c.name.clone());
        self
    }
}

/// How the parameters are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Derivation {
    Manual(Schedule),
    /// DAMSCo bounds: `α ≤ min{δ/(24L√(B∞²+δ)), (1−η²)²/32}` and
    /// `γ ≤ min{(1−ρ̂²)/(60η), (1−η²)/25, α/η, 1}`; both parameters are set
    /// to their bound.
    Theorem1 {
        l: f64,
        b_inf: f64,
        delta: f64,
        eta_sq: f64,
        rho_hat: f64,
        beta1: f64,
        beta2: f64,
    },
    /// DAMSCo rate schedule with `δ = ω²B∞²√T/√n` and
    /// `α = 4θ√(n(B∞²+δ))/√T`, `β₂ ∈ [T/(T+1), (θL/n)^{1/T}]`.
    Theorem2CaseI {
        theta: f64,
        omega: f64,
        l: f64,
        b_inf: f64,
        eta_sq: f64,
        rho_hat: f64,
        n: usize,
        t: u64,
        beta1: f64,
    },
    /// DAMSCo rate schedule with constant `δ` and
    /// `β₂ ∈ [T/(T+1), (θL/√(nT))^{1/T}]`.
    Theorem2CaseII {
        theta: f64,
        delta: f64,
        l: f64,
        b_inf: f64,
        eta_sq: f64,
        rho_hat: f64,
        n: usize,
        t: u64,
        beta1: f64,
    },
    /// DaSHCo rate schedule `α = θ₁√n/(σ√T)`, `γ_g = θ₂√n/(σ√T)`,
    /// `γ_x = θ₃√n/(σ√T)`; the full condition chain (including the
    /// `b`-dependent bounds) is evaluated and reported.
    Theorem4 {
        theta1: f64,
        theta2: f64,
        theta3: f64,
        sigma: f64,
        l: f64,
        eta_sq: f64,
        rho_hat_x: f64,
        rho_hat_g: f64,
        n: usize,
        t: u64,
        beta1: f64,
    },
}

/// Derive parameters. Violated inequalities in the returned check list are
/// reported, never clamped; [`ScheduleError::Infeasible`] is returned only
/// when the derivation itself has no valid value (empty `β₂` interval, `θ`
/// outside its admissible range, or a rate formula whose premises need a
/// larger `T`).
pub fn make_schedule(derivation: &Derivation) -> Result<DerivedSchedule, ScheduleError> {
    match derivation {
        Derivation::Manual(schedule) => validate_manual(schedule),
        Derivation::Theorem1 {
            l,
            b_inf,
            delta,
            eta_sq,
            rho_hat,
            beta1,
            beta2,
        } => theorem1(*l, *b_inf, *delta, *eta_sq, *rho_hat, *beta1, *beta2),
        Derivation::Theorem2CaseI {
            theta,
            omega,
            l,
            b_inf,
            eta_sq,
            rho_hat,
            n,
            t,
            beta1,
        } => {
            if *omega <= 0.0 {
                return Err(ScheduleError::InvalidConstants("omega must be > 0".into()));
            }
            let delta = theorem2_delta_case_i(*omega, *b_inf, *n, *t);
            let beta2_upper = (theta * l / *n as f64).powf(1.0 / *t as f64);
            theorem2(*theta, delta, *l, *b_inf, *eta_sq, *rho_hat, *n, *t, *beta1, beta2_upper)
        }
        Derivation::Theorem2CaseII {
            theta,
            delta,
            l,
            b_inf,
            eta_sq,
            rho_hat,
            n,
            t,
            beta1,
        } => {
            let beta2_upper =
                (theta * l / ((*n as f64) * (*t as f64)).sqrt()).powf(1.0 / *t as f64);
            theorem2(*theta, *delta, *l, *b_inf, *eta_sq, *rho_hat, *n, *t, *beta1, beta2_upper)
        }
        Derivation::Theorem4 {
            theta1,
            theta2,
            theta3,
            sigma,
            l,
            eta_sq,
            rho_hat_x,
            rho_hat_g,
            n,
            t,
            beta1,
        } => theorem4(
            *theta1, *theta2, *theta3, *sigma, *l, *eta_sq, *rho_hat_x, *rho_hat_g, *n, *t,
            *beta1,
        ),
    }
}

fn validate_manual(schedule: &Schedule) -> Result<DerivedSchedule, ScheduleError> {
    let ok = match schedule {
        Schedule::Damsco(p) => {
            p.alpha > 0.0
                && (0.0..1.0).contains(&p.beta1)
                && (0.0..=1.0).contains(&p.beta2)
                && p.delta > 0.0
                && p.gamma > 0.0
                && p.gamma <= 1.0
        }
        Schedule::Dashco(p) => {
            p.alpha > 0.0
                && (0.0..1.0).contains(&p.beta1)
                && p.gamma_x > 0.0
                && p.gamma_x <= 1.0
                && p.gamma_g > 0.0
                && p.gamma_g <= 1.0
        }
    };
    if !ok {
        return Err(ScheduleError::InvalidConstants(format!(
            "manual parameters out of range: {schedule:?}"
        )));
    }
    Ok(DerivedSchedule {
        schedule: *schedule,
        checks: Vec::new(),
        binding_constraint: None,
    })
}

/// `δ = ω²B∞²√T/√n`.
pub fn theorem2_delta_case_i(omega: f64, b_inf: f64, n: usize, t: u64) -> f64 {
    omega * omega * b_inf * b_inf * (t as f64).sqrt() / (n as f64).sqrt()
}

fn check_common(l: f64, eta_sq: f64, rho_hat: f64, beta1: f64) -> Result<(), ScheduleError> {
    if l <= 0.0 || !l.is_finite() {
        return Err(ScheduleError::InvalidConstants(format!("L must be positive, got {l}")));
    }
    if !(0.0..1.0).contains(&eta_sq) {
        return Err(ScheduleError::InvalidConstants(format!(
            "eta_sq must be in [0, 1), got {eta_sq}"
        )));
    }
    if !(0.0..1.0).contains(&rho_hat) {
        return Err(ScheduleError::InvalidConstants(format!(
            "rho_hat must be in [0, 1), got {rho_hat}"
        )));
    }
    if !(0.0..1.0).contains(&beta1) {
        return Err(ScheduleError::InvalidConstants(format!(
            "beta1 must be in [0, 1), got {beta1}"
        )));
    }
    Ok(())
}

/// The DAMSCo α-bounds shared by the `Theorem1` and `Theorem2*` derivations.
fn damsco_alpha_bounds(l: f64, b_inf: f64, delta: f64, eta_sq: f64) -> [(String, f64); 2] {
    [
        (
            "alpha <= delta/(24 L sqrt(B_inf^2 + delta))".into(),
            delta / (24.0 * l * (b_inf * b_inf + delta).sqrt()),
        ),
        (
            "alpha <= (1 - eta^2)^2 / 32".into(),
            (1.0 - eta_sq) * (1.0 - eta_sq) / 32.0,
        ),
    ]
}

/// The DAMSCo γ-bounds (η-divided terms drop out in the η → 0 limit).
fn damsco_gamma_bounds(alpha: f64, eta_sq: f64, rho_hat: f64) -> Vec<(String, f64)> {
    let eta = eta_sq.sqrt();
    let mut bounds = vec![
        ("gamma <= (1 - eta^2)/25".into(), (1.0 - eta_sq) / 25.0),
        ("gamma <= 1".into(), 1.0),
    ];
    if eta > 0.0 {
        bounds.push((
            "gamma <= (1 - rho_hat^2)/(60 eta)".into(),
            (1.0 - rho_hat * rho_hat) / (60.0 * eta),
        ));
        bounds.push(("gamma <= alpha/eta".into(), alpha / eta));
    }
    bounds
}

fn theorem1(
    l: f64,
    b_inf: f64,
    delta: f64,
    eta_sq: f64,
    rho_hat: f64,
    beta1: f64,
    beta2: f64,
) -> Result<DerivedSchedule, ScheduleError> {
    check_common(l, eta_sq, rho_hat, beta1)?;
    if delta <= 0.0 {
        return Err(ScheduleError::InvalidConstants("delta must be > 0".into()));
    }
    if !(0.0..1.0).contains(&beta2) {
        return Err(ScheduleError::InvalidConstants("beta2 must be in [0, 1)".into()));
    }
    let alpha_bounds = damsco_alpha_bounds(l, b_inf, delta, eta_sq);
    let alpha = alpha_bounds
        .iter()
        .map(|(_, b)| *b)
        .fold(f64::INFINITY, f64::min);
    let gamma_bounds = damsco_gamma_bounds(alpha, eta_sq, rho_hat);
    let gamma = gamma_bounds
        .iter()
        .map(|(_, b)| *b)
        .fold(f64::INFINITY, f64::min);
    if !(alpha > 0.0 && gamma > 0.0) {
        return Err(ScheduleError::Infeasible(format!(
            "no positive (alpha, gamma): alpha = {alpha}, gamma = {gamma}"
        )));
    }
    let params = DamscoParams {
        alpha,
        beta1,
        beta2,
        delta,
        gamma,
    };
    let mut checks = Vec::new();
    for (name, bound) in alpha_bounds {
        checks.push(ConstraintCheck { name, value: alpha, bound });
    }
    for (name, bound) in gamma_bounds {
        checks.push(ConstraintCheck { name, value: gamma, bound });
    }
    Ok(DerivedSchedule {
        schedule: Schedule::Damsco(params),
        checks,
        binding_constraint: None,
    }
    .with_binding())
}

#[allow(clippy::too_many_arguments)]
fn theorem2(
    theta: f64,
    delta: f64,
    l: f64,
    b_inf: f64,
    eta_sq: f64,
    rho_hat: f64,
    n: usize,
    t: u64,
    beta1: f64,
    beta2_upper: f64,
) -> Result<DerivedSchedule, ScheduleError> {
    check_common(l, eta_sq, rho_hat, beta1)?;
    if n == 0 || t == 0 {
        return Err(ScheduleError::InvalidConstants("n and T must be >= 1".into()));
    }
    let nf = n as f64;
    let tf = t as f64;
    if (n as u64) > t {
        return Err(ScheduleError::Infeasible(format!("requires n <= T, got n = {n}, T = {t}")));
    }
    // θ ∈ (n/(Le), n/L).
    let theta_lo = nf / (l * std::f64::consts::E);
    let theta_hi = nf / l;
    if !(theta > theta_lo && theta < theta_hi) {
        return Err(ScheduleError::InvalidConstants(format!(
            "theta must lie in (n/(L e), n/L) = ({theta_lo}, {theta_hi}), got {theta}"
        )));
    }
    if delta <= 0.0 {
        return Err(ScheduleError::InvalidConstants("delta must be > 0".into()));
    }
    let alpha = 4.0 * theta * (nf * (b_inf * b_inf + delta)).sqrt() / tf.sqrt();
    let beta2_lower = tf / (tf + 1.0);
    if beta2_upper < beta2_lower {
        return Err(ScheduleError::Infeasible(format!(
            "empty beta2 interval [{beta2_lower}, {beta2_upper}]"
        )));
    }
    let beta2 = beta2_lower;
    // The rate schedule presumes alpha satisfies the `Theorem1` bounds; a
    // larger T always restores them.
    let alpha_bounds = damsco_alpha_bounds(l, b_inf, delta, eta_sq);
    for (name, bound) in &alpha_bounds {
        if alpha > *bound * (1.0 + 1e-12) {
            return Err(ScheduleError::Infeasible(format!(
                "T = {t} too small: alpha = {alpha} violates {name} (bound {bound})"
            )));
        }
    }
    let gamma_bounds = damsco_gamma_bounds(alpha, eta_sq, rho_hat);
    let gamma = gamma_bounds
        .iter()
        .map(|(_, b)| *b)
        .fold(f64::INFINITY, f64::min);
    if gamma <= 0.0 {
        return Err(ScheduleError::Infeasible(format!("no positive gamma (got {gamma})")));
    }
    let params = DamscoParams {
        alpha,
        beta1,
        beta2,
        delta,
        gamma,
    };
    let mut checks = Vec::new();
    for (name, bound) in alpha_bounds {
        checks.push(ConstraintCheck { name, value: alpha, bound });
    }
    for (name, bound) in gamma_bounds {
        checks.push(ConstraintCheck { name, value: gamma, bound });
    }
    checks.push(ConstraintCheck {
        name: "beta2 >= T/(T+1)".into(),
        value: beta2_lower,
        bound: beta2,
    });
    checks.push(ConstraintCheck {
        name: "beta2 <= interval upper endpoint".into(),
        value: beta2,
        bound: beta2_upper,
    });
    Ok(DerivedSchedule {
        schedule: Schedule::Damsco(params),
        checks,
        binding_constraint: None,
    }
    .with_binding())
}

#[allow(clippy::too_many_arguments)]
fn theorem4(
    theta1: f64,
    theta2: f64,
    theta3: f64,
    sigma: f64,
    l: f64,
    eta_sq: f64,
    rho_hat_x: f64,
    rho_hat_g: f64,
    n: usize,
    t: u64,
    beta1: f64,
) -> Result<DerivedSchedule, ScheduleError> {
    check_common(l, eta_sq, rho_hat_g, beta1)?;
    if !(0.0..1.0).contains(&rho_hat_x) {
        return Err(ScheduleError::InvalidConstants(format!(
            "rho_hat_x must be in [0, 1), got {rho_hat_x}"
        )));
    }
    for (name, theta) in [("theta1", theta1), ("theta2", theta2), ("theta3", theta3)] {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(ScheduleError::InvalidConstants(format!(
                "{name} must lie in (0, 1), got {theta}"
            )));
        }
    }
    if sigma <= 0.0 {
        return Err(ScheduleError::InvalidConstants(
            "theorem4 scaling needs sigma > 0".into(),
        ));
    }
    if n == 0 || t == 0 {
        return Err(ScheduleError::InvalidConstants("n and T must be >= 1".into()));
    }
    if (n as u64) > t {
        return Err(ScheduleError::Infeasible(format!("requires n <= T, got n = {n}, T = {t}")));
    }
    let scale = (n as f64).sqrt() / (sigma * (t as f64).sqrt());
    let alpha = theta1 * scale;
    let gamma_g = theta2 * scale;
    let gamma_x = theta3 * scale;

    let eta = eta_sq.sqrt();
    let one_m_eta2 = 1.0 - eta_sq;
    let one_m_rx2 = 1.0 - rho_hat_x * rho_hat_x;
    let one_m_rg2 = 1.0 - rho_hat_g * rho_hat_g;
    let b = 4.0
        * (9.0 * l
            + 1.0
            + (72.0 * l * l + 1.0) / (one_m_eta2 * one_m_eta2)
            + 60.0 * l * l / (one_m_rg2 * one_m_rg2));
    let denom = 6.0 * l * beta1 * beta1 / ((1.0 - beta1) * (1.0 - beta1))
        + b / (45.0 * one_m_rx2)
        + (24.0 * l * l + 1.0) / (one_m_eta2 * one_m_eta2)
        + 20.0 * l * l / (one_m_rg2 * one_m_rg2);
    let sqrt_bound = ((1.0 - beta1) * gamma_g * gamma_g / (2.0 * l * denom)).sqrt();

    let mut checks = vec![
        ConstraintCheck {
            name: "gamma_x <= (1 - eta^2)/25".into(),
            value: gamma_x,
            bound: one_m_eta2 / 25.0,
        },
        ConstraintCheck {
            name: "gamma_x <= 1".into(),
            value: gamma_x,
            bound: 1.0,
        },
        ConstraintCheck {
            name: "gamma_g <= (1 - rho_hat_g^2)/(25 L)".into(),
            value: gamma_g,
            bound: one_m_rg2 / (25.0 * l),
        },
        ConstraintCheck {
            name: "gamma_g <= (1 - eta^2)/25".into(),
            value: gamma_g,
            bound: one_m_eta2 / 25.0,
        },
        ConstraintCheck {
            name: "gamma_g <= (1 - eta^2)/(25 L)".into(),
            value: gamma_g,
            bound: one_m_eta2 / (25.0 * l),
        },
        ConstraintCheck {
            name: "gamma_g <= 1".into(),
            value: gamma_g,
            bound: 1.0,
        },
        ConstraintCheck {
            name: "alpha <= 1/(16 b)".into(),
            value: alpha,
            bound: 1.0 / (16.0 * b),
        },
        ConstraintCheck {
            name: "alpha <= gamma_g (1 - eta^2)/32".into(),
            value: alpha,
            bound: gamma_g * one_m_eta2 / 32.0,
        },
        ConstraintCheck {
            name: "alpha <= gamma_g (1 - eta^2)/(12 L sqrt(n))".into(),
            value: alpha,
            bound: gamma_g * one_m_eta2 / (12.0 * l * (n as f64).sqrt()),
        },
        ConstraintCheck {
            name: "alpha <= gamma_g (1 - rho_hat_x^2)/(12 sqrt(b))".into(),
            value: alpha,
            bound: gamma_g * one_m_rx2 / (12.0 * b.sqrt()),
        },
        ConstraintCheck {
            name: "alpha <= gamma_g (1 - rho_hat_g^2)/(12 L sqrt(n))".into(),
            value: alpha,
            bound: gamma_g * one_m_rg2 / (12.0 * l * (n as f64).sqrt()),
        },
        ConstraintCheck {
            name: "alpha <= sqrt((1-beta1) gamma_g^2/(2 L D))".into(),
            value: alpha,
            bound: sqrt_bound,
        },
    ];
    if eta > 0.0 {
        checks.push(ConstraintCheck {
            name: "gamma_x <= (1 - rho_hat_x^2)/(60 eta)".into(),
            value: gamma_x,
            bound: one_m_rx2 / (60.0 * eta),
        });
        checks.push(ConstraintCheck {
            name: "gamma_x <= alpha/eta".into(),
            value: gamma_x,
            bound: alpha / eta,
        });
        checks.push(ConstraintCheck {
            name: "gamma_x <= (sqrt(2)-1)/(2 eta)".into(),
            value: gamma_x,
            bound: (2.0f64.sqrt() - 1.0) / (2.0 * eta),
        });
        checks.push(ConstraintCheck {
            name: "gamma_g <= (1 - rho_hat_g^2)/(25 eta)".into(),
            value: gamma_g,
            bound: one_m_rg2 / (25.0 * eta),
        });
    }

    Ok(DerivedSchedule {
        schedule: Schedule::Dashco(DashcoParams {
            alpha,
            beta1,
            gamma_x,
            gamma_g,
        }),
        checks,
        binding_constraint: None,
    }
    .with_binding())
}
