//! Closed-form quantities: the extinction threshold `rho`, the critical
//! infection rate on k-ary trees, local-survival bounds, open/closed node
//! probabilities, the reflection decay rate of the half-line chain, and the
//! minimal-speed constant with its critical speed.
//!
//! All functions are pure.

use serde::Serialize;

use crate::error::{domain, Result};

/// Iteration cap for bisection.
pub const BISECTION_MAX_ITER: usize = 200;
/// Relative tolerance for bisection.
pub const BISECTION_REL_TOL: f64 = 1e-10;

/// `Γ(d/2 + 1)` by the half-integer recursion `Γ(x + 1) = x Γ(x)` from
/// `Γ(1) = 1` or `Γ(1/2) = √π`.
fn gamma_half_dim_plus_one(dim: usize) -> f64 {
    let (mut x, mut acc) = if dim.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, std::f64::consts::PI.sqrt())
    };
    let target = dim as f64 / 2.0 + 1.0;
    while x < target {
        acc *= x;
        x += 1.0;
    }
    acc
}

/// Lebesgue volume `κ_r` of the closed ball of radius `r` in `dim` dimensions.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    std::f64::consts::PI.powf(dim as f64 / 2.0) * r.powi(dim as i32) / gamma_half_dim_plus_one(dim)
}

/// Threshold `ρ(x) = 2x − 1 − 2√(x² − x)` for `x = μ_S κ_r ≥ 1`, evaluated
/// as `(√x − √(x − 1))²`, which has no cancellation at large `x`.
pub fn rho(x: f64) -> Result<f64> {
    check_rho_domain(x)?;
    let d = x.sqrt() + (x - 1.0).sqrt();
    Ok(1.0 / (d * d))
}

/// The textbook expansion of [`rho`]; loses relative accuracy for large `x`.
pub fn rho_expanded(x: f64) -> Result<f64> {
    check_rho_domain(x)?;
    Ok(2.0 * x - 1.0 - 2.0 * (x * x - x).sqrt())
}

fn check_rho_domain(x: f64) -> Result<()> {
    if x.is_finite() && x >= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("rho is defined on [1, inf), got {x}")))
    }
}

/// Critical infection rate `2k − 1 − 2√(k² − k)` on the rooted k-ary tree
/// with a white knight attached above the root.
pub fn tree_critical_rate(k: u32) -> Result<f64> {
    if k < 1 {
        return Err(domain("tree branching factor must be at least 1"));
    }
    rho(f64::from(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on the local-survival probability:
/// `exp(−(μ_S + μ_W) κ_r) ≤ P(L) ≤ (1 − θ) exp(−μ_W κ_r)`.
pub fn local_survival_bounds(mu_s: f64, mu_w: f64, r: f64, dim: usize, theta: f64) -> Result<SurvivalBounds> {
    if !(mu_s >= 0.0 && mu_w >= 0.0) || !mu_s.is_finite() || !mu_w.is_finite() {
        return Err(domain(format!("intensities must be finite and non-negative, got {mu_s}, {mu_w}")));
    }
    if !(r > 0.0) || !r.is_finite() || dim == 0 {
        return Err(domain(format!("need r > 0 and dim >= 1, got r={r}, dim={dim}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(domain(format!("theta must be a probability, got {theta}")));
    }
    let kappa = ball_volume(dim, r);
    Ok(SurvivalBounds {
        lower: (-(mu_s + mu_w) * kappa).exp(),
        upper: (1.0 - theta) * (-mu_w * kappa).exp(),
    })
}

/// Probability that an infected node with `k` white-knight neighbours and
/// `n ≥ 1` susceptible neighbours is patched before it transmits once:
/// `k / (k + n λ_I)` (with patch rate 1).
pub fn closed_node_prob(k: u32, n: u32, lambda_i: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("closed-node probability needs at least one susceptible neighbour"));
    }
    if !(lambda_i > 0.0) || !lambda_i.is_finite() {
        return Err(domain(format!("lambda_i must be positive, got {lambda_i}")));
    }
    let k = f64::from(k);
    Ok(k / (k + f64::from(n) * lambda_i))
}

/// Lower bound `(λ_I / (λ_I + n + m))^n` on the probability that a node
/// with at most `n` further susceptible and `m` knight neighbours transmits
/// to all its susceptible neighbours before any cure attempt.
pub fn open_node_lower_bound(n: u32, m: u32, lambda_i: f64) -> Result<f64> {
    if !(lambda_i > 0.0) || !lambda_i.is_finite() {
        return Err(domain(format!("lambda_i must be positive, got {lambda_i}")));
    }
    let base = lambda_i / (lambda_i + f64::from(n) + f64::from(m));
    Ok(base.powi(n as i32))
}

/// Exponential decay rate `4λ/(1 + λ)²` of the probability that the
/// infection on the half-line chain advances `n` sites.
pub fn reflection_decay(lambda_i: f64) -> Result<f64> {
    if !(lambda_i >= 0.0) || !lambda_i.is_finite() {
        return Err(domain(format!("lambda_i must be finite and non-negative, got {lambda_i}")));
    }
    let s = 1.0 + lambda_i;
    Ok(4.0 * lambda_i / (s * s))
}

/// `f(t) = t − 1 − ln t − ln γ`; `C(α) = f(λ_I r / α)`.
fn rate_function(t: f64, log_gamma: f64) -> f64 {
    t - 1.0 - t.ln() - log_gamma
}

/// Large-deviation constant `C(α) = t − 1 − ln t − ln γ` with `t = λ_I r / α`.
/// Positive values mean that crossing distance `n` faster than `n/α` is
/// summably unlikely.
pub fn speed_constant(gamma: f64, lambda_i: f64, r: f64, alpha: f64) -> Result<f64> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(domain(format!("gamma must be >= 1, got {gamma}")));
    }
    if !(lambda_i > 0.0 && r > 0.0) || !lambda_i.is_finite() || !r.is_finite() {
        return Err(domain(format!("need lambda_i > 0 and r > 0, got {lambda_i}, {r}")));
    }
    let floor = r * lambda_i;
    if !(alpha > floor) || alpha.is_nan() {
        return Err(domain(format!("speed constant needs alpha > r*lambda_i = {floor}, got {alpha}")));
    }
    Ok(rate_function(floor / alpha, gamma.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedSolution {
    pub gamma: f64,
    pub lambda_i: f64,
    pub r: f64,
    pub alpha_c: f64,
    pub t_star: f64,
}

/// Critical speed `α_c = λ_I r / t*`, where `t* ∈ (0, 1)` solves
/// `t − 1 − ln t = ln γ`.
pub fn critical_speed(gamma: f64, lambda_i: f64, r: f64) -> Result<SpeedSolution> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(domain(format!("critical speed needs gamma > 1, got {gamma}")));
    }
    if !(lambda_i > 0.0 && r > 0.0) || !lambda_i.is_finite() || !r.is_finite() {
        return Err(domain(format!("need lambda_i > 0 and r > 0, got {lambda_i}, {r}")));
    }
    let log_gamma = gamma.ln();
    // f is strictly decreasing on (0, 1); f(e^{-(1 + ln γ)}) = e^{-(1 + ln γ)} > 0
    // and f(1) = -ln γ < 0.
    let mut lo = (-(1.0 + log_gamma)).exp();
    let mut hi = 1.0;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if rate_function(mid, log_gamma) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_REL_TOL * lo {
            break;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let alpha_c = lambda_i * r / t_star;
    let check = speed_constant(gamma, lambda_i, r, alpha_c * (1.0 + 1e-6))?;
    if !(check > 0.0) {
        return Err(crate::Error::Internal(format!(
            "critical speed bisection did not converge: C(alpha_c(1+1e-6)) = {check}"
        )));
    }
    Ok(SpeedSolution { gamma, lambda_i, r, alpha_c, t_star })
}

/// Expected number of self-avoiding paths of `n` edges from the origin in
/// the Gilbert graph of a Poisson process of intensity `mu_s`:
/// `(μ_S κ_r)^n`.
pub fn expected_saw_count(mu_s: f64, r: f64, dim: usize, n: u32) -> Result<f64> {
    if !(mu_s >= 0.0) || !mu_s.is_finite() || !(r > 0.0) || dim == 0 {
        return Err(domain(format!("need mu_s >= 0, r > 0, dim >= 1, got {mu_s}, {r}, {dim}")));
    }
    Ok((mu_s * ball_volume(dim, r)).powi(n as i32))
}
