//! Mean-field model of the dynamic strategies.
//!
//! A worker `k` with relative speed `rs_k` that knows a fraction `x` of the
//! indices in every dimension sees a fraction `g_k(x) = (1 - x^d)^{α_k}` of
//! the tasks outside its square (`d = 2`) or cube (`d = 3`) still
//! unprocessed, with `α_k = (1 - rs_k) / rs_k`. The two-phase strategies
//! switch to random allocation when `e^{-β}` of the tasks remain; at that
//! moment worker `k` knows `x_k^d = β rs_k − β² rs_k² / 2`.
//!
//! All quantities are in block units: `n` blocks per dimension, `n^d` tasks.

use log::warn;
use thiserror::Error;

use crate::kernel::KernelKind;
use crate::platform::Platform;

/// Search interval for the switch parameter.
pub const BETA_BRACKET: (f64, f64) = (0.1, 12.0);
/// Absolute tolerance of the golden-section search on beta.
pub const BETA_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("relative speeds must be positive and sum to 1")]
    BadRelativeSpeeds,
    #[error("block count must be at least 1")]
    EmptyProblem,
    #[error("beta={beta} is outside the model's range for rs={rs} (radicand {radicand})")]
    SwitchOutOfRange { beta: f64, rs: f64, radicand: f64 },
}

fn exponent(kind: KernelKind) -> i32 {
    kind.dims() as i32
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    rs: Vec<f64>,
    pub n: usize,
    pub kernel: KernelKind,
}

impl AnalysisParams {
    pub fn new(rs: Vec<f64>, n: usize, kernel: KernelKind) -> Result<Self, AnalysisError> {
        if n == 0 {
            return Err(AnalysisError::EmptyProblem);
        }
        let sum: f64 = rs.iter().sum();
        if rs.is_empty() || rs.iter().any(|r| r.is_nan() || *r <= 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(AnalysisError::BadRelativeSpeeds);
        }
        Ok(Self { rs, n, kernel })
    }

    pub fn from_platform(platform: &Platform, n: usize, kernel: KernelKind) -> Result<Self, AnalysisError> {
        Self::new(platform.relative_speeds(), n, kernel)
    }

    pub fn homogeneous(p: usize, n: usize, kernel: KernelKind) -> Result<Self, AnalysisError> {
        Self::new(vec![1.0 / p as f64; p], n, kernel)
    }

    pub fn rs(&self) -> &[f64] {
        &self.rs
    }

    pub fn total_tasks(&self) -> f64 {
        (self.n as f64).powi(exponent(self.kernel))
    }

    pub fn lower_bound(&self) -> f64 {
        lower_bound(self.kernel, &self.rs, self.n)
    }
}

/// `2 n Σ √rs_k`: every worker computes a square of area `n² rs_k`.
pub fn lower_bound_outer(rs: &[f64], n: usize) -> f64 {
    2.0 * n as f64 * rs.iter().map(|r| r.sqrt()).sum::<f64>()
}

/// `3 n² Σ rs_k^{2/3}`: every worker computes a cube of volume `n³ rs_k`.
pub fn lower_bound_matmul(rs: &[f64], n: usize) -> f64 {
    3.0 * (n * n) as f64 * rs.iter().map(|r| r.powf(2.0 / 3.0)).sum::<f64>()
}

pub fn lower_bound(kind: KernelKind, rs: &[f64], n: usize) -> f64 {
    match kind {
        KernelKind::Outer => lower_bound_outer(rs, n),
        KernelKind::Matmul => lower_bound_matmul(rs, n),
    }
}

/// Competition exponent `(1 - rs) / rs`.
pub fn alpha(rs_k: f64) -> f64 {
    (1.0 - rs_k) / rs_k
}

/// Fraction of the tasks outside the known square/cube still unprocessed.
pub fn g(x: f64, alpha: f64, kind: KernelKind) -> f64 {
    (1.0 - x.powi(exponent(kind))).powf(alpha)
}

/// Time (times total platform speed) until worker `k` knows fraction `x`:
/// `n^d (1 - (1 - x^d)^{α_k + 1})`.
pub fn t_fraction(x: f64, rs_k: f64, n: usize, kind: KernelKind) -> f64 {
    let d = exponent(kind);
    (n as f64).powi(d) * (1.0 - (1.0 - x.powi(d)).powf(alpha(rs_k) + 1.0))
}

/// Known fraction per dimension at the switch: `(β rs − β² rs² / 2)^{1/d}`.
pub fn switch_fraction(beta: f64, rs_k: f64, kind: KernelKind) -> Result<f64, AnalysisError> {
    let radicand = beta * rs_k - 0.5 * beta * beta * rs_k * rs_k;
    if !(0.0..=1.0).contains(&radicand) {
        return Err(AnalysisError::SwitchOutOfRange { beta, rs: rs_k, radicand });
    }
    Ok(radicand.powf(1.0 / exponent(kind) as f64))
}

fn switch_fractions(beta: f64, rs: &[f64], kind: KernelKind) -> Result<Vec<f64>, AnalysisError> {
    rs.iter().map(|&r| switch_fraction(beta, r, kind)).collect()
}

/// Blocks sent during the cross phase: `Σ_k 2 n x_k`.
pub fn phase1_volume_outer(beta: f64, rs: &[f64], n: usize) -> Result<f64, AnalysisError> {
    let xs = switch_fractions(beta, rs, KernelKind::Outer)?;
    Ok(2.0 * n as f64 * xs.iter().sum::<f64>())
}

/// Blocks sent during the random phase: worker `k` runs a share `rs_k` of
/// the `e^{-β} n²` remaining tasks at `2 / (1 + x_k)` blocks each.
pub fn phase2_volume_outer(beta: f64, rs: &[f64], n: usize) -> Result<f64, AnalysisError> {
    let xs = switch_fractions(beta, rs, KernelKind::Outer)?;
    let per_task: f64 = rs.iter().zip(&xs).map(|(r, x)| r * 2.0 / (1.0 + x)).sum();
    Ok((-beta).exp() * (n * n) as f64 * per_task)
}

/// Expected blocks missing for a random task outside a cube of side
/// fraction `x`: each of the three inputs is held with probability `x²`, and
/// all three with probability `x³`.
fn matmul_random_task_cost(x: f64) -> f64 {
    let outside = 1.0 - x.powi(3);
    if outside <= 0.0 {
        0.0
    } else {
        3.0 * (1.0 - x * x) / outside
    }
}

/// `(phase 1, phase 2)` block volumes for matrix multiplication:
/// `Σ_k 3 n² x_k²` and `e^{-β} n³ Σ_k rs_k c(x_k)`.
pub fn phase_volumes_matmul(beta: f64, rs: &[f64], n: usize) -> Result<(f64, f64), AnalysisError> {
    let xs = switch_fractions(beta, rs, KernelKind::Matmul)?;
    let n2 = (n * n) as f64;
    let v1 = 3.0 * n2 * xs.iter().map(|x| x * x).sum::<f64>();
    let per_task: f64 = rs.iter().zip(&xs).map(|(r, x)| r * matmul_random_task_cost(*x)).sum();
    Ok((v1, (-beta).exp() * n2 * n as f64 * per_task))
}

/// Phase volumes without the first-order expansion in `rs_k`.
pub fn exact_volumes(beta: f64, params: &AnalysisParams) -> Result<(f64, f64), AnalysisError> {
    match params.kernel {
        KernelKind::Outer => {
            Ok((phase1_volume_outer(beta, &params.rs, params.n)?, phase2_volume_outer(beta, &params.rs, params.n)?))
        }
        KernelKind::Matmul => phase_volumes_matmul(beta, &params.rs, params.n),
    }
}

/// Phase volumes expanded to first order in `rs_k`.
///
/// Outer: `2n Σ √(β rs_k)(1 − β rs_k / 4)` and `2 e^{-β} n² (1 − √β Σ rs_k^{3/2})`.
/// Matmul: `3n² (β^{2/3} Σ rs_k^{2/3} − β^{5/3} Σ rs_k^{5/3})` and
/// `3 e^{-β} n³ (1 − β^{2/3} Σ rs_k^{5/3})`.
pub fn first_order_volumes(beta: f64, params: &AnalysisParams) -> (f64, f64) {
    let n = params.n as f64;
    let rs = &params.rs;
    let tail = (-beta).exp();
    match params.kernel {
        KernelKind::Outer => {
            let s_half: f64 = rs.iter().map(|r| r.sqrt()).sum();
            let s_3half: f64 = rs.iter().map(|r| r.powf(1.5)).sum();
            let v1 = 2.0 * n * (beta.sqrt() * s_half - beta.powf(1.5) * s_3half / 4.0);
            let v2 = 2.0 * tail * n * n * (1.0 - beta.sqrt() * s_3half);
            (v1, v2)
        }
        KernelKind::Matmul => {
            let s_2 = rs.iter().map(|r| r.powf(2.0 / 3.0)).sum::<f64>();
            let s_5 = rs.iter().map(|r| r.powf(5.0 / 3.0)).sum::<f64>();
            let v1 = 3.0 * n * n * (beta.powf(2.0 / 3.0) * s_2 - beta.powf(5.0 / 3.0) * s_5);
            let v2 = 3.0 * tail * n * n * n * (1.0 - beta.powf(2.0 / 3.0) * s_5);
            (v1, v2)
        }
    }
}

/// Predicted communication of the two-phase strategy over the lower bound,
/// from [`exact_volumes`]. This is the prediction compared with simulation.
pub fn objective(beta: f64, params: &AnalysisParams) -> Result<f64, AnalysisError> {
    let (v1, v2) = exact_volumes(beta, params)?;
    Ok((v1 + v2) / params.lower_bound())
}

/// The same ratio from [`first_order_volumes`]. Its minimizer is the switch
/// parameter used by the two-phase strategies.
pub fn first_order_objective(beta: f64, params: &AnalysisParams) -> f64 {
    let (v1, v2) = first_order_volumes(beta, params);
    (v1 + v2) / params.lower_bound()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaResult {
    pub beta: f64,
    /// Value of [`first_order_objective`] at `beta`.
    pub objective_value: f64,
    /// `1 - e^{-beta}`.
    pub phase1_fraction: f64,
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`, stopping
/// when the bracket is narrower than `tol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Largest beta for which every worker's switch fraction is defined.
pub fn max_admissible_beta(rs: &[f64]) -> f64 {
    rs.iter().map(|r| 2.0 / r).fold(f64::INFINITY, f64::min)
}

/// Beta minimizing [`first_order_objective`] over [`BETA_BRACKET`].
pub fn optimize_beta(params: &AnalysisParams) -> BetaResult {
    let (lo, mut hi) = BETA_BRACKET;
    let cap = max_admissible_beta(&params.rs);
    if cap < hi {
        warn!("shrinking beta search interval to [{lo}, {cap}] so the switch point stays defined");
        hi = cap;
    }
    let beta = golden_section(|b| first_order_objective(b, params), lo, hi, BETA_TOLERANCE);
    BetaResult { beta, objective_value: first_order_objective(beta, params), phase1_fraction: 1.0 - (-beta).exp() }
}

/// Optimal beta for `p` equal-speed workers; needs no speed information.
pub fn beta_homogeneous(p: usize, n: usize, kind: KernelKind) -> f64 {
    let params = AnalysisParams::homogeneous(p.max(1), n.max(1), kind).expect("homogeneous speeds are valid");
    optimize_beta(&params).beta
}
