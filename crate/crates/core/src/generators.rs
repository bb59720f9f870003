//! Quadrature evaluation of the generators L_s and L_s^ε and of the gap
//! between them.

use rayon::prelude::*;

use crate::coeffs::{diffusion_a_eps, drift_b_eps, JumpCoefficient, TestFunction};
use crate::error::{Error, Result};
use crate::measures::LevyMeasureModel;

/// Below this mark the full generator is replaced by its second-order Taylor
/// expansion φ′b + ½φ″a; the neglected part is at most ‖φ‴‖η₃(TAIL_CUTOFF)/6.
pub const TAIL_CUTOFF: f64 = 1e-5;

/// Allowance for quadrature error on both sides of the bound.
pub const DEFAULT_SLACK: f64 = 1e-6;

fn jump_part(
    phi: &TestFunction,
    s: f64,
    x: f64,
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    lower: f64,
) -> Result<f64> {
    let fx = phi.eval(x);
    measure.integrate_mu(|z| phi.eval(x + coef.eval(s, z, x)) - fx, lower, 1.0)
}

fn taylor_part(
    phi: &TestFunction,
    s: f64,
    x: f64,
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    eps: f64,
) -> Result<f64> {
    let b = drift_b_eps(coef, measure, s, x, eps)?;
    let a = diffusion_a_eps(coef, measure, s, x, eps)?;
    Ok(phi.derivative(1, x) * b + 0.5 * phi.derivative(2, x) * a)
}

/// L_sφ(x) = ∫_{(0,1]} (φ(x+c(s,z,x)) − φ(x)) μ(dz).
pub fn apply_l(
    phi: &TestFunction,
    s: f64,
    x: f64,
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
) -> Result<f64> {
    Ok(jump_part(phi, s, x, coef, measure, TAIL_CUTOFF)?
        + taylor_part(phi, s, x, coef, measure, TAIL_CUTOFF)?)
}

/// L_s^εφ(x) = ∫_{z>ε} (φ(x+c) − φ(x)) μ(dz) + φ′(x) b_ε(s,x) + ½ φ″(x) a_ε(s,x).
pub fn apply_l_eps(
    phi: &TestFunction,
    s: f64,
    x: f64,
    eps: f64,
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
) -> Result<f64> {
    Ok(jump_part(phi, s, x, coef, measure, eps)? + taylor_part(phi, s, x, coef, measure, eps)?)
}

/// Generator of the truncation scheme: ∫_{z>ε} (φ(x+c) − φ(x)) μ(dz).
pub fn apply_l_truncated(
    phi: &TestFunction,
    s: f64,
    x: f64,
    eps: f64,
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
) -> Result<f64> {
    jump_part(phi, s, x, coef, measure, eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPoint {
    pub phi: &'static str,
    pub eps: f64,
    pub s: f64,
    pub x: f64,
    pub full: f64,
    pub approx: f64,
    /// |L_sφ − L_s^εφ|.
    pub gap: f64,
    /// (1/6)‖φ‖_{3,∞} η₃(ε).
    pub bound: f64,
    pub pass: bool,
    /// |L_sφ − L̃_s^εφ| for the truncation generator.
    pub truncation_gap: f64,
    /// ‖φ‖_{1,∞} η₁(ε).
    pub truncation_bound: f64,
    pub truncation_pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorReport {
    pub points: Vec<GeneratorPoint>,
    pub slack: f64,
}

impl GeneratorReport {
    pub fn all_pass(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }

    pub fn truncation_all_pass(&self) -> bool {
        self.points.iter().all(|p| p.truncation_pass)
    }

    pub fn max_gap(&self) -> f64 {
        self.points.iter().map(|p| p.gap).fold(0.0, f64::max)
    }

    /// Worst gap/bound ratio.
    pub fn max_ratio(&self) -> f64 {
        self.points
            .iter()
            .filter(|p| p.bound > 0.0)
            .map(|p| p.gap / p.bound)
            .fold(0.0, f64::max)
    }
}

/// (s, x) grid: 5 times in [0, 1] by 21 states in [−5, 5].
pub fn default_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(105);
    for i in 0..5 {
        for j in 0..21 {
            grid.push((0.25 * i as f64, -5.0 + 0.5 * j as f64));
        }
    }
    grid
}

/// Evaluates both generators at every (ε, s, x) and checks the gap against
/// (1/6)‖φ‖_{3,∞}η₃(ε) + slack, and the truncation gap against ‖φ‖_{1,∞}η₁(ε) + slack.
pub fn remainder_check(
    phi: &TestFunction,
    eps_list: &[f64],
    grid: &[(f64, f64)],
    coef: &JumpCoefficient,
    measure: &LevyMeasureModel,
    slack: f64,
) -> Result<GeneratorReport> {
    if grid.iter().any(|&(s, x)| !(s.is_finite() && x.is_finite())) {
        return Err(Error::domain("generator grid must be finite"));
    }
    let full: Vec<f64> = grid
        .par_iter()
        .map(|&(s, x)| apply_l(phi, s, x, coef, measure))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(grid.len() * eps_list.len());
    for &eps in eps_list {
        let bound = phi.norm3 * measure.eta_p(3.0, eps, coef.envelope())? / 6.0;
        let truncation_bound = phi.norm1 * measure.eta_p(1.0, eps, coef.envelope())?;
        let rows: Vec<GeneratorPoint> = grid
            .par_iter()
            .zip(full.par_iter())
            .map(|(&(s, x), &l)| {
                let big = jump_part(phi, s, x, coef, measure, eps)?;
                let approx = big + taylor_part(phi, s, x, coef, measure, eps)?;
                let gap = (l - approx).abs();
                let truncation_gap = (l - big).abs();
                Ok(GeneratorPoint {
                    phi: phi.name,
                    eps,
                    s,
                    x,
                    full: l,
                    approx,
                    gap,
                    bound,
                    pass: gap <= bound + slack,
                    truncation_gap,
                    truncation_bound,
                    truncation_pass: truncation_gap <= truncation_bound + slack,
                })
            })
            .collect::<Result<_>>()?;
        points.extend(rows);
    }
    Ok(GeneratorReport { points, slack })
}
