//! Case-mode exponents: roots of the dispersion relation on each side.
//!
//! On a given side the relation reads `Σ_k ω_k / (s_k - λ) = 0` with singular
//! values `s_k = T(v_k - c) / (v_k - c)`. The left-hand side is increasing in
//! `λ` between consecutive singular values, which isolates every root in a
//! known bracket. Only the roots giving integrable modes are kept: negative
//! exponents on the left (one per velocity below `c`), positive exponents on
//! the right (one per velocity above `c`).

use thiserror::Error;

use crate::velocity_model::{ModelError, Side, VelocityModel};

const MAX_ITERATIONS: usize = 200;
const ROOT_REL_TOL: f64 = 1e-14;
const NARROW_BRACKET: f64 = 1e3 * f64::EPSILON;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("lambda = {lambda} coincides with a singular value")]
    SingularLambda { lambda: f64 },
    #[error("bracket ({lo}, {hi}) on the {side:?} side is too narrow to isolate a root")]
    BracketFailure { side: Side, lo: f64, hi: f64 },
    #[error("speed {c} is not confined on the {side:?} side (mean run length has the wrong sign)")]
    NotConfined { c: f64, side: Side },
}

/// Exponents of the decaying Case modes at speed `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionRoots {
    pub c: f64,
    /// Index of the largest active velocity below `c`.
    pub cutting_index: usize,
    /// Negative exponents (left side), ascending; the last one is closest to 0.
    pub left: Vec<f64>,
    /// Positive exponents (right side), ascending; the first one is `λ_K`.
    pub right: Vec<f64>,
}

impl DispersionRoots {
    /// `λ_K`, the slowest decay rate for `z → +∞`.
    pub fn slowest_right(&self) -> f64 {
        self.right[0]
    }

    /// `|λ_{-K}|`, the slowest decay rate for `z → -∞`.
    pub fn slowest_left(&self) -> f64 {
        -*self.left.last().expect("at least one left root")
    }

    /// Smallest decay rate over both sides.
    pub fn slowest_rate(&self) -> f64 {
        self.slowest_right().min(self.slowest_left())
    }

    pub fn side(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// `T_side(v_k - c) / (v_k - c)` for every active velocity.
pub fn singular_values(model: &VelocityModel, c: f64, side: Side) -> Vec<f64> {
    let rates = model.tumbling_rates();
    model
        .velocities()
        .iter()
        .map(|&v| {
            let u = v - c;
            rates.side_rate(side, u) / u
        })
        .collect()
}

/// `Σ_k ω_k (T_side(v_k - c)/(v_k - c) - λ)^{-1}`.
pub fn dispersion_residual(
    model: &VelocityModel,
    c: f64,
    lambda: f64,
    side: Side,
) -> Result<f64, DispersionError> {
    let s = singular_values(model, c, side);
    if s.contains(&lambda) {
        return Err(DispersionError::SingularLambda { lambda });
    }
    Ok(residual(&s, model.weights(), lambda))
}

#[inline]
fn residual(singular: &[f64], weights: &[f64], lambda: f64) -> f64 {
    singular
        .iter()
        .zip(weights)
        .map(|(&s, &w)| w / (s - lambda))
        .sum()
}

/// Largest term magnitude of the residual sum, the scale its error is
/// measured against.
pub fn residual_scale(model: &VelocityModel, c: f64, lambda: f64, side: Side) -> f64 {
    singular_values(model, c, side)
        .iter()
        .zip(model.weights())
        .map(|(&s, &w)| (w / (s - lambda)).abs())
        .fold(0.0, f64::max)
}

pub fn solve_roots(model: &VelocityModel, c: f64) -> Result<DispersionRoots, DispersionError> {
    let cutting_index = model.cutting_index(c)?;
    let w = model.weights();

    let left_s = singular_values(model, c, Side::Left);
    let mut poles: Vec<f64> = left_s.iter().copied().filter(|&s| s < 0.0).collect();
    poles.sort_by(f64::total_cmp);
    if residual(&left_s, w, 0.0) <= 0.0 {
        return Err(DispersionError::NotConfined { c, side: Side::Left });
    }
    let scale = left_s.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let mut edges = poles.clone();
    edges.push(0.0);
    let left = edges
        .windows(2)
        .map(|e| root_in_bracket(&left_s, w, e[0], e[1], scale, Side::Left))
        .collect::<Result<Vec<_>, _>>()?;

    let right_s = singular_values(model, c, Side::Right);
    let mut poles: Vec<f64> = right_s.iter().copied().filter(|&s| s > 0.0).collect();
    poles.sort_by(f64::total_cmp);
    if residual(&right_s, w, 0.0) >= 0.0 {
        return Err(DispersionError::NotConfined { c, side: Side::Right });
    }
    let scale = right_s.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let mut edges = vec![0.0];
    edges.extend(poles);
    let right = edges
        .windows(2)
        .map(|e| root_in_bracket(&right_s, w, e[0], e[1], scale, Side::Right))
        .collect::<Result<Vec<_>, _>>()?;

    debug_assert_eq!(left.len(), cutting_index + 1);
    debug_assert_eq!(left.len() + right.len(), model.len());
    Ok(DispersionRoots {
        c,
        cutting_index,
        left,
        right,
    })
}

/// Root of the increasing residual on `(lo, hi)`; endpoints are poles (where
/// the residual diverges) or zero.
fn root_in_bracket(
    singular: &[f64],
    weights: &[f64],
    lo: f64,
    hi: f64,
    scale: f64,
    side: Side,
) -> Result<f64, DispersionError> {
    if hi - lo < NARROW_BRACKET * scale {
        return Err(DispersionError::BracketFailure { side, lo, hi });
    }
    let g = |x: f64| residual(singular, weights, x);
    let (mut a, mut b) = (lo, hi);
    let mut ga = if lo == 0.0 { g(0.0) } else { f64::NEG_INFINITY };
    let mut gb = if hi == 0.0 { g(0.0) } else { f64::INFINITY };
    let mut last_width = b - a;
    let mut use_secant = false;

    for _ in 0..MAX_ITERATIONS {
        let width = b - a;
        if width <= ROOT_REL_TOL * a.abs().max(b.abs()) {
            break;
        }
        let mut x = 0.5 * (a + b);
        if use_secant && ga.is_finite() && gb.is_finite() {
            let t = a - ga * width / (gb - ga);
            if t > a + 1e-3 * width && t < b - 1e-3 * width {
                x = t;
            }
        }
        if x <= a || x >= b {
            break;
        }
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            a = x;
            ga = gx;
        } else {
            b = x;
            gb = gx;
        }
        // fall back to bisection whenever the bracket failed to halve
        use_secant = b - a <= 0.5 * last_width;
        last_width = width;
    }
    if ga.is_finite() && gb.is_finite() && gb != ga {
        let t = a - ga * (b - a) / (gb - ga);
        if t >= a && t <= b {
            return Ok(t);
        }
    }
    Ok(if ga.abs() <= gb.abs() { a } else { b })
}
