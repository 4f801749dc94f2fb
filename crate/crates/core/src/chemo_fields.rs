//! Chemoattractant and nutrient profiles in the moving frame.
//!
//! With `ρ` a finite sum of exponentials, the attractant equation
//! `-c S' - D_S S'' + α S = β ρ` is solved exactly: each mode `e^{μ z}` has
//! the particular solution `β r / (α - c μ - D_S μ²) e^{μ z}`, and two
//! decaying homogeneous terms restore `C¹` continuity at the origin.
//!
//! The nutrient equation `-c N' - D_N N'' + γ ρ N = 0` has a variable
//! coefficient and is discretized on a truncated interval with a zero slope
//! on the far left and `N = 1` on the far right.

use log::warn;
use thiserror::Error;

use crate::wave_profile::PiecewiseExponential;

/// Relative size below which a particular-solution denominator is resonant.
pub const RESONANCE_REL: f64 = 1e-10;

/// Default number of cells of the nutrient mesh.
pub const N_CELLS: usize = 4096;

/// Default half-width of the nutrient domain, in slowest decay lengths.
pub const N_DECAY_LENGTHS: f64 = 40.0;

/// Points of the grid used to count slope sign changes of `S`.
pub const UNIMODALITY_POINTS: usize = 4096;

/// Relative speed shift applied on resonance.
pub const RESONANCE_SHIFT: f64 = 1e-9;

const MAX_REFINEMENTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChemError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("mode with signed rate {mu} is resonant with the attractant operator at c = {c}")]
    ResonantMode { mu: f64, c: f64 },
    #[error("source term with non-positive rate {rate}")]
    NonDecayingInput { rate: f64 },
    #[error("nutrient profile is not increasing at node {index} after refinement")]
    NonMonotoneN { index: usize },
    #[error("nutrient problem needs c > 0, got {c}")]
    NonPositiveSpeed { c: f64 },
    #[error("invalid nutrient mesh: half-width {half_width}, {cells} cells")]
    InvalidMesh { half_width: f64, cells: usize },
}

/// Reaction-diffusion constants: `D_S`, `D_N`, degradation `α`, production
/// `β` and consumption `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemParams {
    pub d_s: f64,
    pub d_n: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ChemParams {
    /// Checks that every constant is strictly positive.
    pub fn new(d_s: f64, d_n: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self, ChemError> {
        let p = ChemParams {
            d_s,
            d_n,
            alpha,
            beta,
            gamma,
        };
        for (name, value) in p.named() {
            positive(name, value)?;
        }
        Ok(p)
    }

    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("d_s", self.d_s),
            ("d_n", self.d_n),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ]
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ChemError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ChemError::NonPositiveParameter { name, value })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<(), ChemError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ChemError::NonPositiveParameter { name, value })
    }
}

/// The attractant profile in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct SField {
    c: f64,
    d_s: f64,
    alpha: f64,
    /// `θ_+ > 0`, the decaying homogeneous exponent on `z < 0`.
    pub theta_plus: f64,
    /// `θ_- < 0`, the decaying homogeneous exponent on `z > 0`.
    pub theta_minus: f64,
    /// Coefficients of `e^{θ_+ z}` (left) and `e^{θ_- z}` (right).
    pub homogeneous: (f64, f64),
    /// `(coefficient, signed rate μ)` of each particular term, left side first.
    pub particular_left: Vec<(f64, f64)>,
    pub particular_right: Vec<(f64, f64)>,
    /// `∂_z S(0)`.
    pub slope_at_zero: f64,
    profile: PiecewiseExponential,
}

/// Solves `-c S' - D_S S'' + α S = β ρ` on the whole line.
///
/// `D_S` and `α` must be positive and `β` nonnegative. A source mode that
/// coincides with a homogeneous exponent makes its particular solution
/// singular; the speed is then shifted by `1e-9` relative (against the
/// operator speed scale `√(α D_S)` when `c = 0`) and the shift is logged.
pub fn solve_s(rho: &PiecewiseExponential, params: &ChemParams, c: f64) -> Result<SField, ChemError> {
    positive("d_s", params.d_s)?;
    positive("alpha", params.alpha)?;
    nonnegative("beta", params.beta)?;
    if let Some(&(_, rate)) = rho
        .left_terms
        .iter()
        .chain(&rho.right_terms)
        .find(|(_, r)| !(*r > 0.0 && r.is_finite()))
    {
        return Err(ChemError::NonDecayingInput { rate });
    }
    match solve_s_at(rho, params, c) {
        Err(ChemError::ResonantMode { mu, .. }) => {
            let shift = RESONANCE_SHIFT * c.abs().max((params.alpha * params.d_s).sqrt());
            warn!("resonant source mode (rate {mu}) at c = {c}; shifting c by {shift:e}");
            solve_s_at(rho, params, c + shift)
        }
        other => other,
    }
}

fn solve_s_at(rho: &PiecewiseExponential, params: &ChemParams, c: f64) -> Result<SField, ChemError> {
    let (d, alpha) = (params.d_s, params.alpha);
    let disc = (c * c + 4.0 * alpha * d).sqrt();
    let theta_plus = (-c + disc) / (2.0 * d);
    let theta_minus = (-c - disc) / (2.0 * d);

    let particular = |amp: f64, mu: f64| -> Result<(f64, f64), ChemError> {
        let denom = alpha - c * mu - d * mu * mu;
        let scale = alpha.max((c * mu).abs()).max(d * mu * mu);
        if denom.abs() < RESONANCE_REL * scale {
            return Err(ChemError::ResonantMode { mu, c });
        }
        Ok((params.beta * amp / denom, mu))
    };
    let particular_left = rho
        .left_terms
        .iter()
        .map(|&(a, r)| particular(a, r))
        .collect::<Result<Vec<_>, _>>()?;
    let particular_right = rho
        .right_terms
        .iter()
        .map(|&(a, r)| particular(a, -r))
        .collect::<Result<Vec<_>, _>>()?;

    let sum = |t: &[(f64, f64)]| t.iter().map(|p| p.0).sum::<f64>();
    let dsum = |t: &[(f64, f64)]| t.iter().map(|p| p.0 * p.1).sum::<f64>();
    // A + ΣP_l = B + ΣP_r and θ_+ A + Σμ P_l = θ_- B + Σμ P_r
    let d0 = sum(&particular_right) - sum(&particular_left);
    let d1 = dsum(&particular_right) - dsum(&particular_left);
    let a_hom = (d1 - theta_minus * d0) / (theta_plus - theta_minus);
    let b_hom = a_hom - d0;

    let mut left_terms = vec![(a_hom, theta_plus)];
    left_terms.extend(particular_left.iter().copied());
    let mut right_terms = vec![(b_hom, -theta_minus)];
    right_terms.extend(particular_right.iter().map(|&(p, mu)| (p, -mu)));
    let profile = PiecewiseExponential {
        left_terms,
        right_terms,
    };
    let slope_at_zero = profile.derivative(0.0);

    Ok(SField {
        c,
        d_s: d,
        alpha,
        theta_plus,
        theta_minus,
        homogeneous: (a_hom, b_hom),
        particular_left,
        particular_right,
        slope_at_zero,
        profile,
    })
}

impl SField {
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn value(&self, z: f64) -> f64 {
        self.profile.eval(z)
    }

    pub fn slope(&self, z: f64) -> f64 {
        self.profile.derivative(z)
    }

    /// Value at `z = 0` read from the left expansion.
    pub fn left_value_at_zero(&self) -> f64 {
        self.profile.left_terms.iter().map(|t| t.0).sum()
    }

    /// Slope at `z = 0` read from the left expansion.
    pub fn left_slope_at_zero(&self) -> f64 {
        self.profile.left_terms.iter().map(|t| t.0 * t.1).sum()
    }

    pub fn second_derivative(&self, z: f64) -> f64 {
        let (terms, sign) = if z < 0.0 {
            (&self.profile.left_terms, 1.0)
        } else {
            (&self.profile.right_terms, -1.0)
        };
        terms
            .iter()
            .map(|&(a, r)| {
                let e = sign * r * z;
                if e > -700.0 {
                    a * r * r * e.exp()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// The closed form as a sum of exponentials.
    pub fn as_exponential(&self) -> &PiecewiseExponential {
        &self.profile
    }

    /// `(residual, scale)` of the equation at `z` for the source `ρ`
    /// scaled by `β`.
    pub fn ode_residual(&self, rho: &PiecewiseExponential, beta: f64, z: f64) -> (f64, f64) {
        let terms = [
            -self.c * self.slope(z),
            -self.d_s * self.second_derivative(z),
            self.alpha * self.value(z),
            -beta * rho.eval(z),
        ];
        let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        (terms.iter().sum(), scale)
    }

    /// Smallest decay rate of `S` on either side.
    pub fn slowest_rate(&self) -> f64 {
        self.profile.slowest_rate()
    }

    /// Uniform grid of `points` nodes on `±40` slowest decay lengths.
    pub fn uniform_grid(&self, points: usize) -> Vec<f64> {
        let l = N_DECAY_LENGTHS / self.slowest_rate();
        (0..points)
            .map(|i| -l + 2.0 * l * i as f64 / (points - 1) as f64)
            .collect()
    }

    /// Number of sign changes of `∂_z S` along `grid`, ignoring exact zeros.
    pub fn slope_sign_changes(&self, grid: &[f64]) -> usize {
        let mut last = 0.0_f64;
        let mut changes = 0;
        for &z in grid {
            let s = self.slope(z);
            if s == 0.0 || !s.is_finite() {
                continue;
            }
            if last != 0.0 && (s > 0.0) != (last > 0.0) {
                changes += 1;
            }
            last = s;
        }
        changes
    }

    /// Exactly one sign change of the slope on the default uniform grid
    /// (plus the origin).
    pub fn is_unimodal(&self) -> bool {
        let mut grid = self.uniform_grid(UNIMODALITY_POINTS);
        grid.push(0.0);
        grid.sort_by(f64::total_cmp);
        self.slope_sign_changes(&grid) == 1
    }

    /// Location of the maximum, refined by bisection on the slope.
    pub fn max_location(&self) -> f64 {
        let grid = self.uniform_grid(UNIMODALITY_POINTS);
        let (mut lo, mut hi) = match grid
            .windows(2)
            .find(|w| self.slope(w[0]) > 0.0 && self.slope(w[1]) <= 0.0)
        {
            Some(w) => (w[0], w[1]),
            None => {
                return if self.slope_at_zero >= 0.0 {
                    grid[grid.len() - 1]
                } else {
                    grid[0]
                }
            }
        };
        // bracket the origin first so the kink in S'' does not slow things
        if lo < 0.0 && hi > 0.0 {
            if self.slope(0.0) > 0.0 {
                lo = 0.0;
            } else {
                hi = 0.0;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Smallest value on `grid`.
    pub fn min_on(&self, grid: &[f64]) -> f64 {
        grid.iter().map(|&z| self.value(z)).fold(f64::INFINITY, f64::min)
    }
}

/// The nutrient profile on a uniform mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct NField {
    /// Mesh nodes `-L_N, …, L_N`.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `N_{i+1} - N_i`, kept separately so that increments below the
    /// resolution of `N` itself stay visible.
    pub increments: Vec<f64>,
    /// `N` at the left end of the mesh.
    pub n_minus: f64,
    /// `N` at the right end of the mesh, equal to 1.
    pub n_plus: f64,
    pub upwinded: bool,
}

impl NField {
    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Centred derivative at interior node `i`.
    pub fn slope(&self, i: usize) -> f64 {
        (self.increments[i - 1] + self.increments[i]) / (2.0 * self.step())
    }

    /// Index of the first interior node with a non-positive slope.
    pub fn first_non_increasing(&self) -> Option<usize> {
        (1..self.grid.len() - 1).find(|&i| !(self.slope(i) > 0.0))
    }

    /// Linear interpolation, clamped to the end values outside the mesh.
    pub fn value_at(&self, z: f64) -> f64 {
        let (l, h) = (self.grid[0], self.step());
        let x = (z - l) / h;
        if x <= 0.0 {
            return self.values[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let t = x - i as f64;
        self.values[i] + t * self.increments[i]
    }
}

/// Nutrient solve on `[-half_width, half_width]` with the default mesh.
pub fn solve_n(
    rho: &PiecewiseExponential,
    params: &ChemParams,
    c: f64,
    half_width: f64,
) -> Result<NField, ChemError> {
    solve_n_with_cells(rho, params, c, half_width, N_CELLS)
}

/// Default truncation `40 / (slowest decay rate of ρ)`.
pub fn default_half_width(rho: &PiecewiseExponential) -> f64 {
    N_DECAY_LENGTHS / rho.slowest_rate()
}

/// Nutrient solve with a given number of cells; the mesh is doubled up to
/// three times if the discrete profile fails to increase.
pub fn solve_n_with_cells(
    rho: &PiecewiseExponential,
    params: &ChemParams,
    c: f64,
    half_width: f64,
    cells: usize,
) -> Result<NField, ChemError> {
    if !(c > 0.0) {
        return Err(ChemError::NonPositiveSpeed { c });
    }
    positive("d_n", params.d_n)?;
    nonnegative("gamma", params.gamma)?;
    if !(half_width > 0.0 && half_width.is_finite()) || cells < 2 {
        return Err(ChemError::InvalidMesh { half_width, cells });
    }
    if params.gamma == 0.0 {
        return Ok(march_n(rho, params, c, half_width, cells));
    }
    let mut cells = cells;
    let mut last_bad = 0;
    for attempt in 0..=MAX_REFINEMENTS {
        let field = march_n(rho, params, c, half_width, cells);
        match field.first_non_increasing() {
            None => return Ok(field),
            Some(i) => {
                last_bad = i;
                if attempt < MAX_REFINEMENTS {
                    warn!("nutrient profile not increasing at node {i}; refining to {} cells", 2 * cells);
                }
            }
        }
        cells *= 2;
    }
    Err(ChemError::NonMonotoneN { index: last_bad })
}

/// Three-point stencil coefficients `(lower, upper)` of the nutrient
/// operator and whether the first derivative is upwinded.
pub fn n_stencil(params: &ChemParams, c: f64, h: f64) -> (f64, f64, bool) {
    let d = params.d_n / (h * h);
    if c * h / params.d_n > 2.0 {
        // transport runs towards -z, so the forward difference is upwind
        (-d, -d - c / h, true)
    } else {
        (c / (2.0 * h) - d, -c / (2.0 * h) - d, false)
    }
}

/// Marches the discrete equation from the left end, where the zero slope
/// fixes the first increment, then rescales so that `N(L) = 1`. The source
/// enters through its cell averages, which keeps modes much steeper than the
/// mesh from being sampled at a single point.
fn march_n(
    rho: &PiecewiseExponential,
    params: &ChemParams,
    c: f64,
    half_width: f64,
    cells: usize,
) -> NField {
    let h = 2.0 * half_width / cells as f64;
    let grid: Vec<f64> = (0..=cells).map(|i| -half_width + h * i as f64).collect();
    let (lower, upper, upwinded) = n_stencil(params, c, h);
    let (l, u) = (-lower, -upper);
    // row i: l (δ_i - δ_{i-1}) ... written as u δ_i = l δ_{i-1} + γ ρ_i N_i
    let mut values = Vec::with_capacity(cells + 1);
    let mut increments = Vec::with_capacity(cells);
    let mut n = 1.0;
    values.push(n);
    // ghost node mirrors node 1, so the first row reads (l + u) δ_0 = γ ρ_0 N_0
    let cell_mean = |z: f64| rho.integral_between(z - 0.5 * h, z + 0.5 * h) / h;
    let mut delta = params.gamma * cell_mean(grid[0]) * n / (l + u);
    increments.push(delta);
    for &z in &grid[1..cells] {
        n += delta;
        values.push(n);
        delta = (l * delta + params.gamma * cell_mean(z) * n) / u;
        increments.push(delta);
    }
    n += delta;
    values.push(n);
    let norm = n;
    values.iter_mut().for_each(|v| *v /= norm);
    increments.iter_mut().for_each(|v| *v /= norm);
    *values.last_mut().unwrap() = 1.0;
    NField {
        n_minus: values[0],
        n_plus: 1.0,
        grid,
        values,
        increments,
        upwinded,
    }
}
