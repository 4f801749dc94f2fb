//! Stationary kinetic density as a superposition of Case modes.
//!
//! On each side of the origin the density is
//! `f(z, v_k) = Σ_j coef_j exp(-λ_j z) / (T(v_k - c) - λ_j (v_k - c))`,
//! with the left exponents negative and the right ones positive. The
//! coefficients come from identifying both expansions at `z = 0`; the
//! resulting square system has a one-dimensional kernel whose existence is
//! guaranteed by mass conservation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dispersion::{solve_roots, DispersionError, DispersionRoots};
use crate::quadrature::adaptive_simpson;
use crate::velocity_model::{Side, TumblingRates, VelocityModel};

/// Exponents below this value are flushed to zero.
const EXP_FLOOR: f64 = -700.0;

/// Innermost point of the logarithmic verification grid.
pub const GRID_INNER: f64 = 1e-6;
/// Points per side on the verification grid.
pub const GRID_POINTS: usize = 2048;
/// Extent of the verification grid in units of the slowest decay length.
pub const GRID_DECAY_LENGTHS: f64 = 40.0;

const MATCHING_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    #[error("matching system does not have a one-dimensional kernel (residual {residual:e})")]
    NullSpaceDimension { residual: f64 },
    #[error("profile is not positive: f(z = {z}, v_{k}) = {value:e}")]
    NonPositiveProfile { z: f64, k: usize, value: f64 },
    #[error("exponential term with non-positive rate {rate}")]
    NonDecayingInput { rate: f64 },
}

#[inline]
fn decay(exponent: f64) -> f64 {
    if exponent > EXP_FLOOR {
        exponent.exp()
    } else {
        0.0
    }
}

/// `Σ coef e^{rate z}` for `z < 0` and `Σ coef e^{-rate z}` for `z ≥ 0`,
/// every rate positive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseExponential {
    pub left_terms: Vec<(f64, f64)>,
    pub right_terms: Vec<(f64, f64)>,
}

impl PiecewiseExponential {
    pub fn new(
        left_terms: Vec<(f64, f64)>,
        right_terms: Vec<(f64, f64)>,
    ) -> Result<Self, ProfileError> {
        if let Some(&(_, rate)) = left_terms
            .iter()
            .chain(&right_terms)
            .find(|(_, r)| !(*r > 0.0) || !r.is_finite())
        {
            return Err(ProfileError::NonDecayingInput { rate });
        }
        Ok(PiecewiseExponential {
            left_terms,
            right_terms,
        })
    }

    pub fn eval(&self, z: f64) -> f64 {
        if z < 0.0 {
            self.left_terms.iter().map(|&(a, r)| a * decay(r * z)).sum()
        } else {
            self.right_terms.iter().map(|&(a, r)| a * decay(-r * z)).sum()
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        if z < 0.0 {
            self.left_terms.iter().map(|&(a, r)| a * r * decay(r * z)).sum()
        } else {
            self.right_terms
                .iter()
                .map(|&(a, r)| -a * r * decay(-r * z))
                .sum()
        }
    }

    /// Primitive vanishing at `-∞` (left) or `+∞` (right), on the side of `z`.
    fn tail_primitive(&self, z: f64) -> f64 {
        if z < 0.0 {
            self.left_terms.iter().map(|&(a, r)| a / r * decay(r * z)).sum()
        } else {
            -self
                .right_terms
                .iter()
                .map(|&(a, r)| a / r * decay(-r * z))
                .sum::<f64>()
        }
    }

    /// `∫_a^b` of the function, `a <= b`.
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        if a < 0.0 && b >= 0.0 {
            self.left_integral() - self.tail_primitive(a) + self.integral_between(0.0, b)
        } else {
            self.tail_primitive(b) - self.tail_primitive(a)
        }
    }

    pub fn left_integral(&self) -> f64 {
        self.left_terms.iter().map(|&(a, r)| a / r).sum()
    }

    pub fn right_integral(&self) -> f64 {
        self.right_terms.iter().map(|&(a, r)| a / r).sum()
    }

    pub fn integral(&self) -> f64 {
        self.left_integral() + self.right_integral()
    }

    /// Smallest rate over both sides (infinite if there are no terms).
    pub fn slowest_rate(&self) -> f64 {
        self.left_terms
            .iter()
            .chain(&self.right_terms)
            .map(|t| t.1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |t: &Vec<(f64, f64)>| t.iter().map(|&(a, r)| (a * factor, r)).collect();
        PiecewiseExponential {
            left_terms: s(&self.left_terms),
            right_terms: s(&self.right_terms),
        }
    }

    /// Term-wise concatenation, i.e. the sum of both functions.
    pub fn sum(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.left_terms.extend_from_slice(&other.left_terms);
        out.right_terms.extend_from_slice(&other.right_terms);
        out
    }
}

/// Analytic mass `∫ e^{-λ z} Σ_k ω_k / (T(v_k-c) - λ (v_k-c)) dz` of one
/// mode over its half-line.
pub fn per_mode_mass(model: &VelocityModel, c: f64, lambda: f64, side: Side) -> f64 {
    let rates = model.tumbling_rates();
    let density: f64 = model
        .velocities()
        .iter()
        .zip(model.weights())
        .map(|(&v, &w)| {
            let u = v - c;
            w / (rates.side_rate(side, u) - lambda * u)
        })
        .sum();
    match side {
        Side::Left => -density / lambda,
        Side::Right => density / lambda,
    }
}

/// Logarithmically spaced points in `[inner, outer]`.
pub fn log_grid(inner: f64, outer: f64, points: usize) -> Vec<f64> {
    let (a, b) = (inner.ln(), outer.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// The normalized stationary density at a given admissible speed.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    model: VelocityModel,
    c: f64,
    rates: TumblingRates,
    roots: DispersionRoots,
    a: Vec<f64>,
    b: Vec<f64>,
    left_mass: f64,
    right_mass: f64,
    // [k][j] = 1 / (T(v_k - c) - λ_j (v_k - c))
    left_inv: Vec<Vec<f64>>,
    right_inv: Vec<Vec<f64>>,
}

fn inverse_denominators(
    model: &VelocityModel,
    rates: &TumblingRates,
    c: f64,
    lambdas: &[f64],
    side: Side,
) -> Vec<Vec<f64>> {
    model
        .velocities()
        .iter()
        .map(|&v| {
            let u = v - c;
            let t = rates.side_rate(side, u);
            lambdas.iter().map(|&l| 1.0 / (t - l * u)).collect()
        })
        .collect()
}

/// Solves the matching problem at `z = 0` and normalizes to unit mass.
pub fn solve_modes(model: &VelocityModel, c: f64) -> Result<WaveProfile, ProfileError> {
    let roots = solve_roots(model, c)?;
    let rates = model.tumbling_rates();
    let n = model.len();
    let left_inv = inverse_denominators(model, &rates, c, &roots.left, Side::Left);
    let right_inv = inverse_denominators(model, &rates, c, &roots.right, Side::Right);
    let nl = roots.left.len();

    let matching = DMatrix::from_fn(n, n, |k, j| {
        if j < nl {
            left_inv[k][j]
        } else {
            -right_inv[k][j - nl]
        }
    });
    let masses: Vec<f64> = roots
        .left
        .iter()
        .map(|&l| per_mode_mass(model, c, l, Side::Left))
        .chain(
            roots
                .right
                .iter()
                .map(|&l| per_mode_mass(model, c, l, Side::Right)),
        )
        .collect();

    // (ω_k (v_k - c)) annihilates the matching matrix from the left: the row
    // carrying its largest component is redundant and is swapped for the mass
    // constraint.
    let replaced = model
        .velocities()
        .iter()
        .zip(model.weights())
        .map(|(&v, &w)| (w * (v - c)).abs())
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| i)
        .expect("nonempty model");
    let mut system = matching.clone();
    for (j, &m) in masses.iter().enumerate() {
        system[(replaced, j)] = m;
    }
    let mut rhs = DVector::zeros(n);
    rhs[replaced] = 1.0;
    let x = system
        .lu()
        .solve(&rhs)
        .ok_or(ProfileError::NullSpaceDimension {
            residual: f64::INFINITY,
        })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ProfileError::NullSpaceDimension {
            residual: f64::INFINITY,
        });
    }
    let row = matching.row(replaced);
    let dropped: f64 = (0..n).map(|j| row[j] * x[j]).sum();
    let scale = (0..n).map(|j| (row[j] * x[j]).abs()).fold(0.0, f64::max);
    if dropped.abs() > MATCHING_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(ProfileError::NullSpaceDimension {
            residual: dropped.abs() / scale,
        });
    }

    let mut a: Vec<f64> = x.iter().take(nl).copied().collect();
    let mut b: Vec<f64> = x.iter().skip(nl).copied().collect();
    let mut left_mass: f64 = a.iter().zip(&masses[..nl]).map(|(c, m)| c * m).sum();
    let mut right_mass: f64 = b.iter().zip(&masses[nl..]).map(|(c, m)| c * m).sum();

    let mut profile = WaveProfile {
        model: model.clone(),
        c,
        rates,
        roots,
        a: Vec::new(),
        b: Vec::new(),
        left_mass,
        right_mass,
        left_inv,
        right_inv,
    };
    let f0_top: f64 = (0..b.len())
        .map(|j| b[j] * profile.right_inv[n - 1][j])
        .sum();
    if f0_top < 0.0 {
        a.iter_mut().chain(b.iter_mut()).for_each(|v| *v = -*v);
        left_mass = -left_mass;
        right_mass = -right_mass;
    }
    profile.a = a;
    profile.b = b;
    profile.left_mass = left_mass;
    profile.right_mass = right_mass;
    profile.verify_positive()?;
    Ok(profile)
}

impl WaveProfile {
    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn rates(&self) -> &TumblingRates {
        &self.rates
    }

    pub fn roots(&self) -> &DispersionRoots {
        &self.roots
    }

    /// Coefficients `a_j` of the left modes, in the order of `roots().left`.
    pub fn left_coefficients(&self) -> &[f64] {
        &self.a
    }

    /// Coefficients `b_j` of the right modes, in the order of `roots().right`.
    pub fn right_coefficients(&self) -> &[f64] {
        &self.b
    }

    pub fn left_mass(&self) -> f64 {
        self.left_mass
    }

    pub fn right_mass(&self) -> f64 {
        self.right_mass
    }

    /// Relative velocity `v_k - c`.
    pub fn relative_velocity(&self, k: usize) -> f64 {
        self.model.velocities()[k] - self.c
    }

    /// Mode amplitudes `coef_j e^{-λ_j z}` for the side containing `z`.
    fn amplitudes(&self, z: f64) -> (Side, Vec<f64>) {
        self.amplitudes_on(Side::of(z), z)
    }

    fn amplitudes_on(&self, side: Side, z: f64) -> (Side, Vec<f64>) {
        let (coef, lam) = match side {
            Side::Left => (&self.a, &self.roots.left),
            Side::Right => (&self.b, &self.roots.right),
        };
        let amp = coef
            .iter()
            .zip(lam)
            .map(|(&c, &l)| c * decay(-l * z))
            .collect();
        (side, amp)
    }

    fn inv(&self, side: Side) -> &[Vec<f64>] {
        match side {
            Side::Left => &self.left_inv,
            Side::Right => &self.right_inv,
        }
    }

    /// `f(z, v_k)`; at `z = 0` the right expansion is used.
    pub fn f(&self, z: f64, k: usize) -> f64 {
        let (side, amp) = self.amplitudes(z);
        dot(&amp, &self.inv(side)[k])
    }

    /// `f(z, v_k)` for every active velocity.
    pub fn f_all(&self, z: f64) -> Vec<f64> {
        let (side, amp) = self.amplitudes(z);
        self.inv(side).iter().map(|row| dot(&amp, row)).collect()
    }

    /// `f(0, v_k)` from the left expansion.
    pub fn f_left_limit_at_zero(&self, k: usize) -> f64 {
        dot(&self.a, &self.left_inv[k])
    }

    pub fn f_derivative(&self, z: f64, k: usize) -> f64 {
        let (side, amp) = self.amplitudes(z);
        let lam = self.roots.side(side);
        amp.iter()
            .zip(lam)
            .zip(&self.inv(side)[k])
            .map(|((a, l), d)| -l * a * d)
            .sum()
    }

    pub fn rho(&self, z: f64) -> f64 {
        dot(&self.f_all(z), self.model.weights())
    }

    /// Contribution of velocities above `c`.
    pub fn rho_plus(&self, z: f64) -> f64 {
        self.partial_density(z, |u| u > 0.0, false)
    }

    /// Contribution of velocities below `c`.
    pub fn rho_minus(&self, z: f64) -> f64 {
        self.partial_density(z, |u| u < 0.0, false)
    }

    pub fn rho_derivative(&self, z: f64) -> f64 {
        self.partial_density(z, |_| true, true)
    }

    pub fn rho_plus_derivative(&self, z: f64) -> f64 {
        self.partial_density(z, |u| u > 0.0, true)
    }

    pub fn rho_minus_derivative(&self, z: f64) -> f64 {
        self.partial_density(z, |u| u < 0.0, true)
    }

    fn partial_density(&self, z: f64, keep: impl Fn(f64) -> bool, derivative: bool) -> f64 {
        (0..self.model.len())
            .filter(|&k| keep(self.relative_velocity(k)))
            .map(|k| {
                let f = if derivative {
                    self.f_derivative(z, k)
                } else {
                    self.f(z, k)
                };
                self.model.weights()[k] * f
            })
            .sum()
    }

    /// Density of tumbling events `I(z) = Σ ω_k T(z, v_k - c) f(z, v_k)`,
    /// assembled from `ρ^±` with the side rates (`z = 0` uses the right
    /// side).
    pub fn tumbling_density(&self, z: f64) -> f64 {
        self.tumbling_density_on(Side::of(z), z)
    }

    /// `I` evaluated with the expansion of a given side, which lets `z = 0`
    /// be read as a left limit.
    pub fn tumbling_density_on(&self, side: Side, z: f64) -> f64 {
        let (_, amp) = self.amplitudes_on(side, z);
        let (mut minus, mut plus) = (0.0, 0.0);
        for (k, row) in self.inv(side).iter().enumerate() {
            let wf = self.model.weights()[k] * dot(&amp, row);
            if self.relative_velocity(k) < 0.0 {
                minus += wf;
            } else {
                plus += wf;
            }
        }
        match side {
            Side::Left => self.rates.t_mm * minus + self.rates.t_mp * plus,
            Side::Right => self.rates.t_pm * minus + self.rates.t_pp * plus,
        }
    }

    /// `Σ_k ω_k T(z, v_k - c) f(z, v_k)` summed velocity by velocity.
    pub fn tumbling_density_direct(&self, z: f64) -> f64 {
        let side = Side::of(z);
        self.f_all(z)
            .iter()
            .enumerate()
            .map(|(k, f)| {
                self.model.weights()[k] * self.rates.side_rate(side, self.relative_velocity(k)) * f
            })
            .sum()
    }

    pub fn tumbling_density_derivative(&self, z: f64) -> f64 {
        let side = Side::of(z);
        (0..self.model.len())
            .map(|k| {
                self.model.weights()[k]
                    * self.rates.side_rate(side, self.relative_velocity(k))
                    * self.f_derivative(z, k)
            })
            .sum()
    }

    /// Mass flux `Σ ω_k (v_k - c) f(z, v_k)`, zero for a stationary
    /// integrable profile.
    pub fn flux(&self, z: f64) -> f64 {
        self.f_all(z)
            .iter()
            .enumerate()
            .map(|(k, f)| self.model.weights()[k] * self.relative_velocity(k) * f)
            .sum()
    }

    /// The spatial density as a sum of exponentials.
    pub fn rho_exponential(&self) -> PiecewiseExponential {
        let w = self.model.weights();
        let density = |inv: &[Vec<f64>], j: usize| -> f64 {
            inv.iter().zip(w).map(|(row, wk)| wk * row[j]).sum()
        };
        let left = (0..self.a.len())
            .map(|j| (self.a[j] * density(&self.left_inv, j), -self.roots.left[j]))
            .collect();
        let right = (0..self.b.len())
            .map(|j| (self.b[j] * density(&self.right_inv, j), self.roots.right[j]))
            .collect();
        PiecewiseExponential::new(left, right).expect("decaying modes by construction")
    }

    /// Verification grid: `z = 0` plus logarithmically spaced points on each
    /// side out to forty decay lengths of that side's slowest mode, ascending.
    pub fn verification_grid(&self) -> Vec<f64> {
        let left = log_grid(GRID_INNER, GRID_DECAY_LENGTHS / self.roots.slowest_left(), GRID_POINTS);
        let right = log_grid(GRID_INNER, GRID_DECAY_LENGTHS / self.roots.slowest_right(), GRID_POINTS);
        let mut grid: Vec<f64> = left.iter().rev().map(|z| -z).collect();
        grid.push(0.0);
        grid.extend(right);
        grid
    }

    /// Positivity on the verification grid. Points where every mode of the
    /// local side has underflowed are skipped: there the exact value is
    /// below the smallest double.
    fn verify_positive(&self) -> Result<(), ProfileError> {
        for z in self.verification_grid() {
            let side_rate = match Side::of(z) {
                Side::Left => self.roots.slowest_left(),
                Side::Right => self.roots.slowest_right(),
            };
            if side_rate * z.abs() > -EXP_FLOOR {
                continue;
            }
            for (k, &value) in self.f_all(z).iter().enumerate() {
                if !(value > 0.0) {
                    return Err(ProfileError::NonPositiveProfile { z, k, value });
                }
            }
        }
        Ok(())
    }

    /// Maximum over velocities of the mismatch between both expansions at
    /// `z = 0`, relative to the largest `f(0, ·)`.
    pub fn matching_residual(&self) -> f64 {
        let right = self.f_all(0.0);
        let scale = right.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (0..self.model.len())
            .map(|k| (self.f_left_limit_at_zero(k) - right[k]).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// Reconstructs `f(z, v_k)` from `I` along the characteristic through
    /// `(z, v_k)` by adaptive quadrature with tolerance `tol`.
    ///
    /// When the characteristic, followed backward, reaches the origin the
    /// boundary value `f(0, v_k)` enters with an exponential weight;
    /// otherwise the integral runs to infinity.
    pub fn duhamel_f(&self, z: f64, k: usize, tol: f64) -> f64 {
        let u = self.relative_velocity(k);
        let side = Side::of(z);
        let t = self.rates.side_rate(side, u);
        let integrand = |s: f64| self.tumbling_density_on(side, z - s * u) * (-s * t).exp();
        let to_origin = z / u;
        if to_origin > 0.0 {
            let boundary = if side == Side::Left {
                self.f_left_limit_at_zero(k)
            } else {
                self.f(0.0, k)
            };
            boundary * (-to_origin * t).exp() + adaptive_simpson(&integrand, 0.0, to_origin, tol)
        } else {
            // I is bounded by max T · max f, the tail beyond s_max is below tol
            let s_max = (50.0 + (1.0 / tol).ln().max(0.0)) / t;
            adaptive_simpson(&integrand, 0.0, s_max, tol)
        }
    }

    /// `b_i` recovered from `f(0, ·)` by the positive-weight orthogonality
    /// quotient.
    pub fn b_via_orthogonality(&self, i: usize) -> f64 {
        let f0 = self.f_all(0.0);
        let w = self.model.weights();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..self.model.len() {
            let u = self.relative_velocity(k);
            let d = self.right_inv[k][i];
            num += w[k] * f0[k] * u * u * d;
            den += w[k] * u * u * d * d;
        }
        num / den
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{gauss_model, two_velocity_model};

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn two_velocity_flux_ratio() {
        let m = two_velocity_model();
        let c = 0.25;
        let p = solve_modes(&m, c).unwrap();
        let ratio = p.f(0.0, 1) / p.f(0.0, 0);
        assert!((ratio - (1.0 + c) / (1.0 - c)).abs() < 1e-12);
        assert!(p.flux(0.0).abs() < 1e-14);
        assert!((p.left_mass() + p.right_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_velocity_right_mass_matches_quadrature() {
        let p = solve_modes(&two_velocity_model(), 0.25).unwrap();
        let lk = p.roots().slowest_right();
        let q = trapezoid(|z| p.rho(z), 0.0, 40.0 / lk, 200_000);
        assert!((q - p.right_mass()).abs() < 1e-8, "{q} vs {}", p.right_mass());
        // single right mode: orthogonality quotient gives b_K back
        assert!((p.b_via_orthogonality(0) - p.right_coefficients()[0]).abs() < 1e-12);
    }

    #[test]
    fn per_mode_mass_is_the_half_line_integral() {
        let m = gauss_model(0.3, 0.15);
        let c = 0.1;
        let r = solve_roots(&m, c).unwrap();
        let rates = m.tumbling_rates();
        for &l in &r.right {
            let dens: f64 = m
                .velocities()
                .iter()
                .zip(m.weights())
                .map(|(&v, &w)| w / (rates.side_rate(Side::Right, v - c) - l * (v - c)))
                .sum();
            let q = trapezoid(|z| dens * (-l * z).exp(), 0.0, 60.0 / l, 400_000);
            let mm = per_mode_mass(&m, c, l, Side::Right);
            assert!((q - mm).abs() < 1e-8 * mm.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_kernel_annihilates_matching_matrix() {
        let m = gauss_model(0.3, 0.15);
        let c = 0.1;
        let r = solve_roots(&m, c).unwrap();
        let rates = m.tumbling_rates();
        let cols: Vec<(Side, f64)> = r
            .left
            .iter()
            .map(|&l| (Side::Left, l))
            .chain(r.right.iter().map(|&l| (Side::Right, l)))
            .collect();
        for (side, l) in cols {
            let sign = if side == Side::Left { 1.0 } else { -1.0 };
            let mut total = 0.0;
            let mut scale: f64 = 0.0;
            for (&v, &w) in m.velocities().iter().zip(m.weights()) {
                let u = v - c;
                let term = sign * w * u / (rates.side_rate(side, u) - l * u);
                total += term;
                scale = scale.max(term.abs());
            }
            assert!(total.abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn gauss_profile_invariants() {
        let m = gauss_model(0.3, 0.15);
        for c in [0.03, 0.1, 0.2] {
            let p = solve_modes(&m, c).unwrap();
            assert!(p.matching_residual() < 1e-10);
            assert!((p.left_mass() + p.right_mass() - 1.0).abs() < 1e-12);
            let pe = p.rho_exponential();
            assert!((pe.integral() - 1.0).abs() < 1e-12);
            for z in [-30.0, -1.0, -1e-3, 0.0, 1e-3, 1.0, 30.0] {
                let fs = p.f_all(z);
                let fmax = fs.iter().fold(0.0_f64, |a, b| a.max(*b));
                assert!(p.flux(z).abs() <= 1e-10 * fmax);
                assert!((p.tumbling_density(z) - p.tumbling_density_direct(z)).abs() < 1e-12);
                assert!((pe.eval(z) - p.rho(z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthogonality_recovers_right_coefficients() {
        let m = gauss_model(0.3, 0.15);
        let p = solve_modes(&m, 0.2).unwrap();
        let rates = p.rates();
        let tmax = rates.max();
        for (i, &b) in p.right_coefficients().iter().enumerate() {
            assert!((p.b_via_orthogonality(i) - b).abs() < 1e-9 * b.abs());
            for k in 0..m.len() {
                let u = p.relative_velocity(k);
                let t = rates.side_rate(Side::Right, u);
                let lhs = b.abs() * u.abs() / (t - p.roots().right[i] * u).abs();
                assert!(lhs <= tmax / m.weights()[k].sqrt());
            }
        }
    }

    #[test]
    fn duhamel_matches_mode_sum() {
        let m = gauss_model(0.3, 0.15);
        let p = solve_modes(&m, 0.1).unwrap();
        for k in [0, 4, 9, 12, 17] {
            for z in [-2.0, -0.3, 0.5, 1.0, 3.0] {
                let d = p.duhamel_f(z, k, 1e-12);
                assert!((d - p.f(z, k)).abs() < 1e-8, "k={k} z={z}: {d} vs {}", p.f(z, k));
            }
        }
        // characteristic from the origin: vanishing integral as z -> 0+
        let top = m.len() - 1;
        assert!((p.duhamel_f(1e-12, top, 1e-12) - p.f(0.0, top)).abs() < 1e-9);
    }

    #[test]
    fn linf_bound_below_speed() {
        let m = gauss_model(0.3, 0.15);
        let c = 0.1;
        let p = solve_modes(&m, c).unwrap();
        let tmax = p.rates().max();
        for z in log_grid(1e-6, 50.0, 200) {
            for k in 0..m.len() {
                let v = m.velocities()[k];
                if v < c {
                    assert!(p.f(z, k) <= tmax / (c - v));
                }
            }
        }
    }

    #[test]
    fn asymptotic_slowest_mode() {
        let m = gauss_model(0.3, 0.15);
        let p = solve_modes(&m, 0.1).unwrap();
        let lk = p.roots().slowest_right();
        let bk = p.right_coefficients()[0];
        let z = 30.0 / lk;
        for k in 0..m.len() {
            let u = p.relative_velocity(k);
            let t = p.rates().side_rate(Side::Right, u);
            let asym = bk * (-lk * z).exp() / (t - lk * u);
            assert!((p.f(z, k) / asym - 1.0).abs() < 0.01);
        }
        let di = p.tumbling_density_derivative(z);
        let asym = -lk * bk * (-lk * z).exp();
        assert!((di / asym - 1.0).abs() < 0.02);
    }

    #[test]
    fn non_decaying_input_rejected() {
        assert!(matches!(
            PiecewiseExponential::new(vec![(1.0, 0.0)], vec![]),
            Err(ProfileError::NonDecayingInput { .. })
        ));
    }
}
