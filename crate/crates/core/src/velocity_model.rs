//! Discrete velocity sets, tumbling rates and the admissible speed window.
//!
//! The kinetic substrate is a symmetric set of velocities `v_k` with weights
//! `ω_k` (a probability measure) together with two chemotactic sensitivities.
//! Once the chemical profiles are assumed monotone (nutrient increasing,
//! attractant peaked at the origin), the tumbling rate in the moving frame
//! only depends on the side of the origin and on the sign of `v - c`, so it
//! takes one of four constant values.

use log::warn;
use thiserror::Error;

/// Absolute tolerance for the weight sum and the symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative size of the exclusion zone around each velocity node.
pub const VELOCITY_GUARD_REL: f64 = 1e-9;

/// Relative tolerance of the confinement-root bisection.
const CONFINEMENT_ROOT_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("velocity list is empty")]
    Empty,
    #[error("velocities and weights differ in length ({velocities} vs {weights})")]
    LengthMismatch { velocities: usize, weights: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("velocities must be strictly increasing (index {index})")]
    NotIncreasing { index: usize },
    #[error("velocity set is not symmetric about zero at index {index}")]
    AsymmetricSet { index: usize },
    #[error("weights sum to {sum}, expected 1")]
    WeightSumNotOne { sum: f64 },
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("sensitivities out of range: chi_s = {chi_s}, chi_n = {chi_n} (need 0 < chi_n <= chi_s <= 1/2)")]
    SensitivityOutOfRange { chi_s: f64, chi_n: f64 },
    #[error("sign argument must be nonzero")]
    ZeroSignArgument,
    #[error("no confinement window: the run-length function has no root in the velocity range")]
    NoConfinementWindow,
    #[error("speed {c} lies on the velocity node {node}")]
    SpeedOnVelocityNode { c: f64, node: f64 },
    #[error("speed {c} lies outside the velocity range")]
    SpeedOutsideVelocityRange { c: f64 },
}

/// Side of the transition point `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// `z < 0`, rates `T_-`.
    Left,
    /// `z > 0`, rates `T_+`.
    Right,
}

impl Side {
    pub fn of(z: f64) -> Side {
        if z < 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// The four tumbling-rate constants of the moving frame.
///
/// `t_ab` is the rate on side `a` (`m`: `z < 0`, `p`: `z > 0`) for relative
/// velocities of sign `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TumblingRates {
    pub t_mm: f64,
    pub t_mp: f64,
    pub t_pm: f64,
    pub t_pp: f64,
}

impl TumblingRates {
    pub fn from_sensitivities(chi_s: f64, chi_n: f64) -> Self {
        TumblingRates {
            t_mm: 1.0 + chi_s + chi_n,
            t_mp: 1.0 - chi_s - chi_n,
            t_pm: 1.0 - chi_s + chi_n,
            t_pp: 1.0 + chi_s - chi_n,
        }
    }

    /// Rate selected by the sign of `z` and the sign of `v - c`:
    /// `1 + χ_S sign((v-c) z) - χ_N sign(v-c)`.
    pub fn rate_at(&self, z: f64, relative_velocity: f64) -> Result<f64, ModelError> {
        if z == 0.0 || relative_velocity == 0.0 || z.is_nan() || relative_velocity.is_nan() {
            return Err(ModelError::ZeroSignArgument);
        }
        Ok(self.side_rate(Side::of(z), relative_velocity))
    }

    /// Rate on a given side; `relative_velocity` must be nonzero (a zero value
    /// is treated as positive).
    #[inline]
    pub fn side_rate(&self, side: Side, relative_velocity: f64) -> f64 {
        match (side, relative_velocity < 0.0) {
            (Side::Left, true) => self.t_mm,
            (Side::Left, false) => self.t_mp,
            (Side::Right, true) => self.t_pm,
            (Side::Right, false) => self.t_pp,
        }
    }

    pub fn max(&self) -> f64 {
        self.t_mm.max(self.t_mp).max(self.t_pm).max(self.t_pp)
    }

    pub fn min(&self) -> f64 {
        self.t_mm.min(self.t_mp).min(self.t_pm).min(self.t_pp)
    }
}

/// A validated symmetric discrete velocity model with zero-weight nodes pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    velocities: Vec<f64>,
    weights: Vec<f64>,
    chi_s: f64,
    chi_n: f64,
}

impl VelocityModel {
    /// Validates a full (both signs) velocity list.
    pub fn new(
        velocities: Vec<f64>,
        weights: Vec<f64>,
        chi_s: f64,
        chi_n: f64,
    ) -> Result<Self, ModelError> {
        validate_sensitivities(chi_s, chi_n)?;
        if velocities.is_empty() {
            return Err(ModelError::Empty);
        }
        if velocities.len() != weights.len() {
            return Err(ModelError::LengthMismatch {
                velocities: velocities.len(),
                weights: weights.len(),
            });
        }
        for (i, (&v, &w)) in velocities.iter().zip(&weights).enumerate() {
            if !v.is_finite() || !w.is_finite() {
                return Err(ModelError::NonFinite { index: i });
            }
            if w < 0.0 {
                return Err(ModelError::NegativeWeight { index: i, value: w });
            }
        }
        if let Some(i) = (1..velocities.len()).find(|&i| velocities[i] <= velocities[i - 1]) {
            return Err(ModelError::NotIncreasing { index: i });
        }
        let n = velocities.len();
        for i in 0..n {
            let j = n - 1 - i;
            if (velocities[i] + velocities[j]).abs() > SYMMETRY_TOL
                || (weights[i] - weights[j]).abs() > SYMMETRY_TOL
            {
                return Err(ModelError::AsymmetricSet { index: i });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SYMMETRY_TOL {
            return Err(ModelError::WeightSumNotOne { sum });
        }

        let (velocities, weights): (Vec<f64>, Vec<f64>) = velocities
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .unzip();
        if velocities.is_empty() {
            return Err(ModelError::Empty);
        }
        Ok(VelocityModel {
            velocities,
            weights,
            chi_s,
            chi_n,
        })
    }

    /// Builds the model from the nonnegative half of a symmetric set. A zero
    /// velocity, if present, must come first and is not mirrored.
    pub fn from_half_line(
        velocities: &[f64],
        weights: &[f64],
        chi_s: f64,
        chi_n: f64,
    ) -> Result<Self, ModelError> {
        let (v, w) = mirror_half_line(velocities, weights)?;
        Self::new(v, w, chi_s, chi_n)
    }

    /// Replaces the sensitivities without the range check, for unbiased and
    /// one-signal probes.
    pub fn with_sensitivities_unchecked(mut self, chi_s: f64, chi_n: f64) -> Self {
        self.chi_s = chi_s;
        self.chi_n = chi_n;
        self
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn chi_s(&self) -> f64 {
        self.chi_s
    }

    pub fn chi_n(&self) -> f64 {
        self.chi_n
    }

    /// Number of active (positive-weight) velocities.
    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn v_max(&self) -> f64 {
        self.velocities.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Exclusion radius `δ_v` around the velocity nodes.
    pub fn velocity_guard(&self) -> f64 {
        VELOCITY_GUARD_REL * self.v_max()
    }

    /// Index of the velocity `-v_k`.
    pub fn mirror_index(&self, k: usize) -> usize {
        self.len() - 1 - k
    }

    pub fn tumbling_rates(&self) -> TumblingRates {
        TumblingRates::from_sensitivities(self.chi_s, self.chi_n)
    }

    /// Mean algebraic run length `Σ ω_k (v_k - c) / T_side(v_k - c)`.
    pub fn mean_run_length(&self, c: f64, side: Side) -> f64 {
        let rates = self.tumbling_rates();
        run_length_with(&self.velocities, &self.weights, c, |u| rates.side_rate(side, u))
    }

    pub fn admissible_speed_interval(&self) -> Result<SpeedInterval, ModelError> {
        let rates = self.tumbling_rates();
        let guard = self.velocity_guard();
        let v_max = self.v_max();
        let left = |c: f64| {
            run_length_with(&self.velocities, &self.weights, c, |u| {
                rates.side_rate(Side::Left, u)
            })
        };
        let right = |c: f64| {
            run_length_with(&self.velocities, &self.weights, c, |u| {
                rates.side_rate(Side::Right, u)
            })
        };
        let c_upper = decreasing_root(left, 0.0, v_max - guard)?;
        let c_lower = decreasing_root(right, -v_max + guard, v_max - guard)?;

        let start = c_lower.max(0.0);
        let mut cuts = vec![start];
        cuts.extend(
            self.velocities
                .iter()
                .copied()
                .filter(|&v| v > start && v < c_upper),
        );
        cuts.push(c_upper);
        let admissible_intervals = cuts.windows(2).map(|w| (w[0], w[1])).collect();
        Ok(SpeedInterval {
            c_lower,
            c_upper,
            admissible_intervals,
            guard,
        })
    }

    /// Index `J` of the largest active velocity strictly below `c`, so that
    /// `v_J < c < v_{J+1}`.
    pub fn cutting_index(&self, c: f64) -> Result<usize, ModelError> {
        let guard = self.velocity_guard();
        if let Some(&node) = self.velocities.iter().find(|&&v| (v - c).abs() <= guard) {
            return Err(ModelError::SpeedOnVelocityNode { c, node });
        }
        let below = self.velocities.partition_point(|&v| v < c);
        if below == 0 || below == self.len() {
            return Err(ModelError::SpeedOutsideVelocityRange { c });
        }
        Ok(below - 1)
    }
}

/// Expands the nonnegative half of a symmetric velocity set.
pub fn mirror_half_line(
    velocities: &[f64],
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if velocities.is_empty() {
        return Err(ModelError::Empty);
    }
    if velocities.len() != weights.len() {
        return Err(ModelError::LengthMismatch {
            velocities: velocities.len(),
            weights: weights.len(),
        });
    }
    if let Some(i) = velocities.iter().position(|v| *v < 0.0) {
        return Err(ModelError::AsymmetricSet { index: i });
    }
    let has_zero = velocities[0] == 0.0;
    let tail = if has_zero { 1 } else { 0 };
    let mut v: Vec<f64> = velocities[tail..].iter().rev().map(|x| -x).collect();
    let mut w: Vec<f64> = weights[tail..].iter().rev().copied().collect();
    if has_zero {
        v.push(0.0);
        w.push(weights[0]);
    }
    v.extend_from_slice(&velocities[tail..]);
    w.extend_from_slice(&weights[tail..]);
    Ok((v, w))
}

/// Rescales weights to unit sum; used only when a configuration opts in.
pub fn normalize_weights(weights: &[f64]) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| w / sum).collect()
}

fn validate_sensitivities(chi_s: f64, chi_n: f64) -> Result<(), ModelError> {
    let in_range = |x: f64| x > 0.0 && x <= 0.5;
    if !in_range(chi_s) || !in_range(chi_n) || chi_n > chi_s || chi_s + chi_n >= 1.0 {
        return Err(ModelError::SensitivityOutOfRange { chi_s, chi_n });
    }
    if chi_s == 0.5 || chi_n == 0.5 {
        warn!("sensitivity on the closed endpoint 1/2 (chi_s = {chi_s}, chi_n = {chi_n})");
    }
    Ok(())
}

pub(crate) fn run_length_with(
    velocities: &[f64],
    weights: &[f64],
    c: f64,
    rate: impl Fn(f64) -> f64,
) -> f64 {
    velocities
        .iter()
        .zip(weights)
        .map(|(&v, &w)| {
            let u = v - c;
            w * u / rate(u)
        })
        .sum()
}

/// Root of a decreasing function by bisection on `[lo, hi]`.
fn decreasing_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64, ModelError> {
    let (mut lo, mut hi) = (lo, hi);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(ModelError::NoConfinementWindow);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= CONFINEMENT_ROOT_TOL * lo.abs().max(hi.abs()) {
            break;
        }
    }
    let (fl, fh) = (f(lo), f(hi));
    // linear interpolation inside the final bracket
    Ok(if fl.is_finite() && fh.is_finite() && fl != fh {
        lo + fl * (hi - lo) / (fl - fh)
    } else {
        0.5 * (lo + hi)
    })
}

/// Admissible wave speeds: `c_⋆ < c < c^⋆` away from the velocity nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedInterval {
    pub c_lower: f64,
    pub c_upper: f64,
    /// Connected components of `(max(0, c_⋆), c^⋆)` minus the active velocities,
    /// as raw endpoints.
    pub admissible_intervals: Vec<(f64, f64)>,
    /// Exclusion radius applied around nodes and endpoints.
    pub guard: f64,
}

impl SpeedInterval {
    /// Whether `c` is inside one of the positive admissible intervals, at least
    /// `guard` away from every endpoint.
    pub fn contains(&self, c: f64) -> bool {
        self.interval_of(c).is_some()
    }

    pub fn interval_of(&self, c: f64) -> Option<usize> {
        self.admissible_intervals
            .iter()
            .position(|&(a, b)| c > a + self.guard && c < b - self.guard)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{gauss_model as gauss, GAUSS_V, GAUSS_W};

    fn two_velocity() -> VelocityModel {
        VelocityModel::new(vec![-1.0, 1.0], vec![0.5, 0.5], 0.3, 0.15).unwrap()
    }

    #[test]
    fn gauss_set_has_18_active_velocities() {
        let m = gauss(0.3, 0.15);
        assert_eq!(m.len(), 18);
        assert!(m.velocities().iter().all(|&v| v != 0.0));
        assert_eq!(m.velocities()[0], -0.9916);
    }

    #[test]
    fn raw_tabulated_weights_do_not_sum_to_one() {
        let mut v = vec![0.0];
        v.extend(GAUSS_V);
        let mut w = vec![0.0];
        w.extend(GAUSS_W);
        let err = VelocityModel::from_half_line(&v, &w, 0.3, 0.15).unwrap_err();
        assert!(matches!(err, ModelError::WeightSumNotOne { .. }));
    }

    #[test]
    fn validation_errors() {
        let err = VelocityModel::new(vec![-1.0, 1.0], vec![0.45, 0.45], 0.3, 0.15).unwrap_err();
        assert!(matches!(err, ModelError::WeightSumNotOne { .. }));
        let err = VelocityModel::new(vec![-1.0, 0.5], vec![0.5, 0.5], 0.3, 0.15).unwrap_err();
        assert!(matches!(err, ModelError::AsymmetricSet { .. }));
        let err = VelocityModel::new(vec![-1.0, 0.0, 1.0], vec![0.6, -0.2, 0.6], 0.3, 0.15)
            .unwrap_err();
        assert!(matches!(err, ModelError::NegativeWeight { index: 1, .. }));
        for (s, n) in [(0.7, 0.1), (0.3, 0.4), (0.0, 0.0), (0.3, 0.0)] {
            let err = VelocityModel::new(vec![-1.0, 1.0], vec![0.5, 0.5], s, n).unwrap_err();
            assert!(matches!(err, ModelError::SensitivityOutOfRange { .. }));
        }
        // closed endpoint 1/2 accepted
        assert!(VelocityModel::new(vec![-1.0, 1.0], vec![0.5, 0.5], 0.5, 0.45).is_ok());
    }

    #[test]
    fn rate_constants() {
        let r = TumblingRates::from_sensitivities(0.3, 0.15);
        let expect = [1.45, 0.55, 0.85, 1.15];
        for (got, want) in [r.t_mm, r.t_mp, r.t_pm, r.t_pp].iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        let r0 = TumblingRates::from_sensitivities(0.0, 0.0);
        assert_eq!([r0.t_mm, r0.t_mp, r0.t_pm, r0.t_pp], [1.0; 4]);
        let r2 = TumblingRates::from_sensitivities(0.5, 0.45);
        assert!((r2.t_mp - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rate_at_follows_sign_rule() {
        let r = TumblingRates::from_sensitivities(0.3, 0.15);
        assert_eq!(r.rate_at(1.0, 0.5).unwrap(), r.t_pp);
        assert_eq!(r.rate_at(-1.0, 0.5).unwrap(), r.t_mp);
        assert_eq!(r.rate_at(1.0, -0.5).unwrap(), r.t_pm);
        assert_eq!(r.rate_at(-1.0, -0.5).unwrap(), r.t_mm);
        assert_eq!(r.rate_at(0.0, 1.0), Err(ModelError::ZeroSignArgument));
        assert_eq!(r.rate_at(1.0, 0.0), Err(ModelError::ZeroSignArgument));
        // general formula 1 + χ_S sign((v-c) z) - χ_N sign(v-c)
        for z in [-2.0, 3.0] {
            for u in [-0.7, 0.2] {
                let want = 1.0 + 0.3 * (u * z as f64).signum() - 0.15 * u.signum();
                assert!((r.rate_at(z, u).unwrap() - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_velocity_upper_speed_closed_form() {
        let m = two_velocity();
        let s = m.admissible_speed_interval().unwrap();
        assert!((s.c_upper - 0.45).abs() < 1e-12, "{}", s.c_upper);
        assert!(s.c_lower <= 0.0);
        assert!(m.mean_run_length(s.c_upper, Side::Left).abs() < 1e-12);
    }

    #[test]
    fn lower_speed_nonpositive_for_reference_sets() {
        for (cs, cn) in [(0.3, 0.15), (0.5, 0.45), (0.48, 0.2)] {
            let s = gauss(cs, cn).admissible_speed_interval().unwrap();
            assert!(s.c_lower <= 0.0);
            assert!(s.c_lower < s.c_upper);
        }
    }

    #[test]
    fn run_length_is_decreasing() {
        let m = gauss(0.3, 0.15);
        let c_up = m.admissible_speed_interval().unwrap().c_upper;
        let mut prev = f64::INFINITY;
        for i in 1..400 {
            let c = 0.99 * i as f64 / 400.0;
            let val = m.mean_run_length(c, Side::Left);
            assert!(val < prev);
            prev = val;
            if c < c_up {
                assert!(val > 0.0);
            }
        }
    }

    #[test]
    fn mirrored_rates_swap_the_interval() {
        // Reflecting z -> -z, v -> -v maps T_-(u) to T_+(-u); the confinement
        // bounds of the reflected problem are (-c^⋆, -c_⋆).
        let m = gauss(0.3, 0.15);
        let s = m.admissible_speed_interval().unwrap();
        let rates = m.tumbling_rates();
        let vmax = m.v_max();
        let mirrored_left = |c: f64| {
            run_length_with(m.velocities(), m.weights(), c, |u| {
                rates.side_rate(Side::Right, -u)
            })
        };
        let mirrored_right = |c: f64| {
            run_length_with(m.velocities(), m.weights(), c, |u| {
                rates.side_rate(Side::Left, -u)
            })
        };
        let up = decreasing_root(mirrored_left, -vmax + 1e-9, vmax - 1e-9).unwrap();
        let low = decreasing_root(mirrored_right, -vmax + 1e-9, vmax - 1e-9).unwrap();
        assert!((up + s.c_lower).abs() < 1e-12);
        assert!((low + s.c_upper).abs() < 1e-12);
    }

    #[test]
    fn cutting_index_examples() {
        let m = gauss(0.3, 0.15);
        let j = m.cutting_index(0.3).unwrap();
        assert_eq!(m.velocities()[j], 0.2519);
        assert!(matches!(
            m.cutting_index(0.9916),
            Err(ModelError::SpeedOnVelocityNode { .. })
        ));
        let two = two_velocity();
        let j = two.cutting_index(0.25).unwrap();
        assert_eq!(two.velocities()[j], -1.0);
    }

    #[test]
    fn admissible_intervals_split_at_nodes() {
        let m = gauss(0.5, 0.45);
        let s = m.admissible_speed_interval().unwrap();
        let nodes: Vec<f64> = s.admissible_intervals.iter().skip(1).map(|iv| iv.0).collect();
        assert_eq!(&nodes[..], &GAUSS_V[..nodes.len()]);
        assert_eq!(s.admissible_intervals[0].0, 0.0);
        assert_eq!(s.admissible_intervals.last().unwrap().1, s.c_upper);
        assert!(!s.contains(0.0848));
        assert!(s.contains(0.1));
    }
}
