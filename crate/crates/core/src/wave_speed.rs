//! The matching function `Υ(c) = ∂_z S(0)` and the search for wave speeds.
//!
//! A speed `c` gives a travelling wave when the attractant computed from the
//! kinetic profile at `c` peaks exactly at the origin. `Υ` is continuous
//! between consecutive velocity nodes and jumps across them, so it is
//! sampled interval by interval; only continuous downward crossings count as
//! wave speeds.

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::chemo_fields::{solve_s, ChemError, ChemParams, SField};
use crate::velocity_model::{ModelError, SpeedInterval, VelocityModel};
use crate::wave_profile::{solve_modes, PiecewiseExponential, ProfileError, WaveProfile};

pub const DEFAULT_SAMPLES: usize = 64;
pub const MIN_SAMPLES: usize = 8;
/// Relative bisection tolerance in `c`.
pub const ROOT_REL_TOL: f64 = 1e-12;
/// Intervals narrower than this many guards get a single midpoint sample.
const NARROW_INTERVAL_GUARDS: f64 = 10.0;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("at c = {c}: {source}")]
    Profile {
        c: f64,
        #[source]
        source: ProfileError,
    },
    #[error("at c = {c}: {source}")]
    Chem {
        c: f64,
        #[source]
        source: ChemError,
    },
    #[error("samples per interval must be at least {MIN_SAMPLES}, got {0}")]
    TooFewSamples(usize),
    #[error("sign change in ({lo}, {hi}) vanished under refinement")]
    LostBracket { lo: f64, hi: f64 },
}

/// Kinetic profile, its density and the attractant at speed `c`.
pub fn wave_fields(
    model: &VelocityModel,
    params: &ChemParams,
    c: f64,
) -> Result<(WaveProfile, PiecewiseExponential, SField), SpeedError> {
    let profile = solve_modes(model, c).map_err(|source| SpeedError::Profile { c, source })?;
    let rho = profile.rho_exponential();
    let s = solve_s(&rho, params, c).map_err(|source| SpeedError::Chem { c, source })?;
    Ok((profile, rho, s))
}

pub fn upsilon(model: &VelocityModel, params: &ChemParams, c: f64) -> Result<f64, SpeedError> {
    wave_fields(model, params, c).map(|(_, _, s)| s.slope_at_zero)
}

/// `Υ` samples on one continuity interval, ascending in `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSamples {
    pub id: usize,
    pub lo: f64,
    pub hi: f64,
    pub samples: Vec<(f64, f64)>,
}

/// One-sided limits of `Υ` at a velocity node, estimated from the innermost
/// samples of the neighbouring intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discontinuity {
    pub node: f64,
    pub left_limit: f64,
    pub right_limit: f64,
}

impl Discontinuity {
    /// A sign change across a node is a jump, never a wave speed.
    pub fn sign_change(&self) -> bool {
        (self.left_limit > 0.0) != (self.right_limit > 0.0)
    }
}

/// Consecutive samples of opposite sign inside one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub interval_id: usize,
    pub lo: f64,
    pub hi: f64,
    pub upsilon_lo: f64,
    pub upsilon_hi: f64,
}

impl Bracket {
    pub fn is_downward(&self) -> bool {
        self.upsilon_lo > 0.0 && self.upsilon_hi < 0.0
    }
}

/// A refined zero of `Υ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSpeed {
    pub c: f64,
    /// `Υ` evaluated at `c`.
    pub residual: f64,
    pub interval_id: usize,
    pub downward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonCurve {
    pub speed_interval: SpeedInterval,
    pub intervals: Vec<IntervalSamples>,
    pub discontinuities: Vec<Discontinuity>,
    pub brackets: Vec<Bracket>,
    /// Admissible wave speeds (downward crossings), ascending.
    pub roots: Vec<WaveSpeed>,
    /// Upward crossings inside an interval; not wave speeds.
    pub upward_crossings: Vec<WaveSpeed>,
    /// Sample speeds where the pipeline failed, with the error message.
    pub failures: Vec<(f64, String)>,
}

impl UpsilonCurve {
    /// `(c, Υ, interval id)` for every sample, ascending in `c`.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.intervals
            .iter()
            .flat_map(|iv| iv.samples.iter().map(move |&(c, u)| (c, u, iv.id)))
    }

    /// Largest `|Υ|` over the samples.
    pub fn scale(&self) -> f64 {
        self.samples().fold(0.0, |m, (_, u, _)| m.max(u.abs()))
    }

    pub fn sample_count(&self) -> usize {
        self.intervals.iter().map(|iv| iv.samples.len()).sum()
    }

    pub fn all_negative(&self) -> bool {
        self.samples().all(|(_, u, _)| u < 0.0)
    }

    /// The fastest admissible wave speed, if any.
    pub fn fastest(&self) -> Option<f64> {
        self.roots.last().map(|r| r.c)
    }
}

/// Chebyshev points of `(lo, hi)`, ascending, or the midpoint for an interval
/// narrower than `10 δ_v` (given as `guard`).
pub fn chebyshev_points(lo: f64, hi: f64, count: usize, guard: f64) -> Vec<f64> {
    let (a, b) = (lo + guard, hi - guard);
    if hi - lo < NARROW_INTERVAL_GUARDS * guard {
        return vec![0.5 * (lo + hi)];
    }
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    (0..count)
        .map(|i| mid - half * (std::f64::consts::PI * (i as f64 + 0.5) / count as f64).cos())
        .collect()
}

/// Samples `Υ` on every continuity interval of the admissible range and
/// brackets its sign changes. Evaluations run in parallel; the result does
/// not depend on the number of threads.
pub fn scan(
    model: &VelocityModel,
    params: &ChemParams,
    samples_per_interval: usize,
) -> Result<UpsilonCurve, SpeedError> {
    if samples_per_interval < MIN_SAMPLES {
        return Err(SpeedError::TooFewSamples(samples_per_interval));
    }
    let speed_interval = model.admissible_speed_interval()?;
    let guard = speed_interval.guard;
    let tasks: Vec<(usize, f64)> = speed_interval
        .admissible_intervals
        .iter()
        .enumerate()
        .flat_map(|(id, &(lo, hi))| {
            chebyshev_points(lo, hi, samples_per_interval, guard)
                .into_iter()
                .map(move |c| (id, c))
        })
        .collect();
    let values: Vec<Result<f64, SpeedError>> = tasks
        .par_iter()
        .map(|&(_, c)| upsilon(model, params, c))
        .collect();

    let mut intervals: Vec<IntervalSamples> = speed_interval
        .admissible_intervals
        .iter()
        .enumerate()
        .map(|(id, &(lo, hi))| IntervalSamples {
            id,
            lo,
            hi,
            samples: Vec::new(),
        })
        .collect();
    let mut failures = Vec::new();
    for (&(id, c), value) in tasks.iter().zip(values) {
        match value {
            Ok(u) if u.is_finite() => intervals[id].samples.push((c, u)),
            Ok(u) => failures.push((c, format!("non-finite value {u}"))),
            Err(e) => failures.push((c, e.to_string())),
        }
    }
    for (c, msg) in &failures {
        warn!("upsilon evaluation failed at c = {c}: {msg}");
    }

    let discontinuities = intervals
        .windows(2)
        .filter(|w| w[0].hi == w[1].lo)
        .filter_map(|w| {
            Some(Discontinuity {
                node: w[0].hi,
                left_limit: w[0].samples.last()?.1,
                right_limit: w[1].samples.first()?.1,
            })
        })
        .collect();
    let brackets = intervals
        .iter()
        .flat_map(|iv| {
            iv.samples.windows(2).filter_map(move |w| {
                let ((c0, u0), (c1, u1)) = (w[0], w[1]);
                ((u0 > 0.0) != (u1 > 0.0) || u0 == 0.0).then_some(Bracket {
                    interval_id: iv.id,
                    lo: c0,
                    hi: c1,
                    upsilon_lo: u0,
                    upsilon_hi: u1,
                })
            })
        })
        .collect();

    Ok(UpsilonCurve {
        speed_interval,
        intervals,
        discontinuities,
        brackets,
        roots: Vec::new(),
        upward_crossings: Vec::new(),
        failures,
    })
}

/// Bisection of a bracketed sign change of `f` to relative tolerance
/// [`ROOT_REL_TOL`]; returns the root and `f` there.
pub fn bisect_root<E>(
    f: impl Fn(f64) -> Result<f64, E>,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_hi: f64,
) -> Result<Option<(f64, f64)>, E> {
    if f_lo == 0.0 {
        return Ok(Some((lo, 0.0)));
    }
    if f_hi == 0.0 {
        return Ok(Some((hi, 0.0)));
    }
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Ok(None);
    }
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    for _ in 0..MAX_BISECTIONS {
        if b - a <= ROOT_REL_TOL * a.abs().max(b.abs()) {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(Some((m, 0.0)));
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    let c = (a - fa * (b - a) / (fb - fa)).clamp(a, b);
    Ok(Some((c, f(c)?)))
}

/// Refines every bracket of `curve` by bisection on the full pipeline.
pub fn refine_roots(
    curve: &UpsilonCurve,
    model: &VelocityModel,
    params: &ChemParams,
) -> Result<Vec<WaveSpeed>, SpeedError> {
    curve
        .brackets
        .par_iter()
        .map(|br| {
            let f = |c: f64| upsilon(model, params, c);
            let (u_lo, u_hi) = (f(br.lo)?, f(br.hi)?);
            let (c, residual) = bisect_root(f, br.lo, br.hi, u_lo, u_hi)?.ok_or(
                SpeedError::LostBracket {
                    lo: br.lo,
                    hi: br.hi,
                },
            )?;
            Ok(WaveSpeed {
                c,
                residual,
                interval_id: br.interval_id,
                downward: br.is_downward(),
            })
        })
        .collect()
}

/// Scan followed by root refinement; upward crossings are kept apart.
pub fn find_wave_speeds(
    model: &VelocityModel,
    params: &ChemParams,
    samples_per_interval: usize,
) -> Result<UpsilonCurve, SpeedError> {
    let mut curve = scan(model, params, samples_per_interval)?;
    for root in refine_roots(&curve, model, params)? {
        if root.downward {
            curve.roots.push(root);
        } else {
            warn!("upward crossing of upsilon at c = {}; not a wave speed", root.c);
            curve.upward_crossings.push(root);
        }
    }
    Ok(curve)
}

/// Shape of the attractant recomputed at a candidate speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootCheck {
    pub unimodal: bool,
    pub max_location: f64,
}

pub fn verify_root(model: &VelocityModel, params: &ChemParams, c: f64) -> Result<RootCheck, SpeedError> {
    let (_, _, s) = wave_fields(model, params, c)?;
    Ok(RootCheck {
        unimodal: s.is_unimodal(),
        max_location: s.max_location(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{gauss_model, graded_model};

    fn params(alpha: f64) -> ChemParams {
        ChemParams::new(0.5, 0.5, alpha, 1.0, 1.0).unwrap()
    }

    #[test]
    fn bisection_on_linear_function() {
        let f = |c: f64| Ok::<f64, ()>(2.0 * (0.3 - c));
        let (c, r) = bisect_root(f, 0.25, 0.4, 0.1, -0.2).unwrap().unwrap();
        assert!((c - 0.3).abs() < 1e-12);
        assert!(r.abs() < 1e-12);
        assert_eq!(bisect_root(f, 0.25, 0.28, 0.1, 0.04).unwrap(), None);
    }

    #[test]
    fn chebyshev_points_avoid_endpoints() {
        let pts = chebyshev_points(0.1, 0.2, 64, 1e-9);
        assert_eq!(pts.len(), 64);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts[0] > 0.1 + 1e-9 && pts[63] < 0.2 - 1e-9);
        assert_eq!(chebyshev_points(0.1, 0.1 + 5e-9, 64, 1e-9), vec![0.1 + 2.5e-9]);
    }

    #[test]
    fn symmetric_probe_has_flat_attractant() {
        let m = gauss_model(0.3, 0.15).with_sensitivities_unchecked(0.3, 0.0);
        let u = upsilon(&m, &params(0.5), 0.0).unwrap();
        assert!(u.abs() < 1e-13, "{u}");
    }

    #[test]
    fn negative_everywhere_without_wave() {
        let m = graded_model();
        let p = params(10.0);
        for c in [0.01, 0.02, 0.04, 0.07, 0.1] {
            assert!(upsilon(&m, &p, c).unwrap() < 0.0);
        }
    }

    #[test]
    fn scan_is_deterministic_and_inside_intervals() {
        let m = gauss_model(0.3, 0.15);
        let p = params(0.5);
        let a = scan(&m, &p, 8).unwrap();
        let b = scan(&m, &p, 8).unwrap();
        assert_eq!(a, b);
        let guard = a.speed_interval.guard;
        for (c, _, id) in a.samples() {
            let iv = &a.intervals[id];
            assert!(c > iv.lo + guard && c < iv.hi - guard);
        }
        assert!(a.failures.is_empty(), "{:?}", a.failures);
    }

    #[test]
    fn single_root_is_refined() {
        let m = gauss_model(0.3, 0.15);
        let p = params(0.5);
        let curve = find_wave_speeds(&m, &p, 16).unwrap();
        assert_eq!(curve.roots.len(), 1);
        let root = curve.roots[0];
        assert!(root.residual.abs() < 1e-10 * curve.scale());
        let check = verify_root(&m, &p, root.c).unwrap();
        assert!(check.unimodal);
        assert!(check.max_location.abs() < 1e-6);
    }

    #[test]
    fn too_few_samples() {
        let m = gauss_model(0.3, 0.15);
        assert_eq!(scan(&m, &params(0.5), 4), Err(SpeedError::TooFewSamples(4)));
    }
}
