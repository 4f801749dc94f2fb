//! Finite-volume simulation of the time-dependent kinetic system on a closed
//! interval `[0, L]`.
//!
//! Each step splits into upwind transport of every `f(·, v_k)` (specular
//! reflection at the walls), an explicit tumbling exchange with the lab-frame
//! rate `1 - χ_S sign(∂_t S + v ∂_x S) - χ_N sign(∂_t N + v ∂_x N)`, and a
//! diffusion-implicit, reaction-explicit update of `S` and `N` with zero-flux
//! walls.

use thiserror::Error;

use crate::chemo_fields::ChemParams;
use crate::quadrature::solve_tridiagonal;
use crate::velocity_model::VelocityModel;

pub const MIN_CELLS: usize = 64;
/// Cap on `Δt · max T` for the tumbling exchange.
pub const TUMBLING_DT_CAP: f64 = 0.5;
pub const DEFAULT_SIGN_DEADZONE: f64 = 1e-12;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;
pub const DEFAULT_PROMINENCE: f64 = 0.05;
pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation setting {name}: {reason}")]
    InvalidConfig { name: &'static str, reason: String },
    #[error("time step {dt} violates the CFL bound {limit}")]
    CFLViolation { dt: f64, limit: f64 },
    #[error("negative density {value:e} at t = {t} after halving the step")]
    NegativeDensity { t: f64, value: f64 },
    #[error("front speed fit needs at least {needed} samples, got {found}")]
    InsufficientSamples { found: usize, needed: usize },
}

/// Initial cell density; the kinetic density starts equal for every
/// velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialRho {
    /// Uniform on `[start, end]`.
    Block { start: f64, end: f64, mass: f64 },
    Gaussian { center: f64, width: f64, mass: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: VelocityModel,
    pub params: ChemParams,
    pub domain_length: f64,
    pub cells: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub initial_rho: InitialRho,
    pub initial_n: f64,
    /// Relative dead zone of the sign function, scaled by the largest
    /// argument on the grid.
    pub sign_deadzone: f64,
    /// Time between recorded peak positions.
    pub track_interval: f64,
    /// Time between density snapshots.
    pub snapshot_interval: f64,
    /// Trailing fraction of the peak track used for the speed fit.
    pub window_fraction: f64,
    /// Minimal prominence of a density maximum, relative to the global
    /// maximum, to count as a separate component.
    pub prominence: f64,
}

impl SimConfig {
    /// Default settings: a block on the first tenth of the domain, unit
    /// mass, `N = 1`.
    pub fn new(model: VelocityModel, params: ChemParams, domain_length: f64, cells: usize, t_end: f64) -> Self {
        SimConfig {
            model,
            params,
            domain_length,
            cells,
            cfl: 0.9,
            t_end,
            initial_rho: InitialRho::Block {
                start: 0.0,
                end: 0.1 * domain_length,
                mass: 1.0,
            },
            initial_n: 1.0,
            sign_deadzone: DEFAULT_SIGN_DEADZONE,
            track_interval: 1.0,
            snapshot_interval: t_end / 10.0,
            window_fraction: DEFAULT_WINDOW_FRACTION,
            prominence: DEFAULT_PROMINENCE,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |name, reason: &str| {
            Err(SimError::InvalidConfig {
                name,
                reason: reason.to_string(),
            })
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if self.cells < MIN_CELLS {
            return bad("cells", &format!("need at least {MIN_CELLS}"));
        }
        if !pos(self.domain_length) {
            return bad("domain_length", "must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad("cfl", "must lie in (0, 1)");
        }
        if !pos(self.t_end) {
            return bad("t_end", "must be positive");
        }
        if !pos(self.initial_n) {
            return bad("initial_n", "must be positive");
        }
        if !(self.sign_deadzone >= 0.0) {
            return bad("sign_deadzone", "must be nonnegative");
        }
        if !pos(self.track_interval) || !pos(self.snapshot_interval) {
            return bad("track_interval", "intervals must be positive");
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return bad("window_fraction", "must lie in (0, 1]");
        }
        if !(self.prominence > 0.0 && self.prominence < 1.0) {
            return bad("prominence", "must lie in (0, 1)");
        }
        let p = &self.params;
        if !(pos(p.d_s) && pos(p.d_n) && p.alpha >= 0.0 && p.beta >= 0.0 && p.gamma >= 0.0) {
            return bad("chem", "diffusivities must be positive and rates nonnegative");
        }
        match self.initial_rho {
            InitialRho::Block { start, end, mass } => {
                if !(start >= 0.0 && end > start && end <= self.domain_length && pos(mass)) {
                    return bad("initial_rho", "block must lie inside the domain with positive mass");
                }
                if self.cell_range(start, end).is_empty() {
                    return bad("initial_rho", "block covers no cell centre");
                }
            }
            InitialRho::Gaussian { width, mass, .. } => {
                if !pos(width) || !pos(mass) {
                    return bad("initial_rho", "width and mass must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.cells as f64
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.cells).map(|i| (i as f64 + 0.5) * dx).collect()
    }

    fn cell_range(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let dx = self.dx();
        let first = (start / dx - 0.5).ceil().max(0.0) as usize;
        let last = ((end / dx - 0.5).floor() as isize + 1).clamp(0, self.cells as isize) as usize;
        first..last.max(first)
    }

    /// `Δt = min(cfl Δx / max|v|, 0.5 / max T)`.
    pub fn time_step(&self) -> f64 {
        let transport = self.cfl * self.dx() / self.model.v_max();
        transport.min(TUMBLING_DT_CAP / self.model.tumbling_rates().max())
    }

    pub fn initial_state(&self) -> SimState {
        let m = self.cells;
        let nv = self.model.len();
        let dx = self.dx();
        let mut rho = vec![0.0; m];
        match self.initial_rho {
            InitialRho::Block { start, end, mass } => {
                let range = self.cell_range(start, end);
                let level = mass / (range.len() as f64 * dx);
                rho[range].iter_mut().for_each(|r| *r = level);
            }
            InitialRho::Gaussian {
                center,
                width,
                mass,
            } => {
                for (r, x) in rho.iter_mut().zip(self.cell_centers()) {
                    *r = (-0.5 * ((x - center) / width).powi(2)).exp();
                }
                let total: f64 = rho.iter().sum::<f64>() * dx;
                rho.iter_mut().for_each(|r| *r *= mass / total);
            }
        }
        let f = rho.iter().flat_map(|&r| std::iter::repeat_n(r, nv)).collect();
        let n = vec![self.initial_n; m];
        SimState {
            t: 0.0,
            f,
            velocities: nv,
            s: vec![0.0; m],
            s_prev: vec![0.0; m],
            n_prev: n.clone(),
            n,
            dt_prev: self.time_step(),
        }
    }
}

/// Simulation state; `f` is stored cell by cell, velocities contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub f: Vec<f64>,
    velocities: usize,
    pub s: Vec<f64>,
    pub n: Vec<f64>,
    s_prev: Vec<f64>,
    n_prev: Vec<f64>,
    dt_prev: f64,
}

impl SimState {
    pub fn cells(&self) -> usize {
        self.s.len()
    }

    pub fn f_at(&self, cell: usize, k: usize) -> f64 {
        self.f[cell * self.velocities + k]
    }

    pub fn rho(&self, weights: &[f64]) -> Vec<f64> {
        self.f
            .chunks(self.velocities)
            .map(|row| row.iter().zip(weights).map(|(f, w)| f * w).sum())
            .collect()
    }

    pub fn mass(&self, weights: &[f64], dx: f64) -> f64 {
        self.rho(weights).iter().sum::<f64>() * dx
    }

    pub fn min_f(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_n(&self) -> f64 {
        self.n.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn dead_zone_sign(x: f64, theta: f64) -> f64 {
    if x > theta {
        1.0
    } else if x < -theta {
        -1.0
    } else {
        0.0
    }
}

/// Centred gradient with mirrored ghost cells.
fn gradient(u: &[f64], dx: f64) -> Vec<f64> {
    let m = u.len();
    (0..m)
        .map(|i| {
            let l = u[i.saturating_sub(1)];
            let r = u[(i + 1).min(m - 1)];
            (r - l) / (2.0 * dx)
        })
        .collect()
}

/// Backward-Euler diffusion with zero-flux walls applied to `rhs`.
fn implicit_diffusion(rhs: &[f64], d: f64, dt: f64, dx: f64) -> Vec<f64> {
    let m = rhs.len();
    let r = d * dt / (dx * dx);
    let off = vec![-r; m];
    let mut diag = vec![1.0 + 2.0 * r; m];
    diag[0] = 1.0 + r;
    diag[m - 1] = 1.0 + r;
    solve_tridiagonal(&off, &diag, &off, rhs)
}

/// One step of size `dt`, halved once if a density turns negative.
pub fn step(state: &mut SimState, config: &SimConfig, dt: f64) -> Result<(), SimError> {
    let limit = config.dx() / config.model.v_max();
    if dt > limit * (1.0 + 1e-12) {
        return Err(SimError::CFLViolation { dt, limit });
    }
    let mut next = raw_step(state, config, dt);
    if next.min_f() < 0.0 || next.min_n() < 0.0 {
        next = raw_step(state, config, 0.5 * dt);
        next = raw_step(&next, config, 0.5 * dt);
        let worst = next.min_f().min(next.min_n());
        if worst < 0.0 {
            return Err(SimError::NegativeDensity {
                t: state.t,
                value: worst,
            });
        }
    }
    *state = next;
    Ok(())
}

fn raw_step(state: &SimState, config: &SimConfig, dt: f64) -> SimState {
    let model = &config.model;
    let v = model.velocities();
    let w = model.weights();
    let nv = v.len();
    let m = state.cells();
    let dx = config.dx();
    let nu = dt / dx;

    // transport; the wall feeds each incoming velocity from its mirror
    let mut f = state.f.clone();
    for k in 0..nv {
        let mirror = model.mirror_index(k);
        let vk = v[k];
        let at = |i: usize, k: usize| state.f[i * nv + k];
        if vk > 0.0 {
            let mut upstream = at(0, mirror);
            for i in 0..m {
                let here = at(i, k);
                f[i * nv + k] = here - vk * nu * (here - upstream);
                upstream = here;
            }
        } else {
            let mut upstream = at(m - 1, mirror);
            for i in (0..m).rev() {
                let here = at(i, k);
                f[i * nv + k] = here + vk * nu * (here - upstream);
                upstream = here;
            }
        }
    }

    // tumbling, with time derivatives lagged by one step
    let (ds_x, dn_x) = (gradient(&state.s, dx), gradient(&state.n, dx));
    let ds_t: Vec<f64> = state.s.iter().zip(&state.s_prev).map(|(a, b)| (a - b) / state.dt_prev).collect();
    let dn_t: Vec<f64> = state.n.iter().zip(&state.n_prev).map(|(a, b)| (a - b) / state.dt_prev).collect();
    let v_max = model.v_max();
    let scale = |dt_: &[f64], dx_: &[f64]| {
        dt_.iter()
            .zip(dx_)
            .fold(0.0_f64, |acc, (a, b)| acc.max(a.abs() + v_max * b.abs()))
    };
    let theta_s = config.sign_deadzone * scale(&ds_t, &ds_x);
    let theta_n = config.sign_deadzone * scale(&dn_t, &dn_x);
    let (chi_s, chi_n) = (model.chi_s(), model.chi_n());
    let mut rates = vec![0.0; nv];
    for i in 0..m {
        let row = &mut f[i * nv..(i + 1) * nv];
        for k in 0..nv {
            rates[k] = 1.0
                - chi_s * dead_zone_sign(ds_t[i] + v[k] * ds_x[i], theta_s)
                - chi_n * dead_zone_sign(dn_t[i] + v[k] * dn_x[i], theta_n);
        }
        let events: f64 = (0..nv).map(|k| w[k] * rates[k] * row[k]).sum();
        for k in 0..nv {
            row[k] += dt * (events - rates[k] * row[k]);
        }
    }

    let rho: Vec<f64> = f
        .chunks(nv)
        .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect();
    let p = &config.params;
    let s_rhs: Vec<f64> = state
        .s
        .iter()
        .zip(&rho)
        .map(|(s, r)| s + dt * (p.beta * r - p.alpha * s))
        .collect();
    let n_rhs: Vec<f64> = state
        .n
        .iter()
        .zip(&rho)
        .map(|(n, r)| n - dt * p.gamma * r * n)
        .collect();
    SimState {
        t: state.t + dt,
        f,
        velocities: nv,
        s: implicit_diffusion(&s_rhs, p.d_s, dt, dx),
        n: implicit_diffusion(&n_rhs, p.d_n, dt, dx),
        s_prev: state.s.clone(),
        n_prev: state.n.clone(),
        dt_prev: dt,
    }
}

/// Recorded density and chemical fields at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub rho: Vec<f64>,
    pub s: Vec<f64>,
    pub n: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontDiagnostics {
    /// `(t, argmax_x ρ)`.
    pub peak_track: Vec<(f64, f64)>,
    pub fitted_speed: f64,
    /// Root-mean-square deviation of the fitted line.
    pub fit_residual: f64,
    pub n_components: usize,
    /// Largest relative deviation of the total mass over the run.
    pub mass_drift: f64,
    pub min_f: f64,
    pub min_n: f64,
    /// `max_x n` never increased between steps.
    pub n_max_nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub state: SimState,
    pub diagnostics: FrontDiagnostics,
    pub snapshots: Vec<Snapshot>,
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Integrates to `t_end`, tracking the density peak and recording
/// snapshots.
pub fn run(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let w = config.model.weights();
    let dx = config.dx();
    let x = config.cell_centers();
    let dt = config.time_step();
    let mut state = config.initial_state();
    let mass0 = state.mass(w, dx);

    let snap = |st: &SimState| Snapshot {
        t: st.t,
        rho: st.rho(w),
        s: st.s.clone(),
        n: st.n.clone(),
    };
    let mut snapshots = vec![snap(&state)];
    let mut peak_track = vec![(0.0, x[argmax(&state.rho(w))])];
    let (mut next_track, mut next_snap) = (config.track_interval, config.snapshot_interval);
    let mut mass_drift: f64 = 0.0;
    let (mut min_f, mut min_n) = (state.min_f(), state.min_n());
    let mut n_max = state.n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut n_max_nonincreasing = true;
    let eps = 1e-9 * dt;

    while state.t < config.t_end - eps {
        let h = dt.min(config.t_end - state.t);
        step(&mut state, config, h)?;
        let rho = state.rho(w);
        let mass = rho.iter().sum::<f64>() * dx;
        mass_drift = mass_drift.max(((mass - mass0) / mass0).abs());
        min_f = min_f.min(state.min_f());
        min_n = min_n.min(state.min_n());
        let nm = state.n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if nm > n_max * (1.0 + 1e-14) {
            n_max_nonincreasing = false;
        }
        n_max = nm;
        if state.t >= next_track - eps {
            peak_track.push((state.t, x[argmax(&rho)]));
            next_track += config.track_interval;
        }
        if state.t >= next_snap - eps || state.t >= config.t_end - eps {
            snapshots.push(snap(&state));
            next_snap += config.snapshot_interval;
        }
    }

    let (fitted_speed, fit_residual) = measure_front_speed(&peak_track, config.window_fraction)?;
    let n_components = count_components(&state.rho(w), config.prominence);
    Ok(SimOutput {
        state,
        diagnostics: FrontDiagnostics {
            peak_track,
            fitted_speed,
            fit_residual,
            n_components,
            mass_drift,
            min_f,
            min_n,
            n_max_nonincreasing,
        },
        snapshots,
    })
}

/// Least-squares slope of the trailing `window_fraction` of the track and
/// the root-mean-square residual of the fit.
pub fn measure_front_speed(track: &[(f64, f64)], window_fraction: f64) -> Result<(f64, f64), SimError> {
    let count = ((track.len() as f64) * window_fraction).ceil() as usize;
    let count = count.min(track.len());
    if count < MIN_FIT_SAMPLES {
        return Err(SimError::InsufficientSamples {
            found: count,
            needed: MIN_FIT_SAMPLES,
        });
    }
    let window = &track[track.len() - count..];
    let n = count as f64;
    let t_mean = window.iter().map(|p| p.0).sum::<f64>() / n;
    let x_mean = window.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = window.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let stx: f64 = window.iter().map(|p| (p.0 - t_mean) * (p.1 - x_mean)).sum();
    let slope = stx / stt;
    let rss: f64 = window
        .iter()
        .map(|p| (p.1 - x_mean - slope * (p.0 - t_mean)).powi(2))
        .sum();
    Ok((slope, (rss / n).sqrt()))
}

/// Topographic prominence of every local maximum of `values`. The walls
/// reflect, so a maximum in a boundary cell counts.
pub fn peak_prominences(values: &[f64]) -> Vec<(usize, f64)> {
    let m = values.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < m {
        // plateau [i, j]
        let mut j = i;
        while j + 1 < m && values[j + 1] == values[i] {
            j += 1;
        }
        let left_lower = i == 0 || values[i - 1] < values[i];
        let right_lower = j == m - 1 || values[j + 1] < values[i];
        if left_lower && right_lower {
            let top = values[i];
            // lowest point before a higher one; None for an empty side
            let side_min = |range: &mut dyn Iterator<Item = usize>| {
                let mut low: Option<f64> = None;
                for q in range {
                    if values[q] > top {
                        break;
                    }
                    low = Some(low.map_or(values[q], |l| l.min(values[q])));
                }
                low
            };
            let left_min = side_min(&mut (0..i).rev());
            let right_min = side_min(&mut (j + 1..m));
            let base = match (left_min, right_min) {
                (Some(a), Some(b)) => a.max(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
            peaks.push(((i + j) / 2, top - base));
        }
        i = j + 1;
    }
    peaks
}

/// Number of local maxima whose prominence exceeds `relative` times the
/// global maximum.
pub fn count_components(values: &[f64], relative: f64) -> usize {
    let top = values.iter().copied().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    peak_prominences(values)
        .iter()
        .filter(|(_, p)| *p >= relative * top)
        .count()
}
