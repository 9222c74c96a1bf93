//! Static Cosserat rod with a clamped base and a single point force.
//!
//! The rod is integrated from the base (`P = 0`, `R = I`) to the tip with a
//! fixed-step RK4 stepper on a uniform grid. Steps that straddle a band edge
//! or the load station are split there, so every RK4 sub-step sees constant
//! section properties and the force jump lands exactly on `s_c`. Rotations are
//! re-projected onto SO(3) after every step.
//!
//! With no distributed load the internal force is known in closed form
//! (`n = F` below the load, `0` beyond it), which leaves the base moment as
//! the only shooting unknown. The free-tip condition `m(L) = 0` is solved by
//! damped Newton with a forward-difference Jacobian.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    cross_section_at, effective_modulus, DomainError, MaterialModel, RodSpec, StiffnessMatrices,
};
use crate::so3::{hat, orthonormality_error, reproject};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid load case: {0}")]
    InvalidLoad(String),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("integration diverged at s = {station} m")]
    Diverged { station: f64 },
    #[error("no equilibrium after {iterations} shooting iterations (best residual {best_residual:e} N·m)")]
    NoEquilibrium {
        iterations: usize,
        best_residual: f64,
    },
    #[error("displacement {target} m unreachable with forces up to {max_force} N (reached {reached} m)")]
    Unreachable {
        target: f64,
        max_force: f64,
        reached: f64,
    },
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Number of grid intervals; the grid has `nodes + 1` stations.
    pub nodes: usize,
    /// Shooting tolerance on the tip moment (N·m).
    pub moment_tol: f64,
    pub max_iterations: usize,
    /// Tolerance on the imposed displacement (m).
    pub displacement_tol: f64,
    /// Upper bound of the force search in displacement control (N).
    pub max_force: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            nodes: 600,
            moment_tol: 1e-9,
            max_iterations: 50,
            displacement_tol: 1e-6,
            max_force: 100.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SolverError::InvalidSettings(m));
        if self.nodes < 50 {
            return bad(format!("need at least 50 grid intervals, got {}", self.nodes));
        }
        if !(self.moment_tol > 0.0 && self.displacement_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.max_force > 0.0 && self.max_force.is_finite()) {
            return bad("max_force must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadMode {
    /// Force magnitude (N).
    Force(f64),
    /// Target displacement of the load station along the load direction (m).
    Displacement(f64),
}

/// Point load at arc length `station` along a fixed global direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCase {
    station: f64,
    direction: Vector3<f64>,
    mode: LoadMode,
}

impl LoadCase {
    /// The direction is normalized; it must be finite and non-zero.
    pub fn new(station: f64, direction: Vector3<f64>, mode: LoadMode) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(SolverError::InvalidLoad("load direction must be non-zero".into()));
        }
        let magnitude = match mode {
            LoadMode::Force(f) | LoadMode::Displacement(f) => f,
        };
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(SolverError::InvalidLoad(format!(
                "load magnitude must be non-negative, got {magnitude}"
            )));
        }
        if !(station.is_finite() && station > 0.0) {
            return Err(SolverError::InvalidLoad(format!(
                "load station must be positive, got {station}"
            )));
        }
        Ok(Self {
            station,
            direction: direction / norm,
            mode,
        })
    }

    pub fn force(station: f64, direction: Vector3<f64>, magnitude: f64) -> Result<Self> {
        Self::new(station, direction, LoadMode::Force(magnitude))
    }

    pub fn displacement(station: f64, direction: Vector3<f64>, target: f64) -> Result<Self> {
        Self::new(station, direction, LoadMode::Displacement(target))
    }

    pub fn station(&self) -> f64 {
        self.station
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn mode(&self) -> LoadMode {
        self.mode
    }

    fn with_force(&self, magnitude: f64) -> Self {
        Self {
            mode: LoadMode::Force(magnitude),
            ..*self
        }
    }

    fn force_vector(&self) -> Result<Vector3<f64>> {
        match self.mode {
            LoadMode::Force(f) => Ok(self.direction * f),
            LoadMode::Displacement(_) => Err(SolverError::InvalidLoad(
                "expected a force-controlled load".into(),
            )),
        }
    }
}

/// Discretized equilibrium. `forces[i]` and `moments[i]` are right limits, so
/// the entry at the load station already carries the force jump.
#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub stations: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub rotations: Vec<Matrix3<f64>>,
    pub forces: Vec<Vector3<f64>>,
    pub moments: Vec<Vector3<f64>>,
    /// Exact centerline position at the load station.
    pub load_position: Vector3<f64>,
}

impl RodState {
    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn tip(&self) -> Vector3<f64> {
        *self.positions.last().expect("non-empty state")
    }

    /// Largest `‖RᵀR - I‖∞` over all stations.
    pub fn max_orthonormality_error(&self) -> f64 {
        self.rotations
            .iter()
            .map(orthonormality_error)
            .fold(0.0, f64::max)
    }

    pub fn min_rotation_determinant(&self) -> f64 {
        self.rotations
            .iter()
            .map(|r| r.determinant())
            .fold(f64::INFINITY, f64::min)
    }

    /// Position at arc length `s`, linearly interpolated between stations.
    pub fn position_at(&self, s: f64) -> Vector3<f64> {
        let i = self.stations.partition_point(|&x| x < s);
        if i == 0 {
            return self.positions[0];
        }
        if i >= self.len() {
            return self.tip();
        }
        let (s0, s1) = (self.stations[i - 1], self.stations[i]);
        if s1 == s {
            return self.positions[i];
        }
        let t = (s - s0) / (s1 - s0);
        self.positions[i - 1] * (1.0 - t) + self.positions[i] * t
    }
}

/// A converged clamped/free equilibrium under one point force.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: RodState,
    pub load: LoadCase,
    /// Applied force magnitude (N).
    pub force: f64,
    /// Converged internal moment at the base, `m(0)`.
    pub base_moment: Vector3<f64>,
    /// `‖m(L)‖` at convergence.
    pub residual: f64,
    pub iterations: usize,
}

impl Equilibrium {
    /// Displacement of the load station from its undeformed position,
    /// projected on the load direction.
    pub fn displacement(&self) -> f64 {
        load_displacement(&self.state, &self.load)
    }
}

fn load_displacement(state: &RodState, load: &LoadCase) -> f64 {
    (state.load_position - Vector3::new(0.0, 0.0, load.station)).dot(&load.direction)
}

/// Starting point for a shooting solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmStart {
    pub force: f64,
    pub base_moment: Vector3<f64>,
}

impl From<&Equilibrium> for WarmStart {
    fn from(eq: &Equilibrium) -> Self {
        Self {
            force: eq.force,
            base_moment: eq.base_moment,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    inv_bending: Vector3<f64>,
    inv_shear: Vector3<f64>,
}

/// Piecewise-constant compliance profile of one rod, built once per spec.
#[derive(Debug, Clone)]
pub struct RodModel {
    length: f64,
    segments: Vec<Segment>,
    breakpoints: Vec<f64>,
}

impl RodModel {
    pub fn new(spec: &RodSpec, mat: &MaterialModel) -> Result<Self> {
        let length = spec.length();
        let breakpoints = spec.breakpoints();
        let mut edges = Vec::with_capacity(breakpoints.len() + 2);
        edges.push(0.0);
        edges.extend_from_slice(&breakpoints);
        edges.push(length);
        let mut segments = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let e = effective_modulus(mat, spec, mid)?;
            let k = StiffnessMatrices::new(e, mat.shear_modulus(e), &cross_section_at(spec, mid)?);
            segments.push(Segment {
                start: w[0],
                inv_bending: k.bending_torsion.map(|v| 1.0 / v),
                inv_shear: k.shear_extension.map(|v| 1.0 / v),
            });
        }
        Ok(Self {
            length,
            segments,
            breakpoints,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn segment_at(&self, s: f64) -> &Segment {
        let i = self.segments.partition_point(|seg| seg.start <= s);
        &self.segments[i.saturating_sub(1)]
    }

    /// Small-deflection compliance `∫ (s_c - s)² / EI(s) ds` of the load
    /// station, used to seed displacement-controlled solves.
    pub fn linear_compliance(&self, station: f64) -> f64 {
        let mut total = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let a = seg.start;
            let b = self
                .segments
                .get(i + 1)
                .map_or(self.length, |n| n.start)
                .min(station);
            if b <= a {
                break;
            }
            total += seg.inv_bending.x * ((station - a).powi(3) - (station - b).powi(3)) / 3.0;
        }
        total
    }

    fn check_load(&self, load: &LoadCase) -> Result<()> {
        if load.station > self.length * (1.0 + 1e-12) {
            return Err(SolverError::InvalidLoad(format!(
                "load station {} beyond rod length {}",
                load.station, self.length
            )));
        }
        Ok(())
    }

    /// Integrates from the clamped base with trial base moment `m0`.
    pub fn integrate(
        &self,
        load: &LoadCase,
        m0: &Vector3<f64>,
        settings: &SolverSettings,
    ) -> Result<RodState> {
        settings.validate()?;
        self.check_load(load)?;
        let force = load.force_vector()?;
        let n_int = settings.nodes;
        let h = self.length / n_int as f64;
        let snap = 1e-12 * self.length;
        let station = load.station.min(self.length);

        // Interior split points: band edges plus the load station when it is
        // not a grid node.
        let mut splits: Vec<f64> = self.breakpoints.clone();
        let station_idx = (station / h).round() as usize;
        let station_on_node = (station_idx as f64 * h - station).abs() <= snap;
        if !station_on_node {
            splits.push(station);
            splits.sort_by(f64::total_cmp);
        }

        let mut state = RodState {
            stations: Vec::with_capacity(n_int + 1),
            positions: Vec::with_capacity(n_int + 1),
            rotations: Vec::with_capacity(n_int + 1),
            forces: Vec::with_capacity(n_int + 1),
            moments: Vec::with_capacity(n_int + 1),
            load_position: Vector3::zeros(),
        };
        let mut p = Vector3::zeros();
        let mut r = Matrix3::identity();
        let mut n = force;
        let mut m = *m0;
        let mut jumped = false;
        let mut next_split = 0;

        state.stations.push(0.0);
        state.positions.push(p);
        state.rotations.push(r);
        state.forces.push(n);
        state.moments.push(m);

        for i in 0..n_int {
            let s0 = i as f64 * h;
            let s1 = if i + 1 == n_int { self.length } else { (i + 1) as f64 * h };
            let mut a = s0;
            while next_split < splits.len() && splits[next_split] <= s0 + snap {
                next_split += 1;
            }
            loop {
                let b = match splits.get(next_split) {
                    Some(&x) if x < s1 - snap => x,
                    _ => s1,
                };
                let seg = self.segment_at(0.5 * (a + b));
                rk4_step(&mut p, &mut r, &mut m, &n, seg, b - a);
                r = reproject(&r);
                if !jumped && (b - station).abs() <= snap {
                    state.load_position = p;
                    n -= force;
                    jumped = true;
                }
                a = b;
                if b >= s1 - snap {
                    break;
                }
                next_split += 1;
            }
            if !(p.iter().chain(m.iter()).chain(r.iter()).all(|v| v.is_finite())) {
                return Err(SolverError::Diverged { station: s1 });
            }
            state.stations.push(s1);
            state.positions.push(p);
            state.rotations.push(r);
            state.forces.push(n);
            state.moments.push(m);
        }
        Ok(state)
    }

    /// Solves the clamped-base / free-tip problem for a force-controlled load.
    pub fn solve_point_load(
        &self,
        load: &LoadCase,
        settings: &SolverSettings,
        warm: Option<&WarmStart>,
    ) -> Result<Equilibrium> {
        settings.validate()?;
        self.check_load(load)?;
        let force = load.force_vector()?;
        let magnitude = force.norm();

        // Moment of the force about the base for the straight rod, or the
        // warm start scaled to the new magnitude.
        let mut m0 = match warm {
            Some(w) if w.force > 0.0 => w.base_moment * (magnitude / w.force),
            _ => Vector3::new(0.0, 0.0, load.station).cross(&force),
        };
        let moment_scale = (magnitude * load.station).max(1e-12);

        let mut state = self.integrate(load, &m0, settings)?;
        let mut residual = *state.moments.last().unwrap();
        let mut res_norm = residual.norm();
        let mut iterations = 1;
        let mut lambda = 0.0;

        while res_norm > settings.moment_tol {
            if iterations >= settings.max_iterations {
                return Err(SolverError::NoEquilibrium {
                    iterations,
                    best_residual: res_norm,
                });
            }
            iterations += 1;
            let step = 1e-7 * moment_scale.max(m0.norm());
            let mut jac = Matrix3::zeros();
            for k in 0..3 {
                let mut trial = m0;
                trial[k] += step;
                let st = self.integrate(load, &trial, settings)?;
                jac.set_column(k, &((st.moments.last().unwrap() - residual) / step));
            }

            let mut accepted = false;
            for _ in 0..30 {
                let delta = if lambda == 0.0 {
                    jac.lu().solve(&-residual)
                } else {
                    let jt = jac.transpose();
                    let mut normal = jt * jac;
                    for d in 0..3 {
                        normal[(d, d)] *= 1.0 + lambda;
                    }
                    normal.lu().solve(&(-jt * residual))
                };
                let Some(delta) = delta.filter(|d| d.iter().all(|v| v.is_finite())) else {
                    lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
                    continue;
                };
                // Backtrack along the step before falling back to damping.
                let mut t = 1.0;
                for _ in 0..8 {
                    let candidate = m0 + delta * t;
                    if let Ok(st) = self.integrate(load, &candidate, settings) {
                        let res = *st.moments.last().unwrap();
                        if res.norm() < res_norm {
                            m0 = candidate;
                            state = st;
                            residual = res;
                            res_norm = res.norm();
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if accepted {
                    lambda *= 0.1;
                    if lambda < 1e-9 {
                        lambda = 0.0;
                    }
                    break;
                }
                lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            }
            if !accepted {
                return Err(SolverError::NoEquilibrium {
                    iterations,
                    best_residual: res_norm,
                });
            }
        }

        log::debug!("shooting converged in {iterations} iteration(s), residual {res_norm:.3e} N m");
        Ok(Equilibrium {
            state,
            load: *load,
            force: magnitude,
            base_moment: m0,
            residual: res_norm,
            iterations,
        })
    }

    /// Finds the force magnitude whose equilibrium moves the load station by
    /// the target displacement along the load direction.
    pub fn solve_imposed_displacement(
        &self,
        load: &LoadCase,
        settings: &SolverSettings,
        warm: Option<&WarmStart>,
    ) -> Result<Equilibrium> {
        settings.validate()?;
        self.check_load(load)?;
        let target = match load.mode {
            LoadMode::Displacement(d) => d,
            LoadMode::Force(_) => {
                return Err(SolverError::InvalidLoad(
                    "expected a displacement-controlled load".into(),
                ))
            }
        };
        if target == 0.0 {
            return self.solve_point_load(&load.with_force(0.0), settings, None);
        }

        let mut last_warm = warm.copied();
        let eval = |f: f64, warm: Option<WarmStart>| -> Result<(Equilibrium, f64)> {
            let eq = self.solve_point_load(&load.with_force(f), settings, warm.as_ref())?;
            let gap = eq.displacement() - target;
            Ok((eq, gap))
        };

        let mut f_guess = target / self.linear_compliance(load.station);
        if !(f_guess.is_finite() && f_guess > 0.0) {
            f_guess = 1e-3 * settings.max_force;
        }
        f_guess = f_guess.min(settings.max_force);

        // Bracket: g(0) = -target < 0.
        let (mut f_lo, mut g_lo) = (0.0, -target);
        let mut hi: Option<(f64, f64)> = None;
        let (mut f_prev, mut g_prev) = (f_lo, g_lo);
        let mut f = f_guess;
        let mut best: Option<(Equilibrium, f64)> = None;
        let mut side = 0i8;

        for _ in 0..(4 * settings.max_iterations) {
            let (eq, g) = eval(f, last_warm)?;
            last_warm = Some(WarmStart::from(&eq));
            let better = best.as_ref().is_none_or(|(_, bg)| g.abs() < bg.abs());
            if better {
                best = Some((eq, g));
            }
            if g.abs() <= settings.displacement_tol {
                let (eq, _) = best.unwrap();
                return Ok(eq);
            }
            if g < 0.0 {
                f_lo = f;
                g_lo = g;
                if side == -1 {
                    if let Some((_, g_hi)) = hi.as_mut() {
                        *g_hi *= 0.5;
                    }
                }
                side = -1;
            } else {
                hi = Some((f, g));
                if side == 1 {
                    g_lo *= 0.5;
                }
                side = 1;
            }
            let next = match hi {
                Some((f_hi, g_hi)) => {
                    // Illinois-style regula falsi inside the bracket.
                    let x = f_lo - g_lo * (f_hi - f_lo) / (g_hi - g_lo);
                    if x > f_lo && x < f_hi {
                        x
                    } else {
                        0.5 * (f_lo + f_hi)
                    }
                }
                None => {
                    if f >= settings.max_force {
                        return Err(SolverError::Unreachable {
                            target,
                            max_force: settings.max_force,
                            reached: g + target,
                        });
                    }
                    let secant = f - g * (f - f_prev) / (g - g_prev);
                    let x = if secant.is_finite() && secant > f { secant } else { 2.0 * f };
                    x.min(4.0 * f).min(settings.max_force)
                }
            };
            f_prev = f;
            g_prev = g;
            f = next;
        }
        let (eq, _) = best.expect("at least one evaluation");
        Err(SolverError::Unreachable {
            target,
            max_force: settings.max_force,
            reached: eq.displacement(),
        })
    }
}

#[inline]
fn derivatives(
    r: &Matrix3<f64>,
    m: &Vector3<f64>,
    n: &Vector3<f64>,
    seg: &Segment,
) -> (Vector3<f64>, Matrix3<f64>, Vector3<f64>) {
    let rt = r.transpose();
    let u = (rt * m).component_mul(&seg.inv_bending);
    let v = (rt * n).component_mul(&seg.inv_shear) + Vector3::z();
    let dp = r * v;
    let dr = r * hat(&u);
    let dm = -dp.cross(n);
    (dp, dr, dm)
}

#[inline]
fn rk4_step(
    p: &mut Vector3<f64>,
    r: &mut Matrix3<f64>,
    m: &mut Vector3<f64>,
    n: &Vector3<f64>,
    seg: &Segment,
    h: f64,
) {
    let (p1, r1, m1) = derivatives(r, m, n, seg);
    let (p2, r2, m2) = derivatives(&(*r + r1 * (0.5 * h)), &(*m + m1 * (0.5 * h)), n, seg);
    let (p3, r3, m3) = derivatives(&(*r + r2 * (0.5 * h)), &(*m + m2 * (0.5 * h)), n, seg);
    let (p4, r4, m4) = derivatives(&(*r + r3 * h), &(*m + m3 * h), n, seg);
    let w = h / 6.0;
    *p += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * w;
    *r += (r1 + r2 * 2.0 + r3 * 2.0 + r4) * w;
    *m += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * w;
}

/// Forward integration for a trial base moment.
pub fn integrate_ivp(
    spec: &RodSpec,
    mat: &MaterialModel,
    load: &LoadCase,
    m0: &Vector3<f64>,
    settings: &SolverSettings,
) -> Result<RodState> {
    RodModel::new(spec, mat)?.integrate(load, m0, settings)
}

pub fn solve_point_load(
    spec: &RodSpec,
    mat: &MaterialModel,
    load: &LoadCase,
    settings: &SolverSettings,
) -> Result<Equilibrium> {
    RodModel::new(spec, mat)?.solve_point_load(load, settings, None)
}

pub fn solve_imposed_displacement(
    spec: &RodSpec,
    mat: &MaterialModel,
    load: &LoadCase,
    settings: &SolverSettings,
) -> Result<Equilibrium> {
    RodModel::new(spec, mat)?.solve_imposed_displacement(load, settings, None)
}
