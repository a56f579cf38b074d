//! Lifting reduced geodesics to planar motions with `E = 0`, `C = 0`, `I = 1`.
//!
//! A reduced path `u(sigma)` is lifted horizontally into `C^2 ⊃ S^3`: the
//! Jacobi vector is `z = exp(i psi) s(u)` for a local section `s`, with the
//! fiber phase `psi` transported so that `z'` is orthogonal to `i z`.
//! Zero energy fixes the clock: `|dq/dt|^2 = 2U` and `dsigma = sqrt(U)|dq|`
//! give `dt = dsigma / (sqrt 2 U)`.

use std::f64::consts::SQRT_2;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{acceleration, invariants, potential, IntegrationStats, PlanarConfig, PlanarState, Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::geodesic::{
    cusp_metric, depth_of_tau, flow, hermite, hermite_derivative, tau_of_depth, CuspState, FlowOptions, ReducedPath,
};
use crate::orbit::CollisionOrbit;
use crate::shape::{
    config_from_jacobi, horizontal_lift_vector, section, section_phase_rate, shape_map, velocity_from_jacobi, ConformalFactor,
    End, JmFactor, Section, METRIC_GUARD,
};

const GAUSS_NODES: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Extrinsic position, unit tangent and `1/lambda` on segment `k` at fraction `s`.
fn segment_state(path: &ReducedPath, k: usize, s: f64) -> (Vector3<f64>, Vector3<f64>, f64) {
    let (p, q) = (&path.samples[k], &path.samples[k + 1]);
    let h = q.sigma - p.sigma;
    if let (Some(a), Some(b)) = (p.cusp, q.cusp) {
        if a.end == b.end {
            let c = CuspState {
                end: a.end,
                tau: hermite(a.tau, a.dtau, b.tau, b.dtau, h, s),
                phi: hermite(a.phi, a.dphi, b.phi, b.dphi, h, s),
                dtau: hermite_derivative(a.tau, a.dtau, b.tau, b.dtau, h, s),
                dphi: hermite_derivative(a.phi, a.dphi, b.phi, b.dphi, h, s),
            };
            let (u, v) = c.to_extrinsic();
            let theta = c.theta();
            return (u, v, theta * theta / (4.0 * cusp_metric(c.end, c.tau, c.phi).a));
        }
    }
    let (pu, qu) = (p.point(), q.point());
    let (pv, qv) = (p.state.tangent, q.state.tangent);
    let u = Vector3::from_fn(|i, _| hermite(pu[i], pv[i], qu[i], qv[i], h, s));
    let v = Vector3::from_fn(|i, _| hermite_derivative(pu[i], pv[i], qu[i], qv[i], h, s));
    let n = u.norm();
    let u = u / n;
    let v = (v - u * u.dot(&v)) / n;
    (u, v, 1.0 / JmFactor.value(&u))
}

/// Physical time spent on segment `k` up to fraction `s`.
fn segment_time(path: &ReducedPath, k: usize, s: f64) -> f64 {
    let h = (path.samples[k + 1].sigma - path.samples[k].sigma) * s;
    let scale = s;
    GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(&x, w)| w * segment_state(path, k, x * scale).2)
        .sum::<f64>()
        * h
        / SQRT_2
}

/// Cumulative physical time at every sample, starting from 0.
pub fn elapsed_time(path: &ReducedPath) -> Vec<f64> {
    let mut t = vec![0.0; path.len()];
    for k in 0..path.len().saturating_sub(1) {
        t[k + 1] = t[k] + segment_time(path, k, 1.0);
    }
    t
}

fn segment_phase_increment(path: &ReducedPath, k: usize, which: Section) -> f64 {
    let h = path.samples[k + 1].sigma - path.samples[k].sigma;
    GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(&x, w)| {
            let (u, v, _) = segment_state(path, k, x);
            w * section_phase_rate(&u, &v, which)
        })
        .sum::<f64>()
        * h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftSample {
    pub sigma: f64,
    /// Centered configuration with `I = 1`.
    pub config: PlanarConfig,
    /// `dq/dsigma`, horizontal.
    pub dconfig: [Complex64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftCurve {
    pub samples: Vec<LiftSample>,
    /// Index range of the source path that was lifted.
    pub source_range: (usize, usize),
    pub truncated_start: bool,
    pub truncated_end: bool,
    pub initial_phase: f64,
    pub section_switches: usize,
}

fn sample_theta(path: &ReducedPath, k: usize) -> f64 {
    let s = &path.samples[k];
    match s.cusp {
        Some(c) => c.theta(),
        None => s.state.point.nearest_end().1,
    }
}

/// Horizontal lift of the longest initial stretch of `path` (after any
/// leading samples within [`METRIC_GUARD`] of a puncture) that stays outside it.
pub fn horizontal_lift(path: &ReducedPath) -> Result<LiftCurve> {
    horizontal_lift_with(path, METRIC_GUARD)
}

/// As [`horizontal_lift`], truncating at angular distance `guard` instead.
pub fn horizontal_lift_with(path: &ReducedPath, guard: f64) -> Result<LiftCurve> {
    if !(guard >= METRIC_GUARD) {
        return Err(Error::InvalidInput(format!("lift guard {guard} is inside the metric guard {METRIC_GUARD}")));
    }
    let n = path.len();
    let first = (0..n)
        .find(|&k| sample_theta(path, k) > guard)
        .ok_or_else(|| Error::InvalidInput("path never leaves the lift guard".into()))?;
    let last = (first..n).find(|&k| sample_theta(path, k) <= guard).map_or(n - 1, |k| k - 1);

    let mut which = Section::preferred(path.samples[first].point());
    let mut psi = 0.0;
    let mut switches = 0;
    let mut samples = Vec::with_capacity(last - first + 1);
    for k in first..=last {
        if k > first {
            psi += segment_phase_increment(path, k - 1, which);
        }
        let p = &path.samples[k];
        let u = p.point();
        // Hysteresis keeps each section away from its singular point.
        let next = match which {
            Section::Z1Real if u[0] < -0.5 => Section::Z2Real,
            Section::Z2Real if u[0] > -0.3 => Section::Z1Real,
            w => w,
        };
        if next != which {
            let rot = Complex64::from_polar(1.0, psi);
            let z = section(u, which).map(|c| c * rot);
            let s_new = section(u, next);
            psi = (z[0] * s_new[0].conj() + z[1] * s_new[1].conj()).arg();
            which = next;
            switches += 1;
        }
        let rot = Complex64::from_polar(1.0, psi);
        let z = section(u, which).map(|c| c * rot);
        let dz = horizontal_lift_vector(&z, &p.state.tangent);
        samples.push(LiftSample { sigma: p.sigma, config: config_from_jacobi(z), dconfig: velocity_from_jacobi(dz) });
    }
    Ok(LiftCurve {
        samples,
        source_range: (first, last),
        truncated_start: first > 0,
        truncated_end: last + 1 < n,
        initial_phase: 0.0,
        section_switches: switches,
    })
}

fn jm_speed(s: &LiftSample) -> Result<f64> {
    let w: f64 = s.dconfig.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(potential(&s.config)?.sqrt() * w)
}

/// Four-point Lagrange integral of `f` over `[x[k], x[k+1]]`, using the
/// nearest available neighbours.
fn lagrange_segment_integral(x: &[f64], f: &[f64], k: usize) -> f64 {
    let n = x.len();
    if n < 4 {
        return 0.5 * (f[k] + f[k + 1]) * (x[k + 1] - x[k]);
    }
    let j0 = k.saturating_sub(1).min(n - 4);
    let nodes = &x[j0..j0 + 4];
    let (a, b) = (x[k], x[k + 1]);
    // Integrate the interpolant with 3-point Gauss (exact for cubics).
    GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(&g, w)| {
            let t = a + g * (b - a);
            let val: f64 = (0..4)
                .map(|i| {
                    let li: f64 = (0..4).filter(|&j| j != i).map(|j| (t - nodes[j]) / (nodes[i] - nodes[j])).product();
                    li * f[j0 + i]
                })
                .sum();
            w * val
        })
        .sum::<f64>()
        * (b - a)
}

/// JM length of the lift, `int sqrt(U) |dq/dsigma| dsigma`.
pub fn jm_length(curve: &LiftCurve) -> Result<f64> {
    let x: Vec<f64> = curve.samples.iter().map(|s| s.sigma).collect();
    let f: Vec<f64> = curve.samples.iter().map(jm_speed).collect::<Result<_>>()?;
    Ok((0..x.len().saturating_sub(1)).map(|k| lagrange_segment_integral(&x, &f, k)).sum())
}

/// Physical-time parametrization, `dt = |dq| / sqrt(2U)`, independent of how
/// the lift is parametrized. Velocities satisfy `|v|^2 = 2U` exactly.
pub fn time_reparam(curve: &LiftCurve) -> Result<Trajectory> {
    let x: Vec<f64> = curve.samples.iter().map(|s| s.sigma).collect();
    let mut f = Vec::with_capacity(x.len());
    let mut states = Vec::with_capacity(x.len());
    for s in &curve.samples {
        let u = potential(&s.config)?;
        let w: f64 = s.dconfig.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        f.push(w / (2.0 * u).sqrt());
        let scale = (2.0 * u).sqrt() / w;
        states.push(PlanarState::new(s.config, s.dconfig.map(|z| z * scale)));
    }
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(states.len());
    for (k, st) in states.into_iter().enumerate() {
        if k > 0 {
            t += lagrange_segment_integral(&x, &f, k - 1);
        }
        samples.push((t, st));
    }
    let status = if curve.truncated_end { TrajectoryStatus::CollisionApproach } else { TrajectoryStatus::Completed };
    Ok(Trajectory { samples, status, stats: IntegrationStats { tol: 0.0, accepted: 0, rejected: 0 } })
}

/// Collision-time extrapolation from the times at which the final tail
/// passes successive integer depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionTime {
    pub end: End,
    pub depths: Vec<f64>,
    pub times: Vec<f64>,
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    pub t_c: f64,
}

/// Time (from the start of `path`) at which the final descent reaches each
/// integer depth `1..=max_depth`, and the Aitken-extrapolated limit.
pub fn collision_time(path: &ReducedPath, max_depth: usize) -> Option<CollisionTime> {
    let last = path.last().cusp?;
    let end = last.end;
    let n = path.len();
    let entry = path.samples.iter().rposition(|s| !matches!(s.cusp, Some(c) if c.end == end)).map_or(0, |k| k + 1);
    let t = elapsed_time(path);
    let mut depths = Vec::new();
    let mut times = Vec::new();
    for d in 1..=max_depth {
        let target = tau_of_depth(d as f64);
        let k = (entry..n - 1).rev().find(|&k| match (path.samples[k].cusp, path.samples[k + 1].cusp) {
            (Some(a), Some(b)) => a.tau <= target && b.tau >= target,
            _ => false,
        })?;
        let (a, b) = (path.samples[k].cusp?, path.samples[k + 1].cusp?);
        let h = path.samples[k + 1].sigma - path.samples[k].sigma;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if hermite(a.tau, a.dtau, b.tau, b.dtau, h, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        depths.push(depth_of_tau(target));
        times.push(t[k] + segment_time(path, k, 0.5 * (lo + hi)));
    }
    let increments: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = increments.windows(2).map(|w| w[1] / w[0]).collect();
    let r = *ratios.last()?;
    if !(r > 0.0 && r < 1.0) {
        return None;
    }
    let t_c = times.last()? + increments.last()? * r / (1.0 - r);
    Some(CollisionTime { end, depths, times, increments, ratios, t_c })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOrbit {
    pub trajectory: Trajectory,
    pub source: ReducedPath,
    pub curve: LiftCurve,
    /// Pair that collides at the forward end, if the path ends in a leg.
    pub collision: Option<End>,
}

pub fn lift(path: &ReducedPath) -> Result<LiftedOrbit> {
    let curve = horizontal_lift(path)?;
    let trajectory = time_reparam(&curve)?;
    Ok(LiftedOrbit { trajectory, source: path.clone(), curve, collision: path.last().cusp.map(|c| c.end) })
}

/// Re-integrates each segment of `path` shallower than `max_depth` with step
/// cap `opts.max_step`, keeping the original samples as anchors.
pub fn refine(path: &ReducedPath, opts: &FlowOptions, max_depth: f64) -> ReducedPath {
    let shallow = |k: usize| path.samples[k].depth().is_none_or(|d| d < max_depth);
    let mut samples = vec![*path.first()];
    for k in 0..path.len().saturating_sub(1) {
        let next = path.samples[k + 1];
        let h = next.sigma - path.samples[k].sigma;
        if shallow(k) && shallow(k + 1) && h > opts.max_step {
            let (seg, _) = flow(&path.samples[k], h, opts, |_| false);
            samples.extend(seg.samples[1..].iter().filter(|s| s.sigma < next.sigma - 1e-3 * opts.max_step));
        }
        samples.push(next);
    }
    ReducedPath { samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftOptions {
    /// Step cap used when refining the source path before lifting.
    pub max_step: f64,
    pub tol: f64,
    /// Angular distance from a collision point at which the lift stops.
    pub guard: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions { max_step: 0.01, tol: 1e-12, guard: METRIC_GUARD }
    }
}

/// Lifts an orbit after refining its shallow part.
pub fn lift_orbit(orbit: &CollisionOrbit, opts: &LiftOptions) -> Result<LiftedOrbit> {
    let dense = refine(&orbit.path, &FlowOptions { tol: opts.tol, max_step: opts.max_step }, 4.0);
    let curve = horizontal_lift_with(&dense, opts.guard)?;
    let trajectory = time_reparam(&curve)?;
    Ok(LiftedOrbit { trajectory, source: dense, curve, collision: Some(orbit.finish_end) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerificationStatus {
    Passed,
    Failed { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub status: VerificationStatus,
    pub samples: usize,
    /// Max over interior samples of `|dv/dt - grad U| / |grad U|`.
    pub eq1_residual: f64,
    pub eq1_index: usize,
    pub max_abs_energy: f64,
    pub max_abs_angular_momentum: f64,
    pub max_inertia_error: f64,
    pub max_inertia_rate: f64,
    /// Max of `|<v, i q>|` and `|<v, q>|` relative to `|v| |q|`.
    pub max_horizontality: f64,
    pub max_shape_error: f64,
    pub final_pair_distance: Option<f64>,
    /// Pair distance of the colliding pair decreases along the final descent.
    pub pair_distance_monotone: Option<bool>,
    pub truncation_depth: Option<f64>,
    pub collision_time: Option<CollisionTime>,
}

/// Derivative at `x[k]` of the Lagrange interpolant through five nodes.
fn five_point_derivative(x: &[f64], f: &[Complex64], k: usize) -> Complex64 {
    let idx = [k - 2, k - 1, k, k + 1, k + 2];
    let xk = x[k];
    let mut d = Complex64::new(0.0, 0.0);
    for (a, &i) in idx.iter().enumerate() {
        // l_i'(x_k) = sum_{m != i} 1/(x_i - x_m) prod_{j != i, m} (x_k - x_j)/(x_i - x_j)
        let mut li = 0.0;
        for (b, &m) in idx.iter().enumerate() {
            if b == a {
                continue;
            }
            let mut prod = 1.0 / (x[i] - x[m]);
            for (c, &j) in idx.iter().enumerate() {
                if c != a && c != b {
                    prod *= (xk - x[j]) / (x[i] - x[j]);
                }
            }
            li += prod;
        }
        d += f[i] * li;
    }
    d
}

/// Checks a lifted orbit against the equations of motion and the
/// conserved quantities; `tol` bounds the relative Eq. residual.
pub fn verify_solution(lifted: &LiftedOrbit, tol: f64) -> Result<VerificationReport> {
    let traj = &lifted.trajectory;
    let n = traj.samples.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!("verification needs at least 10 samples, got {n}")));
    }
    let t: Vec<f64> = traj.samples.iter().map(|s| s.0).collect();
    let mut eq1 = 0.0f64;
    let mut eq1_index = 0;
    for j in 0..3 {
        let v: Vec<Complex64> = traj.samples.iter().map(|s| s.1.v[j]).collect();
        for k in 2..n - 2 {
            let a = acceleration(&traj.samples[k].1.config)?;
            let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let r = (five_point_derivative(&t, &v, k) - a[j]).norm() / norm;
            if r > eq1 {
                eq1 = r;
                eq1_index = k;
            }
        }
    }
    let (mut e_max, mut c_max, mut i_max, mut id_max, mut h_max, mut shape_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (first, _) = lifted.curve.source_range;
    for (k, (_, st)) in traj.samples.iter().enumerate() {
        let inv = invariants(st)?;
        e_max = e_max.max(inv.energy.abs());
        c_max = c_max.max(inv.angular_momentum.abs());
        i_max = i_max.max((inv.inertia - 1.0).abs());
        id_max = id_max.max(inv.inertia_rate.abs());
        let q = st.config.positions();
        let vn: f64 = st.v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let qn = inv.inertia.sqrt();
        let rot: f64 = (0..3).map(|j| (st.v[j] * (Complex64::i() * q[j]).conj()).re).sum();
        let rad: f64 = (0..3).map(|j| (st.v[j] * q[j].conj()).re).sum();
        h_max = h_max.max(rot.abs().max(rad.abs()) / (vn * qn));
        let u = shape_map(&st.config)?;
        shape_max = shape_max.max((u.as_vector() - lifted.source.samples[first + k].point()).norm());
    }
    let (final_pair, monotone, depth) = match lifted.collision {
        Some(end) => {
            let (i, j) = end.bodies();
            let entry = lifted
                .source
                .samples
                .iter()
                .rposition(|s| !matches!(s.cusp, Some(c) if c.end == end))
                .map_or(0, |k| k + 1)
                .saturating_sub(first);
            let d: Vec<f64> = traj.samples.iter().skip(entry).map(|s| s.1.config.pair_distance(i, j)).collect();
            let mono = d.windows(2).all(|w| w[1] < w[0]);
            let last = traj.samples.last().map(|s| s.1.config.pair_distance(i, j));
            (last, Some(mono), lifted.source.samples[lifted.curve.source_range.1].depth())
        }
        None => (None, None, None),
    };
    let status = if eq1 > tol { VerificationStatus::Failed { index: eq1_index } } else { VerificationStatus::Passed };
    Ok(VerificationReport {
        status,
        samples: n,
        eq1_residual: eq1,
        eq1_index,
        max_abs_energy: e_max,
        max_abs_angular_momentum: c_max,
        max_inertia_error: i_max,
        max_inertia_rate: id_max,
        max_horizontality: h_max,
        max_shape_error: shape_max,
        final_pair_distance: final_pair,
        pair_distance_monotone: monotone,
        truncation_depth: depth,
        collision_time: collision_time(&lifted.source, 8),
    })
}
