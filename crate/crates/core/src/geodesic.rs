//! Unit-speed geodesics of the reduced metric `lambda * g` on the thrice
//! punctured sphere.
//!
//! Away from the punctures the flow is integrated extrinsically in `R^3`
//! (`u` on the unit sphere, `v = du/dsigma`), projecting back onto the
//! sphere and onto unit speed after every step. Within [`CHART_GUARD`] of a
//! puncture it switches to the end's cusp chart `(tau, phi)`, with
//! `theta = exp(-tau)` the angular distance to the puncture. There the metric
//! is `A dtau^2 + B dphi^2` with `A, B -> 1/2`: each leg is asymptotic to a
//! cylinder of circumference `pi sqrt 2`, and depth is `tau / sqrt 2` past
//! the reference circle `theta = CHART_GUARD`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::ode::{OdeSystem, Stepper};
use crate::shape::{shape_differential, shape_map, ConformalFactor, End, JmFactor, Seam, ShapePoint, METRIC_GUARD};

/// Angular distance from a puncture at which the flow changes chart; also the
/// reference cross-section of each end.
pub const CHART_GUARD: f64 = 0.05;

/// Depth beyond which the cusp step size may grow with depth; deeper than
/// the metric guard, so lifted segments keep the caller's step cap.
const DEEP_DEPTH: f64 = 4.0;
const MAX_CUSP_STEP: f64 = 1e3;

pub fn reference_tau() -> f64 {
    -CHART_GUARD.ln()
}

pub fn depth_of_tau(tau: f64) -> f64 {
    (tau - reference_tau()) / SQRT_2
}

pub fn tau_of_depth(depth: f64) -> f64 {
    reference_tau() + SQRT_2 * depth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chart {
    Core,
    Cusp(End),
}

/// Point of the shape sphere with a unit tangent for the reduced metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicState {
    pub point: ShapePoint,
    pub tangent: Vector3<f64>,
}

fn reduced_speed(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    (JmFactor.value(u) / 4.0).sqrt() * v.norm()
}

impl GeodesicState {
    /// Projects `direction` onto the tangent plane and rescales to unit speed.
    pub fn new(point: ShapePoint, direction: Vector3<f64>) -> Result<Self> {
        let (end, d) = point.nearest_end();
        if d <= METRIC_GUARD {
            return Err(Error::CuspGuard { end: end.label().into(), distance: d });
        }
        let u = point.as_vector();
        let t = direction - u * u.dot(&direction);
        let n = t.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput("tangent direction must be nonzero and tangent".into()));
        }
        let tangent = t / reduced_speed(u, &t);
        Ok(GeodesicState { point, tangent })
    }

    pub fn speed(&self) -> f64 {
        reduced_speed(self.point.as_vector(), &self.tangent)
    }

    pub fn reversed(&self) -> Self {
        GeodesicState { point: self.point, tangent: -self.tangent }
    }

    pub fn mirrored(&self) -> Self {
        let t = self.tangent;
        GeodesicState { point: self.point.mirrored(), tangent: Vector3::new(t[0], t[1], -t[2]) }
    }
}

struct OtherEnd {
    alpha: f64,
    beta1: f64,
    beta2: f64,
}

fn other_ends(end: End) -> [OtherEnd; 2] {
    let (b, e1, e2) = end.frame();
    let mut it = End::ALL.into_iter().filter(|&e| e != end).map(|e| {
        let p = e.position();
        OtherEnd { alpha: b.dot(&p), beta1: e1.dot(&p), beta2: e2.dot(&p) }
    });
    [it.next().unwrap(), it.next().unwrap()]
}

/// Metric coefficients of the cusp chart and their partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspMetric {
    pub a: f64,
    pub b: f64,
    pub a_tau: f64,
    pub a_phi: f64,
    pub b_tau: f64,
    pub b_phi: f64,
}

/// `A = (lambda/4) theta^2`, `B = (lambda/4) sin^2 theta`, written so that
/// nothing cancels as `theta -> 0`.
pub fn cusp_metric(end: End, tau: f64, phi: f64) -> CuspMetric {
    let theta = (-tau).exp();
    let x = theta / 2.0;
    // g = x / sin x carries the puncture's own term: theta^2 / (4 (1 - cos theta)) = g^2 / 2.
    let (g, dg) = if x < 1e-3 {
        let x2 = x * x;
        (1.0 + x2 / 6.0 + 7.0 * x2 * x2 / 360.0, x / 3.0 + 7.0 * x * x2 / 90.0)
    } else {
        let s = x.sin();
        (x / s, (s - x * x.cos()) / (s * s))
    };
    let f = g * g / 2.0;
    let f_tau = -x * g * dg;

    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (mut r, mut r_th, mut r_ph) = (0.0, 0.0, 0.0);
    for o in other_ends(end) {
        let lin = o.beta1 * cp + o.beta2 * sp;
        let c = 1.0 - o.alpha * ct - st * lin;
        let c_th = o.alpha * st - ct * lin;
        let c_ph = -st * (-o.beta1 * sp + o.beta2 * cp);
        r += 1.0 / c;
        r_th -= c_th / (c * c);
        r_ph -= c_ph / (c * c);
    }
    let q = theta * theta / 4.0;
    let a = f + q * r;
    let a_tau = f_tau - theta * theta * (r / 2.0 + theta * r_th / 4.0);
    let a_phi = q * r_ph;

    let (s, s_tau) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, t2 / 3.0 - t2 * t2 / 30.0)
    } else {
        (st / theta, (st - theta * ct) / theta)
    };
    CuspMetric {
        a,
        b: a * s * s,
        a_tau,
        a_phi,
        b_tau: a_tau * s * s + 2.0 * a * s * s_tau,
        b_phi: a_phi * s * s,
    }
}

/// State of a geodesic in the cusp chart of `end`; `phi` is unwrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspState {
    pub end: End,
    pub tau: f64,
    pub phi: f64,
    pub dtau: f64,
    pub dphi: f64,
}

impl CuspState {
    pub fn theta(&self) -> f64 {
        (-self.tau).exp()
    }

    pub fn depth(&self) -> f64 {
        depth_of_tau(self.tau)
    }

    /// Clairaut constant `B phi'`, conserved on the asymptotic cylinder.
    pub fn angular_momentum(&self) -> f64 {
        cusp_metric(self.end, self.tau, self.phi).b * self.dphi
    }

    pub fn speed(&self) -> f64 {
        let m = cusp_metric(self.end, self.tau, self.phi);
        (m.a * self.dtau * self.dtau + m.b * self.dphi * self.dphi).sqrt()
    }

    fn normalized(mut self) -> Self {
        let s = self.speed();
        self.dtau /= s;
        self.dphi /= s;
        self
    }

    pub fn to_extrinsic(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (b, e1, e2) = self.end.frame();
        let theta = self.theta();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        let radial = e1 * cp + e2 * sp;
        let around = e2 * cp - e1 * sp;
        let u = b * ct + radial * st;
        let dtheta = -theta * self.dtau;
        let v = (radial * ct - b * st) * dtheta + around * (st * self.dphi);
        (u, v)
    }

    /// Cusp coordinates of an extrinsic state; `phi` in `(-pi, pi]`.
    pub fn from_extrinsic(end: End, u: &Vector3<f64>, v: &Vector3<f64>) -> Self {
        let (b, e1, e2) = end.frame();
        let (p1, p2) = (u.dot(&e1), u.dot(&e2));
        let theta = p1.hypot(p2).atan2(u.dot(&b));
        let phi = p2.atan2(p1);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let radial = e1 * cp + e2 * sp;
        let around = e2 * cp - e1 * sp;
        let dtheta = v.dot(&(radial * ct - b * st));
        CuspState { end, tau: -theta.ln(), phi, dtau: -dtheta / theta, dphi: v.dot(&around) / st }
    }

    pub fn reversed(&self) -> Self {
        CuspState { dtau: -self.dtau, dphi: -self.dphi, ..*self }
    }

    pub fn mirrored(&self) -> Self {
        CuspState { phi: -self.phi, dphi: -self.dphi, ..*self }
    }

    /// Seam containing the equator point at angle `phi` of this chart.
    pub fn seam_at(end: End, phi: f64) -> Seam {
        let k = (phi / PI).round() as i64;
        end.seams()[k.rem_euclid(2) as usize]
    }
}

/// Public cusp coordinates: depth past the reference circle and angle in `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspChart {
    pub end: End,
    pub depth: f64,
    pub phi: f64,
}

pub fn cusp_chart(u: &ShapePoint) -> Result<CuspChart> {
    let (end, d) = u.nearest_end();
    if d > CHART_GUARD {
        return Err(Error::OutsideCusp);
    }
    let s = CuspState::from_extrinsic(end, u.as_vector(), &Vector3::zeros());
    Ok(CuspChart { end, depth: s.depth(), phi: s.phi.rem_euclid(2.0 * PI) })
}

impl CuspChart {
    pub fn to_shape_point(&self) -> ShapePoint {
        let s = CuspState { end: self.end, tau: tau_of_depth(self.depth), phi: self.phi, dtau: 0.0, dphi: 0.0 };
        ShapePoint::new_unchecked(s.to_extrinsic().0)
    }
}

/// Length of the `theta`-circle at the given depth of an end.
pub fn cross_section_circumference(end: End, depth: f64) -> f64 {
    let n = 720;
    let tau = tau_of_depth(depth);
    (0..n)
        .map(|k| cusp_metric(end, tau, 2.0 * PI * k as f64 / n as f64).b.sqrt())
        .sum::<f64>()
        * 2.0
        * PI
        / n as f64
}

/// Radius of the circle the cross-sections converge to.
pub fn asymptotic_circumference() -> f64 {
    PI * SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub sigma: f64,
    /// Extrinsic position and tangent (derived from the cusp state in a cusp).
    pub state: GeodesicState,
    /// Present when the sample was integrated in a cusp chart.
    pub cusp: Option<CuspState>,
}

impl PathSample {
    /// Sample in the chart appropriate for its position.
    pub fn new(sigma: f64, state: GeodesicState) -> Self {
        let (end, d) = state.point.nearest_end();
        if d < CHART_GUARD {
            let cs = CuspState::from_extrinsic(end, state.point.as_vector(), &state.tangent).normalized();
            PathSample::from_cusp(sigma, cs)
        } else {
            PathSample { sigma, state, cusp: None }
        }
    }

    pub fn from_cusp(sigma: f64, cusp: CuspState) -> Self {
        let (u, v) = cusp.to_extrinsic();
        PathSample { sigma, state: GeodesicState { point: ShapePoint::new_unchecked(u), tangent: v }, cusp: Some(cusp) }
    }

    /// Unit tangent along the `phi = const` ray at depth `depth` of `end`'s
    /// leg, pointing out of the leg.
    pub fn cusp_launch(end: End, depth: f64, phi: f64) -> Self {
        let tau = tau_of_depth(depth);
        let m = cusp_metric(end, tau, phi);
        PathSample::from_cusp(0.0, CuspState { end, tau, phi, dtau: -1.0 / m.a.sqrt(), dphi: 0.0 })
    }

    pub fn chart(&self) -> Chart {
        match self.cusp {
            Some(c) => Chart::Cusp(c.end),
            None => Chart::Core,
        }
    }

    pub fn point(&self) -> &Vector3<f64> {
        self.state.point.as_vector()
    }

    pub fn depth(&self) -> Option<f64> {
        self.cusp.map(|c| c.depth())
    }

    pub fn reversed(&self) -> Self {
        PathSample { sigma: -self.sigma, state: self.state.reversed(), cusp: self.cusp.map(|c| c.reversed()) }
    }

    pub fn mirrored(&self) -> Self {
        PathSample { sigma: self.sigma, state: self.state.mirrored(), cusp: self.cusp.map(|c| c.mirrored()) }
    }
}

pub(crate) fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (3.0 * s2 - 2.0 * s3) * y1 + (s3 - s2) * h * d1
}

pub(crate) fn hermite_derivative(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    (6.0 * s2 - 6.0 * s) / h * y0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (6.0 * s - 6.0 * s2) / h * y1 + (3.0 * s2 - 2.0 * s) * d1
}

/// Ordered samples of a unit-speed geodesic, `sigma` strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReducedPath {
    pub samples: Vec<PathSample>,
}

pub const PATH_CSV_HEADER: &str = "sigma,u1,u2,u3,t1,t2,t3,chart,end,depth,phi";

impl ReducedPath {
    /// Shape curve of a planar trajectory, parametrized by reduced arclength
    /// (trapezoid rule in `t`). Samples where the shape is momentarily at
    /// rest carry no direction and are skipped, as are samples within the
    /// metric guard of a collision.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let mut samples: Vec<PathSample> = Vec::with_capacity(traj.samples.len());
        let mut prev: Option<(f64, f64)> = None;
        let mut sigma = 0.0;
        for (t, s) in &traj.samples {
            let cfg = s.config.centered();
            let u = shape_map(&cfg)?;
            let du = shape_differential(&cfg, &s.v)?;
            let du = du - u.as_vector() * u.as_vector().dot(&du);
            let speed = reduced_speed(u.as_vector(), &du);
            if let Some((t0, v0)) = prev {
                sigma += 0.5 * (t - t0) * (v0 + speed);
            }
            prev = Some((*t, speed));
            if !(speed > 1e-12) || samples.last().is_some_and(|p| !(sigma > p.sigma)) {
                continue;
            }
            match GeodesicState::new(u, du) {
                Ok(state) => samples.push(PathSample::new(sigma, state)),
                Err(Error::CuspGuard { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("trajectory never changes shape".into()));
        }
        Ok(ReducedPath { samples })
    }

    pub fn new(samples: Vec<PathSample>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].sigma > w[0].sigma)) {
            return Err(Error::InvalidInput("path samples must have increasing sigma".into()));
        }
        Ok(ReducedPath { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &PathSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &PathSample {
        &self.samples[self.samples.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.last().sigma - self.first().sigma
    }

    /// Same curve traversed backwards, with `sigma -> -sigma`.
    pub fn reversed(&self) -> Self {
        ReducedPath { samples: self.samples.iter().rev().map(PathSample::reversed).collect() }
    }

    pub fn mirrored(&self) -> Self {
        ReducedPath { samples: self.samples.iter().map(PathSample::mirrored).collect() }
    }

    pub fn shifted(&self, offset: f64) -> Self {
        ReducedPath { samples: self.samples.iter().map(|s| PathSample { sigma: s.sigma + offset, ..*s }).collect() }
    }

    /// `back` and `forward` both start at the same state in opposite directions;
    /// returns the full curve with `sigma` starting at 0 and the join's `sigma`.
    pub fn join(back: &ReducedPath, forward: &ReducedPath) -> (ReducedPath, f64) {
        let b = back.shifted(-back.first().sigma).reversed();
        let launch = -b.first().sigma;
        let mut samples: Vec<PathSample> = b.shifted(launch).samples;
        let f0 = forward.first().sigma;
        samples.extend(forward.samples.iter().skip(1).map(|s| PathSample { sigma: s.sigma - f0 + launch, ..*s }));
        (ReducedPath { samples }, launch)
    }

    /// Index `k` with `samples[k].sigma <= sigma <= samples[k+1].sigma`.
    pub fn segment_index(&self, sigma: f64) -> Option<usize> {
        let n = self.samples.len();
        if n < 2 || sigma < self.first().sigma || sigma > self.last().sigma {
            return None;
        }
        let k = self.samples.partition_point(|s| s.sigma <= sigma);
        Some(k.saturating_sub(1).min(n - 2))
    }

    /// Cubic Hermite position at `sigma`.
    pub fn point_at(&self, sigma: f64) -> Option<Vector3<f64>> {
        let k = self.segment_index(sigma)?;
        let (p, q) = (&self.samples[k], &self.samples[k + 1]);
        let h = q.sigma - p.sigma;
        let s = (sigma - p.sigma) / h;
        if let (Some(a), Some(b)) = (p.cusp, q.cusp) {
            if a.end == b.end {
                let tau = hermite(a.tau, a.dtau, b.tau, b.dtau, h, s);
                let phi = hermite(a.phi, a.dphi, b.phi, b.dphi, h, s);
                let c = CuspState { end: a.end, tau, phi, dtau: 0.0, dphi: 0.0 };
                return Some(c.to_extrinsic().0);
            }
        }
        let u = Vector3::from_fn(|i, _| hermite(p.point()[i], p.state.tangent[i], q.point()[i], q.state.tangent[i], h, s));
        Some(u.normalize())
    }

    pub fn max_depth(&self, end: End) -> Option<f64> {
        self.samples
            .iter()
            .filter_map(|s| s.cusp.filter(|c| c.end == end).map(|c| c.depth()))
            .max_by(f64::total_cmp)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(PATH_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let u = s.point();
            let t = s.state.tangent;
            let _ = write!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},",
                s.sigma, u[0], u[1], u[2], t[0], t[1], t[2]
            );
            match s.cusp {
                Some(c) => {
                    let _ = writeln!(out, "cusp,{},{:.16e},{:.16e}", c.end, c.depth(), c.phi.rem_euclid(2.0 * PI));
                }
                None => out.push_str("core,,,\n"),
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

struct CoreSystem;

impl OdeSystem<6> for CoreSystem {
    fn rhs(&self, _s: f64, y: &[f64; 6]) -> [f64; 6] {
        let u = Vector3::new(y[0], y[1], y[2]);
        let v = Vector3::new(y[3], y[4], y[5]);
        let g = JmFactor.gradient(&u) / (2.0 * JmFactor.value(&u));
        let uu = u.norm_squared();
        let v2 = v.norm_squared();
        // Great-circle term plus the conformal correction with grad(log sqrt(lambda)).
        let g_tan = g - u * (g.dot(&u) / uu);
        let a = -u * (v2 / uu) - v * (2.0 * g.dot(&v)) + g_tan * v2;
        [v[0], v[1], v[2], a[0], a[1], a[2]]
    }
}

struct CuspSystem(End);

impl OdeSystem<4> for CuspSystem {
    fn rhs(&self, _s: f64, y: &[f64; 4]) -> [f64; 4] {
        let m = cusp_metric(self.0, y[0], y[1]);
        let (dt, dp) = (y[2], y[3]);
        let ddt = -m.a_tau / (2.0 * m.a) * dt * dt - m.a_phi / m.a * dt * dp + m.b_tau / (2.0 * m.a) * dp * dp;
        let ddp = m.a_phi / (2.0 * m.b) * dt * dt - m.b_tau / m.b * dt * dp - m.b_phi / (2.0 * m.b) * dp * dp;
        [dt, dp, ddt, ddp]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub tol: f64,
    /// Step cap in reduced arclength (grows with depth deep in a leg).
    pub max_step: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { tol: 1e-11, max_step: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowEnd {
    Length,
    Stopped,
    StepFailure,
}

fn core_sample(sigma: f64, y: &[f64; 6]) -> PathSample {
    let u = Vector3::new(y[0], y[1], y[2]).normalize();
    let v = Vector3::new(y[3], y[4], y[5]);
    let v = v - u * u.dot(&v);
    let v = v / reduced_speed(&u, &v);
    let state = GeodesicState { point: ShapePoint::new_unchecked(u), tangent: v };
    let (end, d) = state.point.nearest_end();
    if d < CHART_GUARD {
        PathSample::from_cusp(sigma, CuspState::from_extrinsic(end, &u, &v).normalized())
    } else {
        PathSample { sigma, state, cusp: None }
    }
}

fn cusp_sample(sigma: f64, end: End, y: &[f64; 4]) -> PathSample {
    let cs = CuspState { end, tau: y[0], phi: y[1], dtau: y[2], dphi: y[3] }.normalized();
    if cs.theta() >= CHART_GUARD {
        let (u, v) = cs.to_extrinsic();
        let v = v / reduced_speed(&u, &v);
        PathSample { sigma, state: GeodesicState { point: ShapePoint::new_unchecked(u), tangent: v }, cusp: None }
    } else {
        PathSample::from_cusp(sigma, cs)
    }
}

fn cusp_step_cap(c: &CuspState, max_step: f64) -> f64 {
    let depth = c.depth();
    if depth < DEEP_DEPTH {
        return max_step;
    }
    let turn = if c.dphi == 0.0 { f64::INFINITY } else { PI / (4.0 * c.dphi.abs()) };
    turn.min(max_step + depth - DEEP_DEPTH).clamp(max_step, MAX_CUSP_STEP)
}

/// Integrates from `start` for at most `max_length`, calling `stop` on every
/// new sample; switches charts by position after each accepted step.
pub fn flow<F: FnMut(&PathSample) -> bool>(
    start: &PathSample,
    max_length: f64,
    opts: &FlowOptions,
    mut stop: F,
) -> (ReducedPath, FlowEnd) {
    let sigma_end = start.sigma + max_length;
    let mut samples = vec![*start];
    let mut current = *start;
    let mut stepper = Stepper::new(opts.tol, (opts.max_step * 0.1).min(1e-2), opts.max_step);
    stepper.h_min = 1e-12;
    let mut cusp_stepper = stepper.clone();
    let mut h = stepper.step_size();
    loop {
        if current.sigma >= sigma_end {
            return (ReducedPath { samples }, FlowEnd::Length);
        }
        let next = match current.cusp {
            None => {
                let u = current.point();
                let v = current.state.tangent;
                let y = [u[0], u[1], u[2], v[0], v[1], v[2]];
                stepper.set_step_size(h);
                let res = stepper.advance(&CoreSystem, current.sigma, &y, Some(sigma_end));
                h = stepper.step_size();
                res.map(|(s, y)| core_sample(s, &y))
            }
            Some(c) => {
                let y = [c.tau, c.phi, c.dtau, c.dphi];
                cusp_stepper.h_max = cusp_step_cap(&c, opts.max_step);
                cusp_stepper.set_step_size(h);
                let res = cusp_stepper.advance(&CuspSystem(c.end), current.sigma, &y, Some(sigma_end));
                h = cusp_stepper.step_size();
                res.map(|(s, y)| cusp_sample(s, c.end, &y))
            }
        };
        match next {
            Ok(sample) => {
                samples.push(sample);
                current = sample;
                if stop(&sample) {
                    return (ReducedPath { samples }, FlowEnd::Stopped);
                }
            }
            Err(_) => return (ReducedPath { samples }, FlowEnd::StepFailure),
        }
    }
}

/// Unit-speed geodesic of reduced length `length` from `start`.
pub fn geodesic_flow(start: &GeodesicState, length: f64, tol: f64) -> ReducedPath {
    let opts = FlowOptions { tol, ..FlowOptions::default() };
    flow(&PathSample::new(0.0, *start), length, &opts, |_| false).0
}

/// Behaviour of a path at its final end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailClass {
    Core,
    Straight(End),
    /// Tail crossings alternate between the two seams of the end; the seam is
    /// the first one crossed after entering.
    Winding(End, Seam),
}

/// Tail classification of the forward end of `path`. A winding tail needs two
/// alternating crossings inside the leg, or one crossing and the horizon depth.
pub fn classify_tail(path: &ReducedPath, horizon_depth: f64) -> TailClass {
    let Some(last) = path.last().cusp else { return TailClass::Core };
    let end = last.end;
    let entry = path
        .samples
        .iter()
        .rposition(|s| !matches!(s.cusp, Some(c) if c.end == end))
        .map_or(0, |k| k + 1);
    let tail = ReducedPath { samples: path.samples[entry..].to_vec() };
    let seams: Vec<Seam> = match crate::syzygy::crossings(&tail) {
        Ok(c) => c.iter().map(|c| c.seam).collect(),
        Err(_) => return TailClass::Core,
    };
    let alternating = seams.windows(2).all(|w| w[0] != w[1]);
    let deep = last.depth() >= horizon_depth;
    match seams.len() {
        0 if deep => TailClass::Straight(end),
        1 if deep => TailClass::Winding(end, seams[0]),
        n if n >= 2 && alternating => TailClass::Winding(end, seams[0]),
        _ => TailClass::Core,
    }
}

/// Classification of the backward and forward ends.
pub fn classify_tails(path: &ReducedPath, horizon_depth: f64) -> (TailClass, TailClass) {
    (classify_tail(&path.reversed(), horizon_depth), classify_tail(path, horizon_depth))
}
