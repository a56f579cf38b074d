//! Planar three-body dynamics with unit masses and the inverse-cube force
//! `U = sum_{j<k} |q_j - q_k|^-2`, `q_j'' = dU/dq_j`.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::{OdeSystem, StepError, Stepper};

/// Pair distances below this are treated as collisions.
pub const COLLISION_GUARD: f64 = 1e-6;

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarConfig {
    q: [Complex64; 3],
}

impl PlanarConfig {
    /// Rejects configurations with coincident bodies.
    pub fn new(q: [Complex64; 3]) -> Result<Self> {
        let config = PlanarConfig { q };
        let d = config.min_pair_distance();
        if !(d > 0.0) || q.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DegenerateConfiguration { distance: d, guard: 0.0 });
        }
        Ok(config)
    }

    pub fn from_xy(xy: [[f64; 2]; 3]) -> Result<Self> {
        Self::new(xy.map(|[x, y]| Complex64::new(x, y)))
    }

    pub(crate) fn new_unchecked(q: [Complex64; 3]) -> Self {
        PlanarConfig { q }
    }

    pub fn positions(&self) -> &[Complex64; 3] {
        &self.q
    }

    pub fn centroid(&self) -> Complex64 {
        (self.q[0] + self.q[1] + self.q[2]) / 3.0
    }

    pub fn centered(&self) -> Self {
        let c = self.centroid();
        PlanarConfig { q: self.q.map(|z| z - c) }
    }

    pub fn is_centered(&self) -> bool {
        let scale = self.q.iter().map(|z| z.norm()).fold(1.0, f64::max);
        (self.q[0] + self.q[1] + self.q[2]).norm() <= 1e-12 * scale
    }

    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        (self.q[i] - self.q[j]).norm()
    }

    pub fn min_pair_distance(&self) -> f64 {
        PAIRS
            .iter()
            .map(|&(i, j)| self.pair_distance(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Moment of inertia about the origin, `sum |q_j|^2`.
    pub fn inertia(&self) -> f64 {
        self.q.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PlanarConfig { q: self.q.map(|z| z * factor) }
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let r = Complex64::from_polar(1.0, angle);
        PlanarConfig { q: self.q.map(|z| z * r) }
    }

    pub fn translated(&self, shift: Complex64) -> Self {
        PlanarConfig { q: self.q.map(|z| z + shift) }
    }

    fn check_guard(&self) -> Result<()> {
        let d = self.min_pair_distance();
        if d < COLLISION_GUARD {
            return Err(Error::DegenerateConfiguration { distance: d, guard: COLLISION_GUARD });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarState {
    pub config: PlanarConfig,
    pub v: [Complex64; 3],
}

impl PlanarState {
    pub fn new(config: PlanarConfig, v: [Complex64; 3]) -> Self {
        PlanarState { config, v }
    }

    pub fn at_rest(config: PlanarConfig) -> Self {
        PlanarState { config, v: [Complex64::new(0.0, 0.0); 3] }
    }

    fn to_array(self) -> [f64; 12] {
        let q = self.config.q;
        let v = self.v;
        [
            q[0].re, q[0].im, q[1].re, q[1].im, q[2].re, q[2].im, v[0].re, v[0].im, v[1].re,
            v[1].im, v[2].re, v[2].im,
        ]
    }

    fn from_array(y: &[f64; 12]) -> Self {
        let c = |i: usize| Complex64::new(y[i], y[i + 1]);
        PlanarState {
            config: PlanarConfig::new_unchecked([c(0), c(2), c(4)]),
            v: [c(6), c(8), c(10)],
        }
    }
}

/// Energy, angular momentum, moment of inertia and its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants {
    pub energy: f64,
    pub angular_momentum: f64,
    pub inertia: f64,
    pub inertia_rate: f64,
}

pub fn potential(config: &PlanarConfig) -> Result<f64> {
    config.check_guard()?;
    Ok(potential_unchecked(&config.q))
}

fn potential_unchecked(q: &[Complex64; 3]) -> f64 {
    PAIRS.iter().map(|&(i, j)| 1.0 / (q[i] - q[j]).norm_sqr()).sum()
}

/// Real gradient of `U` for each body, packaged as `dU/dx_j + i dU/dy_j`.
pub fn acceleration(config: &PlanarConfig) -> Result<[Complex64; 3]> {
    config.check_guard()?;
    Ok(acceleration_unchecked(&config.q))
}

fn acceleration_unchecked(q: &[Complex64; 3]) -> [Complex64; 3] {
    let mut a = [0.0f64; 6];
    for &(i, j) in &PAIRS {
        let dx = q[i].re - q[j].re;
        let dy = q[i].im - q[j].im;
        let r2 = dx * dx + dy * dy;
        // d/dx_i of 1/r^2 = -2 dx / r^4
        let f = -2.0 / (r2 * r2);
        a[2 * i] += f * dx;
        a[2 * i + 1] += f * dy;
        a[2 * j] -= f * dx;
        a[2 * j + 1] -= f * dy;
    }
    [
        Complex64::new(a[0], a[1]),
        Complex64::new(a[2], a[3]),
        Complex64::new(a[4], a[5]),
    ]
}

pub fn invariants(state: &PlanarState) -> Result<Invariants> {
    let u = potential(&state.config)?;
    let q = &state.config.q;
    let v = &state.v;
    let kinetic: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / 2.0;
    let angular_momentum = (0..3).map(|j| (q[j].conj() * v[j]).im).sum();
    let inertia_rate = 2.0 * (0..3).map(|j| (q[j].conj() * v[j]).re).sum::<f64>();
    Ok(Invariants {
        energy: kinetic - u,
        angular_momentum,
        inertia: state.config.inertia(),
        inertia_rate,
    })
}

/// Second derivative of `I` along the flow, from the equations of motion.
pub fn inertia_acceleration(state: &PlanarState) -> Result<f64> {
    let a = acceleration(&state.config)?;
    let q = &state.config.q;
    let v2: f64 = state.v.iter().map(|z| z.norm_sqr()).sum();
    let qa: f64 = (0..3).map(|j| (q[j].conj() * a[j]).re).sum();
    Ok(2.0 * v2 + 2.0 * qa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Completed,
    /// A pair distance dropped below the collision guard.
    CollisionApproach,
    /// The step size underflowed before reaching `t_end`.
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationStats {
    pub tol: f64,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, PlanarState)>,
    pub status: TrajectoryStatus,
    pub stats: IntegrationStats,
}

struct InverseCube;

impl OdeSystem<12> for InverseCube {
    fn rhs(&self, _t: f64, y: &[f64; 12]) -> [f64; 12] {
        let s = PlanarState::from_array(y);
        let a = acceleration_unchecked(&s.config.q);
        [
            y[6], y[7], y[8], y[9], y[10], y[11], a[0].re, a[0].im, a[1].re, a[1].im, a[2].re,
            a[2].im,
        ]
    }
}

/// Adaptive integration of the equations of motion from `state` to `t_end`.
///
/// Runs that come within the collision guard stop early with
/// [`TrajectoryStatus::CollisionApproach`]; the partial trajectory is kept.
pub fn integrate(state: &PlanarState, t_end: f64, tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    state.config.check_guard()?;

    let mut stepper = Stepper::new(tol, 1e-3 * t_end.min(1.0), t_end);
    let mut t = 0.0;
    let mut y = state.to_array();
    let mut samples = vec![(0.0, *state)];
    let mut status = TrajectoryStatus::Completed;

    while t < t_end {
        match stepper.advance(&InverseCube, t, &y, Some(t_end)) {
            Ok((tn, yn)) => {
                t = tn;
                y = yn;
                let s = PlanarState::from_array(&y);
                samples.push((t, s));
                if s.config.min_pair_distance() < COLLISION_GUARD {
                    status = TrajectoryStatus::CollisionApproach;
                    break;
                }
            }
            Err(StepError::Underflow { .. }) | Err(StepError::NonFinite { .. }) => {
                status = TrajectoryStatus::StepUnderflow;
                break;
            }
        }
    }

    Ok(Trajectory {
        samples,
        status,
        stats: IntegrationStats { tol, accepted: stepper.accepted, rejected: stepper.rejected },
    })
}

/// Max over samples of `|I'' - 4E|`, with `I''` evaluated from the vector field.
pub fn lagrange_jacobi_residual(traj: &Trajectory) -> Result<f64> {
    if traj.samples.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 samples".into()));
    }
    let mut worst = 0.0f64;
    for (_, s) in &traj.samples {
        let e = invariants(s)?.energy;
        worst = worst.max((inertia_acceleration(s)? - 4.0 * e).abs());
    }
    Ok(worst)
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,x1,y1,x2,y2,x3,y3,vx1,vy1,vx2,vy2,vx3,vy3,E,C,I";

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(t, _)| *t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 300);
        out.push_str(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for (t, s) in &self.samples {
            let (e, c, i) = match invariants(s) {
                Ok(inv) => (inv.energy, inv.angular_momentum, inv.inertia),
                Err(_) => (f64::NAN, f64::NAN, s.config.inertia()),
            };
            let mut fields = vec![*t];
            fields.extend_from_slice(&s.to_array());
            fields.extend_from_slice(&[e, c, i]);
            let row: Vec<String> = fields.iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV written by [`Trajectory::to_csv`]; the derived columns are ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty trajectory file".into()))?;
        if header.trim() != TRAJECTORY_CSV_HEADER {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", n + 1)))?;
            if vals.len() != 16 {
                return Err(Error::Parse(format!("row {}: expected 16 fields", n + 1)));
            }
            let mut y = [0.0; 12];
            y.copy_from_slice(&vals[1..13]);
            let state = PlanarState::from_array(&y);
            PlanarConfig::new(state.config.q)?;
            if let Some((t_prev, _)) = samples.last() {
                if vals[0] <= *t_prev {
                    return Err(Error::Parse(format!("row {}: times must increase", n + 1)));
                }
            }
            samples.push((vals[0], state));
        }
        Ok(Trajectory {
            samples,
            status: TrajectoryStatus::Completed,
            stats: IntegrationStats { tol: f64::NAN, accepted: 0, rejected: 0 },
        })
    }
}
