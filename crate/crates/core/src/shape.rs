//! Reduction of centered planar configurations to the shape sphere.
//!
//! Centered configurations are identified with `C^2` through equal-mass
//! Jacobi coordinates, and the quotient by rotations and scalings is the Hopf
//! map onto the unit sphere. The reduced zero-energy Jacobi–Maupertuis metric
//! is `lambda * g`, where `g` is the round metric of radius 1/2 and
//! `lambda = I * U` evaluated on any representative.
//!
//! With `I = 1` the squared pair distances are `r_ij^2 = 1 - u . B_ij`, which
//! gives the closed form `lambda(u) = sum_ij 1 / (1 - u . B_ij)` used here.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{potential, PlanarConfig};
use crate::error::{Error, Result};

/// Angular distance to a collision point below which direct metric
/// evaluation is refused.
pub const METRIC_GUARD: f64 = 1e-3;

/// Gaussian curvature of the round sphere of radius 1/2.
pub const ROUND_CURVATURE: f64 = 4.0;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// A binary-collision point of the shape sphere, i.e. an end of the pants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum End {
    B12,
    B13,
    B23,
}

/// A collinear arc of the equator, labelled by the body in the middle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Seam {
    One,
    Two,
    Three,
}

impl End {
    pub const ALL: [End; 3] = [End::B12, End::B13, End::B23];

    /// Longitude of the collision point on the equator.
    pub fn longitude(self) -> f64 {
        match self {
            End::B12 => PI,
            End::B13 => -PI / 3.0,
            End::B23 => PI / 3.0,
        }
    }

    pub fn position(self) -> Vector3<f64> {
        match self {
            End::B12 => Vector3::new(-1.0, 0.0, 0.0),
            End::B13 => Vector3::new(0.5, -SQRT3 / 2.0, 0.0),
            End::B23 => Vector3::new(0.5, SQRT3 / 2.0, 0.0),
        }
    }

    /// Zero-based indices of the colliding bodies.
    pub fn bodies(self) -> (usize, usize) {
        match self {
            End::B12 => (0, 1),
            End::B13 => (0, 2),
            End::B23 => (1, 2),
        }
    }

    /// The two seams ending at this collision point, smaller label first.
    pub fn seams(self) -> [Seam; 2] {
        match self {
            End::B12 => [Seam::One, Seam::Two],
            End::B13 => [Seam::One, Seam::Three],
            End::B23 => [Seam::Two, Seam::Three],
        }
    }

    pub fn is_adjacent(self, seam: Seam) -> bool {
        self.seams().contains(&seam)
    }

    /// The seam not touching this end.
    pub fn opposite_seam(self) -> Seam {
        match self {
            End::B12 => Seam::Three,
            End::B13 => Seam::Two,
            End::B23 => Seam::One,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            End::B12 => "B12",
            End::B13 => "B13",
            End::B23 => "B23",
        }
    }

    pub fn from_label(s: &str) -> Option<End> {
        End::ALL.into_iter().find(|e| e.label() == s)
    }

    /// Orthonormal frame `(b, e1, e2)` at the collision point: `e1` points
    /// along the equator toward the smaller-labelled adjacent seam and `e2`
    /// is the north direction.
    pub fn frame(self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let b = self.position();
        let m = self.seams()[0].midpoint();
        let e1 = (m - b * m.dot(&b)).normalize();
        (b, e1, Vector3::z())
    }

    /// Angular distance from `u` (a unit vector) to this collision point.
    pub fn angular_distance(self, u: &Vector3<f64>) -> f64 {
        2.0 * ((u - self.position()).norm() / 2.0).min(1.0).asin()
    }
}

impl fmt::Display for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Seam {
    pub const ALL: [Seam; 3] = [Seam::One, Seam::Two, Seam::Three];

    pub fn label(self) -> u8 {
        match self {
            Seam::One => 1,
            Seam::Two => 2,
            Seam::Three => 3,
        }
    }

    pub fn from_label(label: u8) -> Option<Seam> {
        match label {
            1 => Some(Seam::One),
            2 => Some(Seam::Two),
            3 => Some(Seam::Three),
            _ => None,
        }
    }

    /// Collision points bounding the seam.
    pub fn ends(self) -> [End; 2] {
        match self {
            Seam::One => [End::B12, End::B13],
            Seam::Two => [End::B12, End::B23],
            Seam::Three => [End::B13, End::B23],
        }
    }

    /// The end not touching this seam.
    pub fn opposite_end(self) -> End {
        match self {
            Seam::One => End::B23,
            Seam::Two => End::B13,
            Seam::Three => End::B12,
        }
    }

    pub fn midpoint(self) -> Vector3<f64> {
        let a = match self {
            Seam::One => 4.0 * PI / 3.0,
            Seam::Two => 2.0 * PI / 3.0,
            Seam::Three => 0.0,
        };
        Vector3::new(a.cos(), a.sin(), 0.0)
    }

    /// Seam containing the equator point at longitude `angle`, or `None`
    /// exactly at a collision point.
    pub fn at_longitude(angle: f64) -> Option<Seam> {
        // Shift so seam 3 occupies (0, 2pi/3), seam 2 (2pi/3, 4pi/3), seam 1 the rest.
        let a = (angle + PI / 3.0).rem_euclid(2.0 * PI);
        let sector = 2.0 * PI / 3.0;
        if a == 0.0 || a == sector || a == 2.0 * sector {
            None
        } else if a < sector {
            Some(Seam::Three)
        } else if a < 2.0 * sector {
            Some(Seam::Two)
        } else {
            Some(Seam::One)
        }
    }
}

impl fmt::Display for Seam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Collision points and the seams joining them.
#[derive(Debug, Clone, PartialEq)]
pub struct PantsLabeling {
    pub ends: [(End, Vector3<f64>); 3],
    pub seams: [(Seam, End, End); 3],
}

pub fn collision_points_and_arcs() -> PantsLabeling {
    PantsLabeling {
        ends: End::ALL.map(|e| (e, e.position())),
        seams: Seam::ALL.map(|s| {
            let [a, b] = s.ends();
            (s, a, b)
        }),
    }
}

/// Point of the shape sphere away from the three collision points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapePoint(Vector3<f64>);

impl ShapePoint {
    /// Normalizes `v`; fails on the zero vector or exactly at a collision point.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput("shape point must be a nonzero vector".into()));
        }
        let u = v / n;
        for e in End::ALL {
            if e.angular_distance(&u) == 0.0 {
                return Err(Error::CuspGuard { end: e.label().into(), distance: 0.0 });
            }
        }
        Ok(ShapePoint(u))
    }

    pub(crate) fn new_unchecked(u: Vector3<f64>) -> Self {
        ShapePoint(u)
    }

    pub fn from_angles(theta: f64, phi: f64) -> Result<Self> {
        Self::new(Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn u3(&self) -> f64 {
        self.0[2]
    }

    pub fn mirrored(&self) -> Self {
        ShapePoint(Vector3::new(self.0[0], self.0[1], -self.0[2]))
    }

    /// Nearest collision point and its angular distance.
    pub fn nearest_end(&self) -> (End, f64) {
        End::ALL
            .into_iter()
            .map(|e| (e, e.angular_distance(&self.0)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    pub fn is_collinear(&self) -> bool {
        self.0[2] == 0.0
    }
}

/// Equal-mass Jacobi coordinates of a centered configuration:
/// `z1 = (q1 - q2)/sqrt 2`, `z2 = (q1 + q2 - 2 q3)/sqrt 6`.
pub fn jacobi_coords(config: &PlanarConfig) -> Result<[Complex64; 2]> {
    if !config.is_centered() {
        return Err(Error::NotCentered { offset: (config.centroid() * 3.0).norm() });
    }
    Ok(jacobi_unchecked(config.positions()))
}

fn jacobi_unchecked(q: &[Complex64; 3]) -> [Complex64; 2] {
    [(q[0] - q[1]) / SQRT2, (q[0] + q[1] - q[2] * 2.0) / 6f64.sqrt()]
}

/// Inverse of [`jacobi_coords`] onto centered configurations.
pub fn from_jacobi(z: [Complex64; 2]) -> [Complex64; 3] {
    let a = z[0] / SQRT2;
    let b = z[1] / 6f64.sqrt();
    [a + b, -a + b, b * -2.0]
}

fn tangent_from_jacobi(w: [Complex64; 2]) -> [Complex64; 3] {
    from_jacobi(w)
}

/// Unnormalized Hopf map `(|z1|^2 - |z2|^2, 2 Re z1 conj(z2), 2 Im z1 conj(z2))`.
fn hopf(z: &[Complex64; 2]) -> Vector3<f64> {
    let p = z[0] * z[1].conj();
    Vector3::new(z[0].norm_sqr() - z[1].norm_sqr(), 2.0 * p.re, 2.0 * p.im)
}

/// Differential of [`hopf`] at `z` applied to `dz`.
fn hopf_differential(z: &[Complex64; 2], dz: &[Complex64; 2]) -> Vector3<f64> {
    let s1 = z[0].conj() * dz[0] - z[1].conj() * dz[1];
    let s2 = z[0].conj() * dz[1] + z[1].conj() * dz[0];
    let s3 = Complex64::i() * (z[0].conj() * dz[1] - z[1].conj() * dz[0]);
    Vector3::new(2.0 * s1.re, 2.0 * s2.re, 2.0 * s3.re)
}

/// Shape of a centered configuration; invariant under rotation and scaling.
pub fn shape_map(config: &PlanarConfig) -> Result<ShapePoint> {
    let z = jacobi_coords(config)?;
    let i = z[0].norm_sqr() + z[1].norm_sqr();
    ShapePoint::new(hopf(&z) / i)
}

/// Differential of [`shape_map`] at a centered configuration.
pub fn shape_differential(config: &PlanarConfig, w: &[Complex64; 3]) -> Result<Vector3<f64>> {
    let z = jacobi_coords(config)?;
    let dz = jacobi_unchecked(w);
    let i = z[0].norm_sqr() + z[1].norm_sqr();
    let di = 2.0 * (z[0].conj() * dz[0] + z[1].conj() * dz[1]).re;
    Ok((hopf_differential(&z, &dz) * i - hopf(&z) * di) / (i * i))
}

/// Phase convention for a local section of the Hopf fibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    /// `z1` real and nonnegative; singular only at B12.
    Z1Real,
    /// `z2` real and nonnegative; singular only at (1, 0, 0).
    Z2Real,
}

impl Section {
    pub fn preferred(u: &Vector3<f64>) -> Section {
        if u[0] > -0.4 {
            Section::Z1Real
        } else {
            Section::Z2Real
        }
    }
}

/// Unit-norm point of `C^2` over `u` in the given section.
pub fn section(u: &Vector3<f64>, which: Section) -> [Complex64; 2] {
    match which {
        Section::Z1Real => {
            let a = ((1.0 + u[0]) / 2.0).sqrt();
            let z2 = Complex64::new(u[1], -u[2]) / (2.0 * a);
            [Complex64::new(a, 0.0), z2]
        }
        Section::Z2Real => {
            let b = ((1.0 - u[0]) / 2.0).sqrt();
            let z1 = Complex64::new(u[1], u[2]) / (2.0 * b);
            [z1, Complex64::new(b, 0.0)]
        }
    }
}

/// Rate of the horizontal fiber phase along a curve with velocity `du` in
/// the given section, so that `exp(i psi) section(u)` is horizontal.
pub fn section_phase_rate(u: &Vector3<f64>, du: &Vector3<f64>, which: Section) -> f64 {
    let twist = u[1] * du[2] - u[2] * du[1];
    match which {
        Section::Z1Real => twist / (2.0 * (1.0 + u[0])),
        Section::Z2Real => -twist / (2.0 * (1.0 - u[0])),
    }
}

/// Horizontal vector at unit-norm `z` projecting to the tangent vector `x`.
pub fn horizontal_lift_vector(z: &[Complex64; 2], x: &Vector3<f64>) -> [Complex64; 2] {
    let i = Complex64::i();
    let w1 = z[0] * x[0] + z[1] * x[1] + i * z[1] * x[2];
    let w2 = -z[1] * x[0] + z[0] * x[1] - i * z[0] * x[2];
    [w1 * 0.5, w2 * 0.5]
}

/// Centered configuration with `I = 1` for jacobi vector `z` (unit norm).
pub fn config_from_jacobi(z: [Complex64; 2]) -> PlanarConfig {
    PlanarConfig::new_unchecked(from_jacobi(z))
}

/// Velocity in the plane for a Jacobi-space tangent vector.
pub fn velocity_from_jacobi(w: [Complex64; 2]) -> [Complex64; 3] {
    tangent_from_jacobi(w)
}

/// A centered representative with `I = 1` of the shape `u`.
pub fn representative(u: &ShapePoint) -> PlanarConfig {
    let v = u.as_vector();
    config_from_jacobi(section(v, Section::preferred(v)))
}

/// A conformal factor on the sphere, extended to a neighbourhood in `R^3`.
pub trait ConformalFactor {
    fn value(&self, x: &Vector3<f64>) -> f64;
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64>;
    fn hessian(&self, x: &Vector3<f64>) -> Matrix3<f64>;
}

/// `lambda = I U` for the equal-mass inverse-cube problem.
#[derive(Debug, Clone, Copy, Default)]
pub struct JmFactor;

impl ConformalFactor for JmFactor {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        End::ALL.iter().map(|e| 1.0 / (1.0 - x.dot(&e.position()))).sum()
    }

    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        End::ALL.iter().fold(Vector3::zeros(), |acc, e| {
            let b = e.position();
            let d = 1.0 - x.dot(&b);
            acc + b / (d * d)
        })
    }

    fn hessian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        End::ALL.iter().fold(Matrix3::zeros(), |acc, e| {
            let b = e.position();
            let d = 1.0 - x.dot(&b);
            acc + b * b.transpose() * (2.0 / (d * d * d))
        })
    }
}

/// The constant factor 1, i.e. the round sphere of radius 1/2.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitFactor;

impl ConformalFactor for UnitFactor {
    fn value(&self, _x: &Vector3<f64>) -> f64 {
        1.0
    }
    fn gradient(&self, _x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }
    fn hessian(&self, _x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

/// Conformal factor with first and second derivatives of `log lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricData {
    pub lambda: f64,
    /// Gradient of `log lambda` (unit-sphere metric) in the frame of [`tangent_frame`].
    pub grad_log_lambda: [f64; 2],
    pub grad_log_lambda_ambient: Vector3<f64>,
    /// Laplace–Beltrami of `log lambda` for the round metric of radius 1/2.
    pub laplacian_log_lambda: f64,
}

/// Orthonormal tangent frame at `u`: `f1 = normalize(a x u)` with `a = z`
/// (or `x` near the poles) and `f2 = u x f1`.
pub fn tangent_frame(u: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if u[2].abs() > 0.9 { Vector3::x() } else { Vector3::z() };
    let f1 = a.cross(u).normalize();
    (f1, u.cross(&f1))
}

pub fn metric_data_with<F: ConformalFactor>(factor: &F, u: &ShapePoint) -> MetricData {
    let x = u.as_vector();
    let lam = factor.value(x);
    let g = factor.gradient(x);
    let h = factor.hessian(x);
    let gl = g / lam;
    let hl = h / lam - gl * gl.transpose();
    // Laplace–Beltrami on the unit sphere: tr H - u'Hu - 2 u.grad.
    let lap_unit = hl.trace() - (x.transpose() * hl * x)[(0, 0)] - 2.0 * x.dot(&gl);
    let tangential = gl - x * x.dot(&gl);
    let (f1, f2) = tangent_frame(x);
    MetricData {
        lambda: lam,
        grad_log_lambda: [tangential.dot(&f1), tangential.dot(&f2)],
        grad_log_lambda_ambient: tangential,
        laplacian_log_lambda: 4.0 * lap_unit,
    }
}

fn check_metric_guard(u: &ShapePoint) -> Result<()> {
    let (end, d) = u.nearest_end();
    if d <= METRIC_GUARD {
        return Err(Error::CuspGuard { end: end.label().into(), distance: d });
    }
    Ok(())
}

/// Reduced metric data at `u`, refused within [`METRIC_GUARD`] of a collision.
pub fn conformal_factor(u: &ShapePoint) -> Result<MetricData> {
    check_metric_guard(u)?;
    Ok(metric_data_with(&JmFactor, u))
}

/// `I * U` of a configuration; equals the conformal factor at its shape.
pub fn lambda_from_config(config: &PlanarConfig) -> Result<f64> {
    Ok(config.centered().inertia() * potential(config)?)
}

/// Gaussian curvature of `lambda * g` (g round of radius 1/2):
/// `K = (K0 - Delta0 log(lambda) / 2) / lambda`.
pub fn curvature_with<F: ConformalFactor>(factor: &F, u: &ShapePoint) -> f64 {
    let m = metric_data_with(factor, u);
    (ROUND_CURVATURE - 0.5 * m.laplacian_log_lambda) / m.lambda
}

pub fn curvature(u: &ShapePoint) -> Result<f64> {
    check_metric_guard(u)?;
    Ok(curvature_with(&JmFactor, u))
}

/// Compares the upstairs JM norm `U |w|^2` of a horizontal vector with the
/// reduced norm of its pushforward; returns the relative discrepancy.
pub fn submersion_check(config: &PlanarConfig, w: &[Complex64; 3]) -> Result<f64> {
    if !config.is_centered() {
        return Err(Error::NotCentered { offset: (config.centroid() * 3.0).norm() });
    }
    let q = config.positions();
    let w_norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(w_norm > 0.0) {
        return Err(Error::InvalidInput("zero tangent vector".into()));
    }
    let q_norm = config.inertia().sqrt();
    let along_scale: f64 = (0..3).map(|j| (w[j] * q[j].conj()).re).sum::<f64>() / q_norm;
    let along_rot: f64 = (0..3).map(|j| (w[j] * (Complex64::i() * q[j]).conj()).re).sum::<f64>() / q_norm;
    let drift = (w[0] + w[1] + w[2]).norm() / 3f64.sqrt();
    let residual = (along_scale.powi(2) + along_rot.powi(2) + drift.powi(2)).sqrt() / w_norm;
    if residual > 1e-10 {
        return Err(Error::NotHorizontal { residual });
    }
    let upstairs = potential(config)? * w_norm * w_norm;
    let u = shape_map(config)?;
    let du = shape_differential(config, w)?;
    let reduced = JmFactor.value(u.as_vector()) * du.norm_squared() / 4.0;
    Ok((upstairs - reduced).abs() / upstairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureRow {
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
    pub k: f64,
}

/// Cell-centered `(theta, phi)` grid, skipping points within `exclusion`
/// (angular) of a collision point.
pub fn curvature_grid(n_theta: usize, n_phi: usize, exclusion: f64) -> Vec<CurvatureRow> {
    let exclusion = exclusion.max(METRIC_GUARD * 1.000_001);
    let mut rows = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = (i as f64 + 0.5) * PI / n_theta as f64;
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * 2.0 * PI / n_phi as f64;
            let Ok(u) = ShapePoint::from_angles(theta, phi) else { continue };
            if u.nearest_end().1 < exclusion {
                continue;
            }
            let m = metric_data_with(&JmFactor, &u);
            rows.push(CurvatureRow {
                theta,
                phi,
                lambda: m.lambda,
                k: (ROUND_CURVATURE - 0.5 * m.laplacian_log_lambda) / m.lambda,
            });
        }
    }
    rows
}

pub fn curvature_csv(rows: &[CurvatureRow]) -> String {
    let mut out = String::from("theta,phi,lambda,K\n");
    for r in rows {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", r.theta, r.phi, r.lambda, r.k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_centered(rng: &mut ChaCha8Rng) -> PlanarConfig {
        loop {
            let q = [0; 3].map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let cfg = PlanarConfig::new_unchecked(q).centered();
            if cfg.min_pair_distance() > 0.05 {
                return cfg;
            }
        }
    }

    fn equilateral(orientation: f64) -> PlanarConfig {
        let r = 1.0 / 3f64.sqrt();
        PlanarConfig::new([1, 2, 3].map(|j| Complex64::from_polar(r, orientation * 2.0 * PI * j as f64 / 3.0)))
            .unwrap()
    }

    #[test]
    fn jacobi_examples() {
        let cfg = PlanarConfig::from_xy([[1.0, 0.5], [1.0, 0.5], [-2.0, -1.0]]);
        // Coincident bodies are not a valid configuration; check the formula directly.
        assert!(cfg.is_err());
        let z = jacobi_unchecked(&[c(1.0, 0.5), c(1.0, 0.5), c(-2.0, -1.0)]);
        assert_eq!(z[0], c(0.0, 0.0));

        let eq = equilateral(1.0);
        let z = jacobi_coords(&eq).unwrap();
        assert!((z[0].norm_sqr() + z[1].norm_sqr() - eq.inertia()).abs() < 1e-14);
        assert!((eq.inertia() - 1.0).abs() < 1e-14);

        let rot = Complex64::from_polar(1.0, 0.7);
        let zr = jacobi_coords(&eq.rotated(0.7)).unwrap();
        assert!((zr[0] - z[0] * rot).norm() < 1e-14 && (zr[1] - z[1] * rot).norm() < 1e-14);

        let off = PlanarConfig::from_xy([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(jacobi_coords(&off), Err(Error::NotCentered { .. })));
    }

    #[test]
    fn jacobi_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let cfg = random_centered(&mut rng);
            let z = jacobi_coords(&cfg).unwrap();
            assert!((z[0].norm_sqr() + z[1].norm_sqr() - cfg.inertia()).abs() < 1e-13);
            let back = from_jacobi(z);
            for j in 0..3 {
                assert!((back[j] - cfg.positions()[j]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn collision_points_are_shape_limits() {
        let eps = 1e-7;
        for (end, q) in [
            (End::B12, [c(1.0, 0.3), c(1.0 + eps, 0.3), c(-2.0 - eps, -0.6)]),
            (End::B13, [c(0.4, 1.0), c(-0.8 - eps, -2.0), c(0.4 + eps, 1.0)]),
            (End::B23, [c(-2.0 - eps, 0.2), c(1.0, -0.1), c(1.0 + eps, -0.1)]),
        ] {
            let cfg = PlanarConfig::new(q).unwrap().centered();
            let u = shape_map(&cfg).unwrap();
            assert!(end.angular_distance(u.as_vector()) < 1e-6, "{end}");
        }
        assert_eq!(End::B12.position(), Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn collinear_configs_map_to_equator() {
        let cfg = PlanarConfig::from_xy([[-1.3, 0.0], [0.2, 0.0], [1.1, 0.0]]).unwrap().centered();
        assert_eq!(shape_map(&cfg).unwrap().u3(), 0.0);
    }

    #[test]
    fn equilateral_maps_to_poles() {
        // Explicit arithmetic: q_j = exp(2 pi i j / 3) / sqrt 3 gives
        // z1 = i/sqrt 2, z2 = -1/sqrt 2, z1 conj(z2) = -i/2, so u = (0, 0, -1).
        let z1 = c(0.0, 1.0) / SQRT2;
        let z2 = c(-1.0, 0.0) / SQRT2;
        let expected = hopf(&[z1, z2]);
        assert!((expected - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);

        let ccw = shape_map(&equilateral(1.0)).unwrap();
        assert!((ccw.as_vector() - expected).norm() < 1e-12);
        let cw = shape_map(&equilateral(-1.0)).unwrap();
        assert!((cw.as_vector() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn shape_map_quotients_rotation_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = random_centered(&mut rng);
        let u = shape_map(&cfg).unwrap();
        for _ in 0..100 {
            let s = rng.gen_range(0.1..10.0);
            let th = rng.gen_range(0.0..2.0 * PI);
            let v = shape_map(&cfg.scaled(s).rotated(th)).unwrap();
            assert!((v.as_vector() - u.as_vector()).norm() < 1e-10);
            assert!((v.as_vector().norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn middle_body_labels_the_arc() {
        // Body 1 in the middle: q2 < q1 < q3 on the real line.
        let slide = |gap: f64| {
            PlanarConfig::from_xy([[0.0, 0.0], [-1.0 + gap, 0.0], [1.0 - gap, 0.0]])
                .unwrap()
                .centered()
        };
        let u = shape_map(&slide(0.3)).unwrap();
        let lon = u.as_vector()[1].atan2(u.as_vector()[0]);
        assert_eq!(Seam::at_longitude(lon), Some(Seam::One));
        // Sliding an outer body onto body 1 approaches an end of seam 1.
        let near = shape_map(
            &PlanarConfig::from_xy([[0.0, 0.0], [-1e-6, 0.0], [1.0, 0.0]]).unwrap().centered(),
        )
        .unwrap();
        assert!(End::B12.angular_distance(near.as_vector()) < 1e-5);
        let near = shape_map(
            &PlanarConfig::from_xy([[0.0, 0.0], [-1.0, 0.0], [1e-6, 0.0]]).unwrap().centered(),
        )
        .unwrap();
        assert!(End::B13.angular_distance(near.as_vector()) < 1e-5);

        for (seam, order) in [(Seam::Two, [0usize, 1, 2]), (Seam::Three, [0, 2, 1])] {
            // order lists zero-based bodies left to right; the middle one labels the arc.
            let mut xy = [[0.0, 0.0]; 3];
            for (pos, &body) in order.iter().enumerate() {
                xy[body] = [pos as f64 - 1.0 + 0.1 * body as f64, 0.0];
            }
            let u = shape_map(&PlanarConfig::from_xy(xy).unwrap().centered()).unwrap();
            let lon = u.as_vector()[1].atan2(u.as_vector()[0]);
            assert_eq!(Seam::at_longitude(lon), Some(seam));
        }
    }

    #[test]
    fn arc_labeling_is_consistent() {
        let labels = collision_points_and_arcs();
        for (seam, a, b) in labels.seams {
            assert!(a.is_adjacent(seam) && b.is_adjacent(seam));
            assert!(!seam.opposite_end().is_adjacent(seam));
            // The midpoint is interior to the arc: strictly between its ends.
            let m = seam.midpoint();
            assert!(a.angular_distance(&m) < 2.0 * PI / 3.0 + 1e-12);
            let lon = m[1].atan2(m[0]);
            assert_eq!(Seam::at_longitude(lon), Some(seam));
        }
        for end in End::ALL {
            let [s, t] = end.seams();
            assert!(s != t);
            assert_eq!(end.opposite_seam().opposite_end(), end);
            assert_eq!(Seam::at_longitude(end.longitude()), None);
            let (b, e1, e2) = end.frame();
            assert!(b.dot(&e1).abs() < 1e-15 && e1.norm() - 1.0 < 1e-15 && e2 == Vector3::z());
        }
        // Pairwise disjoint: each longitude belongs to exactly one arc.
        for k in 0..360 {
            let lon = (k as f64 + 0.5).to_radians();
            assert!(Seam::at_longitude(lon).is_some());
        }
    }

    #[test]
    fn lambda_examples() {
        let pole = ShapePoint::new(Vector3::z()).unwrap();
        let m = conformal_factor(&pole).unwrap();
        // Oracle: I * U on the I = 1 equilateral.
        let eq = equilateral(1.0);
        assert!((m.lambda - eq.inertia() * potential(&eq).unwrap()).abs() < 1e-13);
        assert!((m.lambda - 3.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let cfg = random_centered(&mut rng);
            let u = shape_map(&cfg).unwrap();
            let a = JmFactor.value(u.as_vector());
            let b = lambda_from_config(&cfg).unwrap();
            let c2 = lambda_from_config(&cfg.scaled(3.7).rotated(1.1)).unwrap();
            assert!((a - b).abs() < 1e-10 * b && (b - c2).abs() < 1e-10 * b);
            assert!((a - JmFactor.value(u.mirrored().as_vector())).abs() < 1e-12 * a);
            // 3-fold relabeling: rotation of the equator by 120 degrees.
            let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * PI / 3.0);
            assert!((a - JmFactor.value(&(r * u.as_vector()))).abs() < 1e-10 * a);
        }

        let mut prev = 0.0;
        for k in 1..8 {
            let d = 10f64.powi(-k);
            let u = ShapePoint::new(Vector3::new(-d.cos(), d.sin(), 0.0)).unwrap();
            let lam = JmFactor.value(u.as_vector());
            assert!(lam > prev);
            prev = lam;
        }
        let close = ShapePoint::new(Vector3::new(-1.0, 1e-4, 0.0)).unwrap();
        assert!(matches!(conformal_factor(&close), Err(Error::CuspGuard { .. })));
    }

    /// Laplace–Beltrami of `log lambda` on the unit sphere from a fourth-order
    /// stencil in gnomonic coordinates at `u` (Christoffels vanish there).
    fn fd_laplacian_unit(u: &Vector3<f64>, h: f64) -> f64 {
        let (f1, f2) = tangent_frame(u);
        let f = |x: f64, y: f64| JmFactor.value(&(u + f1 * x + f2 * y).normalize()).ln();
        let d2 = |g: &dyn Fn(f64) -> f64| {
            (-g(2.0 * h) + 16.0 * g(h) - 30.0 * g(0.0) + 16.0 * g(-h) - g(-2.0 * h)) / (12.0 * h * h)
        };
        d2(&|s| f(s, 0.0)) + d2(&|s| f(0.0, s))
    }

    #[test]
    fn curvature_matches_stencil_oracle() {
        let pole = ShapePoint::new(Vector3::z()).unwrap();
        let k_pole = curvature(&pole).unwrap();
        let oracle_lap = fd_laplacian_unit(pole.as_vector(), 1e-3);
        let k_oracle = (4.0 - 2.0 * oracle_lap) / 3.0;
        assert!((k_pole - k_oracle).abs() < 1e-4);
        assert!(k_pole.abs() < 1e-12, "curvature vanishes at the Lagrange shape: {k_pole}");

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let u = ShapePoint::from_angles(rng.gen_range(0.2..2.9), rng.gen_range(0.0..2.0 * PI)).unwrap();
            if u.nearest_end().1 < 0.2 {
                continue;
            }
            let m = metric_data_with(&JmFactor, &u);
            let k = curvature(&u).unwrap();
            let k_fd = (4.0 - 2.0 * fd_laplacian_unit(u.as_vector(), 1e-3)) / m.lambda;
            assert!((k - k_fd).abs() <= 1e-4 * k.abs().max(1e-3), "{k} vs {k_fd}");
            assert!(k < 0.0);
        }
    }

    #[test]
    fn unit_factor_is_round_sphere() {
        for (t, p) in [(0.3, 0.2), (1.5, 4.0), (2.9, 1.0)] {
            let u = ShapePoint::from_angles(t, p).unwrap();
            assert!((curvature_with(&UnitFactor, &u) - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_is_even_and_symmetric() {
        let u = ShapePoint::from_angles(0.8, 2.2).unwrap();
        let a = curvature(&u).unwrap();
        assert!((a - curvature(&u.mirrored()).unwrap()).abs() < 1e-13);
        let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * PI / 3.0);
        let v = ShapePoint::new(r * u.as_vector()).unwrap();
        assert!((a - curvature(&v).unwrap()).abs() < 1e-12);
    }

    fn random_horizontal(rng: &mut ChaCha8Rng, cfg: &PlanarConfig) -> [Complex64; 3] {
        let q = cfg.positions();
        let mut w = [0; 3].map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mean = (w[0] + w[1] + w[2]) / 3.0;
        w = w.map(|z| z - mean);
        let norm2 = cfg.inertia();
        for dir in [[q[0], q[1], q[2]], [q[0] * Complex64::i(), q[1] * Complex64::i(), q[2] * Complex64::i()]] {
            let coef: f64 = (0..3).map(|j| (w[j] * dir[j].conj()).re).sum::<f64>() / norm2;
            for j in 0..3 {
                w[j] -= dir[j] * coef;
            }
        }
        w
    }

    #[test]
    fn submersion_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let cfg = random_centered(&mut rng);
            let w = random_horizontal(&mut rng, &cfg);
            let err = submersion_check(&cfg, &w).unwrap();
            assert!(err <= 1e-8, "{err}");
            let w2 = w.map(|z| z * 2.0);
            assert!((submersion_check(&cfg, &w2).unwrap() - err).abs() < 1e-12);

            // Oracle: numerical differential of the shape map.
            let h = 1e-6;
            let plus = PlanarConfig::new_unchecked(std::array::from_fn(|j| cfg.positions()[j] + w[j] * h));
            let minus = PlanarConfig::new_unchecked(std::array::from_fn(|j| cfg.positions()[j] - w[j] * h));
            let fd = (shape_map(&plus).unwrap().as_vector() - shape_map(&minus).unwrap().as_vector()) / (2.0 * h);
            let du = shape_differential(&cfg, &w).unwrap();
            assert!((fd - du).norm() <= 1e-6 * du.norm().max(1.0));
        }
    }

    #[test]
    fn submersion_rejects_fiber_directions() {
        let cfg = equilateral(1.0);
        let rot = cfg.positions().map(|z| z * Complex64::i());
        assert!(matches!(submersion_check(&cfg, &rot), Err(Error::NotHorizontal { .. })));
        assert!(matches!(submersion_check(&cfg, cfg.positions()), Err(Error::NotHorizontal { .. })));
    }

    #[test]
    fn sections_and_horizontal_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let u = ShapePoint::from_angles(rng.gen_range(0.1..3.0), rng.gen_range(0.0..2.0 * PI)).unwrap();
            let x = u.as_vector();
            for which in [Section::Z1Real, Section::Z2Real] {
                let z = section(x, which);
                assert!((z[0].norm_sqr() + z[1].norm_sqr() - 1.0).abs() < 1e-12);
                assert!((hopf(&z) - x).norm() < 1e-12);
                let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let t = t - x * x.dot(&t);
                let w = horizontal_lift_vector(&z, &t);
                assert!((hopf_differential(&z, &w) - t).norm() < 1e-12);
                let inner = z[0].conj() * w[0] + z[1].conj() * w[1];
                assert!(inner.norm() < 1e-12);
            }
        }
        let rep = representative(&ShapePoint::new(Vector3::new(0.3, -0.2, 0.9)).unwrap());
        assert!((rep.inertia() - 1.0).abs() < 1e-12 && rep.is_centered());
    }

    #[test]
    fn section_phase_rate_makes_curves_horizontal() {
        // Transport the fiber phase along a small circle and compare with the
        // horizontal lift vector by finite differences.
        let curve = |s: f64| Vector3::new(0.3 * s.cos(), 0.3 * s.sin(), 1.0).normalize();
        for which in [Section::Z1Real, Section::Z2Real] {
            let s0 = 0.4;
            let h = 1e-5;
            let u = curve(s0);
            let du = (curve(s0 + h) - curve(s0 - h)) / (2.0 * h);
            let rate = section_phase_rate(&u, &du, which);
            let zp = section(&curve(s0 + h), which).map(|z| z * Complex64::from_polar(1.0, rate * h));
            let zm = section(&curve(s0 - h), which).map(|z| z * Complex64::from_polar(1.0, -rate * h));
            let dz = [(zp[0] - zm[0]) / (2.0 * h), (zp[1] - zm[1]) / (2.0 * h)];
            let w = horizontal_lift_vector(&section(&u, which), &du);
            assert!((dz[0] - w[0]).norm() < 1e-8 && (dz[1] - w[1]).norm() < 1e-8);
        }
    }

    #[test]
    fn grid_export() {
        let rows = curvature_grid(10, 12, 0.05);
        assert!(rows.len() <= 120 && rows.len() > 100);
        let csv = curvature_csv(&rows);
        assert!(csv.starts_with("theta,phi,lambda,K\n"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    proptest::proptest! {
        #[test]
        fn shape_ignores_similarities(
            q in proptest::array::uniform6(-1.0f64..1.0),
            angle in 0.0f64..6.3,
            scale in 0.1f64..10.0,
            shift in proptest::array::uniform2(-5.0f64..5.0),
        ) {
            let p = PlanarConfig::new_unchecked([c(q[0], q[1]), c(q[2], q[3]), c(q[4], q[5])]);
            proptest::prop_assume!(p.min_pair_distance() > 0.05);
            let u = shape_map(&p.centered()).unwrap();
            let moved = p.rotated(angle).scaled(scale).translated(c(shift[0], shift[1])).centered();
            let v = shape_map(&moved).unwrap();
            proptest::prop_assert!((u.as_vector() - v.as_vector()).norm() < 1e-12);
            proptest::prop_assert!((u.as_vector().norm() - 1.0).abs() < 1e-14);
            // Representatives of a shape map back onto it.
            let back = shape_map(&representative(&u)).unwrap();
            proptest::prop_assert!((back.as_vector() - u.as_vector()).norm() < 1e-12);
        }

        #[test]
        fn lambda_is_inertia_times_potential(theta in 0.1f64..3.0, phi in 0.0f64..6.3) {
            let u = ShapePoint::from_angles(theta, phi).unwrap();
            proptest::prop_assume!(u.nearest_end().1 > 0.05);
            let p = representative(&u);
            let expected = p.inertia() * crate::dynamics::potential(&p).unwrap();
            let lambda = conformal_factor(&u).unwrap().lambda;
            proptest::prop_assert!((lambda - expected).abs() <= 1e-12 * expected);
        }
    }
}
