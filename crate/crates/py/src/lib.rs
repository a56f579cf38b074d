use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pants_core::dynamics::{integrate, PlanarConfig, PlanarState};
use pants_core::lift::{lift_orbit, verify_solution, LiftOptions, VerificationStatus};
use pants_core::orbit::{find_straight, find_winding, CollisionOrbit, FinderConfig};
use pants_core::shape::{self, ShapePoint};
use pants_core::syzygy::{self, SyzygySequence};

fn err(e: pants_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn complex3(xy: [[f64; 2]; 3]) -> [Complex64; 3] {
    xy.map(|[x, y]| Complex64::new(x, y))
}

fn xy3(z: &[Complex64; 3]) -> [[f64; 2]; 3] {
    z.map(|w| [w.re, w.im])
}

fn finder(grid: usize, d0: f64) -> FinderConfig {
    FinderConfig { grid, d0, ..FinderConfig::default() }
}

/// Integrates the planar problem; returns `(times, positions, velocities, status)`.
#[pyfunction]
#[pyo3(signature = (positions, velocities, t_end, tol = 1e-10))]
#[allow(clippy::type_complexity)]
fn simulate(
    positions: [[f64; 2]; 3],
    velocities: [[f64; 2]; 3],
    t_end: f64,
    tol: f64,
) -> PyResult<(Vec<f64>, Vec<[[f64; 2]; 3]>, Vec<[[f64; 2]; 3]>, String)> {
    let config = PlanarConfig::new(complex3(positions)).map_err(err)?;
    let traj = integrate(&PlanarState::new(config, complex3(velocities)), t_end, tol).map_err(err)?;
    let t = traj.samples.iter().map(|s| s.0).collect();
    let q = traj.samples.iter().map(|s| xy3(s.1.config.positions())).collect();
    let v = traj.samples.iter().map(|s| xy3(&s.1.v)).collect();
    Ok((t, q, v, format!("{:?}", traj.status)))
}

/// Shape-sphere point of a configuration (centered first).
#[pyfunction]
fn shape_of(positions: [[f64; 2]; 3]) -> PyResult<[f64; 3]> {
    let config = PlanarConfig::new(complex3(positions)).map_err(err)?.centered();
    let u = shape::shape_map(&config).map_err(err)?;
    Ok([0, 1, 2].map(|i| u.as_vector()[i]))
}

/// Conformal factor and Gaussian curvature at polar angles `(theta, phi)`.
#[pyfunction]
fn curvature(theta: f64, phi: f64) -> PyResult<(f64, f64)> {
    let u = ShapePoint::from_angles(theta, phi).map_err(err)?;
    let lambda = shape::conformal_factor(&u).map_err(err)?.lambda;
    Ok((lambda, shape::curvature(&u).map_err(err)?))
}

fn parse(seq: &str) -> PyResult<SyzygySequence> {
    seq.parse().map_err(err)
}

#[pyfunction]
fn cancel_stutters(seq: &str) -> PyResult<String> {
    Ok(syzygy::cancel_stutters(&parse(seq)?).to_string())
}

/// Collision ends `(start, finish)` a straight orbit with this code runs between.
#[pyfunction]
fn ends(seq: &str) -> PyResult<(String, String)> {
    let (a, b) = syzygy::resolve_ends(&parse(seq)?).map_err(err)?;
    Ok((a.to_string(), b.to_string()))
}

#[pyclass(name = "Orbit", frozen)]
struct PyOrbit {
    inner: CollisionOrbit,
}

#[pymethods]
impl PyOrbit {
    #[getter]
    fn realized(&self) -> String {
        self.inner.realized.to_string()
    }

    #[getter]
    fn core(&self) -> String {
        self.inner.realized.core_symbols().iter().map(|s| char::from(b'0' + s.label())).collect()
    }

    #[getter]
    fn start_end(&self) -> String {
        self.inner.start_end.to_string()
    }

    #[getter]
    fn finish_end(&self) -> String {
        self.inner.finish_end.to_string()
    }

    #[getter]
    fn phi(&self) -> f64 {
        self.inner.shot.phi
    }

    #[getter]
    fn window(&self) -> f64 {
        self.inner.shot.window
    }

    #[getter]
    fn straight(&self) -> bool {
        self.inner.is_straight()
    }

    #[getter]
    fn tails(&self) -> (String, String) {
        (format!("{:?}", self.inner.tails.0), format!("{:?}", self.inner.tails.1))
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.path.length()
    }

    /// `(sigma, u1, u2, u3)` for every path sample.
    fn path(&self) -> Vec<[f64; 4]> {
        self.inner.path.samples.iter().map(|s| [s.sigma, s.point()[0], s.point()[1], s.point()[2]]).collect()
    }

    fn path_csv(&self) -> String {
        self.inner.path.to_csv()
    }

    /// Lifts to a planar solution and verifies it; returns the report as a dict.
    fn lift<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let lifted = lift_orbit(&self.inner, &LiftOptions::default()).map_err(err)?;
        let r = verify_solution(&lifted, 1e-5).map_err(err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("passed", r.status == VerificationStatus::Passed)?;
        d.set_item("samples", r.samples)?;
        d.set_item("eq1_residual", r.eq1_residual)?;
        d.set_item("max_abs_energy", r.max_abs_energy)?;
        d.set_item("max_abs_angular_momentum", r.max_abs_angular_momentum)?;
        d.set_item("max_inertia_error", r.max_inertia_error)?;
        d.set_item("final_pair_distance", r.final_pair_distance)?;
        d.set_item("t_c", r.collision_time.as_ref().map(|c| c.t_c))?;
        d.set_item("times", lifted.trajectory.samples.iter().map(|s| s.0).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Orbit({} from {} to {}, phi={:.12})", self.inner.realized, self.inner.start_end, self.inner.finish_end, self.inner.shot.phi)
    }
}

/// The two straight collision orbits realizing `target`.
#[pyfunction]
#[pyo3(signature = (target, grid = 720, d0 = 5.0))]
fn find(py: Python<'_>, target: &str, grid: usize, d0: f64) -> PyResult<(PyOrbit, PyOrbit)> {
    let target = parse(target)?;
    let cfg = finder(grid, d0);
    let [a, b] = py.detach(|| find_straight(&target, &cfg)).map_err(err)?;
    Ok((PyOrbit { inner: a }, PyOrbit { inner: b }))
}

/// Winding family of a straight orbit: `count` members per perturbation sign.
#[pyfunction]
#[pyo3(signature = (orbit, eps = 1e-3, count = 3, grid = 720, d0 = 5.0))]
fn wind(py: Python<'_>, orbit: &PyOrbit, eps: f64, count: usize, grid: usize, d0: f64) -> PyResult<Vec<PyOrbit>> {
    let cfg = finder(grid, d0);
    let family = py.detach(|| find_winding(&orbit.inner, eps, count, &cfg)).map_err(err)?;
    Ok(family.into_iter().map(|inner| PyOrbit { inner }).collect())
}

#[pymodule]
fn pants(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOrbit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(shape_of, m)?)?;
    m.add_function(wrap_pyfunction!(curvature, m)?)?;
    m.add_function(wrap_pyfunction!(cancel_stutters, m)?)?;
    m.add_function(wrap_pyfunction!(ends, m)?)?;
    m.add_function(wrap_pyfunction!(find, m)?)?;
    m.add_function(wrap_pyfunction!(wind, m)?)?;
    Ok(())
}
