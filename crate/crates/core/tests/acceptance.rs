//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Expected values come from oracles written here, not from the
//! library: explicit force and invariant formulas, finite differences of
//! the shape map, a Brioschi-formula curvature, an inverse Hopf map that
//! reads off the middle body of a collinear shape, and a Fornberg-weight
//! derivative for the lifted equations of motion.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Vector3;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pants_core::dynamics::{integrate, PlanarConfig, PlanarState, TrajectoryStatus};
use pants_core::geodesic::{geodesic_flow, tau_of_depth, CuspState, GeodesicState, PathSample, ReducedPath, TailClass};
use pants_core::lift::{lift_orbit, verify_solution, LiftOptions, VerificationStatus};
use pants_core::orbit::{find_straight, find_winding, CollisionOrbit, FinderConfig};
use pants_core::shape::{conformal_factor, curvature_grid, curvature_with, shape_map, End, ShapePoint, UnitFactor};
use pants_core::syzygy::{cancel_stutters, code, SyzygySequence};

// ---------------------------------------------------------------- oracles

fn potential(q: &[C; 3]) -> f64 {
    (0..3).flat_map(|i| (i + 1..3).map(move |j| (i, j))).map(|(i, j)| 1.0 / (q[i] - q[j]).norm_sqr()).sum()
}

/// `q_j'' = sum_k -2 (q_j - q_k) / |q_j - q_k|^4`, the gradient of `sum 1/r^2`.
fn force(q: &[C; 3]) -> [C; 3] {
    let mut a = [C::new(0.0, 0.0); 3];
    for j in 0..3 {
        for k in 0..3 {
            if j != k {
                let d = q[j] - q[k];
                a[j] -= d * (2.0 / (d.norm_sqr() * d.norm_sqr()));
            }
        }
    }
    a
}

fn energy(q: &[C; 3], v: &[C; 3]) -> f64 {
    0.5 * v.iter().map(|z| z.norm_sqr()).sum::<f64>() - potential(q)
}

fn angular_momentum(q: &[C; 3], v: &[C; 3]) -> f64 {
    (0..3).map(|j| (q[j].conj() * v[j]).im).sum()
}

fn inertia(q: &[C; 3]) -> f64 {
    let c = (q[0] + q[1] + q[2]) / 3.0;
    q.iter().map(|z| (z - c).norm_sqr()).sum()
}

fn inertia_accel(q: &[C; 3], v: &[C; 3]) -> f64 {
    let a = force(q);
    2.0 * v.iter().map(|z| z.norm_sqr()).sum::<f64>() + 2.0 * (0..3).map(|j| (q[j].conj() * a[j]).re).sum::<f64>()
}

/// Centered configuration with unit inertia over shape `u` (`u1 != -1`).
fn inverse_hopf(u: &Vector3<f64>) -> [C; 3] {
    let a = ((1.0 + u[0]) / 2.0).sqrt();
    let z1 = C::new(a, 0.0);
    let z2 = C::new(u[1], -u[2]) / (2.0 * a);
    let s6 = 6f64.sqrt();
    let q3 = -z2 * (s6 / 3.0);
    let q1 = (z2 * (s6 / 3.0) + z1 * SQRT_2) / 2.0;
    let q2 = (z2 * (s6 / 3.0) - z1 * SQRT_2) / 2.0;
    [q1, q2, q3]
}

/// 1-based index of the body between the other two in a collinear shape.
fn middle_body(u: &Vector3<f64>) -> u8 {
    let q = inverse_hopf(u);
    let (i, j) = [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .max_by(|a, b| (q[a.0] - q[a.1]).norm().total_cmp(&(q[b.0] - q[b.1]).norm()))
        .unwrap();
    let d = q[i] - q[j];
    let x = q.map(|z| (z * d.conj()).re);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    idx[1] as u8 + 1
}

/// A path point: extrinsic position plus, in a cusp chart, the end and
/// the chart angle. Deep in a cusp the extrinsic point rounds to the
/// collision point itself, so crossings there are read from the angle.
#[derive(Clone, Copy)]
struct Pt {
    u: Vector3<f64>,
    cusp: Option<(End, f64)>,
}

/// Equator point `0.05` from `end` in chart direction `phi`.
fn chart_point(end: End, phi: f64) -> Vector3<f64> {
    let (b, e1, e2) = end.frame();
    b * 0.05f64.cos() + (e1 * phi.cos() + e2 * phi.sin()) * 0.05f64.sin()
}

/// Collinear arcs crossed, each labelled by the middle body of the
/// configuration at the crossing.
fn crossed_arcs(points: &[Pt]) -> String {
    let mut out = String::new();
    for w in points.windows(2) {
        match (w[0].cusp, w[1].cusp) {
            (Some((ea, pa)), Some((eb, pb))) if ea == eb => {
                let (ka, kb) = ((pa / PI).floor() as i64, (pb / PI).floor() as i64);
                let ks: Vec<i64> = if kb > ka { (ka + 1..=kb).collect() } else { (kb + 1..=ka).rev().collect() };
                for k in ks {
                    out.push(char::from(b'0' + middle_body(&chart_point(ea, k as f64 * PI))));
                }
            }
            _ => {
                let (a, b) = (w[0].u, w[1].u);
                if a[2] == 0.0 || a[2].signum() == b[2].signum() {
                    continue;
                }
                let s = a[2] / (a[2] - b[2]);
                out.push(char::from(b'0' + middle_body(&(a + (b - a) * s).normalize())));
            }
        }
    }
    out
}

fn path_points(path: &ReducedPath) -> Vec<Pt> {
    path.samples.iter().map(|s| Pt { u: *s.point(), cusp: s.cusp.map(|c| (c.end, c.phi)) }).collect()
}

/// Max over core samples of `a` of the distance to `b` (optionally
/// mirrored through the equator) with the given arclength origins matched.
fn aligned(a: &ReducedPath, oa: f64, b: &ReducedPath, ob: f64, mirrored: bool) -> f64 {
    a.samples
        .iter()
        .filter(|s| s.cusp.is_none())
        .filter_map(|s| {
            let mut p = *s.point();
            if mirrored {
                p[2] = -p[2];
            }
            b.point_at(s.sigma - oa + ob).map(|q| (q - p).norm())
        })
        .fold(0.0, f64::max)
}

fn first_crossing_sigma(path: &ReducedPath) -> f64 {
    let w = path.samples.windows(2).find(|w| w[0].point()[2].signum() != w[1].point()[2].signum()).unwrap();
    let (a, b) = (w[0].point()[2], w[1].point()[2]);
    w[0].sigma + (w[1].sigma - w[0].sigma) * a / (a - b)
}

/// Fornberg weights for the first derivative at `x0` from nodes `x`.
fn fornberg_first(x0: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; 2]; n];
    let (mut c1, mut c4) = (1.0, x[0] - x0);
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let (mut c2, c5) = (1.0, c4);
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|r| r[1]).collect()
}

// ---------------------------------------------------------------- harness

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: u32, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {n:>2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> PlanarState {
    loop {
        let q = [0; 3].map(|_| C::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
        let v = [0; 3].map(|_| C::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
        let d = [(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| (q[i] - q[j]).norm()).fold(f64::INFINITY, f64::min);
        if d >= 2.0 {
            return PlanarState::new(PlanarConfig::new(q).unwrap(), v);
        }
    }
}

fn criteria_1_2(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut lj, mut de, mut dc, mut bad) = (0.0f64, 0.0f64, 0.0f64, 0);
    for _ in 0..20 {
        let s = random_state(&mut rng);
        let traj = integrate(&s, 0.5, 1e-10).unwrap();
        if traj.status != TrajectoryStatus::Completed || traj.samples.last().unwrap().0 != 0.5 {
            bad += 1;
        }
        let (q0, v0) = (*s.config.positions(), s.v);
        let (e0, c0) = (energy(&q0, &v0), angular_momentum(&q0, &v0));
        let scale = e0.abs().max(1.0);
        for (_, st) in &traj.samples {
            let (q, v) = (*st.config.positions(), st.v);
            let e = energy(&q, &v);
            lj = lj.max((inertia_accel(&q, &v) - 4.0 * e).abs());
            de = de.max((e - e0).abs() / scale);
            dc = dc.max((angular_momentum(&q, &v) - c0).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(1, "lagrange-jacobi", lj <= 1e-9 && bad == 0 && secs < 10.0, format!("max |I'' - 4E| = {lj:.2e}, {bad} incomplete runs, {secs:.2} s"));
    r.line(2, "conservation", de <= 1e-8 && dc <= 1e-8 && bad == 0, format!("E drift {de:.2e}, C drift {dc:.2e}"));
}

fn criterion_3(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut lambda_err = 0.0f64;
    let mut n = 0;
    while n < 100 {
        let q = [0; 3].map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let c = (q[0] + q[1] + q[2]) / 3.0;
        let s = inertia(&q).sqrt();
        let q = q.map(|z| (z - c) / s);
        if [(0, 1), (0, 2), (1, 2)].iter().any(|&(i, j)| (q[i] - q[j]).norm() < 0.05) {
            continue;
        }
        // Horizontal: centered, orthogonal to q (scaling) and iq (rotation).
        let mut w = [0; 3].map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = (w[0] + w[1] + w[2]) / 3.0;
        w = w.map(|z| z - m);
        for d in [q, q.map(|z| z * C::i())] {
            let dot: f64 = (0..3).map(|j| (w[j] * d[j].conj()).re).sum();
            for j in 0..3 {
                w[j] -= d[j] * dot;
            }
        }
        let u = |t: f64| {
            let p = PlanarConfig::new([0, 1, 2].map(|j| q[j] + w[j] * t)).unwrap();
            *shape_map(&p).unwrap().as_vector()
        };
        let h = 1e-5;
        let du = (u(h) - u(-h)) / (2.0 * h);
        let u0 = u(0.0);
        let lam = potential(&q);
        let upstairs = (lam * w.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let reduced = (lam * du.norm_squared() / 4.0).sqrt();
        worst = worst.max((upstairs - reduced).abs() / upstairs);
        let lib = conformal_factor(&ShapePoint::new(u0).unwrap()).unwrap().lambda;
        lambda_err = lambda_err.max((lib - lam).abs() / lam);
        n += 1;
    }
    r.line(
        3,
        "submersion",
        worst <= 1e-8 && lambda_err <= 1e-12,
        format!("max relative norm error {worst:.2e} over 100 pairs, lambda vs I U {lambda_err:.1e}"),
    );
}

/// Gaussian curvature of `(lambda/4)(dtheta^2 + sin^2 theta dphi^2)` by the
/// Brioschi formula for orthogonal metrics, with nested central differences.
fn brioschi(lambda: &dyn Fn(f64, f64) -> f64, th: f64, ph: f64) -> f64 {
    let e = |t: f64, p: f64| lambda(t, p) / 4.0;
    let g = |t: f64, p: f64| lambda(t, p) * t.sin().powi(2) / 4.0;
    let h = 1e-4;
    let gt = |t: f64, p: f64| (g(t + h, p) - g(t - h, p)) / (2.0 * h);
    let ep = |t: f64, p: f64| (e(t, p + h) - e(t, p - h)) / (2.0 * h);
    let a = |t: f64, p: f64| gt(t, p) / (e(t, p) * g(t, p)).sqrt();
    let b = |t: f64, p: f64| ep(t, p) / (e(t, p) * g(t, p)).sqrt();
    let da = (a(th + h, ph) - a(th - h, ph)) / (2.0 * h);
    let db = (b(th, ph + h) - b(th, ph - h)) / (2.0 * h);
    -(da + db) / (2.0 * (e(th, ph) * g(th, ph)).sqrt())
}

fn sphere(t: f64, p: f64) -> Vector3<f64> {
    Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
}

fn criterion_4(r: &mut Report) {
    let start = Instant::now();
    let rows = curvature_grid(100, 100, 0.05);
    let secs = start.elapsed().as_secs_f64();
    let ends: Vec<Vector3<f64>> = End::ALL.iter().map(|e| e.position()).collect();
    let excluded_ok = rows.iter().all(|row| ends.iter().all(|b| sphere(row.theta, row.phi).angle(b) >= 0.05));
    let negative = rows.iter().filter(|row| row.k < 0.0).count() as f64 / rows.len() as f64;
    let k_max = rows.iter().map(|row| row.k).fold(f64::NEG_INFINITY, f64::max);

    // Oracle on a subsample: lambda = I U of the configuration over each point.
    let lam = |t: f64, p: f64| potential(&inverse_hopf(&sphere(t, p)));
    let mut oracle = 0.0f64;
    for row in rows.iter().step_by(211) {
        if row.theta < 0.2 || row.theta > PI - 0.2 {
            continue;
        }
        let k = brioschi(&lam, row.theta, row.phi);
        oracle = oracle.max((k - row.k).abs() / k.abs().max(1.0));
    }
    let mut round = 0.0f64;
    for (t, p) in [(0.7, 0.3), (1.9, 4.0), (1.2, 2.2)] {
        let lib = curvature_with(&UnitFactor, &ShapePoint::from_angles(t, p).unwrap());
        round = round.max((lib - 4.0).abs()).max((brioschi(&|_, _| 1.0, t, p) - 4.0).abs());
    }
    r.line(
        4,
        "curvature-negative",
        excluded_ok && negative >= 0.999 && k_max <= 1e-6 && round <= 1e-6 && oracle <= 1e-5 && secs < 30.0,
        format!(
            "{} points, K < 0 at {:.3}%, max K {k_max:.2e}; Brioschi oracle {oracle:.1e}; lambda = 1 gives |K - 4| {round:.1e}; {secs:.2} s",
            rows.len(),
            100.0 * negative
        ),
    );
}

fn criterion_5(r: &mut Report) {
    let z = Vector3::z();
    let drift = |p: Vector3<f64>, dir: Vector3<f64>, normal: Vector3<f64>| {
        let path = geodesic_flow(&GeodesicState::new(ShapePoint::new(p).unwrap(), dir).unwrap(), 5.0, 1e-11);
        let len = path.length();
        (path.samples.iter().map(|s| s.point().dot(&normal).abs()).fold(0.0, f64::max), len)
    };
    let (eq, len) = drift(sphere(PI / 2.0, 0.4), sphere(PI / 2.0, 0.4 + PI / 2.0), z);
    let mut worst = eq;
    let mut detail = format!("equator {eq:.1e}");
    for e in End::ALL {
        let b = e.position();
        let normal = b.cross(&z).normalize();
        let p = (b + z * 2.0).normalize();
        let (m, _) = drift(p, normal.cross(&p), normal);
        detail += &format!(", meridian {e} {m:.1e}");
        worst = worst.max(m);
    }
    r.line(5, "seams-geodesic", worst <= 1e-6 && (len - 5.0).abs() < 1e-9, detail);
}

const TARGETS: [&str; 9] = ["1", "2", "3", "12", "13", "21", "23", "31", "32"];

fn criterion_6(r: &mut Report, cfg: &FinderConfig) -> Vec<(String, [CollisionOrbit; 2])> {
    let start = Instant::now();
    let mut found = Vec::new();
    let mut problems = Vec::new();
    let mut worst_mirror = 0.0f64;
    for t in TARGETS {
        let target: SyzygySequence = t.parse().unwrap();
        let pair = match find_straight(&target, cfg) {
            Ok(p) => p,
            Err(e) => {
                problems.push(format!("{t}: {e}"));
                continue;
            }
        };
        for o in &pair {
            let arcs = crossed_arcs(&path_points(&o.path));
            if arcs.as_bytes().windows(2).any(|w| w[0] == w[1]) {
                problems.push(format!("{t}: recrosses a seam ({arcs})"));
            }
            if arcs != t || o.realized.digits() != t {
                problems.push(format!("{t}: crosses {arcs}, coded {}", o.realized));
            }
            let straight = matches!(o.tails, (TailClass::Straight(a), TailClass::Straight(b)) if a == o.start_end && b == o.finish_end);
            let depth_back = o.path.reversed().max_depth(o.start_end).unwrap_or(0.0);
            let depth_fwd = o.path.max_depth(o.finish_end).unwrap_or(0.0);
            if !straight || depth_back < 8.0 || depth_fwd < 8.0 {
                problems.push(format!("{t}: tails {:?} at depths {depth_back:.2}, {depth_fwd:.2}", o.tails));
            }
            if o.shot.window > 1e-10 {
                problems.push(format!("{t}: window {:.2e}", o.shot.window));
            }
            let w = &o.windows;
            let rate = (w[0] / w[w.len() - 1]).powf(1.0 / (w.len() - 1) as f64);
            if rate < 1.9 {
                problems.push(format!("{t}: bisection contracts by {rate:.2} per step"));
            }
        }
        let m = aligned(&pair[0].path, pair[0].launch_sigma, &pair[1].path, pair[1].launch_sigma, true);
        let d = aligned(&pair[0].path, pair[0].launch_sigma, &pair[1].path, pair[1].launch_sigma, false);
        worst_mirror = worst_mirror.max(m);
        if m > 1e-6 || d <= 1e-3 {
            problems.push(format!("{t}: mirror distance {m:.2e}, pair distance {d:.2e}"));
        }
        found.push((t.to_string(), pair));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = problems.is_empty() && secs < 600.0;
    let detail = if ok {
        format!("9 targets, codes and crossings exact, straight tails to depth 8, max mirror distance {worst_mirror:.1e}, {secs:.1} s")
    } else {
        problems.join("; ")
    };
    r.line(6, "straight-pairs", ok, detail);
    found
}

fn criterion_7(r: &mut Report, pair: &[CollisionOrbit; 2]) {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    let mut ends = Vec::new();
    for (k, o) in pair.iter().enumerate() {
        let file = dir.path().join(format!("31-{k}.csv"));
        o.path.write_csv(&file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "sigma,u1,u2,u3,t1,t2,t3,chart,end,depth,phi");
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        let pts: Vec<Pt> = rows
            .iter()
            .map(|r| Pt {
                u: Vector3::new(r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap()),
                cusp: (r[7] == "cusp").then(|| (End::from_label(&r[8]).unwrap(), r[10].parse().unwrap())),
            })
            .collect();
        seen.push(crossed_arcs(&pts));
        ends.push((rows[0][8].clone(), rows[rows.len() - 1][8].clone()));
    }
    let ok = seen.iter().all(|s| s == "31") && ends.iter().all(|e| e.0 == "B12" && e.1 == "B23");
    r.line(7, "sequence-31", ok, format!("CSV paths cross arcs {seen:?}, run between legs {ends:?}"));
}

fn criterion_8(r: &mut Report, one: &CollisionOrbit, cfg: &FinderConfig) {
    let mut details = Vec::new();
    let mut ok = true;
    for eps in [1e-3, 1e-2] {
        let family = match find_winding(one, eps, 3, cfg) {
            Ok(f) => f,
            Err(e) => {
                ok = false;
                details.push(format!("eps {eps}: {e}"));
                continue;
            }
        };
        for sign in [1.0, -1.0] {
            let members: Vec<&CollisionOrbit> =
                family.iter().filter(|o| o.perturbation.is_some_and(|p| p.angle * sign > 0.0)).collect();
            let mut good = 0;
            for o in &members {
                let arcs = crossed_arcs(&path_points(&o.path));
                let core = o.realized.core.unwrap_or((0, 0));
                let (head, tail) = (&arcs[..core.0.min(arcs.len())], &arcs[core.1.min(arcs.len())..]);
                let alternating = |s: &str| s.len() >= 2 && s.chars().all(|c| c == '2' || c == '3') && s.as_bytes().windows(2).all(|w| w[0] != w[1]);
                let winding = matches!(o.tails, (TailClass::Winding(End::B23, _), TailClass::Winding(End::B23, _)));
                if arcs.len() == o.realized.len() && &arcs[core.0..core.1] == "1" && alternating(head) && alternating(tail) && winding {
                    good += 1;
                }
            }
            // Distinct: pairwise separated somewhere along the core.
            let mut distinct = true;
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    let d = (-2..=2)
                        .filter_map(|k| Some((a.point_from_launch(k as f64)? - b.point_from_launch(k as f64)?).norm()))
                        .fold(0.0, f64::max);
                    distinct &= d > 1e-8;
                }
            }
            ok &= good >= 3 && distinct;
            details.push(format!("eps {:+.0e}: {good} winding{}", sign * eps, if distinct { "" } else { " (not distinct)" }));
        }
    }
    r.line(8, "winding-family", ok, format!("core 1 with tails alternating 2,3 in B23: {}", details.join(", ")));
}

fn criterion_9(r: &mut Report, orbit: &CollisionOrbit) {
    let lifted = lift_orbit(orbit, &LiftOptions::default()).unwrap();
    let report = verify_solution(&lifted, 1e-5).unwrap();
    let s = &lifted.trajectory.samples;
    let t: Vec<f64> = s.iter().map(|x| x.0).collect();
    let mut eq1 = 0.0f64;
    for k in 2..s.len() - 2 {
        let w = fornberg_first(t[k], &t[k - 2..=k + 2]);
        let a = force(s[k].1.config.positions());
        let an = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for j in 0..3 {
            let dv: C = (0..5).map(|m| s[k - 2 + m].1.v[j] * w[m]).sum();
            eq1 = eq1.max((dv - a[j]).norm() / an);
        }
    }
    let (mut e, mut c, mut i) = (0.0f64, 0.0f64, 0.0f64);
    for (_, st) in s {
        let (q, v) = (st.config.positions(), &st.v);
        e = e.max(energy(q, v).abs());
        c = c.max(angular_momentum(q, v).abs());
        i = i.max((inertia(q) - 1.0).abs());
    }
    let (a, b) = orbit.finish_end.bodies();
    let entry = s.iter().rposition(|x| {
        let u = shape_map(&x.1.config).unwrap();
        u.as_vector().angle(&orbit.finish_end.position()) > 0.05
    });
    let tail: Vec<f64> = s[entry.unwrap_or(0)..].iter().map(|x| (x.1.config.positions()[a] - x.1.config.positions()[b]).norm()).collect();
    let monotone = tail.windows(2).all(|w| w[1] < w[0]);
    let last = *tail.last().unwrap();
    let tc = report.collision_time.clone();
    let geometric = tc.as_ref().is_some_and(|c| {
        c.increments.windows(2).all(|w| w[1] < 0.5 * w[0]) && c.ratios.iter().all(|q| (q - (-2.0 * SQRT_2).exp()).abs() < 0.01) && c.t_c.is_finite()
    });
    let ok = report.status == VerificationStatus::Passed
        && eq1 <= 1e-5
        && e <= 1e-8
        && c <= 1e-10
        && i <= 1e-8
        && monotone
        && last < 1e-3
        && geometric;
    r.line(
        9,
        "lift-31",
        ok,
        format!(
            "eq1 {eq1:.1e} (library {:.1e}), |E| {e:.1e}, |C| {c:.1e}, |I-1| {i:.1e}, pair distance falls monotonically to {last:.1e}, t_c {:.10} with increment ratios {:.4?}",
            report.eq1_residual,
            tc.as_ref().map_or(f64::NAN, |c| c.t_c),
            tc.as_ref().map(|c| c.ratios.clone()).unwrap_or_default()
        ),
    );
}

fn reduce_by_hand(word: &[u8]) -> Vec<u8> {
    let mut w = word.to_vec();
    while let Some(p) = w.windows(2).position(|x| x[0] == x[1]) {
        w.drain(p..p + 2);
    }
    w
}

fn criterion_10(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok_idem = true;
    for _ in 0..1000 {
        let n = rng.gen_range(0..30);
        let digits: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
        let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
        let word: SyzygySequence = text.parse().unwrap();
        let once = cancel_stutters(&word);
        let expected: String = reduce_by_hand(&digits).iter().map(|d| char::from(b'0' + d)).collect();
        ok_idem &= cancel_stutters(&once) == once && once.digits() == expected;
    }
    let homotopy = cancel_stutters(&"1233".parse().unwrap()).digits();

    // Twice around B12 at angular radius 0.3, with sigma the reduced
    // arclength (trapezoid rule on sqrt(lambda)/2 |du|).
    let b = End::B12.position();
    let (e1, e2) = (Vector3::y(), Vector3::z());
    let n = 512;
    let da = 4.0 * PI / n as f64;
    let at = |a: f64| b * 0.3f64.cos() + (e1 * a.cos() + e2 * a.sin()) * 0.3f64.sin();
    let speed = |a: f64| potential(&inverse_hopf(&at(a))).sqrt() / 2.0 * 0.3f64.sin();
    let mut sigma = 0.0;
    let mut samples = Vec::new();
    for k in 0..=n {
        let a = 0.1 + da * k as f64;
        if k > 0 {
            sigma += 0.5 * da * (speed(a - da) + speed(a));
        }
        let d = e1 * -a.sin() + e2 * a.cos();
        samples.push(PathSample::new(sigma, GeodesicState::new(ShapePoint::new(at(a)).unwrap(), d).unwrap()));
    }
    let pts: Vec<Pt> = samples.iter().map(|s| Pt { u: *s.point(), cusp: None }).collect();
    let loop_code = code(&ReducedPath::new(samples).unwrap()).map(|c| c.digits()).unwrap_or_default();
    let loop_oracle = crossed_arcs(&pts);
    let alternating = loop_code.len() == 4 && loop_code == loop_oracle && loop_code.as_bytes().windows(2).all(|w| w[0] != w[1]) && loop_code.chars().all(|c| c == '1' || c == '2');
    // A cusp-chart loop codes the same way.
    let cusp = CuspState { end: End::B12, tau: tau_of_depth(1.0), phi: 0.1, dtau: 0.0, dphi: 1.0 };
    let cusp_loop = ReducedPath::new((0..=n).map(|k| PathSample::from_cusp(k as f64 * 4.0 * PI / n as f64, CuspState { phi: 0.1 + 4.0 * PI * k as f64 / n as f64, ..cusp })).collect()).unwrap();
    let cusp_code = code(&cusp_loop).map(|c| c.digits()).unwrap_or_default();
    r.line(
        10,
        "syzygy-coder",
        ok_idem && homotopy == "12" && alternating && cusp_code.len() == 4 && cusp_code.as_bytes().windows(2).all(|w| w[0] != w[1]),
        format!("1000 random words reduce as by hand and idempotently: {ok_idem}; 1233 -> {homotopy}; loops around B12 code {loop_code} (oracle {loop_oracle}) and {cusp_code}"),
    );
}

fn criterion_11(r: &mut Report, cfg: &FinderConfig) {
    let target: SyzygySequence = "31".parse().unwrap();
    let at = |d0: f64| find_straight(&target, &FinderConfig { d0, ..*cfg }).unwrap();
    let (a, b) = (at(4.0), at(6.0));
    let d = (0..2)
        .map(|k| aligned(&a[k].path, first_crossing_sigma(&a[k].path), &b[k].path, first_crossing_sigma(&b[k].path), false))
        .fold(0.0, f64::max);
    r.line(11, "d0-robust", d <= 1e-4, format!("core samples move {d:.1e} from d0 = 4 to d0 = 6"));
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; none apply.
    let mut r = Report { failed: 0 };
    let cfg = FinderConfig::default();
    criteria_1_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    let found = criterion_6(&mut r, &cfg);
    let pair = |t: &str| found.iter().find(|(s, _)| s == t).map(|(_, p)| p);
    match pair("31") {
        Some(p) => criterion_7(&mut r, p),
        None => r.line(7, "sequence-31", false, "no 31 pair".into()),
    }
    match pair("1") {
        Some(p) => criterion_8(&mut r, &p[0], &cfg),
        None => r.line(8, "winding-family", false, "no straight 1 orbit".into()),
    }
    match pair("31") {
        Some(p) => criterion_9(&mut r, &p[0]),
        None => r.line(9, "lift-31", false, "no 31 pair".into()),
    }
    criterion_10(&mut r);
    criterion_11(&mut r, &cfg);
    println!("acceptance: {} of 11 criteria failed", r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
