//! The invariant suite run by `pants check`.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dynamics::{integrate, invariants, lagrange_jacobi_residual, PlanarConfig, PlanarState, TrajectoryStatus};
use crate::geodesic::{geodesic_flow, GeodesicState, TailClass};
use crate::lift::{lift_orbit, verify_solution, VerificationStatus};
use crate::orbit::{aligned_distance, find_straight, find_winding, mirror, CollisionOrbit, FinderConfig};
use crate::shape::{curvature_grid, curvature_with, submersion_check, End, Seam, ShapePoint, UnitFactor};
use crate::syzygy::{cancel_stutters, code, crossings, seam_recrossing, Region, SyzygySequence};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Initial states with positions in `[-3, 3]^2`, pair distances at least 2
/// and velocity components in `[-0.5, 0.5]`. Collapse times scale with the
/// square of the size (the equilateral of side `sqrt 3` at rest collapses at
/// `t = 1/sqrt 6`), so these survive well past `t = 0.5`.
pub fn random_bounded_state(rng: &mut impl Rng) -> PlanarState {
    loop {
        let q = [0; 3].map(|_| Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
        let v = [0; 3].map(|_| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
        if let Ok(cfg) = PlanarConfig::new(q) {
            if cfg.min_pair_distance() >= 2.0 {
                return PlanarState::new(cfg, v);
            }
        }
    }
}

/// Lagrange–Jacobi identity and conservation of `E`, `C` over 20 runs.
pub fn check_dynamics(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let (mut lj, mut drift_e, mut drift_c, mut incomplete) = (0.0f64, 0.0f64, 0.0f64, 0);
    for _ in 0..20 {
        let s = random_bounded_state(&mut rng);
        let Ok(traj) = integrate(&s, 0.5, 1e-10) else {
            incomplete += 1;
            continue;
        };
        if traj.status != TrajectoryStatus::Completed {
            incomplete += 1;
        }
        lj = lj.max(lagrange_jacobi_residual(&traj).unwrap_or(f64::INFINITY));
        let i0 = invariants(&s).expect("guarded state");
        let scale = i0.energy.abs().max(1.0);
        for (_, st) in &traj.samples {
            let Ok(inv) = invariants(st) else {
                incomplete += 1;
                break;
            };
            drift_e = drift_e.max((inv.energy - i0.energy).abs() / scale);
            drift_c = drift_c.max((inv.angular_momentum - i0.angular_momentum).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    vec![
        outcome(
            "lagrange-jacobi",
            lj <= 1e-9 && incomplete == 0 && secs < 10.0,
            format!("max |I'' - 4E| = {lj:.2e} over 20 runs ({incomplete} incomplete, {secs:.2} s)"),
        ),
        outcome(
            "conservation",
            drift_e <= 1e-8 && drift_c <= 1e-8 && incomplete == 0,
            format!("E drift {drift_e:.2e}, C drift {drift_c:.2e}"),
        ),
    ]
}

pub fn check_submersion(seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 100 {
        let q = [0; 3].map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let Ok(cfg) = PlanarConfig::new(q) else { continue };
        let cfg = cfg.centered();
        if cfg.min_pair_distance() < 0.05 {
            continue;
        }
        let w = [0; 3].map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let w = horizontal_part(&cfg, w);
        match submersion_check(&cfg, &w) {
            Ok(r) => worst = worst.max(r),
            Err(_) => worst = f64::INFINITY,
        }
        n += 1;
    }
    outcome("submersion", worst <= 1e-8, format!("max relative norm error {worst:.2e} over 100 pairs"))
}

/// Removes translation, rotation and scaling components of `w` at `cfg`
/// (Euclidean inner product, `cfg` centered).
pub fn horizontal_part(cfg: &PlanarConfig, w: [Complex64; 3]) -> [Complex64; 3] {
    let mean = (w[0] + w[1] + w[2]) / 3.0;
    let mut w = w.map(|z| z - mean);
    let q = *cfg.positions();
    for dir in [q, q.map(|z| z * Complex64::i())] {
        let dot: f64 = (0..3).map(|j| (w[j] * dir[j].conj()).re).sum();
        let nn: f64 = dir.iter().map(|z| z.norm_sqr()).sum();
        for j in 0..3 {
            w[j] -= dir[j] * (dot / nn);
        }
    }
    w
}

pub fn check_curvature(cfg: &RunConfig) -> Vec<CheckOutcome> {
    let start = Instant::now();
    let rows = curvature_grid(cfg.curvature_theta, cfg.curvature_phi, cfg.curvature_exclusion);
    let negative = rows.iter().filter(|r| r.k < 0.0).count() as f64 / rows.len() as f64;
    let k_max = rows.iter().map(|r| r.k).fold(f64::NEG_INFINITY, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let mut round = 0.0f64;
    for r in rows.iter().step_by(97) {
        let u = ShapePoint::from_angles(r.theta, r.phi).expect("grid point");
        round = round.max((curvature_with(&UnitFactor, &u) - 4.0).abs());
    }
    vec![
        outcome(
            "curvature-negative",
            negative >= 0.999 && k_max <= 1e-6 && secs < 30.0,
            format!("{} points, K < 0 at {:.4}%, max K = {k_max:.2e} ({secs:.2} s)", rows.len(), 100.0 * negative),
        ),
        outcome("curvature-round", round <= 1e-6, format!("lambda = 1 gives |K - 4| <= {round:.2e}")),
    ]
}

/// Max distance from the plane through the origin with unit `normal` along
/// a geodesic launched at `p` in the direction of `dir`.
fn plane_drift(p: Vector3<f64>, dir: Vector3<f64>, normal: Vector3<f64>, length: f64, tol: f64) -> f64 {
    let s = GeodesicState::new(ShapePoint::new(p).expect("off the punctures"), dir).expect("core point");
    let path = geodesic_flow(&s, length, tol);
    path.samples.iter().map(|x| x.point().dot(&normal).abs()).fold(0.0, f64::max)
}

pub fn check_seams(cfg: &RunConfig) -> CheckOutcome {
    let tol = cfg.tol.min(1e-11);
    let z = Vector3::z();
    let mut worst = plane_drift(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), z, 5.0, tol);
    let mut detail = format!("equator {worst:.1e}");
    for e in End::ALL {
        let b = e.position();
        let normal = b.cross(&z).normalize();
        let p = (b + z * 2.0).normalize();
        let d = plane_drift(p, z.cross(&normal), normal, 5.0, tol);
        detail += &format!(", meridian {e} {d:.1e}");
        worst = worst.max(d);
    }
    outcome("seams-geodesic", worst <= 1e-6, detail)
}

pub const STRAIGHT_TARGETS: [&str; 9] = ["1", "2", "3", "12", "13", "21", "23", "31", "32"];

/// Conditions a found pair must meet; returns a failure description.
pub fn straight_pair_problems(target: &SyzygySequence, pair: &[CollisionOrbit; 2], cfg: &FinderConfig) -> Vec<String> {
    let mut bad = Vec::new();
    for o in pair {
        if o.realized.symbols != target.symbols {
            bad.push(format!("realized {} for {target}", o.realized));
        }
        if o.tails != (TailClass::Straight(o.start_end), TailClass::Straight(o.finish_end)) {
            bad.push(format!("tails {:?}", o.tails));
        }
        let deep = |d: Option<f64>| d.is_some_and(|d| d >= cfg.horizon_depth);
        if !deep(o.path.max_depth(o.finish_end)) || !deep(o.path.reversed().max_depth(o.start_end)) {
            bad.push("tails do not reach the horizon depth".into());
        }
        if o.shot.window > cfg.bisection_tol {
            bad.push(format!("window {:.2e}", o.shot.window));
        }
        if seam_recrossing(&o.realized, Region::Upper) {
            bad.push("seam recrossed in one domain".into());
        }
    }
    let m = mirror(&pair[0]).core_distance(&pair[1]);
    if m > 1e-6 {
        bad.push(format!("mirror distance {m:.2e}"));
    }
    let d = pair[0].core_distance(&pair[1]);
    if d <= 1e-3 {
        bad.push(format!("pair not distinct ({d:.2e})"));
    }
    bad
}

pub fn check_straight(cfg: &RunConfig) -> (CheckOutcome, Option<[CollisionOrbit; 2]>, Option<[CollisionOrbit; 2]>) {
    let finder = cfg.finder();
    let start = Instant::now();
    let mut problems = Vec::new();
    let (mut one, mut thirty_one) = (None, None);
    let mut worst_mirror = 0.0f64;
    for t in STRAIGHT_TARGETS {
        let target: SyzygySequence = t.parse().expect("literal");
        match find_straight(&target, &finder) {
            Ok(pair) => {
                worst_mirror = worst_mirror.max(mirror(&pair[0]).core_distance(&pair[1]));
                problems.extend(straight_pair_problems(&target, &pair, &finder).into_iter().map(|p| format!("{t}: {p}")));
                match t {
                    "1" => one = Some(pair),
                    "31" => thirty_one = Some(pair),
                    _ => {}
                }
            }
            Err(e) => problems.push(format!("{t}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = if problems.is_empty() {
        format!("9 targets, max mirror distance {worst_mirror:.1e} ({secs:.1} s)")
    } else {
        problems.join("; ")
    };
    (outcome("straight-orbits", problems.is_empty() && secs < 600.0, detail), one, thirty_one)
}

pub fn check_thirty_one(pair: &[CollisionOrbit; 2]) -> CheckOutcome {
    let mut seen = Vec::new();
    for o in pair {
        match crossings(&o.path) {
            Ok(c) => seen.push(c.iter().map(|c| c.seam.label().to_string()).collect::<String>()),
            Err(e) => seen.push(e.to_string()),
        }
    }
    outcome("fig3-31", seen.iter().all(|s| s == "31"), format!("crossings {seen:?}"))
}

pub fn check_winding(one: &CollisionOrbit, cfg: &RunConfig) -> CheckOutcome {
    let finder = cfg.finder();
    let mut details = Vec::new();
    let mut ok = true;
    for eps in [1e-3, 1e-2] {
        match find_winding(one, eps, cfg.family.max(3), &finder) {
            Ok(family) => {
                for sign in [1.0, -1.0] {
                    let members: Vec<&CollisionOrbit> = family
                        .iter()
                        .filter(|o| o.perturbation.is_some_and(|p| p.angle * sign > 0.0))
                        .collect();
                    let good = members
                        .iter()
                        .filter(|o| {
                            o.realized.core_symbols() == [Seam::One]
                                && matches!(o.tails, (TailClass::Winding(End::B23, _), TailClass::Winding(End::B23, _)))
                                && alternates_in(o, End::B23)
                        })
                        .count();
                    ok &= good >= 3;
                    details.push(format!("eps {eps:+e}: {good} winding", eps = sign * eps));
                }
            }
            Err(e) => {
                ok = false;
                details.push(format!("eps {eps}: {e}"));
            }
        }
    }
    outcome("winding-family", ok, details.join(", "))
}

/// Both tails of `o` cross only the two seams of `end`, alternately.
fn alternates_in(o: &CollisionOrbit, end: End) -> bool {
    let s = &o.realized.symbols;
    let Some((a, b)) = o.realized.core else { return false };
    let ok = |t: &[Seam]| t.len() >= 2 && t.iter().all(|x| end.is_adjacent(*x)) && t.windows(2).all(|w| w[0] != w[1]);
    ok(&s[..a]) && ok(&s[b..])
}

pub fn check_lift(orbit: &CollisionOrbit, cfg: &RunConfig) -> CheckOutcome {
    let run = || -> crate::Result<String> {
        let lifted = lift_orbit(orbit, &cfg.lift_options())?;
        let r = verify_solution(&lifted, 1e-5)?;
        let tc = r.collision_time.as_ref();
        let geometric = tc.is_some_and(|c| c.ratios.iter().all(|q| *q > 0.0 && *q < 0.5) && c.t_c.is_finite());
        let ok = r.status == VerificationStatus::Passed
            && r.max_abs_energy <= 1e-8
            && r.max_abs_angular_momentum <= 1e-10
            && r.max_inertia_error <= 1e-8
            && r.pair_distance_monotone == Some(true)
            && r.final_pair_distance.is_some_and(|d| d < 1e-3)
            && geometric;
        let detail = format!(
            "eq1 {:.1e}, |E| {:.1e}, |C| {:.1e}, |I-1| {:.1e}, final pair distance {:.1e}, t_c {:?}",
            r.eq1_residual,
            r.max_abs_energy,
            r.max_abs_angular_momentum,
            r.max_inertia_error,
            r.final_pair_distance.unwrap_or(f64::NAN),
            tc.map(|c| c.t_c)
        );
        if ok {
            Ok(detail)
        } else {
            Err(crate::Error::InvalidInput(detail))
        }
    };
    match run() {
        Ok(d) => outcome("lift-31", true, d),
        Err(e) => outcome("lift-31", false, e.to_string()),
    }
}

pub fn check_syzygy(seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut idempotent = true;
    for _ in 0..1000 {
        let n = rng.gen_range(0..40);
        let word = SyzygySequence::finite((0..n).map(|_| Seam::ALL[rng.gen_range(0..3)]).collect());
        let once = cancel_stutters(&word);
        idempotent &= cancel_stutters(&once) == once && once.is_stutter_free();
    }
    let homotopy = cancel_stutters(&"1233".parse().expect("literal")).digits() == "12";
    // A loop once around B12 at depth 1 crosses seams 1 and 2 alternately.
    let start = crate::geodesic::PathSample::cusp_launch(End::B12, 1.0, 0.3);
    let loop_path = crate::geodesic::ReducedPath {
        samples: (0..=48)
            .map(|k| {
                let phi = 0.3 + 4.0 * PI * k as f64 / 48.0;
                let c = crate::geodesic::CuspState { phi, dtau: 0.0, dphi: 1.0, ..start.cusp.expect("cusp launch") };
                crate::geodesic::PathSample::from_cusp(k as f64, c)
            })
            .collect(),
    };
    let loop_code = code(&loop_path).map(|c| c.digits()).unwrap_or_default();
    let alternating = loop_code == "2121" || loop_code == "1212";
    outcome(
        "syzygy-coder",
        idempotent && homotopy && alternating,
        format!("idempotent on 1000 words: {idempotent}, 1233 -> 12: {homotopy}, loop around B12 codes {loop_code}"),
    )
}

/// Largest core distance between two orbits of the same word, with
/// arclength aligned at their first seam crossing.
pub fn crossing_aligned_distance(a: &CollisionOrbit, b: &CollisionOrbit) -> crate::Result<f64> {
    let first = |o: &CollisionOrbit| -> crate::Result<f64> {
        crossings(&o.path)?.first().map(|c| c.sigma).ok_or(crate::Error::EmptySequence)
    };
    Ok(aligned_distance(&a.path, first(a)?, &b.path, first(b)?))
}

pub fn check_d0(cfg: &RunConfig) -> CheckOutcome {
    let target: SyzygySequence = "31".parse().expect("literal");
    let at = |d0: f64| find_straight(&target, &FinderConfig { d0, ..cfg.finder() });
    let run = || -> crate::Result<f64> {
        let (a, b) = (at(4.0)?, at(6.0)?);
        Ok(crossing_aligned_distance(&a[0], &b[0])?.max(crossing_aligned_distance(&a[1], &b[1])?))
    };
    match run() {
        Ok(d) => outcome("d0-robust", d <= 1e-4, format!("core change {d:.1e} from d0 = 4 to 6")),
        Err(e) => outcome("d0-robust", false, e.to_string()),
    }
}

/// Runs the full suite in a fixed order.
pub fn run_all(cfg: &RunConfig) -> Vec<CheckOutcome> {
    let mut out = check_dynamics(cfg.seed);
    out.push(check_submersion(cfg.seed));
    out.extend(check_curvature(cfg));
    out.push(check_seams(cfg));
    let (straight, one, thirty_one) = check_straight(cfg);
    out.push(straight);
    match &thirty_one {
        Some(pair) => {
            out.push(check_thirty_one(pair));
            out.push(check_lift(&pair[0], cfg));
        }
        None => {
            out.push(outcome("fig3-31", false, "no 31 pair".into()));
            out.push(outcome("lift-31", false, "no 31 pair".into()));
        }
    }
    match &one {
        Some(pair) => out.push(check_winding(&pair[0], cfg)),
        None => out.push(outcome("winding-family", false, "no straight 1 orbit".into())),
    }
    out.push(check_syzygy(cfg.seed));
    out.push(check_d0(cfg));
    out
}
