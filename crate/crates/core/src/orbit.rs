//! Straight and winding collision orbits by shooting out of a leg.
//!
//! Geodesics are launched along `phi = const` rays from depth `d0` of the
//! start leg. A straight orbit realizing `s1..sk` separates launches whose
//! first symbol after `sk` is one seam of the finish leg from those whose
//! first symbol is the other; bisection on that predicate pins it down.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{classify_tail, flow, CuspState, FlowOptions, PathSample, ReducedPath, TailClass};
use crate::shape::{End, Seam};
use crate::syzygy::{code, crossings, resolve_ends, SyzygySequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinderConfig {
    /// Launch depth in the start leg.
    pub d0: f64,
    /// Number of launch angles in a scan.
    pub grid: usize,
    /// Reduced-length horizon for a single shot.
    pub horizon_length: f64,
    /// Depth at which a descending tail counts as having reached its end.
    pub horizon_depth: f64,
    pub tol: f64,
    pub max_step: f64,
    pub bisection_tol: f64,
    pub max_bisections: usize,
    /// Refinements around the best partial match when no bracket is seen.
    pub zoom_levels: usize,
    /// Tail crossings to observe before a winding tail is accepted.
    pub winding_crossings: usize,
    pub winding_length: f64,
    pub eps_max: f64,
    /// Worker threads; 0 uses all available.
    pub workers: usize,
}

impl Default for FinderConfig {
    fn default() -> Self {
        FinderConfig {
            d0: 5.0,
            grid: 720,
            horizon_length: 40.0,
            horizon_depth: 8.0,
            tol: 1e-11,
            max_step: 0.25,
            bisection_tol: 1e-10,
            max_bisections: 60,
            zoom_levels: 6,
            winding_crossings: 3,
            winding_length: 1e6,
            eps_max: 0.05,
            workers: 0,
        }
    }
}

impl FinderConfig {
    fn flow_options(&self) -> FlowOptions {
        FlowOptions { tol: self.tol, max_step: self.max_step }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.d0, self.horizon_length, self.horizon_depth, self.tol, self.max_step, self.bisection_tol];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("finder tolerances and horizons must be positive".into()));
        }
        if self.grid < 8 || self.d0 < 2.0 {
            return Err(Error::InvalidInput("scan needs grid >= 8 and d0 >= 2".into()));
        }
        Ok(())
    }

    /// Runs `f` on a pool sized by `workers`.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        if self.workers == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
}

/// Outward launch from depth `d0` of `end` at angle `phi`.
pub fn launch(end: End, d0: f64, phi: f64) -> PathSample {
    PathSample::cusp_launch(end, d0, phi)
}

fn descended(s: &PathSample, depth: f64) -> bool {
    matches!(s.cusp, Some(c) if c.dtau > 0.0 && c.depth() >= depth)
}

/// Flows from `start` until a leg is descended to `horizon_depth` or the
/// length horizon is spent.
pub fn shoot_from(start: &PathSample, cfg: &FinderConfig) -> ReducedPath {
    flow(start, cfg.horizon_length, &cfg.flow_options(), |s| descended(s, cfg.horizon_depth)).0
}

pub fn shoot(end: End, phi: f64, cfg: &FinderConfig) -> ReducedPath {
    shoot_from(&launch(end, cfg.d0, phi), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub phi: f64,
    /// `None` when a crossing could not be labelled.
    pub code: Option<SyzygySequence>,
    pub tail: TailClass,
}

/// Cell-centred launch angles, symmetric under `phi -> 2 pi - phi`.
pub fn launch_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * (i as f64 + 0.5) / n as f64).collect()
}

pub fn scan(start_end: End, d0: f64, n: usize, horizon: f64, cfg: &FinderConfig) -> Result<Vec<ScanRow>> {
    let cfg = FinderConfig { d0, grid: n, horizon_length: horizon, ..*cfg };
    cfg.validate()?;
    Ok(cfg.install(|| {
        launch_grid(n)
            .into_par_iter()
            .map(|phi| {
                let path = shoot(start_end, phi, &cfg);
                ScanRow { phi, code: code(&path).ok(), tail: classify_tail(&path, cfg.horizon_depth) }
            })
            .collect()
    }))
}

/// First symbol after the target word, observed or (if the path has
/// descended the finish leg without crossing) the seam it is drifting toward.
/// `None` when the path does not start with the target.
pub fn tail_symbol(path: &ReducedPath, target: &[Seam], finish: End, horizon_depth: f64) -> Option<Seam> {
    let seams: Vec<Seam> = crossings(path).ok()?.into_iter().map(|c| c.seam).collect();
    if seams.len() < target.len() || seams[..target.len()] != *target {
        return None;
    }
    // Past the last target seam the next crossing can only switch between
    // the two seams of the finish leg through the finish collision itself.
    if let Some(&s) = seams.get(target.len()) {
        return finish.is_adjacent(s).then_some(s);
    }
    let last = path.last().cusp.filter(|c| c.end == finish)?;
    if last.depth() < horizon_depth || last.dphi == 0.0 {
        return None;
    }
    let line = if last.dphi > 0.0 { (last.phi / PI).floor() + 1.0 } else { (last.phi / PI).ceil() - 1.0 };
    Some(CuspState::seam_at(finish, line * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotParameters {
    pub start_end: End,
    pub d0: f64,
    pub phi: f64,
    /// Final bisection window in `phi`.
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Arclength of the perturbed sample, relative to the launch.
    pub sigma: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionOrbit {
    pub path: ReducedPath,
    pub start_end: End,
    pub finish_end: End,
    pub realized: SyzygySequence,
    pub shot: ShotParameters,
    /// Arclength at which the launch state sits in `path`.
    pub launch_sigma: f64,
    /// Bisection windows, one per refinement.
    pub windows: Vec<f64>,
    pub perturbation: Option<Perturbation>,
    /// Ordinal of the mirror partner within its pair.
    pub mirror_of: Option<usize>,
    pub tails: (TailClass, TailClass),
}

impl CollisionOrbit {
    pub fn is_straight(&self) -> bool {
        self.perturbation.is_none()
    }

    /// Position at arclength `sigma` measured from the launch.
    pub fn point_from_launch(&self, sigma: f64) -> Option<nalgebra::Vector3<f64>> {
        self.path.point_at(sigma + self.launch_sigma)
    }

    pub fn core_distance(&self, other: &CollisionOrbit) -> f64 {
        aligned_distance(&self.path, self.launch_sigma, &other.path, other.launch_sigma)
    }
}

/// Largest distance between core samples of `a` and `b` with the two
/// arclength origins identified.
pub fn aligned_distance(a: &ReducedPath, origin_a: f64, b: &ReducedPath, origin_b: f64) -> f64 {
    a.samples
        .iter()
        .filter(|s| s.cusp.is_none())
        .filter_map(|s| b.point_at(s.sigma - origin_a + origin_b).map(|p| (p - s.point()).norm()))
        .fold(0.0, f64::max)
}

fn validate_target(target: &SyzygySequence) -> Result<()> {
    if target.is_empty() {
        return Err(Error::EmptySequence);
    }
    if target.truncated_start || target.truncated_end || target.core.is_some() {
        return Err(Error::InvalidInput(format!("target {target} must be a plain finite word")));
    }
    if let Some(p) = target.first_stutter() {
        return Err(Error::InvalidInput(format!("target {target} has a stutter at position {p}")));
    }
    Ok(())
}

/// Straight orbit from a converged launch angle: the shot forward plus the
/// radial descent backward into the start leg.
pub fn straight_from_shot(target: &SyzygySequence, shot: &ShotParameters, cfg: &FinderConfig) -> Result<CollisionOrbit> {
    let (start, finish) = resolve_ends(target)?;
    let cfg = FinderConfig { d0: shot.d0, ..*cfg };
    let l = launch(start, shot.d0, shot.phi);
    let forward = shoot_from(&l, &cfg);
    let backward = shoot_from(&l.reversed(), &cfg);
    let (path, launch_sigma) = ReducedPath::join(&backward, &forward);
    let realized = code(&path)?;
    let tails = (classify_tail(&path.reversed(), cfg.horizon_depth), classify_tail(&path, cfg.horizon_depth));
    if realized.symbols != target.symbols
        || tails != (TailClass::Straight(start), TailClass::Straight(finish))
    {
        return Err(Error::ResolutionExceeded(format!(
            "shot at phi = {} realizes {realized} with tails {tails:?}, not straight {target}",
            shot.phi
        )));
    }
    Ok(CollisionOrbit {
        path,
        start_end: start,
        finish_end: finish,
        realized,
        shot: *shot,
        launch_sigma,
        windows: Vec::new(),
        perturbation: None,
        mirror_of: None,
        tails,
    })
}

fn bisect(
    start: End,
    finish: End,
    target: &[Seam],
    (mut lo, mut hi): (f64, f64),
    (v_lo, v_hi): (Seam, Seam),
    cfg: &FinderConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut windows = vec![hi - lo];
    while hi - lo > cfg.bisection_tol {
        if windows.len() > cfg.max_bisections {
            return Err(Error::ResolutionExceeded(format!("bisection budget of {} steps spent", cfg.max_bisections)));
        }
        let mid = 0.5 * (lo + hi);
        let path = shoot(start, mid, cfg);
        match tail_symbol(&path, target, finish, cfg.horizon_depth) {
            Some(s) if s == v_lo => lo = mid,
            Some(s) if s == v_hi => hi = mid,
            _ => {
                return Err(Error::ResolutionExceeded(format!(
                    "launch at phi = {mid} left the bracket [{lo}, {hi}] without a tail symbol"
                )))
            }
        }
        windows.push(hi - lo);
    }
    Ok((0.5 * (lo + hi), windows))
}

/// Number of leading target symbols a shot realizes.
fn prefix_len(path: &ReducedPath, target: &[Seam]) -> usize {
    crossings(path).map_or(0, |c| c.iter().zip(target).take_while(|(c, t)| c.seam == **t).count())
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    phi: f64,
    prefix: usize,
    value: Option<Seam>,
}

type Bracket = ((f64, Seam), (f64, Seam));

/// Finds the single sign change of the tail symbol among launches in
/// `(lo, hi)`, zooming around the best partial match when the grid is too
/// coarse to see one.
fn half_bracket(start: End, finish: End, target: &[Seam], (lo, hi): (f64, f64), cfg: &FinderConfig) -> Result<Bracket> {
    let probe = |phi: f64| {
        let path = shoot(start, phi, cfg);
        Probe { phi, prefix: prefix_len(&path, target), value: tail_symbol(&path, target, finish, cfg.horizon_depth) }
    };
    let grid: Vec<f64> = launch_grid(cfg.grid).into_iter().filter(|p| *p > lo && *p < hi).collect();
    let mut probes: Vec<Probe> = grid.par_iter().map(|&p| probe(p)).collect();
    for _ in 0..=cfg.zoom_levels {
        let found: Vec<Bracket> = probes
            .windows(2)
            .filter_map(|w| match (w[0].value, w[1].value) {
                (Some(a), Some(b)) if a != b => Some(((w[0].phi, a), (w[1].phi, b))),
                _ => None,
            })
            .collect();
        match found.len() {
            1 => return Ok(found[0]),
            0 => {}
            k => {
                return Err(Error::ResolutionExceeded(format!(
                    "{k} brackets in ({lo}, {hi}); expected exactly one"
                )))
            }
        }
        let best = (0..probes.len()).max_by_key(|&k| probes[k].prefix).filter(|&k| probes[k].prefix > 0);
        let Some(k) = best else { break };
        let a = if k == 0 { lo } else { probes[k - 1].phi };
        let b = probes.get(k + 1).map_or(hi, |p| p.phi);
        let n = (cfg.grid / 8).max(16);
        probes = (1..n).map(|m| a + (b - a) * m as f64 / n as f64).collect::<Vec<_>>().par_iter().map(|&p| probe(p)).collect();
    }
    Err(Error::ResolutionExceeded(format!(
        "no bracket in ({lo}, {hi}) at grid {} after {} zoom levels",
        cfg.grid, cfg.zoom_levels
    )))
}

/// The two straight orbits realizing `target`, upper launch first; the
/// second is found independently and then checked against the mirror of the first.
pub fn find_straight(target: &SyzygySequence, cfg: &FinderConfig) -> Result<[CollisionOrbit; 2]> {
    validate_target(target)?;
    cfg.validate()?;
    let (start, finish) = resolve_ends(target)?;
    let symbols = target.symbols.clone();
    let solve = |half: (f64, f64)| -> Result<CollisionOrbit> {
        let ((a, va), (b, vb)) = half_bracket(start, finish, &symbols, half, cfg)?;
        let (phi, windows) = bisect(start, finish, &symbols, (a, b), (va, vb), cfg)?;
        let shot = ShotParameters { start_end: start, d0: cfg.d0, phi, window: *windows.last().unwrap() };
        let mut orbit = straight_from_shot(target, &shot, cfg)?;
        orbit.windows = windows;
        Ok(orbit)
    };
    let (a, b) = cfg.install(|| rayon::join(|| solve((0.0, PI)), || solve((PI, 2.0 * PI))));
    let (mut a, mut b) = (a?, b?);
    a.mirror_of = Some(1);
    b.mirror_of = Some(0);
    Ok([a, b])
}

/// Reflection `u3 -> -u3` of an orbit; an isometry, so still a geodesic.
pub fn mirror(orbit: &CollisionOrbit) -> CollisionOrbit {
    CollisionOrbit {
        path: orbit.path.mirrored(),
        shot: ShotParameters { phi: (2.0 * PI - orbit.shot.phi).rem_euclid(2.0 * PI), ..orbit.shot },
        perturbation: orbit.perturbation.map(|p| Perturbation { angle: -p.angle, ..p }),
        ..orbit.clone()
    }
}

fn rotate_tangent(s: &PathSample, angle: f64) -> PathSample {
    let u = s.point();
    let v = s.state.tangent;
    let w = v * angle.cos() + u.cross(&v) * angle.sin();
    PathSample::new(s.sigma, crate::geodesic::GeodesicState { point: s.state.point, tangent: w })
}

/// Flows until `crossings` seam crossings have been seen during one visit to a leg.
fn wind(start: &PathSample, cfg: &FinderConfig) -> ReducedPath {
    let mut visit: Option<(End, f64)> = None;
    let mut count = 0usize;
    flow(start, cfg.winding_length, &cfg.flow_options(), |s| {
        match (s.cusp, visit) {
            (Some(c), Some((e, cell))) if c.end == e => {
                let now = (c.phi / PI).floor();
                if now != cell {
                    count += (now - cell).abs() as usize;
                    visit = Some((e, now));
                }
            }
            (Some(c), _) => {
                visit = Some((c.end, (c.phi / PI).floor()));
                count = 0;
            }
            (None, _) => {
                visit = None;
                count = 0;
            }
        }
        count >= cfg.winding_crossings
    })
    .0
}

/// Splits off maximal tails of seams adjacent to the start and finish ends.
fn split_tails(seq: &SyzygySequence, start: End, finish: End) -> SyzygySequence {
    let s = &seq.symbols;
    let a = s.iter().take_while(|x| start.is_adjacent(**x)).count();
    let b = s.len() - s[a..].iter().rev().take_while(|x| finish.is_adjacent(**x)).count();
    SyzygySequence { symbols: s.clone(), truncated_start: a > 0, truncated_end: b < s.len(), core: Some((a, b.max(a))) }
}

/// Perturbs the tangent at the mid-arclength sample by `angle` and flows both ways.
pub fn perturbed(straight: &CollisionOrbit, angle: f64, cfg: &FinderConfig) -> Result<CollisionOrbit> {
    let p = &straight.path;
    let mid = 0.5 * (p.first().sigma + p.last().sigma);
    let k = p.samples.partition_point(|s| s.sigma < mid).min(p.len() - 1);
    perturbed_at(straight, p.samples[k].sigma - straight.launch_sigma, angle, cfg)
}

/// Straight-orbit state at arclength `sigma` from the launch, flowing from
/// the preceding sample when `sigma` is not a sample.
fn state_at(straight: &CollisionOrbit, sigma: f64, cfg: &FinderConfig) -> Result<PathSample> {
    let p = &straight.path;
    let target = sigma + straight.launch_sigma;
    if !(target >= p.first().sigma && target <= p.last().sigma) {
        return Err(Error::InvalidInput(format!("perturbation arclength {sigma} lies outside the orbit")));
    }
    let k = p.samples.partition_point(|s| s.sigma <= target).saturating_sub(1);
    let base = p.samples[k];
    let h = target - base.sigma;
    if h <= 1e-12 * target.abs().max(1.0) {
        return Ok(base);
    }
    Ok(*flow(&base, h, &cfg.flow_options(), |_| false).0.last())
}

/// Perturbs the tangent of `straight` at arclength `sigma` from its launch
/// by `angle` and flows both ways until both tails have wound.
pub fn perturbed_at(straight: &CollisionOrbit, sigma: f64, angle: f64, cfg: &FinderConfig) -> Result<CollisionOrbit> {
    let base = state_at(straight, sigma, cfg)?;
    let s = rotate_tangent(&base, angle);
    let forward = wind(&s, cfg);
    let backward = wind(&s.reversed(), cfg);
    let (path, at) = ReducedPath::join(&backward, &forward);
    let too_large = |why: String| Error::PerturbationTooLarge(format!("angle {angle}: {why}"));
    let raw = code(&path).map_err(|e| too_large(e.to_string()))?;
    let realized = split_tails(&raw, straight.start_end, straight.finish_end);
    if realized.core_symbols() != straight.realized.symbols.as_slice() {
        return Err(too_large(format!("core code {realized} differs from {}", straight.realized)));
    }
    let tails = (classify_tail(&path.reversed(), cfg.horizon_depth), classify_tail(&path, cfg.horizon_depth));
    match tails {
        (TailClass::Winding(a, _), TailClass::Winding(b, _)) if a == straight.start_end && b == straight.finish_end => {}
        other => return Err(too_large(format!("tails {other:?} are not winding in the original ends"))),
    }
    Ok(CollisionOrbit {
        path,
        realized,
        launch_sigma: at - sigma,
        windows: Vec::new(),
        perturbation: Some(Perturbation { sigma, angle }),
        mirror_of: None,
        tails,
        ..straight.clone()
    })
}

/// Family members at angles `±eps * j / count`, `j = 1..=count`, positive first.
pub fn find_winding(straight: &CollisionOrbit, eps: f64, count: usize, cfg: &FinderConfig) -> Result<Vec<CollisionOrbit>> {
    if eps == 0.0 {
        return Ok(vec![straight.clone()]);
    }
    if !(eps > 0.0) || eps > cfg.eps_max || count == 0 {
        return Err(Error::InvalidInput(format!("eps must lie in (0, {}] with count > 0", cfg.eps_max)));
    }
    if !straight.is_straight() {
        return Err(Error::InvalidInput("winding families start from a straight orbit".into()));
    }
    let angles: Vec<f64> = [1.0, -1.0]
        .iter()
        .flat_map(|sign| (1..=count).map(move |j| sign * eps * j as f64 / count as f64))
        .collect();
    cfg.install(|| angles.par_iter().map(|&a| perturbed(straight, a, cfg)).collect())
}
