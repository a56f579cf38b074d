//! Syzygy sequences: the ordered collinear arcs a reduced path crosses.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geodesic::{hermite, hermite_derivative, CuspState, PathSample, ReducedPath};
use crate::shape::{End, Seam};

/// Values of `u3` (or `sin phi` in a cusp chart) below this are treated as on the equator.
pub const GRAZING: f64 = 1e-9;
/// Crossings are localized to this precision in reduced arclength.
pub const CROSSING_TOL: f64 = 1e-10;
/// Crossings this close (angular) to a puncture cannot be labelled from the core chart.
pub const AMBIGUITY_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub sigma: f64,
    pub seam: Seam,
    /// Whether the path came from the upper hemisphere (`u3 > 0`).
    pub from_upper: bool,
}

/// One interpolation interval of a path, in the chart both ends share.
struct Segment<'a> {
    p: &'a PathSample,
    q: &'a PathSample,
    h: f64,
    end: Option<End>,
}

impl<'a> Segment<'a> {
    fn new(p: &'a PathSample, q: &'a PathSample) -> Self {
        let end = match (p.cusp, q.cusp) {
            (Some(a), Some(b)) if a.end == b.end => Some(a.end),
            _ => None,
        };
        Segment { p, q, h: q.sigma - p.sigma, end }
    }

    /// `u3` extrinsically, `phi` in a cusp chart; cubic in `s`.
    fn cubic(&self, s: f64) -> f64 {
        match (self.end, self.p.cusp, self.q.cusp) {
            (Some(_), Some(a), Some(b)) => hermite(a.phi, a.dphi, b.phi, b.dphi, self.h, s),
            _ => hermite(self.p.point()[2], self.p.state.tangent[2], self.q.point()[2], self.q.state.tangent[2], self.h, s),
        }
    }

    fn cubic_rate(&self, s: f64) -> f64 {
        match (self.end, self.p.cusp, self.q.cusp) {
            (Some(_), Some(a), Some(b)) => hermite_derivative(a.phi, a.dphi, b.phi, b.dphi, self.h, s),
            _ => hermite_derivative(self.p.point()[2], self.p.state.tangent[2], self.q.point()[2], self.q.state.tangent[2], self.h, s),
        }
    }

    /// Signed height over the equator (same sign as `u3`).
    fn height(&self, s: f64) -> f64 {
        match self.end {
            Some(_) => self.cubic(s).sin(),
            None => self.cubic(s),
        }
    }

    /// Interior critical points of the cubic, where double crossings could hide.
    fn critical_points(&self) -> Vec<f64> {
        let (d0, dm, d1) = (self.cubic_rate(0.0), self.cubic_rate(0.5), self.cubic_rate(1.0));
        // Quadratic through (0, d0), (1/2, dm), (1, d1).
        let a = 2.0 * d0 - 4.0 * dm + 2.0 * d1;
        let b = -3.0 * d0 + 4.0 * dm - d1;
        let c = d0;
        let mut roots = Vec::new();
        if a.abs() < 1e-300 {
            if b != 0.0 {
                roots.push(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let qq = -0.5 * (b + b.signum() * sq);
                if qq != 0.0 {
                    roots.push(qq / a);
                    roots.push(c / qq);
                } else {
                    roots.push(0.0);
                }
            }
        }
        roots.retain(|&r| r > 0.0 && r < 1.0);
        roots.sort_by(f64::total_cmp);
        roots
    }

    fn sigma(&self, s: f64) -> f64 {
        self.p.sigma + s * self.h
    }

    fn point(&self, s: f64) -> Vector3<f64> {
        let (p, q) = (self.p, self.q);
        Vector3::from_fn(|i, _| hermite(p.point()[i], p.state.tangent[i], q.point()[i], q.state.tangent[i], self.h, s))
            .normalize()
    }

    fn label(&self, s: f64) -> Result<Seam> {
        if let Some(end) = self.end {
            return Ok(CuspState::seam_at(end, self.cubic(s)));
        }
        let u = self.point(s);
        let dist = End::ALL.iter().map(|e| e.angular_distance(&u)).fold(f64::INFINITY, f64::min);
        let seam = Seam::at_longitude(u[1].atan2(u[0]));
        match seam {
            Some(seam) if dist >= AMBIGUITY_RADIUS => Ok(seam),
            _ => Err(Error::AmbiguousCrossing { sigma: self.sigma(s), distance: dist }),
        }
    }
}

fn side(h: f64) -> i8 {
    if h > GRAZING {
        1
    } else if h < -GRAZING {
        -1
    } else {
        0
    }
}

/// Transversal equator crossings in order; tangencies and sub-[`GRAZING`]
/// excursions are ignored.
pub fn crossings(path: &ReducedPath) -> Result<Vec<Crossing>> {
    let mut out = Vec::new();
    let mut last_side = 0i8;
    // Evaluation points since the last one strictly on a side: (segment, s).
    let mut pending: Vec<(usize, f64)> = Vec::new();
    let segments: Vec<Segment> = path.samples.windows(2).map(|w| Segment::new(&w[0], &w[1])).collect();
    for (k, seg) in segments.iter().enumerate() {
        let mut pts = vec![0.0];
        pts.extend(seg.critical_points());
        pts.push(1.0);
        for s in pts {
            let sd = side(seg.height(s));
            pending.push((k, s));
            if sd == 0 {
                continue;
            }
            if last_side != 0 && sd != last_side {
                let off_side = |k: usize, s: f64| segments[k].height(s) * last_side as f64 <= GRAZING;
                let pair = pending
                    .windows(2)
                    .find(|w| w[0].0 == w[1].0 && off_side(w[1].0, w[1].1))
                    .map(|w| (w[0].0, w[0].1, w[1].1));
                if let Some((kk, mut lo, mut hi)) = pair {
                    let sg = &segments[kk];
                    while (hi - lo) * sg.h > CROSSING_TOL && hi - lo > f64::EPSILON {
                        let mid = 0.5 * (lo + hi);
                        if off_side(kk, mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let root = 0.5 * (lo + hi);
                    out.push(Crossing { sigma: sg.sigma(root), seam: sg.label(root)?, from_upper: last_side > 0 });
                }
            }
            last_side = sd;
            pending.clear();
            pending.push((k, s));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    Finite,
    SemiInfiniteTruncated,
    BiInfiniteTruncated,
}

/// A syzygy sequence, possibly observed only up to a finite horizon at
/// either end.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SyzygySequence {
    pub symbols: Vec<Seam>,
    pub truncated_start: bool,
    pub truncated_end: bool,
    /// Half-open range of the core word between tails, when tails were split off.
    pub core: Option<(usize, usize)>,
}

impl SyzygySequence {
    pub fn finite(symbols: Vec<Seam>) -> Self {
        SyzygySequence { symbols, ..Default::default() }
    }

    pub fn kind(&self) -> SequenceKind {
        match (self.truncated_start, self.truncated_end) {
            (false, false) => SequenceKind::Finite,
            (true, true) => SequenceKind::BiInfiniteTruncated,
            _ => SequenceKind::SemiInfiniteTruncated,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn is_stutter_free(&self) -> bool {
        self.first_stutter().is_none()
    }

    pub fn first_stutter(&self) -> Option<usize> {
        self.symbols.windows(2).position(|w| w[0] == w[1])
    }

    pub fn core_symbols(&self) -> &[Seam] {
        match self.core {
            Some((a, b)) => &self.symbols[a..b],
            None => &self.symbols,
        }
    }

    pub fn digits(&self) -> String {
        self.symbols.iter().map(|s| char::from(b'0' + s.label())).collect()
    }
}

impl fmt::Display for SyzygySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.digits();
        if self.truncated_start {
            f.write_str("…")?;
        }
        match self.core {
            Some((a, b)) => write!(f, "{}|{}|{}", &d[..a], &d[a..b], &d[b..])?,
            None => f.write_str(&d)?,
        }
        if self.truncated_end {
            f.write_str("…")?;
        }
        Ok(())
    }
}

impl FromStr for SyzygySequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut body = s.trim();
        let mut seq = SyzygySequence::default();
        for marker in ["…", "..."] {
            if let Some(rest) = body.strip_prefix(marker) {
                seq.truncated_start = true;
                body = rest;
            }
            if let Some(rest) = body.strip_suffix(marker) {
                seq.truncated_end = true;
                body = rest;
            }
        }
        let parts: Vec<&str> = body.split('|').collect();
        let parse = |p: &str| -> Result<Vec<Seam>> {
            p.chars()
                .map(|c| c.to_digit(10).and_then(|d| Seam::from_label(d as u8)).ok_or(Error::InvalidSymbol(c)))
                .collect()
        };
        match parts.as_slice() {
            [one] => seq.symbols = parse(one)?,
            [a, b, c] => {
                let (a, b, c) = (parse(a)?, parse(b)?, parse(c)?);
                seq.core = Some((a.len(), a.len() + b.len()));
                seq.symbols = [a, b, c].concat();
            }
            _ => return Err(Error::Parse(format!("malformed syzygy sequence {s:?}"))),
        }
        Ok(seq)
    }
}

/// Labels of the seams crossed by `path`, in order.
pub fn code(path: &ReducedPath) -> Result<SyzygySequence> {
    Ok(SyzygySequence::finite(crossings(path)?.into_iter().map(|c| c.seam).collect()))
}

/// Deletes adjacent equal pairs until none remain.
pub fn cancel_stutters(seq: &SyzygySequence) -> SyzygySequence {
    // Each symbol is an involution, so stack reduction reaches the unique normal form.
    let mut out: Vec<Seam> = Vec::with_capacity(seq.symbols.len());
    for &s in &seq.symbols {
        if out.last() == Some(&s) {
            out.pop();
        } else {
            out.push(s);
        }
    }
    SyzygySequence { symbols: out, truncated_start: seq.truncated_start, truncated_end: seq.truncated_end, core: None }
}

/// Hemisphere in which a path segment lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Upper,
    Lower,
}

impl Region {
    pub fn flipped(self) -> Region {
        match self {
            Region::Upper => Region::Lower,
            Region::Lower => Region::Upper,
        }
    }
}

/// Address of a fundamental domain as a word in `{±1, ±2}`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TilingWord(pub Vec<i8>);

/// Cutting the sphere along seams 1 and 2 leaves a disc (both hemispheres
/// glued along seam 3). Crossing seam `a` in {1, 2} upward from the lower
/// hemisphere moves to the neighbouring domain `+a`, downward `-a`; crossing
/// seam 3 stays in the same domain. Every crossing swaps hemispheres.
pub fn tiling_word(seq: &SyzygySequence, start: Region) -> Result<TilingWord> {
    if let Some(position) = seq.first_stutter() {
        return Err(Error::Stutter { position });
    }
    let mut region = start;
    let mut word = Vec::new();
    for &s in &seq.symbols {
        if s != Seam::Three {
            let a = s.label() as i8;
            word.push(if region == Region::Lower { a } else { -a });
        }
        region = region.flipped();
    }
    Ok(TilingWord(word))
}

/// True when the lifted path would cross one lifted seam twice, which a
/// geodesic of the (non-positively curved) universal cover cannot do.
pub fn seam_recrossing(seq: &SyzygySequence, start: Region) -> bool {
    let mut region = start;
    let mut domain: Vec<i8> = Vec::new();
    let mut seen: Vec<(Vec<i8>, i8)> = Vec::new();
    for &s in &seq.symbols {
        let id = if s == Seam::Three {
            (domain.clone(), 3)
        } else {
            let a = s.label() as i8;
            let g = if region == Region::Lower { a } else { -a };
            let before = domain.clone();
            if domain.last() == Some(&-g) {
                domain.pop();
            } else {
                domain.push(g);
            }
            // Name the lifted seam by the shorter of the two domains it separates.
            if before.len() < domain.len() {
                (domain.clone(), 0)
            } else {
                (before, 0)
            }
        };
        if seen.contains(&id) {
            return true;
        }
        seen.push(id);
        region = region.flipped();
    }
    false
}

/// Start and finish ends of a straight orbit: no crossing may precede the
/// first symbol or follow the last, so each end is the puncture away from
/// the first (respectively last) seam.
pub fn resolve_ends(seq: &SyzygySequence) -> Result<(End, End)> {
    let (Some(&first), Some(&last)) = (seq.symbols.first(), seq.symbols.last()) else {
        return Err(Error::EmptySequence);
    };
    if let Some(position) = seq.first_stutter() {
        return Err(Error::Stutter { position });
    }
    Ok((first.opposite_end(), last.opposite_end()))
}
