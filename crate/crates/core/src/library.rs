//! Versioned, append-only JSON library of found orbits.
//!
//! Records hold what is needed to regenerate an orbit deterministically
//! (shot parameters and, for winding orbits, the perturbation); the path
//! itself lives in a CSV next to the library.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::TailClass;
use crate::lift::VerificationReport;
use crate::orbit::{perturbed_at, straight_from_shot, CollisionOrbit, FinderConfig, Perturbation, ShotParameters};
use crate::shape::End;
use crate::syzygy::{SequenceKind, SyzygySequence};

pub const LIBRARY_FORMAT: &str = "pants-orbit-library";
pub const LIBRARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrbitKind {
    #[serde(rename = "S")]
    Straight,
    #[serde(rename = "W")]
    Winding,
}

impl OrbitKind {
    pub fn tag(self) -> char {
        match self {
            OrbitKind::Straight => 'S',
            OrbitKind::Winding => 'W',
        }
    }
}

/// `<sequence>-<S|W>-<ordinal>`, e.g. `31-S-0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrbitId {
    pub sequence: String,
    pub kind: OrbitKind,
    pub ordinal: usize,
}

impl fmt::Display for OrbitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.sequence, self.kind.tag(), self.ordinal)
    }
}

impl FromStr for OrbitId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("orbit id {s:?} is not of the form <sequence>-<S|W>-<n>"));
        let mut parts = s.rsplitn(3, '-');
        let ordinal = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let kind = match parts.next() {
            Some("S") => OrbitKind::Straight,
            Some("W") => OrbitKind::Winding,
            _ => return Err(bad()),
        };
        let sequence = parts.next().ok_or_else(bad)?;
        let seq: SyzygySequence = sequence.parse()?;
        if seq.kind() != SequenceKind::Finite || seq.core.is_some() || seq.is_empty() {
            return Err(bad());
        }
        Ok(OrbitId { sequence: seq.digits(), kind, ordinal })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub id: String,
    pub sequence: String,
    pub kind: OrbitKind,
    pub ordinal: usize,
    pub start_end: End,
    pub finish_end: End,
    pub realized: String,
    pub shot: ShotParameters,
    pub perturbation: Option<Perturbation>,
    /// Family size parameter the winding orbit was generated with.
    pub eps: Option<f64>,
    pub launch_sigma: f64,
    pub length: f64,
    pub tails: (TailClass, TailClass),
    pub mirror_of: Option<String>,
    /// Path CSV, relative to the library file.
    pub path_file: String,
}

impl OrbitRecord {
    pub fn new(orbit: &CollisionOrbit, id: &OrbitId, eps: Option<f64>, path_file: String) -> Self {
        let kind = if orbit.is_straight() { OrbitKind::Straight } else { OrbitKind::Winding };
        OrbitRecord {
            id: id.to_string(),
            sequence: id.sequence.clone(),
            kind,
            ordinal: id.ordinal,
            start_end: orbit.start_end,
            finish_end: orbit.finish_end,
            realized: orbit.realized.to_string(),
            shot: orbit.shot,
            perturbation: orbit.perturbation,
            eps,
            launch_sigma: orbit.launch_sigma,
            length: orbit.path.length(),
            tails: orbit.tails,
            mirror_of: None,
            path_file,
        }
    }

    /// Recomputes the orbit from the stored launch (and perturbation).
    pub fn regenerate(&self, cfg: &FinderConfig) -> Result<CollisionOrbit> {
        let target: SyzygySequence = self.sequence.parse()?;
        let straight = straight_from_shot(&target, &self.shot, cfg)?;
        match self.perturbation {
            None => Ok(straight),
            Some(p) => perturbed_at(&straight, p.sigma, p.angle, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub id: String,
    pub report_file: String,
    pub trajectory_file: String,
    pub passed: bool,
    pub eq1_residual: f64,
    pub max_abs_energy: f64,
    pub max_abs_angular_momentum: f64,
    pub max_inertia_error: f64,
    pub t_c: Option<f64>,
}

impl VerificationRecord {
    pub fn new(id: &str, report: &VerificationReport, report_file: String, trajectory_file: String) -> Self {
        VerificationRecord {
            id: id.to_string(),
            report_file,
            trajectory_file,
            passed: report.status == crate::lift::VerificationStatus::Passed,
            eq1_residual: report.eq1_residual,
            max_abs_energy: report.max_abs_energy,
            max_abs_angular_momentum: report.max_abs_angular_momentum,
            max_inertia_error: report.max_inertia_error,
            t_c: report.collision_time.as_ref().map(|c| c.t_c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitLibrary {
    pub format: String,
    pub version: u32,
    /// Records by sequence, in insertion order within each sequence.
    pub orbits: BTreeMap<String, Vec<OrbitRecord>>,
    pub verifications: Vec<VerificationRecord>,
}

impl Default for OrbitLibrary {
    fn default() -> Self {
        OrbitLibrary {
            format: LIBRARY_FORMAT.into(),
            version: LIBRARY_VERSION,
            orbits: BTreeMap::new(),
            verifications: Vec::new(),
        }
    }
}

impl OrbitLibrary {
    pub fn from_json(text: &str) -> Result<Self> {
        let lib: OrbitLibrary = serde_json::from_str(text).map_err(|e| Error::Parse(format!("orbit library: {e}")))?;
        if lib.format != LIBRARY_FORMAT {
            return Err(Error::Parse(format!("not an orbit library (format {:?})", lib.format)));
        }
        if lib.version != LIBRARY_VERSION {
            return Err(Error::Parse(format!(
                "orbit library version {} is not supported (expected {LIBRARY_VERSION})",
                lib.version
            )));
        }
        Ok(lib)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    /// Loads `path`, or starts an empty library if it does not exist.
    pub fn open(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::Io(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes via a temporary file so a crash never leaves a torn library.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn get(&self, id: &str) -> Option<&OrbitRecord> {
        let parsed: OrbitId = id.parse().ok()?;
        self.orbits.get(&parsed.sequence)?.iter().find(|r| r.id == id)
    }

    pub fn records(&self) -> impl Iterator<Item = &OrbitRecord> {
        self.orbits.values().flatten()
    }

    /// First unused ordinal for `sequence` and `kind`.
    pub fn next_ordinal(&self, sequence: &str, kind: OrbitKind) -> usize {
        self.orbits
            .get(sequence)
            .map_or(0, |v| v.iter().filter(|r| r.kind == kind).map(|r| r.ordinal + 1).max().unwrap_or(0))
    }

    /// Appends a record. An identical record already present is a no-op
    /// (returns `false`); a different record under the same id is refused.
    pub fn append(&mut self, record: OrbitRecord) -> Result<bool> {
        if let Some(old) = self.get(&record.id) {
            if *old == record {
                return Ok(false);
            }
            return Err(Error::InvalidInput(format!("library already holds a different orbit {}", record.id)));
        }
        self.orbits.entry(record.sequence.clone()).or_default().push(record);
        Ok(true)
    }

    pub fn append_verification(&mut self, record: VerificationRecord) -> Result<()> {
        if self.get(&record.id).is_none() {
            return Err(Error::InvalidInput(format!("no orbit {} in the library", record.id)));
        }
        self.verifications.push(record);
        Ok(())
    }
}
