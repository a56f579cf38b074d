use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use pants_core::config::RunConfig;
use pants_core::dynamics::{integrate, PlanarConfig, PlanarState, Trajectory};
use pants_core::geodesic::ReducedPath;
use pants_core::library::{OrbitId, OrbitKind, OrbitLibrary, OrbitRecord, VerificationRecord};
use pants_core::lift::{lift_orbit, verify_solution, VerificationStatus};
use pants_core::orbit::{find_straight, find_winding, CollisionOrbit};
use pants_core::selfcheck;
use pants_core::shape::{curvature_csv, curvature_grid};
use pants_core::syzygy::{code, SyzygySequence};
use pants_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pants", version, about = "Collision orbits of the zero-energy inverse-cube three-body problem")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags override the config file, which overrides built-in defaults.
#[derive(Args)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Launch depth in the start leg.
    #[arg(long, global = true)]
    d0: Option<f64>,
    /// Reduced-length horizon per shot.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Launch angles per scan.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Output directory (holds the orbit library).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the planar equations of motion from an initial-state file.
    Simulate { state: PathBuf },
    /// Reduce a trajectory CSV to a shape path and its syzygy code.
    Reduce { trajectory: PathBuf },
    /// Write the conformal factor and curvature on a spherical grid.
    Curvature,
    /// Find the straight collision orbits realizing each sequence.
    Find {
        #[arg(required = true)]
        sequences: Vec<String>,
    },
    /// Winding family around the straight orbit of a sequence.
    Wind { sequence: String },
    /// Lift a library orbit to a planar solution and verify it.
    Lift { id: String },
    /// Run the invariant suite.
    Check,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        apply!(tol, d0, horizon, grid, eps, out, workers, seed);
        c.validate()?;
        Ok(c)
    }
}

/// Initial-state file: TOML with `t_end`, `positions` and `velocities`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialState {
    t_end: f64,
    positions: [[f64; 2]; 3],
    velocities: [[f64; 2]; 3],
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        None => Ok(()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(io_err(path))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned())
}

fn library_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("library.json")
}

fn parse_target(s: &str) -> Result<SyzygySequence> {
    let t: SyzygySequence = s.parse()?;
    if t.truncated_start || t.truncated_end || t.core.is_some() {
        return Err(Error::InvalidInput(format!("target {s} must be a finite word over 1, 2, 3")));
    }
    Ok(t)
}

fn simulate(cfg: &RunConfig, file: &Path) -> Result<()> {
    let init: InitialState = toml::from_str(&read(file)?).map_err(|e| Error::Parse(format!("{}: {e}", file.display())))?;
    let config = PlanarConfig::from_xy(init.positions)?;
    let v = init.velocities.map(|[x, y]| num_complex::Complex64::new(x, y));
    let traj = integrate(&PlanarState::new(config, v), init.t_end, cfg.tol)?;
    let out = cfg.out.join(format!("{}.csv", stem(file)));
    ensure_parent(&out)?;
    traj.write_csv(&out)?;
    println!(
        "{} samples to t = {:.6} ({:?}, {} accepted / {} rejected steps) -> {}",
        traj.samples.len(),
        traj.samples.last().map_or(0.0, |s| s.0),
        traj.status,
        traj.stats.accepted,
        traj.stats.rejected,
        out.display()
    );
    Ok(())
}

fn reduce(cfg: &RunConfig, file: &Path) -> Result<()> {
    let traj = Trajectory::from_csv(&read(file)?)?;
    let path = ReducedPath::from_trajectory(&traj)?;
    let seq = code(&path)?;
    let out = cfg.out.join(format!("{}.path.csv", stem(file)));
    ensure_parent(&out)?;
    path.write_csv(&out)?;
    println!("code {seq} over reduced length {:.6} -> {}", path.length(), out.display());
    Ok(())
}

fn curvature(cfg: &RunConfig) -> Result<()> {
    let rows = curvature_grid(cfg.curvature_theta, cfg.curvature_phi, cfg.curvature_exclusion);
    let out = cfg.out.join("curvature.csv");
    write(&out, &curvature_csv(&rows))?;
    let negative = rows.iter().filter(|r| r.k < 0.0).count();
    let k_max = rows.iter().map(|r| r.k).fold(f64::NEG_INFINITY, f64::max);
    println!("{} points, {negative} with K < 0, max K = {k_max:.3e} -> {}", rows.len(), out.display());
    Ok(())
}

/// Writes the path CSV and appends the record.
fn store(lib: &mut OrbitLibrary, cfg: &RunConfig, orbit: &CollisionOrbit, id: &OrbitId, eps: Option<f64>, mirror: Option<String>) -> Result<()> {
    let rel = format!("paths/{id}.csv");
    write(&cfg.out.join(&rel), &orbit.path.to_csv())?;
    let record = OrbitRecord { mirror_of: mirror, ..OrbitRecord::new(orbit, id, eps, rel) };
    if !lib.append(record)? {
        println!("  {id} already in the library");
    }
    Ok(())
}

fn find(cfg: &RunConfig, sequences: &[String]) -> Result<()> {
    let targets: Vec<SyzygySequence> = sequences.iter().map(|s| parse_target(s)).collect::<Result<_>>()?;
    let finder = cfg.finder();
    let found: Vec<Result<[CollisionOrbit; 2]>> = finder.install(|| targets.par_iter().map(|t| find_straight(t, &finder)).collect());
    let lib_path = library_path(cfg);
    let mut lib = OrbitLibrary::open(&lib_path)?;
    let mut failed = Vec::new();
    for (t, r) in targets.iter().zip(found) {
        let seq = t.digits();
        match r {
            Ok(pair) => {
                let ids = [0, 1].map(|k| OrbitId { sequence: seq.clone(), kind: OrbitKind::Straight, ordinal: k });
                for (k, o) in pair.iter().enumerate() {
                    store(&mut lib, cfg, o, &ids[k], None, Some(ids[1 - k].to_string()))?;
                    println!(
                        "{}: code {} {}->{} phi {:.12} window {:.1e} length {:.3}",
                        ids[k], o.realized, o.start_end, o.finish_end, o.shot.phi, o.shot.window, o.path.length()
                    );
                }
            }
            Err(e) => failed.push(format!("{seq}: {e}")),
        }
    }
    ensure_parent(&lib_path)?;
    lib.save(&lib_path)?;
    match failed.len() {
        0 => Ok(()),
        _ => Err(Error::InvalidInput(failed.join("; "))),
    }
}

fn straight_for(cfg: &RunConfig, lib: &OrbitLibrary, target: &SyzygySequence) -> Result<CollisionOrbit> {
    let id = OrbitId { sequence: target.digits(), kind: OrbitKind::Straight, ordinal: 0 }.to_string();
    match lib.get(&id) {
        Some(r) => r.regenerate(&cfg.finder()),
        None => find_straight(target, &cfg.finder()).map(|[a, _]| a),
    }
}

fn wind(cfg: &RunConfig, sequence: &str) -> Result<()> {
    let target = parse_target(sequence)?;
    let lib_path = library_path(cfg);
    let mut lib = OrbitLibrary::open(&lib_path)?;
    let straight = straight_for(cfg, &lib, &target)?;
    let family = find_winding(&straight, cfg.eps, cfg.family, &cfg.finder())?;
    for o in &family {
        if o.is_straight() {
            println!("eps = 0: the straight orbit itself");
            continue;
        }
        let ordinal = lib.next_ordinal(&target.digits(), OrbitKind::Winding);
        let id = OrbitId { sequence: target.digits(), kind: OrbitKind::Winding, ordinal };
        store(&mut lib, cfg, o, &id, Some(cfg.eps), None)?;
        let angle = o.perturbation.map_or(0.0, |p| p.angle);
        println!("{id}: angle {angle:+.3e} code {} tails {:?} length {:.1}", o.realized, o.tails, o.path.length());
    }
    lib.save(&lib_path)
}

fn lift(cfg: &RunConfig, id: &str) -> Result<bool> {
    id.parse::<OrbitId>()?;
    let lib_path = library_path(cfg);
    let mut lib = OrbitLibrary::open(&lib_path)?;
    let record = lib.get(id).ok_or_else(|| Error::InvalidInput(format!("no orbit {id} in {}", lib_path.display())))?;
    let orbit = record.regenerate(&cfg.finder())?;
    let lifted = lift_orbit(&orbit, &cfg.lift_options())?;
    let report = verify_solution(&lifted, 1e-5)?;
    let traj_rel = format!("lifts/{id}.csv");
    let report_rel = format!("lifts/{id}.report.json");
    write(&cfg.out.join(&traj_rel), &lifted.trajectory.to_csv())?;
    write(&cfg.out.join(&report_rel), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    lib.append_verification(VerificationRecord::new(id, &report, report_rel, traj_rel))?;
    lib.save(&lib_path)?;
    println!(
        "{id}: {} samples, eq1 {:.2e}, |E| {:.2e}, |C| {:.2e}, |I-1| {:.2e}, t_c {:?} -> {:?}",
        report.samples,
        report.eq1_residual,
        report.max_abs_energy,
        report.max_abs_angular_momentum,
        report.max_inertia_error,
        report.collision_time.as_ref().map(|c| c.t_c),
        report.status
    );
    Ok(report.status == VerificationStatus::Passed)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = cli.opts.resolve()?;
    match &cli.command {
        Command::Simulate { state } => simulate(&cfg, state).map(|_| true),
        Command::Reduce { trajectory } => reduce(&cfg, trajectory).map(|_| true),
        Command::Curvature => curvature(&cfg).map(|_| true),
        Command::Find { sequences } => find(&cfg, sequences).map(|_| true),
        Command::Wind { sequence } => wind(&cfg, sequence).map(|_| true),
        Command::Lift { id } => lift(&cfg, id),
        Command::Check => {
            let outcomes = selfcheck::run_all(&cfg);
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
