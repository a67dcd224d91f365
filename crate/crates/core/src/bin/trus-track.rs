use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trus_track::harness::{
    checkerboard, run_benchmark, run_reproducibility, write_dataset, BenchOptions, Manifest, Noise, PairEntry,
};
use trus_track::phantom::{PhantomSpec, PoseRanges};
use trus_track::pipeline::{FailureReason, Mode, RegistrationConfig, TrackingImage, Tracker};
use trus_track::probe::ExplorationCache;
use trus_track::volume::{read_volume, write_volume, Aabb};
use trus_track::{Error, Result};

#[derive(Parser)]
#[command(name = "trus-track", version, about = "Rigid TRUS volume tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic phantom datasets.
    #[command(subcommand)]
    Phantom(PhantomCommand),
    /// Register a tracking image to a reference panorama.
    Register(RegisterArgs),
    /// Precompute the exploration cache of a reference.
    Precompute(PrecomputeArgs),
    /// Evaluation runs.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum PhantomCommand {
    /// Render tracking volumes with truth, and optionally the panorama.
    Gen(GenArgs),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Perturbed restarts of one pair.
    Repro(ReproArgs),
    /// Register every pair of a manifest.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Phantom spec JSON; the default phantom when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Replaces the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also render the compounded reference panorama and a manifest.
    #[arg(long)]
    panorama: bool,
    /// Draw a randomised anatomy from the seed instead of reading a spec.
    #[arg(long, conflicts_with = "spec")]
    random: bool,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    /// x0,y0,z0,x1,y1,z1 in mm.
    #[arg(long, allow_hyphen_values = true)]
    bbox: String,
    #[arg(long)]
    mov: PathBuf,
    /// Overrides the configured mode.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Exploration cache written by `precompute`.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Writes a checkerboard of the tracking image and the registered reference.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Checkerboard square size, mm.
    #[arg(long, default_value_t = 8.0)]
    overlay_block: f64,
}

#[derive(Args)]
struct PrecomputeArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    bbox: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: PathBuf,
    /// Volume whose geometry the tracking images share; falls back to
    /// `tracking_geometry` in the config.
    #[arg(long)]
    mov_geometry: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// mm,deg
    #[arg(long, default_value = "2.0,2.0")]
    noise: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Perturbed restarts per pair for the mean-transform criterion.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value = "2.0,2.0")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write zero timings so reports are bit-reproducible.
    #[arg(long)]
    no_timings: bool,
}

fn load_config(path: Option<&Path>, mode: Option<Mode>) -> Result<RegistrationConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RegistrationConfig::default(),
    };
    if let Some(m) = mode {
        config.mode = m;
    }
    config.validate()?;
    Ok(config)
}

fn parse_noise(s: &str) -> Result<Noise> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("noise {s:?}: {e}")))?;
    match parts.as_slice() {
        [mm, deg] => {
            let n = Noise { mm: *mm, deg: *deg };
            n.validate()?;
            Ok(n)
        }
        _ => Err(Error::Config(format!("noise {s:?} must be mm,deg"))),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Outcome of a subcommand that ran without an error.
enum Done {
    Ok,
    RegistrationFailed,
}

fn gen(a: GenArgs) -> Result<Done> {
    let mut spec = match (&a.spec, a.random) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        (None, true) => PhantomSpec::random(a.seed.unwrap_or(0)),
        (None, false) => PhantomSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let files = write_dataset(&spec, &PoseRanges::default(), a.count, a.panorama, &a.out)?;
    eprintln!(
        "wrote {} tracking volumes{} to {}",
        files.tracking.len(),
        if files.reference.is_some() { " and the panorama" } else { "" },
        a.out.display()
    );
    Ok(Done::Ok)
}

fn register(a: RegisterArgs) -> Result<Done> {
    let config = load_config(a.config.as_deref(), a.mode)?;
    let reference = read_volume(&a.reference)?;
    let tracking = read_volume(&a.mov)?;
    let mut tracker = Tracker::new(&reference, Aabb::parse(&a.bbox)?, config)?;
    if let Some(path) = &a.cache {
        let lattice = tracker.lattice_for(tracking.geometry())?;
        tracker = tracker.with_cache(lattice, ExplorationCache::read(path)?)?;
    }
    let result = match tracker.register(TrackingImage::Volume(&tracking)) {
        Ok(r) => r,
        Err(e) if !e.is_validation() => {
            eprintln!("registration failed: {e}");
            return Ok(Done::RegistrationFailed);
        }
        Err(e) => return Err(e),
    };
    write_json(&a.out, &result)?;
    if let Some(path) = &a.overlay {
        write_volume(&checkerboard(&tracking, &reference, &result.transform, a.overlay_block)?, path)?;
    }
    eprintln!(
        "energy {:.5} in {:.0} ms{}",
        result.final_energy,
        result.stage_timings.total_ms,
        if result.converged { "" } else { " (iteration limit)" }
    );
    Ok(match result.failure_reason {
        Some(FailureReason::UndefinedEnergy) => Done::RegistrationFailed,
        _ => Done::Ok,
    })
}

fn precompute(a: PrecomputeArgs) -> Result<Done> {
    let config = load_config(a.config.as_deref(), a.mode)?;
    let geometry = match (&a.mov_geometry, &config.tracking_geometry) {
        (Some(p), _) => read_volume(p)?.geometry().clone(),
        (None, Some(g)) => g.clone(),
        (None, None) => {
            return Err(Error::Config(
                "precompute needs --mov-geometry or tracking_geometry in the config".into(),
            ))
        }
    };
    let reference = read_volume(&a.reference)?;
    let tracker = Tracker::new(&reference, Aabb::parse(&a.bbox)?, config)?;
    let lattice = tracker.lattice_for(&geometry)?;
    let cache = tracker.precompute(&lattice)?;
    cache.write(&a.out)?;
    eprintln!("cached {} poses x {} points", cache.pose_count(), cache.lattice_len());
    Ok(Done::Ok)
}

fn repro(a: ReproArgs) -> Result<Done> {
    let config = load_config(a.config.as_deref(), a.mode)?;
    let noise = parse_noise(&a.noise)?;
    let pair = PairEntry::read(&a.pair)?;
    let reference = read_volume(&pair.reference)?;
    let tracking = read_volume(&pair.tracking)?;
    let tracker = Tracker::new(&reference, pair.aabb()?, config)?;
    let prepared = tracker.prepare(TrackingImage::Volume(&tracking))?;
    let outcome = match run_reproducibility(&tracker, &prepared, a.restarts, noise, a.seed) {
        Ok(o) => o,
        Err(e) if !e.is_validation() => {
            eprintln!("registration failed: {e}");
            return Ok(Done::RegistrationFailed);
        }
        Err(e) => return Err(e),
    };
    let mut csv = String::from("run,seed,eps_e_mm,eps_a_deg,energy\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, r) in outcome.runs.iter().enumerate() {
        let energy = r.energy.is_finite().then_some(r.energy);
        writeln!(csv, "{i},{},{},{},{}", r.seed, cell(r.eps_e_mm), cell(r.eps_a_deg), cell(energy)).unwrap();
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&a.out, csv).map_err(|e| Error::io(&a.out, e))?;
    write_json(&a.out.with_extension("json"), &outcome)?;
    eprintln!("{} restarts, {} failed", outcome.runs.len(), outcome.failures);
    Ok(Done::Ok)
}

fn bench(a: BenchArgs) -> Result<Done> {
    let config = load_config(a.config.as_deref(), a.mode)?;
    let manifest = Manifest::read(&a.manifest)?;
    let options = BenchOptions {
        restarts: a.restarts,
        noise: parse_noise(&a.noise)?,
        seed: a.seed,
        jobs: a.jobs,
        record_timings: !a.no_timings,
        pair_dir: Some(a.out.join("pairs")),
    };
    let report = run_benchmark(&manifest, &config, config.mode, &options)?;
    report.write(&a.out)?;
    let agg = &report.aggregates;
    eprintln!("{}/{} pairs successful", agg.successes, agg.pairs);
    Ok(Done::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Phantom(PhantomCommand::Gen(a)) => gen(a),
        Command::Register(a) => register(a),
        Command::Precompute(a) => precompute(a),
        Command::Eval(EvalCommand::Repro(a)) => repro(a),
        Command::Eval(EvalCommand::Bench(a)) => bench(a),
    };
    match outcome {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::RegistrationFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
