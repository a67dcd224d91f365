use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mix;
use super::repro::{run_reproducibility, Noise};
use super::report::{write_atomic, ExperimentReport, PairDetail, PairRow};
use crate::error::{Error, Result};
use crate::phantom::{calcification_errors, needle_errors, PhantomScene};
use crate::pipeline::{classify_errors, classify_success, Mode, RegistrationConfig, TrackingImage, Tracker};
use crate::transform::{angular_error, euclidean_error, rms};
use crate::volume::{read_volume, Aabb, Volume};

/// One registration problem. Relative paths resolve against the directory
/// of the file that lists the pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub id: String,
    pub reference: PathBuf,
    /// `[x0, y0, z0, x1, y1, z1]` in reference coordinates, mm.
    pub bbox: [f64; 6],
    pub tracking: PathBuf,
    /// Phantom scene JSON holding the true pose and landmarks.
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

impl PairEntry {
    pub fn aabb(&self) -> Result<Aabb> {
        let b = self.bbox;
        Aabb::new([b[0], b[1], b[2]].into(), [b[3], b[4], b[5]].into())
    }

    /// Reads a pair file and resolves its paths.
    pub fn read(path: impl AsRef<Path>) -> Result<PairEntry> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pair: PairEntry = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let pair = pair.resolved(base);
        pair.check_files()?;
        Ok(pair)
    }

    fn resolved(mut self, base: &Path) -> PairEntry {
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        self.reference = join(&self.reference);
        self.tracking = join(&self.tracking);
        self.truth = self.truth.as_deref().map(join);
        self
    }

    fn check_files(&self) -> Result<()> {
        let files = [Some(&self.reference), Some(&self.tracking), self.truth.as_ref()];
        for f in files.into_iter().flatten() {
            if !f.is_file() {
                return Err(Error::Manifest(format!("pair {}: missing file {}", self.id, f.display())));
            }
        }
        Ok(())
    }

    pub fn read_truth(&self) -> Result<Option<PhantomScene>> {
        self.truth
            .as_ref()
            .map(|p| -> Result<PhantomScene> {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let scene: PhantomScene = serde_json::from_str(&text)?;
                scene.check()?;
                Ok(scene)
            })
            .transpose()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub pairs: Vec<PairEntry>,
}

impl Manifest {
    /// Reads a manifest, resolves relative paths and checks that every file
    /// exists and every pair id is unique.
    pub fn read(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Manifest {
            pairs: m.pairs.into_iter().map(|p| p.resolved(base)).collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Manifest("manifest lists no pairs".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.pairs {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate pair id {:?}", p.id)));
            }
            p.aabb()?;
            p.check_files()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    /// Perturbed restarts per pair for the mean-transform criterion; fewer
    /// than two disables it, which needs ground truth on every pair.
    pub restarts: usize,
    pub noise: Noise,
    pub seed: u64,
    /// Worker threads; `None` uses the machine's parallelism.
    pub jobs: Option<usize>,
    /// When false, `time_ms` is written as 0 so reports are bit-reproducible.
    pub record_timings: bool,
    /// Directory receiving one JSON file per finished pair.
    pub pair_dir: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            restarts: 10,
            noise: Noise::default(),
            seed: 0,
            jobs: None,
            record_timings: true,
            pair_dir: None,
        }
    }
}

/// Registers every pair of `manifest` in `mode` and collects the report.
/// Pairs sharing a reference and box share one prepared tracker and, when
/// there are several, one exploration cache.
pub fn run_benchmark(
    manifest: &Manifest,
    config: &RegistrationConfig,
    mode: Mode,
    options: &BenchOptions,
) -> Result<ExperimentReport> {
    manifest.validate()?;
    options.noise.validate()?;
    let config = RegistrationConfig {
        mode,
        ..config.clone()
    };
    config.validate()?;
    let truths: Vec<Option<PhantomScene>> = manifest.pairs.iter().map(PairEntry::read_truth).collect::<Result<_>>()?;
    if options.restarts < 2 && truths.iter().any(Option::is_none) {
        return Err(Error::Config(
            "pairs without ground truth need at least two restarts for the mean-transform criterion".into(),
        ));
    }
    if let Some(dir) = &options.pair_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = options.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut groups: Vec<(Vec<usize>, &PairEntry)> = Vec::new();
    let mut index: HashMap<(PathBuf, [u64; 6]), usize> = HashMap::new();
    for (i, p) in manifest.pairs.iter().enumerate() {
        let key = (p.reference.clone(), p.bbox.map(f64::to_bits));
        let g = *index.entry(key).or_insert_with(|| {
            groups.push((Vec::new(), p));
            groups.len() - 1
        });
        groups[g].0.push(i);
    }

    let mut details: Vec<Option<PairDetail>> = vec![None; manifest.pairs.len()];
    for (members, first) in &groups {
        let reference = read_volume(&first.reference)?;
        let mut tracker = Tracker::new(&reference, first.aabb()?, config.clone())?;
        if members.len() > 1 {
            let geometry = read_volume(&manifest.pairs[members[0]].tracking)?.geometry().clone();
            let lattice = tracker.lattice_for(&geometry)?;
            let cache = pool.install(|| tracker.precompute(&lattice))?;
            tracker = tracker.with_cache(lattice, cache)?;
        }
        let done: Vec<(usize, PairDetail)> = pool.install(|| {
            members
                .par_iter()
                .map(|&i| {
                    let d = run_pair(&tracker, &manifest.pairs[i], truths[i].as_ref(), i, options)?;
                    if let Some(dir) = &options.pair_dir {
                        let name = format!("{}.json", sanitize(&d.row.pair_id));
                        write_atomic(&dir.join(name), serde_json::to_string_pretty(&d)?.as_bytes())?;
                    }
                    Ok((i, d))
                })
                .collect::<Result<_>>()
        })?;
        for (i, d) in done {
            details[i] = Some(d);
        }
    }
    Ok(ExperimentReport::new(mode, details.into_iter().map(|d| d.expect("every pair ran")).collect()))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn run_pair(
    tracker: &Tracker,
    pair: &PairEntry,
    truth: Option<&PhantomScene>,
    index: usize,
    options: &BenchOptions,
) -> Result<PairDetail> {
    let tracking: Volume = read_volume(&pair.tracking)?;
    let center = tracker.center();
    let clock = Instant::now();
    let prepared = tracker.prepare(TrackingImage::Volume(&tracking))?;
    let outcome = tracker.register_prepared(&prepared);
    let time_ms = if options.record_timings {
        clock.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) if !e.is_validation() => {
            return Ok(PairDetail {
                row: PairRow {
                    pair_id: pair.id.clone(),
                    mode: tracker.config().mode,
                    success: false,
                    eps_e_mm: None,
                    eps_a_deg: None,
                    calc_rms_mm: None,
                    calc_max_mm: None,
                    needle_rms_deg: None,
                    needle_max_deg: None,
                    time_ms,
                },
                truth_available: truth.is_some(),
                mean_success: None,
                mean_eps_e_mm: None,
                mean_eps_a_deg: None,
                restart_failures: None,
                final_energy: f64::INFINITY,
                converged: false,
                error: Some(e.to_string()),
            });
        }
        Err(e) => return Err(e),
    };

    let mean = if options.restarts >= 2 {
        let seed = mix(options.seed, index as u64);
        Some(run_reproducibility(tracker, &prepared, options.restarts, options.noise, seed)?)
    } else {
        None
    };
    let vs_mean = mean.as_ref().map(|m| {
        classify_errors(
            euclidean_error(&result.transform, &m.mean, &center),
            angular_error(&result.transform, &m.mean),
        )
    });
    let verdict = match truth {
        Some(scene) => classify_success(&result.transform, &scene.true_pose, &center),
        None => vs_mean.expect("restarts checked above"),
    };
    let stats = |v: Option<Vec<f64>>| match v {
        Some(v) if !v.is_empty() => (rms(&v), v.iter().copied().reduce(f64::max)),
        _ => (None, None),
    };
    let (calc_rms_mm, calc_max_mm) = stats(truth.and_then(|s| calcification_errors(s, &result.transform).ok()));
    let (needle_rms_deg, needle_max_deg) = stats(truth.and_then(|s| needle_errors(s, &result.transform).ok()));
    Ok(PairDetail {
        row: PairRow {
            pair_id: pair.id.clone(),
            mode: tracker.config().mode,
            success: verdict.success,
            eps_e_mm: Some(verdict.eps_e_mm),
            eps_a_deg: Some(verdict.eps_a_deg),
            calc_rms_mm,
            calc_max_mm,
            needle_rms_deg,
            needle_max_deg,
            time_ms,
        },
        truth_available: truth.is_some(),
        mean_success: vs_mean.map(|s| s.success),
        mean_eps_e_mm: vs_mean.map(|s| s.eps_e_mm),
        mean_eps_a_deg: vs_mean.map(|s| s.eps_a_deg),
        restart_failures: mean.as_ref().map(|m| m.failures),
        final_energy: result.final_energy,
        converged: result.converged,
        error: None,
    })
}
