use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mix;
use crate::error::{Error, Result};
use crate::phantom::random_unit;
use crate::pipeline::{PreparedTracking, Tracker};
use crate::transform::{angular_error, average_transforms, euclidean_error, RigidTransform};

/// Start-point noise: standard deviations of the translation (per axis, mm)
/// and of the rotation angle (degrees, about a random axis).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    pub mm: f64,
    pub deg: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Noise { mm: 2.0, deg: 2.0 }
    }
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        if !(self.mm >= 0.0 && self.deg >= 0.0 && self.mm.is_finite() && self.deg.is_finite()) {
            return Err(Error::Config(format!("noise {:?} must be finite and non-negative", self)));
        }
        Ok(())
    }
}

/// Zero-mean normal sample truncated at two standard deviations.
fn truncated_normal(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * sigma;
        }
    }
}

/// Perturbs `start` (reference to tracking) by a random rotation about the
/// reference point `center` followed by a random translation.
pub fn perturb(start: &RigidTransform, center: &Vector3<f64>, noise: Noise, seed: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_unit(&mut rng);
    let angle = truncated_normal(&mut rng, noise.deg).to_radians();
    let shift = Vector3::from_fn(|_, _| truncated_normal(&mut rng, noise.mm));
    let delta = RigidTransform::from_translation(shift).compose(&RigidTransform::rotation_about(&axis, angle, center));
    start.compose(&delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproRun {
    pub seed: u64,
    pub start: RigidTransform,
    pub transform: Option<RigidTransform>,
    #[serde(with = "crate::serde_util::energy")]
    pub energy: f64,
    /// Against the mean transform; `None` for failed runs.
    pub eps_e_mm: Option<f64>,
    pub eps_a_deg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproOutcome {
    /// Mean of the successful runs.
    pub mean: RigidTransform,
    pub runs: Vec<ReproRun>,
    pub eps_e_mm: Vec<f64>,
    pub eps_a_deg: Vec<f64>,
    pub failures: usize,
}

/// Restart seeds derived from a base seed.
pub fn restart_seeds(seed: u64, restarts: usize) -> Vec<u64> {
    (0..restarts as u64).map(|i| mix(seed, 0x4e50 + i)).collect()
}

/// Repeats the final multi-level search from perturbed copies of the best
/// candidate, once per restart, and averages the results. Exploration and
/// candidate refinement run once; they do not depend on the start point.
pub fn run_reproducibility(
    tracker: &Tracker,
    prepared: &PreparedTracking,
    restarts: usize,
    noise: Noise,
    seed: u64,
) -> Result<ReproOutcome> {
    run_reproducibility_with_seeds(tracker, prepared, &restart_seeds(seed, restarts), noise)
}

pub fn run_reproducibility_with_seeds(
    tracker: &Tracker,
    prepared: &PreparedTracking,
    seeds: &[u64],
    noise: Noise,
) -> Result<ReproOutcome> {
    if seeds.len() < 2 {
        return Err(Error::Config("reproducibility needs at least two restarts".into()));
    }
    noise.validate()?;
    let search = tracker.global_search(prepared)?;
    let center = tracker.center();
    let mut runs: Vec<ReproRun> = seeds
        .iter()
        .map(|&seed| {
            let start = perturb(search.best(), &center, noise, seed);
            let r = tracker.refine(prepared, &start);
            let ok = r.energy.is_finite();
            ReproRun {
                seed,
                start,
                transform: ok.then_some(r.transform),
                energy: r.energy,
                eps_e_mm: None,
                eps_a_deg: None,
            }
        })
        .collect();
    let done: Vec<RigidTransform> = runs.iter().filter_map(|r| r.transform).collect();
    if done.is_empty() {
        return Err(Error::AllUndefined);
    }
    let mean = average_transforms(&done)?;
    for r in &mut runs {
        if let Some(t) = &r.transform {
            r.eps_e_mm = Some(euclidean_error(t, &mean, &center));
            r.eps_a_deg = Some(angular_error(t, &mean));
        }
    }
    Ok(ReproOutcome {
        mean,
        eps_e_mm: runs.iter().filter_map(|r| r.eps_e_mm).collect(),
        eps_a_deg: runs.iter().filter_map(|r| r.eps_a_deg).collect(),
        failures: seeds.len() - done.len(),
        runs,
    })
}
