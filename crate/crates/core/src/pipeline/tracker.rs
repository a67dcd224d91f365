use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::explore::{select_candidates, too_close};
use super::{CandidateResult, FailureReason, Mode, RegistrationConfig, RegistrationResult, StageTimings};
use crate::error::{Error, Result};
use crate::optimizer::powell_minimize;
use crate::probe::{generate_grid, ExplorationCache, ExplorationGrid, ProbeMovementModel};
use crate::similarity::{attribute_energy_from_samples, cc_from_samples, sample_domain, EvaluationDomain};
use crate::transform::{RigidParams, RigidTransform};
use crate::volume::slices::plane_geometry;
use crate::volume::{
    build_pyramid, pyramid_dims, Aabb, BoxedVolume, Frame, Geometry, OrthoSlices, Volume,
};

/// The image being tracked: a full volume or orthogonal slices. A volume
/// given in slice mode is cut into its three central orthogonal planes.
#[derive(Clone, Copy, Debug)]
pub enum TrackingImage<'a> {
    Volume(&'a Volume),
    Slices(&'a OrthoSlices),
}

struct ReferenceLevel {
    intensity: Volume,
    gradient: Option<Volume>,
}

struct LevelDomains {
    intensity: EvaluationDomain,
    gradient: Option<EvaluationDomain>,
}

/// Evaluation domains of a tracking image on every pyramid level.
pub struct PreparedTracking {
    levels: Vec<LevelDomains>,
    lattice: Vec<Geometry>,
    elapsed_ms: f64,
}

impl PreparedTracking {
    /// Geometries of the coarsest level, the exploration cache lattice.
    pub fn lattice(&self) -> &[Geometry] {
        &self.lattice
    }

    pub fn domain_len(&self, level: usize) -> usize {
        self.levels[level].intensity.len()
    }
}

/// Outcome of the exploration and candidate stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalSearch {
    #[serde(with = "crate::serde_util::energy")]
    pub exploration_energy: f64,
    pub candidates: Vec<CandidateResult>,
    pub exploration_ms: f64,
    pub candidates_ms: f64,
}

impl GlobalSearch {
    /// Refined transform of the best candidate.
    pub fn best(&self) -> &RigidTransform {
        &self.candidates[0].refined_transform
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level: usize,
    #[serde(with = "crate::serde_util::energy")]
    pub start_energy: f64,
    #[serde(with = "crate::serde_util::energy")]
    pub energy: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub transform: RigidTransform,
    #[serde(with = "crate::serde_util::energy")]
    pub energy: f64,
    pub levels: Vec<LevelOutcome>,
    pub elapsed_ms: f64,
}

/// A reference volume prepared for repeated registrations: pyramid,
/// gradients, probe model, exploration grid and an optional cache.
///
/// Public transforms map reference coordinates to tracking coordinates.
/// Internally the reference is sampled at `M(p)` for tracking points `p`,
/// with `M` the inverse.
pub struct Tracker {
    config: RegistrationConfig,
    bbox: Aabb,
    model: ProbeMovementModel,
    grid: ExplorationGrid,
    reference: Vec<ReferenceLevel>,
    cache: Option<(Vec<Geometry>, ExplorationCache)>,
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Drops valid voxels with an invalid face neighbour, so edge voxels built
/// from partial support do not enter the domain. Singleton axes are ignored.
fn erode(v: &Volume) -> Result<Volume> {
    let Some(mask) = v.mask() else {
        return Ok(v.clone());
    };
    let g = v.geometry();
    let dims = g.dims;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let eroded: Vec<bool> = (0..g.len())
        .map(|idx| {
            if !mask[idx] {
                return false;
            }
            let c = g.voxel_coords(idx);
            (0..3).filter(|&k| dims[k] > 1).all(|k| {
                (c[k] == 0 || mask[idx - strides[k]]) && (c[k] + 1 == dims[k] || mask[idx + strides[k]])
            })
        })
        .collect();
    v.clone().with_mask(Some(eroded))
}

/// Geometry of pyramid level `level` of `g`.
pub(crate) fn level_geometry(g: &Geometry, levels: usize, level: usize) -> Result<Geometry> {
    let dims = pyramid_dims(g.dims, levels)?[level];
    let f = (1u64 << level) as f64;
    Geometry::new(dims, g.spacing.map(|s| s * f), g.origin, g.axes)
}

impl Tracker {
    pub fn new(reference: &Volume, bbox: Aabb, config: RegistrationConfig) -> Result<Self> {
        config.validate()?;
        let model = config.probe.model(&bbox)?;
        let grid = generate_grid(config.grid)?;
        let cutoff = config.attribute_cutoff();
        let reference = build_pyramid(reference, config.levels())?
            .into_par_iter()
            .enumerate()
            .map(|(level, intensity)| {
                let gradient = (level >= cutoff).then(|| intensity.gradient_magnitude());
                ReferenceLevel { intensity, gradient }
            })
            .collect();
        Ok(Tracker {
            config,
            bbox,
            model,
            grid,
            reference,
            cache: None,
        })
    }

    pub fn config(&self) -> &RegistrationConfig {
        &self.config
    }

    pub fn model(&self) -> &ProbeMovementModel {
        &self.model
    }

    pub fn grid(&self) -> &ExplorationGrid {
        &self.grid
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// Gland centre used for local parameterisation and pruning distances.
    pub fn center(&self) -> Vector3<f64> {
        self.model.center()
    }

    pub fn reference_level(&self, level: usize) -> &Volume {
        &self.reference[level].intensity
    }

    /// Coarsest-level lattice for tracking images on `geometry`.
    pub fn lattice_for(&self, geometry: &Geometry) -> Result<Vec<Geometry>> {
        let levels = self.config.levels();
        let coarsest = self.config.coarsest();
        match self.config.mode {
            Mode::Volume => Ok(vec![level_geometry(geometry, levels, coarsest)?]),
            Mode::OrthoSlices => {
                let frame = Frame::of_volume(geometry);
                (0..3)
                    .map(|k| level_geometry(&plane_geometry(geometry, &frame, k)?, levels, coarsest))
                    .collect()
            }
        }
    }

    pub fn precompute(&self, lattice: &[Geometry]) -> Result<ExplorationCache> {
        let coarsest = &self.reference[self.config.coarsest()];
        let gradient = coarsest.gradient.clone().unwrap_or_else(|| coarsest.intensity.gradient_magnitude());
        ExplorationCache::precompute(
            &self.model,
            &self.grid,
            &coarsest.intensity,
            &gradient,
            &self.bbox,
            &ExplorationCache::lattice_domain(lattice)?,
        )
    }

    /// Attaches a cache built for `lattice`.
    pub fn with_cache(mut self, lattice: Vec<Geometry>, cache: ExplorationCache) -> Result<Self> {
        let len = lattice.iter().map(Geometry::len).sum();
        cache.check(&self.grid, len)?;
        self.cache = Some((lattice, cache));
        Ok(self)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn prepare(&self, tracking: TrackingImage<'_>) -> Result<PreparedTracking> {
        let start = Instant::now();
        let levels = self.config.levels();
        let cutoff = self.config.attribute_cutoff();
        let id = RigidTransform::identity();
        // images[level][plane] = (eroded intensity, gradient magnitude above the cutoff)
        let images: Vec<Vec<(Volume, Option<Volume>)>> = match (self.config.mode, tracking) {
            (Mode::Volume, TrackingImage::Volume(v)) => build_pyramid(v, levels)?
                .into_par_iter()
                .enumerate()
                .map(|(level, p)| {
                    let e = erode(&p)?;
                    let g = (level >= cutoff).then(|| e.gradient_magnitude());
                    Ok(vec![(e, g)])
                })
                .collect::<Result<_>>()?,
            (Mode::Volume, TrackingImage::Slices(_)) => {
                return Err(Error::Config("volume mode needs a tracking volume".into()))
            }
            // Planes reconstructed from a volume are cut from each level of
            // its pyramid, gradients included.
            (Mode::OrthoSlices, TrackingImage::Volume(v)) => {
                let frame = Frame::of_volume(v.geometry());
                let planes: Vec<Geometry> =
                    (0..3).map(|k| plane_geometry(v.geometry(), &frame, k)).collect::<Result<_>>()?;
                build_pyramid(v, levels)?
                    .into_par_iter()
                    .enumerate()
                    .map(|(level, p)| {
                        let e = erode(&p)?;
                        let grad = (level >= cutoff).then(|| e.gradient_magnitude());
                        planes
                            .iter()
                            .map(|pg| {
                                let g = level_geometry(pg, levels, level)?;
                                let gp = grad.as_ref().map(|gv| gv.reslice(&id, &g)).transpose()?;
                                Ok((e.reslice(&id, &g)?, gp))
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
            (Mode::OrthoSlices, TrackingImage::Slices(s)) => {
                let pyramids: Vec<Vec<Volume>> =
                    s.planes().iter().map(|p| build_pyramid(p, levels)).collect::<Result<_>>()?;
                (0..levels)
                    .map(|level| {
                        pyramids
                            .iter()
                            .map(|p| {
                                let e = erode(&p[level])?;
                                let g = (level >= cutoff).then(|| e.gradient_magnitude());
                                Ok((e, g))
                            })
                            .collect()
                    })
                    .collect::<Result<_>>()?
            }
        };
        let domains = images
            .par_iter()
            .enumerate()
            .map(|(level, imgs)| {
                let at_level: Vec<&Volume> = imgs.iter().map(|(v, _)| v).collect();
                let expected = self.box_lattice_count(&at_level);
                let intensity = EvaluationDomain::from_volumes(&at_level, format!("tracking level {level}"))?
                    .with_overlap_reference(expected)?;
                let grads: Option<Vec<&Volume>> = imgs.iter().map(|(_, g)| g.as_ref()).collect();
                let gradient = match grads {
                    Some(refs) => {
                        let d = EvaluationDomain::from_volumes(&refs, format!("tracking gradient level {level}"))?;
                        Some(d.with_overlap_reference(expected)?)
                    }
                    None => None,
                };
                Ok(LevelDomains { intensity, gradient })
            })
            .collect::<Result<Vec<_>>>()?;
        let coarsest = self.config.coarsest();
        Ok(PreparedTracking {
            levels: domains,
            lattice: images[coarsest].iter().map(|(v, _)| v.geometry().clone()).collect(),
            elapsed_ms: ms_since(start),
        })
    }

    /// Number of lattice points the gland box would hold on the sampling
    /// lattice of `images`: box volume over voxel volume for a volume, and a
    /// box cross-section (volume to the power 2/3) over pixel area per plane.
    fn box_lattice_count(&self, images: &[&Volume]) -> f64 {
        let e = self.bbox.extent();
        let volume = e.x * e.y * e.z;
        images
            .iter()
            .map(|v| {
                let g = v.geometry();
                let s = g.spacing;
                if g.dims[2] == 1 {
                    volume.powf(2.0 / 3.0) / (s[0] * s[1])
                } else {
                    volume / (s[0] * s[1] * s[2])
                }
            })
            .sum()
    }

    fn energy_from_samples(
        &self,
        d: &LevelDomains,
        si: &[f32],
        sg: Option<&[f32]>,
    ) -> Option<f64> {
        let min_overlap = self.config.min_overlap;
        match (&d.gradient, sg) {
            (Some(dg), Some(sg)) => attribute_energy_from_samples(&d.intensity, si, dg, sg, min_overlap),
            _ => cc_from_samples(&d.intensity, si, min_overlap).map(|c| 1.0 - c),
        }
    }

    fn sampled_energy(&self, prepared: &PreparedTracking, level: usize, m: &RigidTransform) -> Option<f64> {
        let r = &self.reference[level];
        let d = &prepared.levels[level];
        let si = sample_domain(&d.intensity, &BoxedVolume::new(&r.intensity, self.bbox), m);
        let sg = match (&d.gradient, &r.gradient) {
            (Some(dg), Some(rg)) => Some(sample_domain(dg, &BoxedVolume::new(rg, self.bbox), m)),
            _ => None,
        };
        self.energy_from_samples(d, &si, sg.as_deref())
    }

    /// Energy of `transform` (reference to tracking) on a pyramid level;
    /// `None` when the overlap is insufficient or a correlation is undefined.
    pub fn energy(&self, prepared: &PreparedTracking, level: usize, transform: &RigidTransform) -> Option<f64> {
        self.sampled_energy(prepared, level, &transform.inverse())
    }

    /// Energy of every grid pose on the coarsest level, `+inf` where undefined.
    /// Uses the cache when it was built for this tracking lattice.
    pub fn exploration_energies(&self, prepared: &PreparedTracking) -> Vec<f64> {
        let coarsest = self.config.coarsest();
        let d = &prepared.levels[coarsest];
        let cache = self
            .cache
            .as_ref()
            .filter(|(lattice, _)| *lattice == prepared.lattice)
            .map(|(_, c)| c);
        self.grid
            .poses()
            .par_iter()
            .enumerate()
            .map(|(i, pose)| {
                let e = match (cache, &d.gradient) {
                    (Some(c), Some(dg)) => {
                        let (si, sg) = c.samples(i, &d.intensity, dg);
                        self.energy_from_samples(d, &si, Some(&sg))
                    }
                    (Some(c), None) => {
                        let (si, _) = c.samples(i, &d.intensity, &d.intensity);
                        self.energy_from_samples(d, &si, None)
                    }
                    (None, _) => self.sampled_energy(prepared, coarsest, &self.model.pose_to_transform(pose)),
                };
                e.unwrap_or(f64::INFINITY)
            })
            .collect()
    }

    /// Powell search on one level in coordinates local to `start` (sampling
    /// direction): rotations about the gland centre, translations in mm.
    fn local_search(
        &self,
        prepared: &PreparedTracking,
        level: usize,
        start: &RigidTransform,
    ) -> (RigidTransform, LevelOutcome) {
        let pivot = start.inverse().apply(&self.center());
        let scale = RigidParams::default_scale();
        let to_m = |x: &[f64]| -> Option<RigidTransform> {
            let p = RigidParams::from_scaled(x, scale).to_transform().ok()?;
            let delta = RigidTransform::from_translation(pivot)
                .compose(&p)
                .compose(&RigidTransform::from_translation(-pivot));
            Some(start.compose(&delta))
        };
        let f = |x: &[f64]| {
            to_m(x)
                .and_then(|m| self.sampled_energy(prepared, level, &m))
                .unwrap_or(f64::INFINITY)
        };
        let res = powell_minimize(f, &[0.0; 6], &self.config.optimizer);
        let m = to_m(&res.x).unwrap_or(*start);
        let outcome = LevelOutcome {
            level,
            start_energy: res.history[0],
            energy: res.f,
            iterations: res.iterations,
            evaluations: res.evaluations,
            converged: res.converged,
        };
        (m, outcome)
    }

    /// Stages 2 and 3: grid exploration, pruning to the best candidates and a
    /// coarsest-level Powell search from each.
    pub fn global_search(&self, prepared: &PreparedTracking) -> Result<GlobalSearch> {
        let start = Instant::now();
        let energies = self.exploration_energies(prepared);
        let poses = self.grid.poses();
        let center = self.center();
        let min = self.config.candidate_min_distance;
        let inverse = |i: usize| self.model.pose_to_transform(&poses[i]).inverse();
        let chosen = select_candidates(&energies, self.config.candidate_count, |a, b| {
            too_close(&inverse(a), &inverse(b), &center, min)
        });
        if chosen.is_empty() {
            return Err(Error::AllUndefined);
        }
        let exploration_ms = ms_since(start);

        let start = Instant::now();
        let coarsest = self.config.coarsest();
        let mut candidates: Vec<CandidateResult> = chosen
            .par_iter()
            .map(|&i| {
                let m0 = self.model.pose_to_transform(&poses[i]);
                let (m, outcome) = self.local_search(prepared, coarsest, &m0);
                CandidateResult {
                    pose_index: i,
                    pose: poses[i],
                    energy: energies[i],
                    refined_transform: m.inverse(),
                    refined_energy: outcome.energy,
                    converged: outcome.converged,
                }
            })
            .collect();
        candidates.sort_by(|a, b| {
            a.refined_energy
                .total_cmp(&b.refined_energy)
                .then(a.pose_index.cmp(&b.pose_index))
        });
        Ok(GlobalSearch {
            exploration_energy: energies[chosen[0]],
            candidates,
            exploration_ms,
            candidates_ms: ms_since(start),
        })
    }

    /// Stage 4: level-by-level Powell search from the coarsest level down to
    /// the final level, starting at `start` (reference to tracking).
    pub fn refine(&self, prepared: &PreparedTracking, start: &RigidTransform) -> Refinement {
        let clock = Instant::now();
        let mut m = start.inverse();
        let mut levels = Vec::new();
        for level in (self.config.final_level()..self.config.levels()).rev() {
            let (next, outcome) = self.local_search(prepared, level, &m);
            m = next;
            levels.push(outcome);
        }
        Refinement {
            transform: m.inverse(),
            energy: levels.last().map_or(f64::INFINITY, |l| l.energy),
            levels,
            elapsed_ms: ms_since(clock),
        }
    }

    pub fn register_prepared(&self, prepared: &PreparedTracking) -> Result<RegistrationResult> {
        let search = self.global_search(prepared)?;
        let refinement = self.refine(prepared, search.best());
        Ok(self.assemble(prepared, search, refinement))
    }

    pub fn register(&self, tracking: TrackingImage<'_>) -> Result<RegistrationResult> {
        let prepared = self.prepare(tracking)?;
        self.register_prepared(&prepared)
    }

    /// Combines the stage outputs into a result.
    pub fn assemble(
        &self,
        prepared: &PreparedTracking,
        search: GlobalSearch,
        refinement: Refinement,
    ) -> RegistrationResult {
        let converged = search.candidates.iter().all(|c| c.converged)
            && refinement.levels.iter().all(|l| l.converged);
        let failure_reason = if !refinement.energy.is_finite() {
            Some(FailureReason::UndefinedEnergy)
        } else if !converged {
            Some(FailureReason::IterationLimit)
        } else {
            None
        };
        let stage_timings = StageTimings {
            pyramids_ms: prepared.elapsed_ms,
            exploration_ms: search.exploration_ms,
            candidates_ms: search.candidates_ms,
            refinement_ms: refinement.elapsed_ms,
            total_ms: prepared.elapsed_ms + search.exploration_ms + search.candidates_ms + refinement.elapsed_ms,
        };
        RegistrationResult {
            mode: self.config.mode,
            transform: refinement.transform,
            final_energy: refinement.energy,
            exploration_energy: search.exploration_energy,
            candidates: search.candidates,
            levels: refinement.levels,
            stage_timings,
            converged,
            failure_reason,
        }
    }
}

/// One-shot registration of `tracking` against `reference` restricted to `bbox`.
pub fn register(
    reference: &Volume,
    bbox: Aabb,
    tracking: TrackingImage<'_>,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let start = Instant::now();
    let tracker = Tracker::new(reference, bbox, config.clone())?;
    let reference_ms = ms_since(start);
    let mut result = tracker.register(tracking)?;
    result.stage_timings.pyramids_ms += reference_ms;
    result.stage_timings.total_ms += reference_ms;
    Ok(result)
}
