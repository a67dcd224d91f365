use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::bench::{Manifest, PairEntry};
use super::report::write_atomic;
use crate::error::{Error, Result};
use crate::phantom::{
    render_phantom, sample_plausible_pose, Acquisition, PhantomScene, PhantomSpec, PoseRanges,
};
use crate::pipeline::compound_panorama;
use crate::probe::ProbePose;
use crate::transform::RigidTransform;
use crate::volume::{write_volume, Aabb, Volume};

/// Roll angles of the panorama acquisitions, degrees.
pub const PANORAMA_ROLLS_DEG: [f64; 3] = [-60.0, 0.0, 60.0];

pub(crate) fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reference panorama of a phantom: three acquisitions rolled about the
/// probe axis and compounded in the frame of the unrolled one.
pub struct Panorama {
    pub volume: Volume,
    pub bbox: Aabb,
    pub scenes: Vec<PhantomScene>,
}

pub fn render_panorama(spec: &PhantomSpec) -> Result<Panorama> {
    let model = spec.probe_model()?;
    let mut volumes = Vec::new();
    let mut poses = Vec::new();
    let mut scenes = Vec::new();
    for (k, deg) in PANORAMA_ROLLS_DEG.iter().enumerate() {
        let m = model.pose_to_transform(&ProbePose::from_degrees(0.0, 0.0, *deg));
        let acquisition = Acquisition::plain(mix(spec.seed, 100 + k as u64));
        let (v, scene) = render_phantom(spec, &m.inverse(), &spec.geometry, &acquisition)?;
        volumes.push(v);
        poses.push(m);
        scenes.push(scene);
    }
    Ok(Panorama {
        volume: compound_panorama(&volumes, &poses)?,
        bbox: spec.gland_bbox(),
        scenes,
    })
}

/// A tracking acquisition at a plausible random pose with its truth.
pub struct TrackingSample {
    pub volume: Volume,
    pub scene: PhantomScene,
    pub pose: ProbePose,
}

pub fn render_tracking(spec: &PhantomSpec, ranges: &PoseRanges, index: u64) -> Result<TrackingSample> {
    let model = spec.probe_model()?;
    let (truth, pose) = sample_plausible_pose(&model, ranges, mix(spec.seed, 1000 + index));
    let acquisition = Acquisition::with_random_intensity(mix(spec.seed, 5000 + index));
    let (volume, scene) = render_phantom(spec, &truth, &spec.geometry, &acquisition)?;
    Ok(TrackingSample { volume, scene, pose })
}

/// Deterministic description of a phantom benchmark suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub patients: usize,
    pub tracking_per_patient: usize,
    pub seed: u64,
    pub ranges: PoseRanges,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            patients: 8,
            tracking_per_patient: 5,
            seed: 2007,
            ranges: PoseRanges::default(),
        }
    }
}

impl SuiteSpec {
    pub fn patient_spec(&self, patient: usize) -> PhantomSpec {
        PhantomSpec::random(mix(self.seed, patient as u64))
    }
}

/// Gland centre of a scene's reference frame.
pub fn gland_center(spec: &PhantomSpec) -> Vector3<f64> {
    Vector3::from(spec.gland_center_mm)
}

/// Truth of a scene as a reference-to-tracking transform.
pub fn truth(scene: &PhantomScene) -> RigidTransform {
    scene.true_pose
}

/// Files written by [`write_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFiles {
    pub spec: PathBuf,
    /// Tracking volumes and their truth files.
    pub tracking: Vec<(PathBuf, PathBuf)>,
    pub reference: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

/// Renders `count` tracking acquisitions of `spec` into `dir` with their
/// truth scenes. With `panorama`, also writes the compounded reference, a
/// manifest over all pairs and one pair file per acquisition.
pub fn write_dataset(
    spec: &PhantomSpec,
    ranges: &PoseRanges,
    count: usize,
    panorama: bool,
    dir: &Path,
) -> Result<DatasetFiles> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec_path = dir.join("spec.json");
    write_json(&spec_path, spec)?;
    let mut tracking = Vec::with_capacity(count);
    for i in 0..count {
        let sample = render_tracking(spec, ranges, i as u64)?;
        let vol = dir.join(format!("tracking_{i:03}.vvf"));
        let truth = dir.join(format!("tracking_{i:03}.json"));
        write_volume(&sample.volume, &vol)?;
        write_json(&truth, &sample.scene)?;
        tracking.push((vol, truth));
    }
    let (mut reference, mut manifest) = (None, None);
    if panorama {
        let pano = render_panorama(spec)?;
        let ref_path = dir.join("reference.vvf");
        write_volume(&pano.volume, &ref_path)?;
        let pairs: Vec<PairEntry> = (0..count)
            .map(|i| PairEntry {
                id: format!("t{i:03}"),
                reference: "reference.vvf".into(),
                bbox: pano.bbox.to_array(),
                tracking: format!("tracking_{i:03}.vvf").into(),
                truth: Some(format!("tracking_{i:03}.json").into()),
            })
            .collect();
        for (i, p) in pairs.iter().enumerate() {
            write_json(&dir.join(format!("pair_{i:03}.json")), p)?;
        }
        let manifest_path = dir.join("manifest.json");
        write_json(&manifest_path, &Manifest { pairs })?;
        reference = Some(ref_path);
        manifest = Some(manifest_path);
    }
    Ok(DatasetFiles {
        spec: spec_path,
        tracking,
        reference,
        manifest,
    })
}

/// Writes every patient of `suite` into `dir/patient_NN` and a combined
/// manifest at `dir/manifest.json`.
pub fn write_suite(suite: &SuiteSpec, dir: &Path) -> Result<PathBuf> {
    let mut pairs = Vec::new();
    for p in 0..suite.patients {
        let name = format!("patient_{p:02}");
        let files = write_dataset(&suite.patient_spec(p), &suite.ranges, suite.tracking_per_patient, true, &dir.join(&name))?;
        let m = Manifest::read(files.manifest.expect("panorama written"))?;
        pairs.extend(m.pairs.into_iter().map(|e| PairEntry {
            id: format!("p{p:02}_{}", e.id),
            reference: Path::new(&name).join("reference.vvf"),
            tracking: Path::new(&name).join(e.tracking.file_name().expect("file name")),
            truth: e.truth.map(|t| Path::new(&name).join(t.file_name().expect("file name"))),
            ..e
        }));
    }
    let path = dir.join("manifest.json");
    write_json(&path, &Manifest { pairs })?;
    Ok(path)
}
