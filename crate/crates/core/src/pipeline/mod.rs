//! Registration pipeline: panorama compounding, probe-model exploration,
//! candidate refinement and the multi-level final search.

mod explore;
mod panorama;
mod tracker;

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::OptimizerConfig;
use crate::probe::{GridSpec, ProbeMovementModel, ProbePose};
use crate::similarity::DEFAULT_MIN_OVERLAP;
use crate::transform::{angular_error, euclidean_error, RigidTransform};
use crate::volume::{Aabb, Geometry};

pub use explore::{select_candidates, too_close};
pub use panorama::{compound_panorama, panorama_geometry};
pub use tracker::{
    register, GlobalSearch, LevelOutcome, PreparedTracking, Refinement, TrackingImage, Tracker,
};

/// Distance from the rectal fixed point to the gland centre when the
/// configuration does not place it.
pub const DEFAULT_FP_DISTANCE_MM: f64 = 45.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "3d3d")]
    Volume,
    #[serde(rename = "3do2d")]
    OrthoSlices,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Volume => "3d3d",
            Mode::OrthoSlices => "3do2d",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3d3d" => Ok(Mode::Volume),
            "3do2d" => Ok(Mode::OrthoSlices),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Two poses are too close when both their gland-centre displacement and
/// their relative rotation fall below these bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinDistance {
    pub mm: f64,
    pub deg: f64,
}

impl Default for MinDistance {
    fn default() -> Self {
        MinDistance { mm: 5.0, deg: 10.0 }
    }
}

/// Where the probe movement model comes from. Without a fixed point, it is
/// placed `DEFAULT_FP_DISTANCE_MM` below the box centre along -z. Origin and
/// axis, when given, must agree with the model derived from the fixed point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub fp_rect_mm: Option<[f64; 3]>,
    pub origin_mm: Option<[f64; 3]>,
    pub axis: Option<[f64; 3]>,
}

impl ProbeSettings {
    pub fn model(&self, bbox: &Aabb) -> Result<ProbeMovementModel> {
        let fp = self.fp_rect_mm.map(Vector3::from).unwrap_or_else(|| {
            bbox.center() - Vector3::z() * DEFAULT_FP_DISTANCE_MM
        });
        match (self.origin_mm, self.axis) {
            (Some(o), Some(a)) => {
                ProbeMovementModel::new(bbox, fp, Vector3::from(o), Vector3::from(a))
            }
            (None, None) => ProbeMovementModel::from_fixed_point(bbox, fp),
            _ => Err(Error::Config("probe origin and axis must be given together".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub mode: Mode,
    /// Defaults to 5 in volume mode and 4 in slice mode.
    pub pyramid_levels: Option<usize>,
    /// Finest level searched (0 is full resolution). Defaults to 2 in volume
    /// mode and 1 in slice mode.
    pub final_level: Option<usize>,
    /// The gradient term is used on levels at or above this one. Defaults to
    /// the two coarsest levels.
    pub attribute_level_cutoff: Option<usize>,
    pub grid: GridSpec,
    pub candidate_count: usize,
    pub candidate_min_distance: MinDistance,
    pub min_overlap: f64,
    pub optimizer: OptimizerConfig,
    pub probe: ProbeSettings,
    /// Geometry of the tracking images, used to precompute the exploration cache.
    pub tracking_geometry: Option<Geometry>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            mode: Mode::Volume,
            pyramid_levels: None,
            final_level: None,
            attribute_level_cutoff: None,
            grid: GridSpec::default(),
            candidate_count: 5,
            candidate_min_distance: MinDistance::default(),
            min_overlap: DEFAULT_MIN_OVERLAP,
            optimizer: OptimizerConfig::default(),
            probe: ProbeSettings::default(),
            tracking_geometry: None,
        }
    }
}

impl RegistrationConfig {
    pub fn for_mode(mode: Mode) -> Self {
        RegistrationConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.pyramid_levels.unwrap_or(match self.mode {
            Mode::Volume => 5,
            Mode::OrthoSlices => 4,
        })
    }

    pub fn final_level(&self) -> usize {
        self.final_level.unwrap_or(match self.mode {
            Mode::Volume => 2,
            Mode::OrthoSlices => 1,
        })
    }

    pub fn attribute_cutoff(&self) -> usize {
        self.attribute_level_cutoff
            .unwrap_or_else(|| self.levels().saturating_sub(2))
    }

    pub fn coarsest(&self) -> usize {
        self.levels() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.levels();
        let fin = self.final_level();
        if !(1 <= fin && fin < levels) {
            return Err(Error::Config(format!(
                "final_level {fin} must satisfy 1 <= final_level < pyramid_levels ({levels})"
            )));
        }
        if self.candidate_count == 0 {
            return Err(Error::Config("candidate_count must be at least 1".into()));
        }
        let d = self.candidate_min_distance;
        if !(d.mm >= 0.0 && d.deg >= 0.0) {
            return Err(Error::Config("candidate_min_distance must be non-negative".into()));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::Config(format!("min_overlap {} outside (0, 1]", self.min_overlap)));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Some Powell search ran out of sweeps.
    IterationLimit,
    /// The final energy is undefined (no overlap at the final pose).
    UndefinedEnergy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub pose_index: usize,
    pub pose: ProbePose,
    #[serde(with = "crate::serde_util::energy")]
    pub energy: f64,
    /// Reference to tracking frame.
    pub refined_transform: RigidTransform,
    #[serde(with = "crate::serde_util::energy")]
    pub refined_energy: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub pyramids_ms: f64,
    pub exploration_ms: f64,
    pub candidates_ms: f64,
    pub refinement_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub mode: Mode,
    /// Maps reference coordinates to tracking-image coordinates.
    pub transform: RigidTransform,
    /// Energy at the finest searched level.
    #[serde(with = "crate::serde_util::energy")]
    pub final_energy: f64,
    #[serde(with = "crate::serde_util::energy")]
    pub exploration_energy: f64,
    /// Sorted by refined energy.
    pub candidates: Vec<CandidateResult>,
    /// Coarsest level first.
    pub levels: Vec<LevelOutcome>,
    pub stage_timings: StageTimings,
    pub converged: bool,
    pub failure_reason: Option<FailureReason>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Success {
    pub success: bool,
    pub eps_e_mm: f64,
    pub eps_a_deg: f64,
}

/// Strict success rule: `eps_E < 2 mm` at `center` and `eps_A < 5 deg`.
pub fn classify_success(estimate: &RigidTransform, truth: &RigidTransform, center: &Vector3<f64>) -> Success {
    classify_errors(euclidean_error(estimate, truth, center), angular_error(estimate, truth))
}

pub fn classify_errors(eps_e_mm: f64, eps_a_deg: f64) -> Success {
    Success {
        success: eps_e_mm < 2.0 && eps_a_deg < 5.0,
        eps_e_mm,
        eps_a_deg,
    }
}
