//! Shared fixtures: a 64^3 phantom at 0.8 mm. Pyramids are one level
//! shorter than the 128^3 defaults so the coarsest spacing matches.

#![allow(dead_code)]

use std::path::Path;

use trus_track::harness::{render_panorama, render_tracking, Panorama, TrackingSample};
use trus_track::phantom::{PhantomSpec, PoseRanges};
use trus_track::pipeline::{Mode, RegistrationConfig, Tracker};
use trus_track::volume::Geometry;

pub fn small_spec(seed: u64) -> PhantomSpec {
    PhantomSpec {
        geometry: Geometry::axis_aligned([64; 3], [0.8; 3], [-25.2, -25.2, -4.0]).unwrap(),
        ..PhantomSpec::random(seed)
    }
}

pub fn noise_free(spec: PhantomSpec) -> PhantomSpec {
    PhantomSpec {
        speckle_sigma: 0.0,
        ..spec
    }
}

pub fn small_config(mode: Mode) -> RegistrationConfig {
    let (levels, last) = match mode {
        Mode::Volume => (4, 1),
        Mode::OrthoSlices => (3, 1),
    };
    RegistrationConfig {
        pyramid_levels: Some(levels),
        final_level: Some(last),
        ..RegistrationConfig::for_mode(mode)
    }
}

pub struct Scene {
    pub spec: PhantomSpec,
    pub panorama: Panorama,
}

impl Scene {
    pub fn new(spec: PhantomSpec) -> Scene {
        let panorama = render_panorama(&spec).unwrap();
        Scene { spec, panorama }
    }

    pub fn tracker(&self, mode: Mode) -> Tracker {
        Tracker::new(&self.panorama.volume, self.panorama.bbox, small_config(mode)).unwrap()
    }

    pub fn tracking(&self, index: u64) -> TrackingSample {
        render_tracking(&self.spec, &PoseRanges::default(), index).unwrap()
    }
}

pub fn exists(p: &Path) -> bool {
    p.is_file()
}
