//! Registration from three orthogonal planes instead of a full volume.

use trus_track::harness::{gland_center, render_panorama, render_tracking, SuiteSpec};
use trus_track::pipeline::{classify_success, Mode, RegistrationConfig, TrackingImage, Tracker};
use trus_track::volume::{extract_ortho_slices, Frame};

fn main() -> trus_track::Result<()> {
    let suite = SuiteSpec::default();
    let spec = suite.patient_spec(1);
    let pano = render_panorama(&spec)?;
    let tracker = Tracker::new(&pano.volume, pano.bbox, RegistrationConfig::for_mode(Mode::OrthoSlices))?;
    let center = gland_center(&spec);

    for index in 0..3 {
        let sample = render_tracking(&spec, &suite.ranges, index)?;
        // planes reconstructed from the volume, cut from each pyramid level
        let from_volume = tracker.register(TrackingImage::Volume(&sample.volume))?;
        // the same three planes handed over as plain 2D images
        let slices = extract_ortho_slices(&sample.volume, &Frame::of_volume(sample.volume.geometry()))?;
        let from_planes = tracker.register(TrackingImage::Slices(&slices))?;
        for (name, r) in [("volume planes", &from_volume), ("2D planes", &from_planes)] {
            let s = classify_success(&r.transform, &sample.scene.true_pose, &center);
            println!(
                "acquisition {index} {name:>13}: success {} eps_E {:.2} mm eps_A {:.2} deg ({:.0} ms)",
                s.success, s.eps_e_mm, s.eps_a_deg, r.stage_timings.total_ms
            );
        }
    }
    Ok(())
}
