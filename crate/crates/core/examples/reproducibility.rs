//! Ten restarts of the final search from start points perturbed by 2 mm and
//! 2 degrees, averaged into a mean transform.

use trus_track::harness::{gland_center, render_panorama, render_tracking, run_reproducibility, Noise, SuiteSpec};
use trus_track::pipeline::{classify_success, RegistrationConfig, TrackingImage, Tracker};
use trus_track::transform::rms;

fn main() -> trus_track::Result<()> {
    let suite = SuiteSpec::default();
    let spec = suite.patient_spec(2);
    let pano = render_panorama(&spec)?;
    let tracker = Tracker::new(&pano.volume, pano.bbox, RegistrationConfig::default())?;
    let sample = render_tracking(&spec, &suite.ranges, 1)?;
    let prepared = tracker.prepare(TrackingImage::Volume(&sample.volume))?;

    let out = run_reproducibility(&tracker, &prepared, 10, Noise::default(), 42)?;
    for (i, r) in out.runs.iter().enumerate() {
        println!(
            "restart {i}: eps_E {:.3} mm  eps_A {:.3} deg  energy {:.5}",
            r.eps_e_mm.unwrap_or(f64::NAN),
            r.eps_a_deg.unwrap_or(f64::NAN),
            r.energy
        );
    }
    println!(
        "r.m.s. eps_E {:.3} mm, eps_A {:.3} deg over {} runs ({} failed)",
        rms(&out.eps_e_mm).unwrap_or(f64::NAN),
        rms(&out.eps_a_deg).unwrap_or(f64::NAN),
        out.runs.len(),
        out.failures
    );
    let s = classify_success(&out.mean, &sample.scene.true_pose, &gland_center(&spec));
    println!("mean transform vs truth: eps_E {:.3} mm, eps_A {:.3} deg", s.eps_e_mm, s.eps_a_deg);
    Ok(())
}
