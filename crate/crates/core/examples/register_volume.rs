//! Full volume-to-volume registration of a phantom acquisition taken at an
//! arbitrary probe pose, scored against the known truth.
//!
//! ```text
//! cargo run --release --example register_volume -- [patient] [acquisition]
//! ```

use std::time::Instant;

use trus_track::harness::{gland_center, render_panorama, render_tracking, SuiteSpec};
use trus_track::phantom::landmark_errors;
use trus_track::pipeline::{classify_success, Mode, RegistrationConfig, TrackingImage, Tracker};

fn main() -> trus_track::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (patient, index) = (args.first().copied().unwrap_or(0), args.get(1).copied().unwrap_or(0));
    let suite = SuiteSpec::default();
    let spec = suite.patient_spec(patient);

    let clock = Instant::now();
    let pano = render_panorama(&spec)?;
    let tracker = Tracker::new(&pano.volume, pano.bbox, RegistrationConfig::for_mode(Mode::Volume))?;
    let sample = render_tracking(&spec, &suite.ranges, index as u64)?;
    println!("phantom and reference ready in {:.1} s", clock.elapsed().as_secs_f64());
    println!(
        "true probe pose: alpha {:.1}, beta {:.1}, lambda {:.1} deg",
        sample.pose.alpha.to_degrees(),
        sample.pose.beta.to_degrees(),
        sample.pose.lambda.to_degrees()
    );

    let result = tracker.register(TrackingImage::Volume(&sample.volume))?;
    for c in &result.candidates {
        println!(
            "candidate pose ({:>6.1}, {:>6.1}, {:>6.1}) energy {:.4} -> {:.4}",
            c.pose.alpha.to_degrees(),
            c.pose.beta.to_degrees(),
            c.pose.lambda.to_degrees(),
            c.energy,
            c.refined_energy
        );
    }
    for l in &result.levels {
        println!("level {}: {:.4} -> {:.4} in {} sweeps", l.level, l.start_energy, l.energy, l.iterations);
    }
    let s = classify_success(&result.transform, &sample.scene.true_pose, &gland_center(&spec));
    let lm = landmark_errors(&sample.scene, &result.transform)?;
    println!(
        "success {} (eps_E {:.2} mm, eps_A {:.2} deg) in {:.0} ms",
        s.success, s.eps_e_mm, s.eps_a_deg, result.stage_timings.total_ms
    );
    println!("calcification errors {:.2?} mm, needle errors {:.2?} deg", lm.calcification_mm, lm.needle_deg);
    Ok(())
}
