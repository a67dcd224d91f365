//! Renders a randomised prostate phantom at a plausible probe pose and
//! reports what the acquisition contains.
//!
//! ```text
//! cargo run --release --example phantom_scene -- [seed] [out.vvf]
//! ```

use trus_track::phantom::{landmark_errors, render_phantom, sample_plausible_pose, Acquisition, PhantomSpec, PoseRanges};
use trus_track::volume::write_volume;

fn main() -> trus_track::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spec = PhantomSpec::random(seed);
    let model = spec.probe_model()?;
    let (truth, pose) = sample_plausible_pose(&model, &PoseRanges::default(), seed);
    let (volume, scene) = render_phantom(&spec, &truth, &spec.geometry, &Acquisition::with_random_intensity(seed))?;

    let a = spec.gland_semi_axes_mm;
    println!("gland semi-axes {:.1} x {:.1} x {:.1} mm", a[0], a[1], a[2]);
    println!(
        "{} calcifications, {} needle tracks, {} zones",
        spec.calcifications.len(),
        spec.needle_tracks.len(),
        spec.zones.len()
    );
    println!(
        "probe pose alpha {:.1} beta {:.1} lambda {:.1} deg",
        pose.alpha.to_degrees(),
        pose.beta.to_degrees(),
        pose.lambda.to_degrees()
    );
    let valid = volume.valid_count();
    println!(
        "{:?} voxels, {:.1}% inside the cone",
        volume.dims(),
        100.0 * valid as f64 / volume.geometry().len() as f64
    );
    let errors = landmark_errors(&scene, &scene.true_pose)?;
    println!("landmark errors at the true pose: {:?}", errors.calcification_mm);

    if let Some(path) = args.get(2) {
        write_volume(&volume, path)?;
        println!("wrote {path}");
    }
    Ok(())
}
