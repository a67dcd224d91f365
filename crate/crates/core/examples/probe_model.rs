//! The three-parameter probe movement model and its exploration grid.

use trus_track::probe::{generate_grid, GridSpec, ProbeMovementModel, ProbePose};
use trus_track::transform::{angular_error, euclidean_error};
use trus_track::volume::Aabb;
use nalgebra::Vector3;

fn main() -> trus_track::Result<()> {
    let bbox = Aabb::new(Vector3::new(-20.0, -15.0, 0.0), Vector3::new(20.0, 15.0, 38.0))?;
    let model = ProbeMovementModel::from_fixed_point(&bbox, Vector3::new(0.0, 0.0, -26.0))?;
    println!("gland centre {:?}", model.center().as_slice());
    println!("probe origin {:?}", model.probe_origin().as_slice());

    let grid = generate_grid(GridSpec::default())?;
    println!("exploration grid: {} poses", grid.len());

    // a probe slid over the gland and rolled about its axis
    let center = model.center();
    for pose in [
        ProbePose::from_degrees(0.0, 0.0, 90.0),
        ProbePose::from_degrees(20.0, -10.0, 0.0),
        ProbePose::from_degrees(-30.0, 15.0, 150.0),
    ] {
        let t = model.pose_to_transform(&pose);
        let origin = model.surface_point(pose.alpha, pose.beta);
        println!(
            "pose ({:>5.1}, {:>5.1}, {:>5.1}) deg: rotation {:>6.2} deg, centre moves {:>5.2} mm, origin residual {:.1e}",
            pose.alpha.to_degrees(),
            pose.beta.to_degrees(),
            pose.lambda.to_degrees(),
            angular_error(&t, &Default::default()),
            euclidean_error(&t, &Default::default(), &center),
            model.ellipsoid_residual(&origin)
        );
    }
    Ok(())
}
