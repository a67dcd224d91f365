//! Rigid transform algebra: composition, error metrics and averaging.

use nalgebra::{Unit, Vector3};
use trus_track::transform::{angular_error, average_transforms, euclidean_error, RigidParams, RigidTransform};

fn main() -> trus_track::Result<()> {
    let c = Vector3::new(0.0, 0.0, 19.0);
    let axis = Unit::new_normalize(Vector3::new(1.0, 2.0, 0.5));
    let t = RigidTransform::rotation_about(&axis, 0.3, &c).compose(&RigidTransform::from_translation(Vector3::new(1.0, -2.0, 0.5)));
    println!("t^-1 t = identity: {}", t.inverse().compose(&t).angle() < 1e-12);

    let params = RigidParams::from_transform(&t)?;
    println!("parameters (rotation vector, translation): {:.4?}", params.to_scaled());
    println!("round trip error {:.2e} mm", euclidean_error(&params.to_transform()?, &t, &c));

    // a cluster of noisy estimates around `t`
    let cluster: Vec<RigidTransform> = (0..10)
        .map(|i| {
            let k = i as f64;
            let wobble = RigidTransform::rotation_about(
                &Unit::new_normalize(Vector3::new(k.sin(), k.cos(), 0.3)),
                0.02 * (k - 4.5) / 4.5,
                &c,
            );
            t.compose(&wobble).compose(&RigidTransform::from_translation(Vector3::new(0.1 * k.cos(), 0.1 * k.sin(), 0.0)))
        })
        .collect();
    let mean = average_transforms(&cluster)?;
    for (i, ti) in cluster.iter().enumerate().take(3) {
        println!("estimate {i}: eps_E {:.3} mm, eps_A {:.3} deg", euclidean_error(ti, &mean, &c), angular_error(ti, &mean));
    }
    println!("mean vs t: eps_E {:.3} mm, eps_A {:.3} deg", euclidean_error(&mean, &t, &c), angular_error(&mean, &t));
    Ok(())
}
