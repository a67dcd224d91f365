//! Correlation energy of a phantom against shifted and rotated copies of
//! itself, with and without the gradient-magnitude attribute. The two
//! acquisitions carry independent speckle, so the minimum is shallow.

use nalgebra::{Unit, Vector3};
use trus_track::phantom::{render_phantom, Acquisition, PhantomSpec};
use trus_track::similarity::{attribute_energy, pearson_cc, EvaluationDomain, DEFAULT_MIN_OVERLAP};
use trus_track::transform::RigidTransform;
use trus_track::volume::{build_pyramid, Geometry};

fn main() -> trus_track::Result<()> {
    let spec = PhantomSpec {
        geometry: Geometry::axis_aligned([64; 3], [0.8; 3], [-25.6, -25.6, -4.0])?,
        ..PhantomSpec::random(5)
    };
    let (fixed, _) = render_phantom(&spec, &RigidTransform::identity(), &spec.geometry, &Acquisition::plain(1))?;
    let (moving, _) = render_phantom(&spec, &RigidTransform::identity(), &spec.geometry, &Acquisition::with_random_intensity(2))?;
    let fixed = build_pyramid(&fixed, 2)?.remove(1);
    let moving = build_pyramid(&moving, 2)?.remove(1);
    let grad = moving.gradient_magnitude();

    let d_int = EvaluationDomain::from_volume(&fixed, "fixed")?;
    let d_grad = EvaluationDomain::from_volume(&fixed.gradient_magnitude(), "fixed gradient")?;
    let center = Vector3::from(spec.gland_center_mm);
    let z = Unit::new_normalize(Vector3::z());

    println!("{:>10} {:>12} {:>12}", "offset", "1 - CC", "attribute");
    for step in -4..=4 {
        let t = RigidTransform::from_translation(Vector3::new(step as f64, 0.0, 0.0));
        let cc = pearson_cc(&d_int, &moving, &t, DEFAULT_MIN_OVERLAP).map_or(f64::NAN, |c| 1.0 - c);
        let e = attribute_energy(&d_int, &d_grad, &moving, &grad, &t, DEFAULT_MIN_OVERLAP).unwrap_or(f64::NAN);
        println!("{:>8} mm {cc:>12.5} {e:>12.5}", step);
    }
    for deg in [-10.0, -5.0, 0.0, 5.0, 10.0f64] {
        let t = RigidTransform::rotation_about(&z, deg.to_radians(), &center);
        let cc = pearson_cc(&d_int, &moving, &t, DEFAULT_MIN_OVERLAP).map_or(f64::NAN, |c| 1.0 - c);
        let e = attribute_energy(&d_int, &d_grad, &moving, &grad, &t, DEFAULT_MIN_OVERLAP).unwrap_or(f64::NAN);
        println!("{:>7} deg {cc:>12.5} {e:>12.5}", deg);
    }
    Ok(())
}
