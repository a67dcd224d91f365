//! Volume plumbing: file round trip, resolution pyramid, reslicing and
//! orthogonal slice extraction.

use nalgebra::{Unit, Vector3};
use trus_track::transform::RigidTransform;
use trus_track::volume::{build_pyramid, extract_ortho_slices, read_volume, write_volume, Frame, Geometry, Volume};

fn main() -> trus_track::Result<()> {
    let g = Geometry::axis_aligned([96, 80, 64], [0.5, 0.5, 0.6], [0.0; 3])?;
    let v = Volume::from_fn(g, |p| (100.0 + 30.0 * (0.2 * p.x).sin() * (0.15 * p.y).cos() + p.z) as f32)?;

    let path = std::env::temp_dir().join("volume_pipeline_example.vvf");
    write_volume(&v, &path)?;
    let back = read_volume(&path)?;
    println!("file round trip exact: {}", back == v);
    std::fs::remove_file(&path).ok();

    for (level, l) in build_pyramid(&v, 4)?.iter().enumerate() {
        println!("level {level}: dims {:?}, spacing {:?}", l.dims(), l.geometry().spacing);
    }

    let turn = RigidTransform::rotation_about(&Unit::new_normalize(Vector3::z()), 0.2, &v.geometry().center());
    let turned = v.reslice(&turn, v.geometry())?;
    println!("reslice under a 0.2 rad turn keeps {} of {} voxels", turned.valid_count(), turned.geometry().len());

    let slices = extract_ortho_slices(&v, &Frame::of_volume(v.geometry()))?;
    for p in slices.planes() {
        println!("plane dims {:?}, normal {:?}", p.dims(), p.geometry().axes.column(2).as_slice());
    }
    Ok(())
}
