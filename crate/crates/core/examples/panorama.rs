//! Compounds three rolled acquisitions into a reference panorama and checks
//! how much of the gland it covers.

use trus_track::harness::{render_panorama, PANORAMA_ROLLS_DEG};
use trus_track::phantom::PhantomSpec;

fn main() -> trus_track::Result<()> {
    let spec = PhantomSpec::random(7);
    let pano = render_panorama(&spec)?;
    let v = &pano.volume;
    println!("rolls {:?} deg -> panorama {:?} at {:?} mm", PANORAMA_ROLLS_DEG, v.dims(), v.geometry().spacing);

    let (mut inside, mut covered) = (0usize, 0usize);
    for idx in 0..v.geometry().len() {
        let p = v.geometry().voxel_center(idx);
        let c = spec.gland_center_mm;
        let a = spec.gland_semi_axes_mm;
        let r: f64 = (0..3).map(|k| ((p[k] - c[k]) / a[k]).powi(2)).sum();
        if r <= 1.0 {
            inside += 1;
            covered += v.is_valid(idx) as usize;
        }
    }
    println!("gland coverage {:.2}% of {inside} voxels", 100.0 * covered as f64 / inside as f64);
    println!("bbox {:?}", pano.bbox.to_array());
    Ok(())
}
