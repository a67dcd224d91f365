use crate::error::{Error, Result};
use crate::transform::RigidTransform;
use crate::volume::Volume;

/// Checkerboard of the tracking image and the reference resampled onto it
/// through `transform` (reference to tracking). Squares are `block_mm` wide.
/// Reference squares are linearly rescaled to the tracking mean and spread
/// over voxels valid in both images.
pub fn checkerboard(tracking: &Volume, reference: &Volume, transform: &RigidTransform, block_mm: f64) -> Result<Volume> {
    if !(block_mm > 0.0 && block_mm.is_finite()) {
        return Err(Error::Config(format!("checkerboard block {block_mm} mm must be positive")));
    }
    let g = tracking.geometry();
    let moved = reference.reslice(&transform.inverse(), g)?;
    let both: Vec<usize> = (0..g.len())
        .filter(|&i| tracking.is_valid(i) && moved.is_valid(i))
        .collect();
    let stats = |v: &Volume| {
        let n = both.len().max(1) as f64;
        let mean = both.iter().map(|&i| v.value(i) as f64).sum::<f64>() / n;
        let var = both.iter().map(|&i| (v.value(i) as f64 - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (mt, st) = stats(tracking);
    let (mr, sr) = stats(&moved);
    let gain = if sr > 0.0 { st / sr } else { 1.0 };
    let mut data = Vec::with_capacity(g.len());
    let mut mask = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let c = g.voxel_coords(i);
        let parity: usize = (0..3)
            .map(|k| (c[k] as f64 * g.spacing[k] / block_mm).floor() as usize)
            .sum();
        if parity % 2 == 0 {
            data.push(tracking.value(i));
            mask.push(tracking.is_valid(i));
        } else {
            data.push((mt + (moved.value(i) as f64 - mr) * gain) as f32);
            mask.push(moved.is_valid(i));
        }
    }
    let mask = (!mask.iter().all(|&m| m)).then_some(mask);
    Volume::new(g.clone(), data, mask)
}
