use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::transform::RigidTransform;
use crate::volume::{Geometry, Volume};

/// Axis-aligned geometry bounding every input after mapping by its pose,
/// sampled at the finest input spacing.
pub fn panorama_geometry(acquisitions: &[Volume], poses: &[RigidTransform]) -> Result<Geometry> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut spacing = f64::INFINITY;
    for (v, t) in acquisitions.iter().zip(poses) {
        for c in v.geometry().corners() {
            let p = t.apply(&c);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        spacing = v.geometry().spacing.iter().copied().fold(spacing, f64::min);
    }
    let dims: [usize; 3] =
        std::array::from_fn(|k| ((hi[k] - lo[k]) / spacing - 1e-9).ceil().max(0.0) as usize + 1);
    Geometry::axis_aligned(dims, [spacing; 3], lo.into())
}

/// Fuses acquisitions into one reference volume. `poses[k]` maps
/// acquisition `k` into the reference frame. Each output voxel is the mean of
/// the valid samples it receives and is masked out when it receives none.
///
/// Fails with `NoOverlap` when the inputs do not form a connected overlap
/// graph, i.e. some group of acquisitions shares no voxel with the rest.
pub fn compound_panorama(acquisitions: &[Volume], poses: &[RigidTransform]) -> Result<Volume> {
    if acquisitions.is_empty() || acquisitions.len() != poses.len() {
        return Err(Error::Config(format!(
            "{} acquisitions with {} poses",
            acquisitions.len(),
            poses.len()
        )));
    }
    if acquisitions.len() > 64 {
        return Err(Error::Config("at most 64 acquisitions can be compounded".into()));
    }
    let geometry = panorama_geometry(acquisitions, poses)?;
    let inverse: Vec<RigidTransform> = poses.iter().map(|t| t.inverse()).collect();
    let cells: Vec<(f32, u64)> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let q = geometry.voxel_center(idx);
            let mut sum = 0.0;
            let mut bits = 0u64;
            for (k, (v, t)) in acquisitions.iter().zip(&inverse).enumerate() {
                if let Some(s) = v.sample_trilinear(&t.apply(&q)) {
                    sum += s;
                    bits |= 1 << k;
                }
            }
            match bits.count_ones() {
                0 => (0.0, 0),
                n => ((sum / n as f64) as f32, bits),
            }
        })
        .collect();

    let n = acquisitions.len();
    let mut linked = vec![false; n * n];
    let mut covered = 0u64;
    let mut seen = std::collections::HashSet::new();
    for &(_, bits) in &cells {
        covered |= bits;
        if bits.count_ones() >= 2 && seen.insert(bits) {
            for i in 0..n {
                for j in 0..n {
                    if bits >> i & 1 == 1 && bits >> j & 1 == 1 {
                        linked[i * n + j] = true;
                    }
                }
            }
        }
    }
    if covered == 0 || !connected(&linked, n) {
        return Err(Error::NoOverlap);
    }
    let mask = cells.iter().map(|c| c.1 != 0).collect();
    let data = cells.into_iter().map(|c| c.0).collect();
    Volume::new(geometry, data, Some(mask))
}

fn connected(linked: &[bool], n: usize) -> bool {
    let mut reached = vec![false; n];
    let mut stack = vec![0];
    reached[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if linked[i * n + j] && !reached[j] {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    reached.into_iter().all(|r| r)
}
