use nalgebra::Vector3;

use super::MinDistance;
use crate::transform::{angular_error, euclidean_error, RigidTransform};

/// True when both the displacement of `center` and the relative rotation
/// between `a` and `b` are below the bounds.
pub fn too_close(a: &RigidTransform, b: &RigidTransform, center: &Vector3<f64>, min: MinDistance) -> bool {
    euclidean_error(a, b, center) < min.mm && angular_error(a, b) < min.deg
}

/// Greedy pruning: visits finite energies in ascending order (ties by index)
/// and keeps an index unless it is too close to one already kept.
pub fn select_candidates(
    energies: &[f64],
    count: usize,
    too_close: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).filter(|&i| energies[i].is_finite()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(count);
    for i in order {
        if kept.len() == count {
            break;
        }
        if kept.iter().all(|&k| !too_close(k, i)) {
            kept.push(i);
        }
    }
    kept
}
