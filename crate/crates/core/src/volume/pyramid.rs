use rayon::prelude::*;

use super::{Geometry, Volume};
use crate::error::{Error, Result};

const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
const MIN_AXIS: usize = 4;

/// Dims of every pyramid level (floor halving; singleton axes stay singleton).
pub fn pyramid_dims(dims: [usize; 3], levels: usize) -> Result<Vec<[usize; 3]>> {
    if levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let mut out = vec![dims];
    for _ in 1..levels {
        let prev = *out.last().unwrap();
        let next = prev.map(|n| if n == 1 { 1 } else { n / 2 });
        out.push(next);
    }
    for d in &out {
        for axis in 0..3 {
            if dims[axis] > 1 && d[axis] < MIN_AXIS {
                return Err(Error::TooCoarse {
                    levels,
                    axis,
                    dims,
                });
            }
        }
    }
    Ok(out)
}

/// Gaussian pyramid: level 0 is the input, each further level is smoothed
/// with the separable binomial (1,4,6,4,1)/16 kernel and decimated by two.
///
/// Coarse voxel `j` sits on fine voxel `2j`, so the origin is unchanged and
/// the spacing doubles. Smoothing is normalised over valid in-bounds taps.
/// A coarse voxel is valid when at least half of its 2x2x2 children are.
pub fn build_pyramid(volume: &Volume, levels: usize) -> Result<Vec<Volume>> {
    pyramid_dims(volume.dims(), levels)?;
    let mut out = vec![volume.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

fn downsample(v: &Volume) -> Result<Volume> {
    let g = v.geometry();
    let dims = g.dims;
    let mut num: Vec<f64> = (0..g.len())
        .map(|i| if v.is_valid(i) { v.value(i) as f64 } else { 0.0 })
        .collect();
    let mut den: Vec<f64> = (0..g.len())
        .map(|i| if v.is_valid(i) { 1.0 } else { 0.0 })
        .collect();
    for axis in 0..3 {
        if dims[axis] > 1 {
            num = convolve_axis(&num, dims, axis);
            den = convolve_axis(&den, dims, axis);
        }
    }

    let cdims = dims.map(|n| if n == 1 { 1 } else { n / 2 });
    let mut spacing = g.spacing;
    for k in 0..3 {
        if dims[k] > 1 {
            spacing[k] *= 2.0;
        }
    }
    let cg = Geometry::new(cdims, spacing, g.origin, g.axes)?;
    let has_mask = v.mask().is_some();
    let cells: Vec<(f32, bool)> = (0..cg.len())
        .into_par_iter()
        .map(|cidx| {
            let [ci, cj, ck] = cg.voxel_coords(cidx);
            let fine = [2 * ci, 2 * cj, 2 * ck];
            let fidx = g.linear_index(fine[0], fine[1], fine[2]);
            let valid = if has_mask {
                let mut total = 0usize;
                let mut ok = 0usize;
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let c = [fine[0] + dx, fine[1] + dy, fine[2] + dz];
                            if (0..3).any(|a| c[a] >= dims[a]) {
                                continue;
                            }
                            total += 1;
                            if v.is_valid(g.linear_index(c[0], c[1], c[2])) {
                                ok += 1;
                            }
                        }
                    }
                }
                2 * ok >= total && den[fidx] > 0.0
            } else {
                true
            };
            if valid {
                ((num[fidx] / den[fidx]) as f32, true)
            } else {
                (0.0, false)
            }
        })
        .collect();
    let mask = has_mask.then(|| cells.iter().map(|c| c.1).collect());
    Volume::new(cg, cells.into_iter().map(|c| c.0).collect(), mask)
}

fn convolve_axis(input: &[f64], dims: [usize; 3], axis: usize) -> Vec<f64> {
    let nx = dims[0];
    let strides = [1, dims[0], dims[0] * dims[1]];
    let n = dims[axis];
    let stride = strides[axis];
    let mut out = vec![0.0; input.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(line, row)| {
        let j = line % dims[1];
        let k = line / dims[1];
        for (i, o) in row.iter_mut().enumerate() {
            let coord = [i, j, k][axis];
            let idx = i + nx * (j + dims[1] * k);
            let mut acc = 0.0;
            for (t, w) in KERNEL.iter().enumerate() {
                let c = coord as isize + t as isize - 2;
                if c < 0 || c >= n as isize {
                    continue;
                }
                let src = (idx as isize + (c - coord as isize) * stride as isize) as usize;
                acc += w * input[src];
            }
            *o = acc;
        }
    });
    out
}
