//! Physical-space scalar volumes.
//!
//! A [`Volume`] is a lattice of `f32` samples positioned in world millimetres
//! by its [`Geometry`]: voxel `(i, j, k)` sits at
//! `origin + axes * (i * sx, j * sy, k * sz)`. Data are stored with x fastest.
//! An optional mask flags voxels holding valid ultrasound data; mask-false
//! voxels never contribute to sampling or statistics.

mod io;
mod pyramid;
pub(crate) mod slices;

pub use io::{read_volume, read_volume_from, write_volume, write_volume_to};
pub use pyramid::{build_pyramid, pyramid_dims};
pub use slices::{extract_ortho_slices, Frame, OrthoSlices};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::RigidTransform;

const ORTHONORMAL_TOL: f64 = 1e-6;
const INDEX_EPS: f64 = 1e-9;

/// Lattice layout of a volume in world space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    #[serde(rename = "spacing_mm")]
    pub spacing: [f64; 3],
    #[serde(rename = "origin_mm")]
    pub origin: [f64; 3],
    /// Columns are the voxel axes expressed in world coordinates.
    #[serde(with = "crate::serde_util::row_major")]
    pub axes: Matrix3<f64>,
}

impl Geometry {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        axes: Matrix3<f64>,
    ) -> Result<Self> {
        let g = Geometry {
            dims,
            spacing,
            origin,
            axes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, origin, Matrix3::identity())
    }

    /// Isotropic axis-aligned lattice whose voxel centres are centred on `center`.
    pub fn centered_cube(n: usize, spacing: f64, center: [f64; 3]) -> Result<Self> {
        let half = 0.5 * (n as f64 - 1.0) * spacing;
        Self::axis_aligned(
            [n; 3],
            [spacing; 3],
            [center[0] - half, center[1] - half, center[2] - half],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGeometry(format!("zero dimension in {:?}", self.dims)));
        }
        if self
            .spacing
            .iter()
            .any(|&s| !(s.is_finite() && s > 0.0 && s <= 10.0))
        {
            return Err(Error::InvalidGeometry(format!(
                "spacing {:?} outside (0, 10] mm",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite origin".into()));
        }
        let gram = self.axes.transpose() * self.axes;
        for r in 0..3 {
            for c in 0..3 {
                let expected = if r == c { 1.0 } else { 0.0 };
                if !((gram[(r, c)] - expected).abs() < ORTHONORMAL_TOL) {
                    return Err(Error::InvalidGeometry(format!(
                        "axes are not orthonormal (gram[{r},{c}] = {})",
                        gram[(r, c)]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn voxel_coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn origin_vec(&self) -> Vector3<f64> {
        Vector3::from(self.origin)
    }

    /// World position of a (possibly fractional) voxel index.
    #[inline]
    pub fn index_to_world(&self, index: &Vector3<f64>) -> Vector3<f64> {
        let scaled = Vector3::new(
            index.x * self.spacing[0],
            index.y * self.spacing[1],
            index.z * self.spacing[2],
        );
        self.origin_vec() + self.axes * scaled
    }

    pub fn voxel_center(&self, idx: usize) -> Vector3<f64> {
        let [i, j, k] = self.voxel_coords(idx);
        self.index_to_world(&Vector3::new(i as f64, j as f64, k as f64))
    }

    /// Continuous voxel index of a world point.
    #[inline]
    pub fn world_to_index(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let local = self.axes.transpose() * (p - self.origin_vec());
        Vector3::new(
            local.x / self.spacing[0],
            local.y / self.spacing[1],
            local.z / self.spacing[2],
        )
    }

    /// Affine map `p -> a * p + b` taking world points through `t` into this
    /// lattice's continuous index space.
    pub fn index_map(&self, t: &RigidTransform) -> (Matrix3<f64>, Vector3<f64>) {
        let inv_s = Matrix3::from_diagonal(&Vector3::new(
            1.0 / self.spacing[0],
            1.0 / self.spacing[1],
            1.0 / self.spacing[2],
        ));
        let world_to_idx = inv_s * self.axes.transpose();
        let a = world_to_idx * t.rotation_matrix();
        let b = world_to_idx * (t.translation() - self.origin_vec());
        (a, b)
    }

    /// World centre of the lattice.
    pub fn center(&self) -> Vector3<f64> {
        self.index_to_world(&Vector3::new(
            0.5 * (self.dims[0] as f64 - 1.0),
            0.5 * (self.dims[1] as f64 - 1.0),
            0.5 * (self.dims[2] as f64 - 1.0),
        ))
    }

    /// World positions of the eight corner voxel centres.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let hi = [
            self.dims[0] as f64 - 1.0,
            self.dims[1] as f64 - 1.0,
            self.dims[2] as f64 - 1.0,
        ];
        let mut out = [Vector3::zeros(); 8];
        for (n, c) in out.iter_mut().enumerate() {
            let idx = Vector3::new(
                if n & 1 == 0 { 0.0 } else { hi[0] },
                if n & 2 == 0 { 0.0 } else { hi[1] },
                if n & 4 == 0 { 0.0 } else { hi[2] },
            );
            *c = self.index_to_world(&idx);
        }
        out
    }

    /// True when the continuous index lies inside the voxel-centre lattice.
    pub fn contains_index(&self, c: &Vector3<f64>) -> bool {
        (0..3).all(|k| {
            let n = self.dims[k] as f64;
            if self.dims[k] == 1 {
                c[k].abs() <= 0.5
            } else {
                c[k] >= -INDEX_EPS && c[k] <= n - 1.0 + INDEX_EPS
            }
        })
    }
}

/// Axis-aligned box in world millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    #[serde(with = "crate::serde_util::vec3")]
    pub min: Vector3<f64>,
    #[serde(with = "crate::serde_util::vec3")]
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if (0..3).any(|k| !(min[k].is_finite() && max[k].is_finite() && max[k] > min[k])) {
            return Err(Error::Config(format!(
                "bounding box is empty or non-finite: {min:?} .. {max:?}"
            )));
        }
        Ok(Aabb { min, max })
    }

    /// Parses `x0,y0,z0,x1,y1,z1`.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad bounding box '{s}': {e}")))?;
        if v.len() != 6 {
            return Err(Error::Config(format!(
                "bounding box needs 6 numbers, got {}",
                v.len()
            )));
        }
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn center(&self) -> Vector3<f64> {
        0.5 * (self.min + self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    #[inline]
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.min.x, self.min.y, self.min.z, self.max.x, self.max.y, self.max.z,
        ]
    }
}

/// 3D scalar image with physical placement and optional validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    data: Vec<f32>,
    mask: Option<Vec<bool>>,
}

impl Volume {
    pub fn new(geometry: Geometry, data: Vec<f32>, mask: Option<Vec<bool>>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::InvalidGeometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        if let Some(m) = &mask {
            if m.len() != data.len() {
                return Err(Error::InvalidGeometry(format!(
                    "mask length {} does not match data length {}",
                    m.len(),
                    data.len()
                )));
            }
        }
        Ok(Volume {
            geometry,
            data,
            mask,
        })
    }

    pub fn filled(geometry: Geometry, value: f32) -> Result<Self> {
        let n = geometry.len();
        Self::new(geometry, vec![value; n], None)
    }

    /// Builds a volume by evaluating `f` at every voxel centre (in parallel).
    pub fn from_fn<F>(geometry: Geometry, f: F) -> Result<Self>
    where
        F: Fn(Vector3<f64>) -> f32 + Sync,
    {
        geometry.validate()?;
        let data = (0..geometry.len())
            .into_par_iter()
            .map(|idx| f(geometry.voxel_center(idx)))
            .collect();
        Self::new(geometry, data, None)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn into_parts(self) -> (Geometry, Vec<f32>, Option<Vec<bool>>) {
        (self.geometry, self.data, self.mask)
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[idx])
    }

    pub fn valid_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.data.len(), |m| m.iter().filter(|&&v| v).count())
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f32 {
        self.data[idx]
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.geometry.linear_index(i, j, k)]
    }

    /// Replaces the mask; mask-false voxels are zeroed.
    pub fn with_mask(mut self, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != self.data.len() {
                return Err(Error::InvalidGeometry("mask length mismatch".into()));
            }
            for (v, &ok) in self.data.iter_mut().zip(m) {
                if !ok {
                    *v = 0.0;
                }
            }
        }
        self.mask = mask;
        Ok(self)
    }

    /// Applies `f` to every voxel value, keeping geometry and mask.
    pub fn map_values(&self, f: impl Fn(f32) -> f32 + Sync) -> Volume {
        let data = self
            .data
            .par_iter()
            .enumerate()
            .map(|(i, &v)| if self.is_valid(i) { f(v) } else { 0.0 })
            .collect();
        Volume {
            geometry: self.geometry.clone(),
            data,
            mask: self.mask.clone(),
        }
    }

    /// Trilinear interpolation at a continuous voxel index.
    ///
    /// Absent outside the lattice or when a neighbour carrying non-zero
    /// weight is mask-false. Singleton axes accept indices within half a voxel.
    #[inline]
    pub fn sample_index(&self, c: &Vector3<f64>) -> Option<f64> {
        let dims = self.geometry.dims;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let mut step = [0usize; 3];
        for k in 0..3 {
            let n = dims[k];
            let ck = c[k];
            if n == 1 {
                if !(ck.abs() <= 0.5) {
                    return None;
                }
                continue;
            }
            let hi = (n - 1) as f64;
            if !(ck >= -INDEX_EPS && ck <= hi + INDEX_EPS) {
                return None;
            }
            let ck = ck.clamp(0.0, hi);
            let i0 = (ck.floor() as usize).min(n - 2);
            base[k] = i0;
            frac[k] = ck - i0 as f64;
            step[k] = 1;
        }
        let nx = dims[0];
        let nxy = dims[0] * dims[1];
        let origin = base[0] + nx * base[1] + nxy * base[2];
        let offs = [step[0], nx * step[1], nxy * step[2]];
        let mut acc = 0.0f64;
        for corner in 0..8 {
            let mut w = 1.0f64;
            let mut idx = origin;
            for k in 0..3 {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx += offs[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w == 0.0 {
                continue;
            }
            if !self.is_valid(idx) {
                return None;
            }
            acc += w * self.data[idx] as f64;
        }
        Some(acc)
    }

    /// Trilinear interpolation at a world point.
    #[inline]
    pub fn sample_trilinear(&self, p: &Vector3<f64>) -> Option<f64> {
        self.sample_index(&self.geometry.world_to_index(p))
    }

    /// Resamples `self` onto `target`: output voxel at world `p` holds
    /// `sample_trilinear(transform(p))`; unsampleable voxels are mask-false.
    pub fn reslice(&self, transform: &RigidTransform, target: &Geometry) -> Result<Volume> {
        target.validate()?;
        let (a, b) = self.geometry.index_map(transform);
        let samples: Vec<Option<f64>> = (0..target.len())
            .into_par_iter()
            .map(|idx| {
                let p = target.voxel_center(idx);
                self.sample_index(&(a * p + b))
            })
            .collect();
        let all_valid = samples.iter().all(Option::is_some);
        let data = samples.iter().map(|s| s.unwrap_or(0.0) as f32).collect();
        let mask = (!all_valid).then(|| samples.iter().map(Option::is_some).collect());
        Volume::new(target.clone(), data, mask)
    }

    /// Per-mm gradient magnitude by central differences (one-sided at the
    /// lattice boundary). A voxel is valid only if it and every neighbour used
    /// are valid. Singleton axes contribute no derivative.
    pub fn gradient_magnitude(&self) -> Volume {
        let g = &self.geometry;
        let dims = g.dims;
        let strides = [1, dims[0], dims[0] * dims[1]];
        let out: Vec<(f32, bool)> = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if !self.is_valid(idx) {
                    return (0.0, false);
                }
                let coords = g.voxel_coords(idx);
                let mut sq = 0.0f64;
                for k in 0..3 {
                    let n = dims[k];
                    if n == 1 {
                        continue;
                    }
                    let i = coords[k];
                    let (lo, hi, span) = if i == 0 {
                        (idx, idx + strides[k], 1.0)
                    } else if i == n - 1 {
                        (idx - strides[k], idx, 1.0)
                    } else {
                        (idx - strides[k], idx + strides[k], 2.0)
                    };
                    if !self.is_valid(lo) || !self.is_valid(hi) {
                        return (0.0, false);
                    }
                    let d = (self.data[hi] as f64 - self.data[lo] as f64) / (span * g.spacing[k]);
                    sq += d * d;
                }
                (sq.sqrt() as f32, true)
            })
            .collect();
        let mask = self
            .mask
            .as_ref()
            .map(|_| out.iter().map(|&(_, ok)| ok).collect());
        Volume {
            geometry: g.clone(),
            data: out.into_iter().map(|(v, _)| v).collect(),
            mask,
        }
    }
}

/// Anything that yields interpolated intensities at world points.
pub trait Sampler: Sync {
    fn sample(&self, p: &Vector3<f64>) -> Option<f64>;

    /// Samples `transform(p)` for each point; the default maps point by point.
    fn sample_transformed(
        &self,
        transform: &RigidTransform,
        points: &[Vector3<f64>],
        out: &mut [Option<f64>],
    ) {
        for (p, o) in points.iter().zip(out.iter_mut()) {
            *o = self.sample(&transform.apply(p));
        }
    }
}

impl Sampler for Volume {
    #[inline]
    fn sample(&self, p: &Vector3<f64>) -> Option<f64> {
        self.sample_trilinear(p)
    }

    fn sample_transformed(
        &self,
        transform: &RigidTransform,
        points: &[Vector3<f64>],
        out: &mut [Option<f64>],
    ) {
        let (a, b) = self.geometry.index_map(transform);
        for (p, o) in points.iter().zip(out.iter_mut()) {
            *o = self.sample_index(&(a * p + b));
        }
    }
}

/// A volume whose support is clipped to a world-space box.
#[derive(Clone, Copy, Debug)]
pub struct BoxedVolume<'a> {
    pub volume: &'a Volume,
    pub region: Aabb,
}

impl<'a> BoxedVolume<'a> {
    pub fn new(volume: &'a Volume, region: Aabb) -> Self {
        BoxedVolume { volume, region }
    }
}

impl Sampler for BoxedVolume<'_> {
    #[inline]
    fn sample(&self, p: &Vector3<f64>) -> Option<f64> {
        if self.region.contains(p) {
            self.volume.sample_trilinear(p)
        } else {
            None
        }
    }

    fn sample_transformed(
        &self,
        transform: &RigidTransform,
        points: &[Vector3<f64>],
        out: &mut [Option<f64>],
    ) {
        let r = transform.rotation_matrix();
        let t = transform.translation();
        let (a, b) = self.volume.geometry.index_map(transform);
        for (p, o) in points.iter().zip(out.iter_mut()) {
            let q = r * p + t;
            *o = if self.region.contains(&q) {
                self.volume.sample_index(&(a * p + b))
            } else {
                None
            };
        }
    }
}

impl<S: Sampler + ?Sized> Sampler for &S {
    fn sample(&self, p: &Vector3<f64>) -> Option<f64> {
        (**self).sample(p)
    }

    fn sample_transformed(
        &self,
        transform: &RigidTransform,
        points: &[Vector3<f64>],
        out: &mut [Option<f64>],
    ) {
        (**self).sample_transformed(transform, points, out)
    }
}
