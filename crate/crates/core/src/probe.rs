//! Anatomy-constrained probe movement model.
//!
//! The gland is approximated by the ellipsoid inscribed in its bounding box.
//! A pose `(alpha, beta, lambda)` places the probe head on the ellipsoid at
//! polar coordinates `(alpha, beta)` around the pole facing the rectal fixed
//! point, points the probe axis through that fixed point and rolls the probe
//! by `lambda` about its axis.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::EvaluationDomain;
use crate::transform::RigidTransform;
use crate::volume::{Aabb, BoxedVolume, Geometry, Sampler, Volume};

const MODEL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeMovementModel {
    center: Vector3<f64>,
    semi_axes: Vector3<f64>,
    fp_rect: Vector3<f64>,
    probe_origin: Vector3<f64>,
    probe_axis: Unit<Vector3<f64>>,
    pole_frame: [Vector3<f64>; 3],
}

impl ProbeMovementModel {
    /// Builds the model from the gland box, the rectal fixed point and the
    /// probe placement in the reference image.
    ///
    /// The reference probe must itself satisfy the model: its origin at the
    /// pole of the ellipsoid (within 1e-6 mm) and its axis pointing from the
    /// fixed point through the pole (within 1e-6 rad).
    pub fn new(
        bbox: &Aabb,
        fp_rect: Vector3<f64>,
        probe_origin: Vector3<f64>,
        probe_axis: Vector3<f64>,
    ) -> Result<Self> {
        if (probe_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "probe axis must be unit length, norm is {}",
                probe_axis.norm()
            )));
        }
        let model = Self::from_fixed_point(bbox, fp_rect)?;
        let pole = model.surface_point(0.0, 0.0);
        if (pole - probe_origin).norm() > MODEL_TOL {
            return Err(Error::InvalidModel(format!(
                "probe origin {:?} is {:.3e} mm from the ellipsoid pole {:?}",
                probe_origin.as_slice(),
                (pole - probe_origin).norm(),
                pole.as_slice()
            )));
        }
        let angle = probe_axis.angle(&model.probe_axis);
        if angle > MODEL_TOL {
            return Err(Error::InvalidModel(format!(
                "probe axis is {angle:.3e} rad off the fixed-point direction"
            )));
        }
        Ok(ProbeMovementModel {
            probe_origin,
            probe_axis: Unit::new_unchecked(probe_axis),
            ..model
        })
    }

    /// Builds the model with the reference probe derived from the fixed
    /// point: origin at the pole, axis from the fixed point towards the centre.
    pub fn from_fixed_point(bbox: &Aabb, fp_rect: Vector3<f64>) -> Result<Self> {
        let center = bbox.center();
        let semi_axes = bbox.extent() / 2.0;
        if semi_axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidModel("semi-axes must be positive".into()));
        }
        let r = (fp_rect - center).component_div(&semi_axes).norm_squared();
        if r <= 1.0 {
            return Err(Error::FixedPointInside);
        }
        let d0 = (fp_rect - center).normalize();
        let seed = (0..3)
            .min_by(|&a, &b| d0[a].abs().total_cmp(&d0[b].abs()))
            .map(|k| Vector3::ith(k, 1.0))
            .unwrap();
        let e1 = (seed - d0 * seed.dot(&d0)).normalize();
        let e2 = d0.cross(&e1);
        let mut model = ProbeMovementModel {
            center,
            semi_axes,
            fp_rect,
            probe_origin: Vector3::zeros(),
            probe_axis: Unit::new_unchecked(-d0),
            pole_frame: [d0, e1, e2],
        };
        model.probe_origin = model.surface_point(0.0, 0.0);
        Ok(model)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn semi_axes(&self) -> Vector3<f64> {
        self.semi_axes
    }

    pub fn fp_rect(&self) -> Vector3<f64> {
        self.fp_rect
    }

    pub fn probe_origin(&self) -> Vector3<f64> {
        self.probe_origin
    }

    pub fn probe_axis(&self) -> Unit<Vector3<f64>> {
        self.probe_axis
    }

    /// Implicit ellipsoid value `sum((p - c)_i / a_i)^2 - 1`.
    pub fn ellipsoid_residual(&self, p: &Vector3<f64>) -> f64 {
        (p - self.center).component_div(&self.semi_axes).norm_squared() - 1.0
    }

    /// Surface point at polar angles `(alpha, beta)` around the pole.
    pub fn surface_point(&self, alpha: f64, beta: f64) -> Vector3<f64> {
        let [d0, e1, e2] = self.pole_frame;
        let d = (d0 * alpha.cos() + e1 * alpha.sin()) * beta.cos() + e2 * beta.sin();
        let s = d.component_div(&self.semi_axes).norm();
        self.center + d / s
    }

    /// Probe motion for `pose`: maps reference image coordinates to where the
    /// same probe-frame point lies after the probe moved. Used directly as the
    /// tracking-to-reference sampling transform.
    pub fn pose_to_transform(&self, pose: &ProbePose) -> RigidTransform {
        let s = self.surface_point(pose.alpha, pose.beta);
        let u = (s - self.fp_rect).normalize();
        let a0 = self.probe_axis.into_inner();
        let q = Rotation3::rotation_between(&a0, &u).unwrap_or_else(|| {
            let perp = self.pole_frame[1];
            Rotation3::from_axis_angle(&Unit::new_normalize(perp), PI)
        });
        let roll = Rotation3::from_axis_angle(&self.probe_axis, pose.lambda);
        let r = q * roll;
        RigidTransform::from_parts(r, s - r * self.probe_origin)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbePose {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl ProbePose {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Self {
        ProbePose {
            alpha,
            beta,
            lambda,
        }
    }

    pub fn from_degrees(alpha: f64, beta: f64, lambda: f64) -> Self {
        Self::new(alpha.to_radians(), beta.to_radians(), lambda.to_radians())
    }
}

/// Exploration grid dimensions and tilt range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub n_lambda: usize,
    pub tilt_limit_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_alpha: 20,
            n_beta: 18,
            n_lambda: 36,
            tilt_limit_deg: 45.0,
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.n_alpha * self.n_beta * self.n_lambda
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationGrid {
    poses: Vec<ProbePose>,
    spec: GridSpec,
}

/// Equidistant product grid, `lambda` fastest, then `beta`, then `alpha`.
/// Tilt angles span `[-limit, limit]` inclusively; roll covers `(-pi, pi]`.
pub fn generate_grid(spec: GridSpec) -> Result<ExplorationGrid> {
    if spec.is_empty() {
        return Err(Error::Config("grid counts must be at least 1".into()));
    }
    if !(spec.tilt_limit_deg >= 0.0 && spec.tilt_limit_deg < 90.0) {
        return Err(Error::Config(format!(
            "tilt limit {} deg outside [0, 90)",
            spec.tilt_limit_deg
        )));
    }
    let limit = spec.tilt_limit_deg.to_radians();
    let tilt = |i: usize, n: usize| {
        if n == 1 {
            0.0
        } else {
            -limit + 2.0 * limit * i as f64 / (n - 1) as f64
        }
    };
    let step = 2.0 * PI / spec.n_lambda as f64;
    let mut poses = Vec::with_capacity(spec.len());
    for i in 0..spec.n_alpha {
        for j in 0..spec.n_beta {
            for k in 0..spec.n_lambda {
                poses.push(ProbePose::new(
                    tilt(i, spec.n_alpha),
                    tilt(j, spec.n_beta),
                    -PI + (k + 1) as f64 * step,
                ));
            }
        }
    }
    Ok(ExplorationGrid { poses, spec })
}

impl ExplorationGrid {
    pub fn poses(&self) -> &[ProbePose] {
        &self.poses
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Reference samples for every grid pose at every lattice point of the
/// tracking geometry: intensity and gradient magnitude, `NaN` where the
/// transformed point leaves the gland box or the reference support.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationCache {
    pose_count: usize,
    lattice_len: usize,
    // per pose, per lattice point: (intensity, gradient)
    values: Vec<f32>,
}

const CACHE_MAGIC: &[u8; 8] = b"VTCACHE1";

impl ExplorationCache {
    /// Samples the bbox-clipped reference at `pose_to_transform(pose)(p)` for
    /// every point `p` of `lattice`.
    pub fn precompute(
        model: &ProbeMovementModel,
        grid: &ExplorationGrid,
        reference: &Volume,
        reference_grad: &Volume,
        bbox: &Aabb,
        lattice: &EvaluationDomain,
    ) -> Result<Self> {
        if lattice.is_empty() {
            return Err(Error::InvalidDomain("empty cache lattice".into()));
        }
        let lattice_len = lattice.lattice_len();
        let int = BoxedVolume::new(reference, *bbox);
        let grad = BoxedVolume::new(reference_grad, *bbox);
        let per_pose: Vec<Vec<f32>> = grid
            .poses()
            .par_iter()
            .map(|pose| {
                let t = model.pose_to_transform(pose);
                let mut a = vec![None; lattice.len()];
                let mut b = vec![None; lattice.len()];
                int.sample_transformed(&t, lattice.points(), &mut a);
                grad.sample_transformed(&t, lattice.points(), &mut b);
                let mut row = vec![f32::NAN; 2 * lattice_len];
                for (i, &li) in lattice.lattice_index().iter().enumerate() {
                    row[2 * li] = a[i].map_or(f32::NAN, |v| v as f32);
                    row[2 * li + 1] = b[i].map_or(f32::NAN, |v| v as f32);
                }
                row
            })
            .collect();
        Ok(ExplorationCache {
            pose_count: grid.len(),
            lattice_len,
            values: per_pose.concat(),
        })
    }

    /// Every voxel of `geometries`, concatenated, as a cache lattice.
    pub fn lattice_domain(geometries: &[Geometry]) -> Result<EvaluationDomain> {
        let volumes: Vec<Volume> = geometries
            .iter()
            .map(|g| Volume::filled(g.clone(), 0.0))
            .collect::<Result<_>>()?;
        let refs: Vec<&Volume> = volumes.iter().collect();
        EvaluationDomain::from_volumes(&refs, "exploration lattice")
    }

    pub fn pose_count(&self) -> usize {
        self.pose_count
    }

    pub fn lattice_len(&self) -> usize {
        self.lattice_len
    }

    /// Number of (intensity, gradient) entries.
    pub fn entries(&self) -> usize {
        self.pose_count * self.lattice_len
    }

    /// Checks that the cache fits a grid and a lattice.
    pub fn check(&self, grid: &ExplorationGrid, lattice_len: usize) -> Result<()> {
        if self.pose_count != grid.len() || self.lattice_len != lattice_len {
            return Err(Error::CacheMismatch(format!(
                "cache holds {} poses x {} points, expected {} x {}",
                self.pose_count,
                self.lattice_len,
                grid.len(),
                lattice_len
            )));
        }
        Ok(())
    }

    /// Cached (intensity, gradient) samples of `pose` at the points of two
    /// domains defined on the cache lattice.
    pub fn samples(
        &self,
        pose: usize,
        domain_int: &EvaluationDomain,
        domain_grad: &EvaluationDomain,
    ) -> (Vec<f32>, Vec<f32>) {
        let row = &self.values[2 * pose * self.lattice_len..2 * (pose + 1) * self.lattice_len];
        let a = domain_int
            .lattice_index()
            .iter()
            .map(|&i| row[2 * i])
            .collect();
        let b = domain_grad
            .lattice_index()
            .iter()
            .map(|&i| row[2 * i + 1])
            .collect();
        (a, b)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.pose_count as u64).to_le_bytes())?;
        w.write_all(&(self.lattice_len as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(24 + self.values.len() * 4);
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::format(0, format!("read failed: {e}")))?;
        if bytes.len() < 24 || &bytes[..8] != CACHE_MAGIC {
            return Err(Error::format(0, "not a VTCACHE1 file"));
        }
        let pose_count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let lattice_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let expected = pose_count
            .checked_mul(lattice_len)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(8, "cache counts overflow"))?;
        if bytes.len() - 24 != expected {
            return Err(Error::format(
                bytes.len() as u64,
                format!("cache payload is {} bytes, expected {expected}", bytes.len() - 24),
            ));
        }
        let values = bytes[24..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(ExplorationCache {
            pose_count,
            lattice_len,
            values,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}
