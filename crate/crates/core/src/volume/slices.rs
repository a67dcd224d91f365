use nalgebra::{Matrix3, Vector3};

use super::{Geometry, Volume};
use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Orthonormal frame placed in world space.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Columns are the frame axes in world coordinates.
    pub axes: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

impl Frame {
    /// The volume's own axes, centred on its lattice.
    pub fn of_volume(geometry: &Geometry) -> Self {
        Frame {
            axes: geometry.axes,
            origin: geometry.center(),
        }
    }
}

/// Two or three mutually orthogonal single-voxel-thick planes sharing one
/// intersection point. Each plane is a volume with `dims[2] == 1` whose third
/// axis is the plane normal.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoSlices {
    planes: Vec<Volume>,
    shared_origin: Vector3<f64>,
}

impl OrthoSlices {
    pub fn new(planes: Vec<Volume>, shared_origin: Vector3<f64>) -> Result<Self> {
        if !(2..=3).contains(&planes.len()) {
            return Err(Error::InvalidGeometry(format!(
                "expected 2 or 3 planes, got {}",
                planes.len()
            )));
        }
        for p in &planes {
            if p.dims()[2] != 1 {
                return Err(Error::InvalidGeometry("plane must be one voxel thick".into()));
            }
            let c = p.geometry().world_to_index(&shared_origin);
            let ok = (0..2).all(|k| c[k] >= -0.5 && c[k] <= p.dims()[k] as f64 - 0.5)
                && c[2].abs() <= 0.5;
            if !ok {
                return Err(Error::InvalidGeometry(
                    "plane does not pass through the shared origin".into(),
                ));
            }
        }
        for a in 0..planes.len() {
            for b in a + 1..planes.len() {
                let na = planes[a].geometry().axes.column(2).into_owned();
                let nb = planes[b].geometry().axes.column(2).into_owned();
                if na.dot(&nb).abs() > 1e-6 {
                    return Err(Error::InvalidGeometry("plane normals are not orthogonal".into()));
                }
            }
        }
        Ok(OrthoSlices {
            planes,
            shared_origin,
        })
    }

    pub fn planes(&self) -> &[Volume] {
        &self.planes
    }

    pub fn shared_origin(&self) -> Vector3<f64> {
        self.shared_origin
    }

    /// Keeps only the planes selected by `keep` (at least two).
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let planes = keep
            .iter()
            .map(|&i| {
                self.planes
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidGeometry(format!("no plane {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(planes, self.shared_origin)
    }
}

/// Geometry of the plane through `frame.origin` normal to frame axis `k`,
/// sized to cover the projection of `volume` onto the plane.
pub(crate) fn plane_geometry(volume: &Geometry, frame: &Frame, k: usize) -> Result<Geometry> {
    let normal = frame.axes.column(k).into_owned();
    let u = frame.axes.column((k + 1) % 3).into_owned();
    let v = frame.axes.column((k + 2) % 3).into_owned();
    let spacing_along = |dir: &Vector3<f64>| -> f64 {
        (0..3)
            .map(|i| dir.dot(&volume.axes.column(i)).powi(2) * volume.spacing[i])
            .sum()
    };
    let (su, sv, sn) = (spacing_along(&u), spacing_along(&v), spacing_along(&normal));
    let corners = volume.corners();
    let half = |dir: &Vector3<f64>| -> f64 {
        corners
            .iter()
            .map(|c| (c - frame.origin).dot(dir).abs())
            .fold(0.0, f64::max)
    };
    let count = |h: f64, s: f64| 2 * ((h / s - 1e-9).ceil().max(0.0) as usize) + 1;
    let nu = count(half(&u), su);
    let nv = count(half(&v), sv);
    let origin = frame.origin
        - u * (0.5 * (nu as f64 - 1.0) * su)
        - v * (0.5 * (nv as f64 - 1.0) * sv);
    let axes = Matrix3::from_columns(&[u, v, normal]);
    Geometry::new([nu, nv, 1], [su, sv, sn], origin.into(), axes)
}

/// Resamples the three planes through `frame.origin` normal to each frame axis.
pub fn extract_ortho_slices(volume: &Volume, frame: &Frame) -> Result<OrthoSlices> {
    let g = volume.geometry();
    if !g.contains_index(&g.world_to_index(&frame.origin)) {
        return Err(Error::OutOfBounds(frame.origin.into()));
    }
    let planes = (0..3)
        .map(|k| {
            let pg = plane_geometry(g, frame, k)?;
            volume.reslice(&RigidTransform::identity(), &pg)
        })
        .collect::<Result<Vec<_>>>()?;
    OrthoSlices::new(planes, frame.origin)
}
