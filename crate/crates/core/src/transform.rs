//! Rigid transforms, their optimisation parameterisation, averaging and the
//! reproducibility error metrics.

use std::cmp::Ordering;

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::serde_util::{matrix_from_row_major, matrix_to_row_major};

const ROTATION_TOL: f64 = 1e-9;

/// Rotation followed by translation: `p -> R p + t`, millimetres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts(Rotation3::identity(), translation)
    }

    /// Validates `rotation` as a proper rotation (orthonormal, det +1, 1e-9).
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if !(err <= ROTATION_TOL) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max deviation {err:e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::InvalidTransform(format!("rotation determinant is {det}")));
        }
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self::from_parts(
            Rotation3::from_matrix_unchecked(rotation),
            translation,
        ))
    }

    /// Rotation by `angle` radians about the line through `center` along `axis`.
    pub fn rotation_about(axis: &Unit<Vector3<f64>>, angle: f64, center: &Vector3<f64>) -> Self {
        let r = Rotation3::from_axis_angle(axis, angle);
        Self::from_parts(r, center - r * center)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.matrix()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation.inverse();
        RigidTransform {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    /// Rotation angle in radians from the trace formula.
    pub fn angle(&self) -> f64 {
        let tr = self.rotation.matrix().trace();
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [f64; 9],
    translation_mm: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRepr {
            rotation: matrix_to_row_major(self.rotation.matrix()),
            translation_mm: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        RigidTransform::from_matrix(
            matrix_from_row_major(&repr.rotation),
            Vector3::from(repr.translation_mm),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Default optimiser scale of a rotation-vector component: one unit moves a
/// point 25 mm from the rotation centre by about 1 mm.
pub const ROTATION_SCALE_RAD: f64 = 0.04;
/// Default optimiser scale of a translation component.
pub const TRANSLATION_SCALE_MM: f64 = 1.0;

/// Six rigid parameters (rotation vector in radians, then translation in mm)
/// with a per-component scale mapping them to optimiser units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidParams {
    pub values: [f64; 6],
    pub scale: [f64; 6],
}

impl Default for RigidParams {
    fn default() -> Self {
        RigidParams {
            values: [0.0; 6],
            scale: Self::default_scale(),
        }
    }
}

impl RigidParams {
    pub fn default_scale() -> [f64; 6] {
        [
            ROTATION_SCALE_RAD,
            ROTATION_SCALE_RAD,
            ROTATION_SCALE_RAD,
            TRANSLATION_SCALE_MM,
            TRANSLATION_SCALE_MM,
            TRANSLATION_SCALE_MM,
        ]
    }

    pub fn new(values: [f64; 6]) -> Self {
        RigidParams {
            values,
            scale: Self::default_scale(),
        }
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        Vector3::new(self.values[0], self.values[1], self.values[2])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.values[3], self.values[4], self.values[5])
    }

    /// Values divided by scale.
    pub fn to_scaled(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.values[i] / self.scale[i])
    }

    pub fn from_scaled(x: &[f64], scale: [f64; 6]) -> Self {
        RigidParams {
            values: std::array::from_fn(|i| x[i] * scale[i]),
            scale,
        }
    }

    /// Exponential map of the rotation vector.
    pub fn to_transform(&self) -> Result<RigidTransform> {
        let w = self.rotation_vector();
        if (w.norm() - std::f64::consts::PI).abs() <= ROTATION_TOL {
            return Err(Error::NonCanonical);
        }
        Ok(RigidTransform::from_parts(
            Rotation3::from_scaled_axis(w),
            self.translation(),
        ))
    }

    /// Logarithm on the canonical branch (angle < pi).
    pub fn from_transform(t: &RigidTransform) -> Result<Self> {
        let angle = t.rotation().angle();
        if (std::f64::consts::PI - angle).abs() <= ROTATION_TOL {
            return Err(Error::NonCanonical);
        }
        let w = t.rotation().scaled_axis();
        let tr = t.translation();
        Ok(Self::new([w.x, w.y, w.z, tr.x, tr.y, tr.z]))
    }
}

/// Mean of a clustered transform set: arithmetic mean translation and the
/// normalised sum of sign-aligned unit quaternions.
///
/// Inputs are sorted before summation so the result does not depend on the
/// order of `ts`.
pub fn average_transforms(ts: &[RigidTransform]) -> Result<RigidTransform> {
    let first = ts
        .first()
        .ok_or_else(|| Error::InvalidTransform("cannot average an empty set".into()))?;
    for (i, a) in ts.iter().enumerate() {
        for b in &ts[i + 1..] {
            let angle = angular_error(a, b);
            if angle > 90.0 {
                return Err(Error::Dispersed { angle_deg: angle });
            }
        }
    }

    if ts.iter().all(|t| t == first) {
        return Ok(*first);
    }

    let q0 = UnitQuaternion::from_rotation_matrix(first.rotation());
    let mut quats: Vec<[f64; 4]> = ts
        .iter()
        .map(|t| {
            let q = UnitQuaternion::from_rotation_matrix(t.rotation());
            let q = if q.coords.dot(&q0.coords) < 0.0 {
                -q.into_inner()
            } else {
                q.into_inner()
            };
            [q.w, q.i, q.j, q.k]
        })
        .collect();
    // global sign is arbitrary after alignment; pin it so sorting is order-free
    let total: [f64; 4] = quats.iter().fold([0.0; 4], |acc, q| {
        std::array::from_fn(|k| acc[k] + q[k])
    });
    let lead = total
        .iter()
        .copied()
        .find(|v| v.abs() > 1e-6 * ts.len() as f64)
        .unwrap_or(1.0);
    if lead < 0.0 {
        for q in &mut quats {
            for c in q.iter_mut() {
                *c = -*c;
            }
        }
    }
    quats.sort_by(|a, b| lex_cmp(a, b));
    let sum = quats.iter().fold([0.0; 4], |acc, q| {
        std::array::from_fn(|k| acc[k] + q[k])
    });
    let mean_q = UnitQuaternion::from_quaternion(Quaternion::new(sum[0], sum[1], sum[2], sum[3]));

    let mut mean_t = [0.0; 3];
    for (k, m) in mean_t.iter_mut().enumerate() {
        let mut comps: Vec<f64> = ts.iter().map(|t| t.translation()[k]).collect();
        comps.sort_by(f64::total_cmp);
        *m = comps.iter().sum::<f64>() / ts.len() as f64;
    }
    Ok(RigidTransform::from_parts(
        mean_q.to_rotation_matrix(),
        Vector3::from(mean_t),
    ))
}

fn lex_cmp(a: &[f64; 4], b: &[f64; 4]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// `||t_i(c) - t_bar(c)||`, millimetres.
pub fn euclidean_error(t_i: &RigidTransform, t_bar: &RigidTransform, c: &Vector3<f64>) -> f64 {
    (t_i.apply(c) - t_bar.apply(c)).norm()
}

/// Rotation angle of `t_i^-1 ∘ t_bar` in degrees, as `2 atan2(s, c)` with
/// `s = |A - B|_F / sqrt(8)` and `c = sqrt((1 + tr(A^T B)) / 4)`, the sine
/// and cosine of the half angle. Agrees with the trace formula and stays
/// accurate near zero.
pub fn angular_error(t_i: &RigidTransform, t_bar: &RigidTransform) -> f64 {
    let a = t_i.rotation().matrix();
    let b = t_bar.rotation().matrix();
    // elementwise sums keep the result symmetric in (a, b)
    let mut tr = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            tr += a[(r, c)] * b[(r, c)];
        }
    }
    let s = (a - b).norm() / 8f64.sqrt();
    let c = ((1.0 + tr) / 4.0).max(0.0).sqrt();
    (2.0 * s.atan2(c)).to_degrees()
}

/// Root mean square; `None` for an empty slice.
pub fn rms(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}
