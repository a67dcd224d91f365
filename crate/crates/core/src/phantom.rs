//! Synthetic TRUS-like prostate scenes with exact ground truth.
//!
//! Anatomy lives in the reference frame. An acquisition with true pose `T`
//! (reference to acquisition) shows at probe-frame voxel `p` the anatomy at
//! `T^-1(p)`. The beam cone, shadows and speckle are attached to the probe
//! frame.

use std::f64::consts::PI;

use nalgebra::{Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{ProbeMovementModel, ProbePose};
use crate::serde_util::vec3;
use crate::transform::RigidTransform;
use crate::volume::{Aabb, Geometry, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Urethra {
    pub start_mm: [f64; 3],
    pub end_mm: [f64; 3],
    pub radius_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calcification {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
    pub brightness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedleTrack {
    pub entry_mm: [f64; 3],
    pub direction: [f64; 3],
    pub length_mm: f64,
}

/// Ellipsoidal region of different echogenicity inside the gland.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
    pub intensity: f64,
}

/// Smooth multiplicative tissue heterogeneity fixed to the gland frame,
/// `1 + amplitude * f` with `f` a unit-variance Gaussian-correlated field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Echotexture {
    pub amplitude: f64,
    pub correlation_mm: f64,
    pub modes: usize,
}

impl Default for Echotexture {
    fn default() -> Self {
        Echotexture {
            amplitude: 0.0,
            correlation_mm: 5.0,
            modes: 48,
        }
    }
}

/// Random Fourier features: `sqrt(2/K) * sum cos(k.x + phase)` with
/// `k ~ N(0, I / l^2)` has covariance `exp(-r^2 / (2 l^2))`.
struct TextureField {
    waves: Vec<(Vector3<f64>, f64)>,
    amplitude: f64,
    norm: f64,
}

impl TextureField {
    fn new(t: &Echotexture, seed: u64) -> Option<Self> {
        if t.amplitude == 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e47_0e5e);
        let waves = (0..t.modes)
            .map(|_| {
                let k: Vector3<f64> =
                    Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng)) / t.correlation_mm;
                (k, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Some(TextureField {
            waves,
            amplitude: t.amplitude,
            norm: (2.0 / t.modes as f64).sqrt(),
        })
    }

    fn factor(&self, x: &Vector3<f64>) -> f64 {
        let f: f64 = self.waves.iter().map(|(k, ph)| (k.dot(x) + ph).cos()).sum();
        (1.0 + self.amplitude * self.norm * f).max(0.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueContrast {
    pub interior: f64,
    pub exterior: f64,
    pub urethra: f64,
    /// Added on top of the surrounding tissue along needle tracks.
    pub needle: f64,
}

/// Beam cone in the probe frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cone {
    pub apex_mm: [f64; 3],
    pub axis: [f64; 3],
    pub half_angle_deg: f64,
    pub depth_mm: f64,
}

/// Attenuation behind an azimuthal sector of the cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowSector {
    pub start_deg: f64,
    pub end_deg: f64,
    /// Intensity multiplier inside the shadow, in `[0, 1]`.
    pub attenuation: f64,
    /// Distance from the apex where the shadow begins.
    pub depth_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub gland_center_mm: [f64; 3],
    pub gland_semi_axes_mm: [f64; 3],
    pub urethra: Urethra,
    pub calcifications: Vec<Calcification>,
    pub needle_tracks: Vec<NeedleTrack>,
    pub needle_radius_mm: f64,
    pub zones: Vec<Zone>,
    pub echotexture: Echotexture,
    pub tissue_contrast: TissueContrast,
    pub speckle_sigma: f64,
    /// Standard deviation of the speckle smoothing kernel, voxels.
    pub speckle_correlation_voxels: f64,
    pub cone: Cone,
    pub shadow_sectors: Vec<ShadowSector>,
    pub geometry: Geometry,
    pub fp_rect_mm: [f64; 3],
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            gland_center_mm: [0.0, 0.0, 19.0],
            gland_semi_axes_mm: [20.0, 15.0, 19.0],
            urethra: Urethra {
                start_mm: [1.0, -2.0, 1.0],
                end_mm: [-1.0, 4.0, 37.0],
                radius_mm: 3.0,
            },
            calcifications: vec![
                Calcification {
                    center_mm: [7.0, -4.0, 24.0],
                    radius_mm: 2.5,
                    brightness: 240.0,
                },
                Calcification {
                    center_mm: [-9.0, 6.0, 14.0],
                    radius_mm: 2.0,
                    brightness: 230.0,
                },
                Calcification {
                    center_mm: [4.0, 8.0, 30.0],
                    radius_mm: 1.5,
                    brightness: 225.0,
                },
                Calcification {
                    center_mm: [-6.0, -8.0, 9.0],
                    radius_mm: 2.0,
                    brightness: 235.0,
                },
            ],
            needle_tracks: vec![
                NeedleTrack {
                    entry_mm: [-12.0, -8.0, 2.0],
                    direction: [0.3, 0.2, 1.0],
                    length_mm: 30.0,
                },
                NeedleTrack {
                    entry_mm: [10.0, 5.0, 4.0],
                    direction: [-0.2, 0.1, 1.0],
                    length_mm: 28.0,
                },
            ],
            needle_radius_mm: 0.6,
            zones: vec![Zone {
                center_mm: [2.0, 5.0, 21.0],
                semi_axes_mm: [11.0, 7.0, 12.0],
                intensity: 85.0,
            }],
            echotexture: Echotexture::default(),
            tissue_contrast: TissueContrast {
                interior: 110.0,
                exterior: 60.0,
                urethra: 35.0,
                needle: 35.0,
            },
            speckle_sigma: 0.3,
            speckle_correlation_voxels: 1.5,
            cone: Cone {
                apex_mm: [0.0, 0.0, -20.0],
                axis: [20f64.to_radians().sin(), 0.0, 20f64.to_radians().cos()],
                half_angle_deg: 40.0,
                depth_mm: 75.0,
            },
            shadow_sectors: vec![],
            geometry: Geometry::axis_aligned([128; 3], [0.4; 3], [-25.4, -25.4, -4.0])
                .expect("default phantom geometry"),
            fp_rect_mm: [0.0, 0.0, -26.0],
            seed: 0,
        }
    }
}

fn v3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::from(*a)
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("phantom spec: {m}")));
        if self.gland_semi_axes_mm.iter().any(|a| !(*a > 0.0)) {
            return bad("gland semi-axes must be positive".into());
        }
        if !(self.urethra.radius_mm > 0.0) || !(self.needle_radius_mm > 0.0) {
            return bad("radii must be positive".into());
        }
        for c in &self.calcifications {
            if !(c.radius_mm > 0.0) {
                return bad("calcification radius must be positive".into());
            }
        }
        for n in &self.needle_tracks {
            if !(n.length_mm > 0.0) || v3(&n.direction).norm() == 0.0 {
                return bad("needle tracks need positive length and a direction".into());
            }
        }
        for z in &self.zones {
            if z.semi_axes_mm.iter().any(|a| !(*a > 0.0)) {
                return bad("zone semi-axes must be positive".into());
            }
        }
        if !(0.0..1.0).contains(&self.speckle_sigma) {
            return bad(format!("speckle_sigma {} outside [0, 1)", self.speckle_sigma));
        }
        if !(self.speckle_correlation_voxels > 0.0) {
            return bad("speckle correlation must be positive".into());
        }
        let t = &self.echotexture;
        if !((0.0..1.0).contains(&t.amplitude) && t.correlation_mm > 0.0 && t.modes > 0) {
            return bad("echotexture needs amplitude in [0, 1), positive correlation and modes".into());
        }
        if !(self.cone.half_angle_deg > 0.0 && self.cone.half_angle_deg < 90.0) {
            return bad(format!("cone half-angle {} outside (0, 90)", self.cone.half_angle_deg));
        }
        if !(self.cone.depth_mm > 0.0) || v3(&self.cone.axis).norm() == 0.0 {
            return bad("cone needs a positive depth and an axis".into());
        }
        for s in &self.shadow_sectors {
            if !(0.0..=1.0).contains(&s.attenuation) {
                return bad("shadow attenuation must lie in [0, 1]".into());
            }
        }
        self.geometry.validate()
    }

    /// Randomised anatomy around the default layout: gland size, transition
    /// zone, hypoechoic nodules, urethra course, calcifications and needle
    /// tracks all vary with `seed`.
    /// The gland pole stays at the probe origin.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9a1d);
        let base = PhantomSpec::default();
        let a = [
            rng.random_range(17.0..22.0),
            rng.random_range(13.0..16.5),
            rng.random_range(17.0..20.0),
        ];
        let center = [0.0, 0.0, a[2]];
        // point inside the gland at normalised radius <= r
        let inside = |rng: &mut ChaCha8Rng, r: f64| -> [f64; 3] {
            loop {
                let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n2: f64 = u.iter().map(|x| x * x).sum();
                if n2 <= r * r {
                    return std::array::from_fn(|k| center[k] + u[k] * a[k]);
                }
            }
        };
        let calcifications = (0..rng.random_range(3..=5))
            .map(|_| Calcification {
                center_mm: inside(&mut rng, 0.7),
                radius_mm: rng.random_range(1.5..3.0),
                brightness: rng.random_range(220.0..250.0),
            })
            .collect();
        let needle_tracks = (0..2)
            .map(|_| {
                let entry = inside(&mut rng, 0.8);
                let entry = [entry[0], entry[1], rng.random_range(1.0..6.0)];
                NeedleTrack {
                    entry_mm: entry,
                    direction: [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 1.0],
                    length_mm: rng.random_range(22.0..32.0),
                }
            })
            .collect();
        let tilt = [rng.random_range(-3.0..3.0), rng.random_range(-5.0..5.0)];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let zone = Zone {
            center_mm: [
                rng.random_range(-2.0..2.0),
                sign * rng.random_range(3.0..6.0),
                a[2] + rng.random_range(-1.0..3.0),
            ],
            semi_axes_mm: [
                a[0] * rng.random_range(0.5..0.6),
                a[1] * rng.random_range(0.45..0.55),
                a[2] * rng.random_range(0.55..0.65),
            ],
            intensity: rng.random_range(80.0..92.0),
        };
        let mut zones = vec![zone];
        for _ in 0..rng.random_range(2..=4) {
            let r = rng.random_range(3.0..6.0);
            zones.push(Zone {
                center_mm: inside(&mut rng, 0.7),
                semi_axes_mm: [r * rng.random_range(0.8..1.2), r * rng.random_range(0.8..1.2), r],
                intensity: rng.random_range(70.0..90.0),
            });
        }
        PhantomSpec {
            gland_center_mm: center,
            gland_semi_axes_mm: a,
            urethra: Urethra {
                start_mm: [tilt[0] / 2.0, tilt[1] / 2.0, 0.06 * a[2]],
                end_mm: [-tilt[0] / 2.0, -tilt[1] / 2.0, 1.94 * a[2]],
                radius_mm: rng.random_range(2.5..3.5),
            },
            calcifications,
            needle_tracks,
            zones,
            echotexture: Echotexture {
                amplitude: rng.random_range(0.15..0.25),
                ..Echotexture::default()
            },
            fp_rect_mm: [0.0, 0.0, a[2] - 45.0],
            seed,
            ..base
        }
    }

    /// Axis-aligned box of the gland ellipsoid.
    pub fn gland_bbox(&self) -> Aabb {
        let c = v3(&self.gland_center_mm);
        let a = v3(&self.gland_semi_axes_mm);
        Aabb::new(c - a, c + a).expect("validated semi-axes")
    }

    /// Movement model built from the gland box and the fixed point.
    pub fn probe_model(&self) -> Result<ProbeMovementModel> {
        ProbeMovementModel::from_fixed_point(&self.gland_bbox(), v3(&self.fp_rect_mm))
    }

    /// Noise-free anatomy intensity at reference-frame point `x`, with edges
    /// blended over `edge` millimetres.
    pub fn structure(&self, x: &Vector3<f64>, edge: f64) -> f64 {
        self.structure_with(x, edge, TextureField::new(&self.echotexture, self.seed).as_ref())
    }

    fn structure_with(&self, x: &Vector3<f64>, edge: f64, texture: Option<&TextureField>) -> f64 {
        let tc = &self.tissue_contrast;
        let c = v3(&self.gland_center_mm);
        let d_gland = ellipsoid_distance(x, &c, &v3(&self.gland_semi_axes_mm));
        let w = inside_weight(d_gland, edge);
        let mut interior = tc.interior;
        for z in &self.zones {
            let d = ellipsoid_distance(x, &v3(&z.center_mm), &v3(&z.semi_axes_mm));
            let wz = inside_weight(d, edge);
            interior = interior * (1.0 - wz) + z.intensity * wz;
        }
        let mut v = tc.exterior * (1.0 - w) + interior * w;
        if let Some(t) = texture {
            v *= t.factor(x);
        }

        let u = &self.urethra;
        let d = segment_distance(x, &v3(&u.start_mm), &v3(&u.end_mm)) - u.radius_mm;
        let wu = inside_weight(d, edge);
        v = v * (1.0 - wu) + tc.urethra * wu;

        for n in &self.needle_tracks {
            let (p, dir) = needle_line(n);
            let d = segment_distance(x, &p, &(p + dir * n.length_mm)) - self.needle_radius_mm;
            v += tc.needle * inside_weight(d, edge);
        }
        for cal in &self.calcifications {
            let d = (x - v3(&cal.center_mm)).norm() - cal.radius_mm;
            let wc = inside_weight(d, edge);
            v = v * (1.0 - wc) + cal.brightness * wc;
        }
        v
    }

    /// Cone membership of a probe-frame point.
    pub fn in_cone(&self, p: &Vector3<f64>) -> bool {
        let v = p - v3(&self.cone.apex_mm);
        let r = v.norm();
        if r > self.cone.depth_mm {
            return false;
        }
        if r == 0.0 {
            return true;
        }
        let axis = v3(&self.cone.axis).normalize();
        v.dot(&axis) / r >= self.cone.half_angle_deg.to_radians().cos()
    }

    fn shadow_factor(&self, p: &Vector3<f64>) -> f64 {
        if self.shadow_sectors.is_empty() {
            return 1.0;
        }
        let axis = v3(&self.cone.axis).normalize();
        let seed = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - axis * seed.dot(&axis)).normalize();
        let e2 = axis.cross(&e1);
        let v = p - v3(&self.cone.apex_mm);
        let phi = v.dot(&e2).atan2(v.dot(&e1)).to_degrees();
        let mut f = 1.0;
        for s in &self.shadow_sectors {
            let inside = angle_in_interval(phi, s.start_deg, s.end_deg);
            if inside && v.norm() >= s.depth_mm {
                f *= s.attenuation;
            }
        }
        f
    }
}

fn angle_in_interval(phi: f64, start: f64, end: f64) -> bool {
    let span = (end - start).rem_euclid(360.0);
    (phi - start).rem_euclid(360.0) <= span
}

fn needle_line(n: &NeedleTrack) -> (Vector3<f64>, Vector3<f64>) {
    (v3(&n.entry_mm), v3(&n.direction).normalize())
}

/// Approximate signed distance to an ellipsoid surface, measured along the
/// ray from its centre.
fn ellipsoid_distance(x: &Vector3<f64>, c: &Vector3<f64>, a: &Vector3<f64>) -> f64 {
    let d = x - c;
    let rho = d.component_div(a).norm();
    if rho == 0.0 {
        return -a.min();
    }
    (rho - 1.0) * d.norm() / rho
}

fn segment_distance(x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + ab * t)).norm()
}

/// 1 inside, 0 outside, smoothstep across `[-edge/2, edge/2]` of the signed distance.
fn inside_weight(d: f64, edge: f64) -> f64 {
    let t = (0.5 - d / edge).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Per-acquisition settings: speckle seed and affine intensity map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub seed: u64,
    pub gain: f64,
    pub offset: f64,
}

impl Acquisition {
    pub fn plain(seed: u64) -> Self {
        Acquisition {
            seed,
            gain: 1.0,
            offset: 0.0,
        }
    }

    /// Gain in `[0.8, 1.2]` and offset in `[-10, 10]` drawn from `seed`.
    pub fn with_random_intensity(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Acquisition {
            seed,
            gain: rng.random_range(0.8..=1.2),
            offset: rng.random_range(-10.0..=10.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeedleLine {
    #[serde(with = "vec3")]
    pub point: Vector3<f64>,
    #[serde(with = "vec3")]
    pub direction: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub calcifications: Vec<[f64; 3]>,
    pub needles: Vec<NeedleLine>,
}

/// Ground truth of one acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomScene {
    pub spec: PhantomSpec,
    /// Reference frame to acquisition frame.
    pub true_pose: RigidTransform,
    pub acquisition: Acquisition,
    pub reference_landmarks: Landmarks,
    pub acquisition_landmarks: Landmarks,
}

impl PhantomScene {
    pub fn new(spec: PhantomSpec, true_pose: RigidTransform, acquisition: Acquisition) -> Result<Self> {
        let reference_landmarks = Landmarks {
            calcifications: spec.calcifications.iter().map(|c| c.center_mm).collect(),
            needles: spec
                .needle_tracks
                .iter()
                .map(|n| {
                    let (point, direction) = needle_line(n);
                    NeedleLine { point, direction }
                })
                .collect(),
        };
        let acquisition_landmarks = Landmarks {
            calcifications: reference_landmarks
                .calcifications
                .iter()
                .map(|c| true_pose.apply(&v3(c)).into())
                .collect(),
            needles: reference_landmarks
                .needles
                .iter()
                .map(|n| NeedleLine {
                    point: true_pose.apply(&n.point),
                    direction: true_pose.apply_vector(&n.direction),
                })
                .collect(),
        };
        let scene = PhantomScene {
            spec,
            true_pose,
            acquisition,
            reference_landmarks,
            acquisition_landmarks,
        };
        scene.check()?;
        Ok(scene)
    }

    /// Landmark consistency: acquisition positions equal the true pose
    /// applied to reference positions within 1e-9.
    pub fn check(&self) -> Result<()> {
        let r = &self.reference_landmarks;
        let a = &self.acquisition_landmarks;
        let ok = r.calcifications.len() == a.calcifications.len()
            && r.needles.len() == a.needles.len()
            && r.calcifications.iter().zip(&a.calcifications).all(|(x, y)| {
                (self.true_pose.apply(&v3(x)) - v3(y)).norm() <= 1e-9
            })
            && r.needles.iter().zip(&a.needles).all(|(x, y)| {
                (self.true_pose.apply(&x.point) - y.point).norm() <= 1e-9
                    && (self.true_pose.apply_vector(&x.direction) - y.direction).norm() <= 1e-9
            });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTransform("landmarks disagree with the true pose".into()))
        }
    }
}

/// Renders the acquisition of `spec` at `true_pose` on `geometry`.
pub fn render_phantom(
    spec: &PhantomSpec,
    true_pose: &RigidTransform,
    geometry: &Geometry,
    acquisition: &Acquisition,
) -> Result<(Volume, PhantomScene)> {
    spec.validate()?;
    geometry.validate()?;
    let inverse = true_pose.inverse();
    let edge = geometry.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    let speckle = if spec.speckle_sigma > 0.0 {
        Some(speckle_field(geometry, spec.speckle_correlation_voxels, acquisition.seed))
    } else {
        None
    };
    let texture = TextureField::new(&spec.echotexture, spec.seed);
    let cells: Vec<(f32, bool)> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let p = geometry.voxel_center(idx);
            if !spec.in_cone(&p) {
                return (0.0, false);
            }
            let mut v = spec.structure_with(&inverse.apply(&p), edge, texture.as_ref());
            if let Some(n) = &speckle {
                v *= 1.0 + spec.speckle_sigma * n[idx];
            }
            v *= spec.shadow_factor(&p);
            ((acquisition.gain * v + acquisition.offset) as f32, true)
        })
        .collect();
    let all_valid = cells.iter().all(|c| c.1);
    let mask = (!all_valid).then(|| cells.iter().map(|c| c.1).collect());
    let volume = Volume::new(geometry.clone(), cells.into_iter().map(|c| c.0).collect(), mask)?;
    let scene = PhantomScene::new(spec.clone(), *true_pose, *acquisition)?;
    Ok((volume, scene))
}

/// Zero-mean, unit-variance Gaussian noise smoothed with a Gaussian kernel.
fn speckle_field(geometry: &Geometry, sigma_vox: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..geometry.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    gaussian_blur(&mut data, geometry.dims, sigma_vox);
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let sd = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in &mut data {
        *v = (*v - mean) / sd;
    }
    data
}

/// Separable Gaussian smoothing, kernel truncated at 3 sigma, normalised
/// over in-bounds taps.
pub(crate) fn gaussian_blur(data: &mut Vec<f64>, dims: [usize; 3], sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let strides = [1usize, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        if dims[axis] == 1 {
            continue;
        }
        let n = dims[axis] as isize;
        let src = data.clone();
        data.par_chunks_mut(dims[0]).enumerate().for_each(|(line, row)| {
            let j = line % dims[1];
            let k = line / dims[1];
            for (i, out) in row.iter_mut().enumerate() {
                let c = [i, j, k][axis] as isize;
                let base = (i + dims[0] * (j + dims[1] * k)) as isize;
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (t, w) in kernel.iter().enumerate() {
                    let cc = c + t as isize - radius;
                    if cc < 0 || cc >= n {
                        continue;
                    }
                    acc += w * src[(base + (cc - c) * strides[axis] as isize) as usize];
                    wsum += w;
                }
                *out = acc / wsum;
            }
        });
    }
}

/// Limits for [`sample_plausible_pose`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseRanges {
    pub lambda_max_deg: f64,
    /// Bound on the polar angle `acos(cos(alpha) cos(beta))` of the surface point.
    pub tilt_max_deg: f64,
    /// Largest displacement of the probe head along the gland surface.
    pub slide_max_mm: f64,
    /// Off-model perturbation bounds (mm, degrees); zero disables it.
    pub perturbation_mm: f64,
    pub perturbation_deg: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        PoseRanges {
            lambda_max_deg: 180.0,
            tilt_max_deg: 40.0,
            slide_max_mm: 30.0,
            perturbation_mm: 2.0,
            perturbation_deg: 2.0,
        }
    }
}

impl PoseRanges {
    pub fn none() -> Self {
        PoseRanges {
            lambda_max_deg: 0.0,
            tilt_max_deg: 0.0,
            slide_max_mm: 0.0,
            perturbation_mm: 0.0,
            perturbation_deg: 0.0,
        }
    }
}

/// Draws a probe pose uniformly within `ranges`, rejecting poses whose
/// polar angle on the gland surface exceeds the tilt limit or whose slide
/// exceeds the slide limit, and returns the reference-to-acquisition transform with the
/// generating pose. The optional perturbation rotates about the gland centre
/// and translates, each by a uniform amount up to its bound.
pub fn sample_plausible_pose(
    model: &ProbeMovementModel,
    ranges: &PoseRanges,
    seed: u64,
) -> (RigidTransform, ProbePose) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lmax = ranges.lambda_max_deg.to_radians();
    let tmax = ranges.tilt_max_deg.to_radians();
    let pole = model.surface_point(0.0, 0.0);
    let mut pose = ProbePose::default();
    for _ in 0..10_000 {
        let u: f64 = rng.random();
        let candidate = ProbePose::new(
            tmax * rng.random_range(-1.0..=1.0),
            tmax * rng.random_range(-1.0..=1.0),
            lmax - 2.0 * lmax * u,
        );
        let tilt = (candidate.alpha.cos() * candidate.beta.cos()).clamp(-1.0, 1.0).acos();
        let slide = (model.surface_point(candidate.alpha, candidate.beta) - pole).norm();
        if tilt <= tmax + 1e-12 && slide <= ranges.slide_max_mm {
            pose = candidate;
            break;
        }
    }
    let motion = model.pose_to_transform(&pose);
    let mut truth = motion.inverse();
    if ranges.perturbation_mm > 0.0 || ranges.perturbation_deg > 0.0 {
        let axis = random_unit(&mut rng);
        let angle = ranges.perturbation_deg.to_radians() * rng.random::<f64>();
        let shift = random_unit(&mut rng).into_inner() * ranges.perturbation_mm * rng.random::<f64>();
        let center = truth.apply(&model.center());
        let wobble = RigidTransform::rotation_about(&axis, angle, &center);
        truth = RigidTransform::from_translation(shift).compose(&wobble).compose(&truth);
    }
    (truth, pose)
}

pub(crate) fn random_unit(rng: &mut impl Rng) -> Unit<Vector3<f64>> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Unit::new_normalize(Vector3::new(r * phi.cos(), r * phi.sin(), z))
}

/// Calcification distances (mm) and needle direction angles (degrees)
/// between `estimated` (reference to acquisition) and the scene truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkErrors {
    pub calcification_mm: Vec<f64>,
    pub needle_deg: Vec<f64>,
}

pub fn calcification_errors(scene: &PhantomScene, estimated: &RigidTransform) -> Result<Vec<f64>> {
    let r = &scene.reference_landmarks.calcifications;
    if r.is_empty() {
        return Err(Error::NoLandmarks("calcification"));
    }
    Ok(r.iter()
        .zip(&scene.acquisition_landmarks.calcifications)
        .map(|(x, y)| (estimated.apply(&v3(x)) - v3(y)).norm())
        .collect())
}

pub fn needle_errors(scene: &PhantomScene, estimated: &RigidTransform) -> Result<Vec<f64>> {
    let r = &scene.reference_landmarks.needles;
    if r.is_empty() {
        return Err(Error::NoLandmarks("needle"));
    }
    Ok(r.iter()
        .zip(&scene.acquisition_landmarks.needles)
        .map(|(x, y)| {
            let d = estimated.apply_vector(&x.direction);
            let c = (d.dot(&y.direction) / (d.norm() * y.direction.norm())).clamp(-1.0, 1.0);
            c.acos().to_degrees()
        })
        .collect())
}

/// Both landmark kinds; a kind the scene lacks yields an empty list, and a
/// scene without any landmark is an error.
pub fn landmark_errors(scene: &PhantomScene, estimated: &RigidTransform) -> Result<LandmarkErrors> {
    let calcification_mm = calcification_errors(scene, estimated).unwrap_or_default();
    let needle_deg = needle_errors(scene, estimated).unwrap_or_default();
    if calcification_mm.is_empty() && needle_deg.is_empty() {
        return Err(Error::NoLandmarks("calcification or needle"));
    }
    Ok(LandmarkErrors {
        calcification_mm,
        needle_deg,
    })
}
