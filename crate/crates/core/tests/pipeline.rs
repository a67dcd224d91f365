mod common;

use common::{noise_free, small_config, small_spec, Scene};
use nalgebra::Vector3;
use trus_track::harness::gland_center;
use trus_track::pipeline::{classify_success, register, Mode, TrackingImage};
use trus_track::transform::{angular_error, euclidean_error, RigidTransform};
use trus_track::volume::{extract_ortho_slices, Frame, Volume};
use trus_track::Error;

#[test]
fn reference_registers_to_itself() {
    let scene = Scene::new(small_spec(11));
    let tracker = scene.tracker(Mode::Volume);
    let r = tracker.register(TrackingImage::Volume(&scene.panorama.volume)).unwrap();
    let c = gland_center(&scene.spec);
    let id = RigidTransform::identity();
    assert!(euclidean_error(&r.transform, &id, &c) < 0.5, "{:?}", r.transform);
    assert!(angular_error(&r.transform, &id) < 1.0);
    assert!(r.final_energy < 0.05);
    assert!(r.failure_reason.is_none());
}

#[test]
fn flat_tracking_image_is_all_undefined() {
    let scene = Scene::new(small_spec(12));
    let flat = Volume::filled(scene.spec.geometry.clone(), 80.0).unwrap();
    let err = register(&scene.panorama.volume, scene.panorama.bbox, TrackingImage::Volume(&flat), &small_config(Mode::Volume))
        .unwrap_err();
    assert!(matches!(err, Error::AllUndefined), "{err}");
    assert!(!err.is_validation());
}

#[test]
fn registration_is_deterministic_and_captures_the_pose() {
    let scene = Scene::new(small_spec(13));
    let tracker = scene.tracker(Mode::Volume);
    let sample = scene.tracking(0);
    let a = tracker.register(TrackingImage::Volume(&sample.volume)).unwrap();
    let b = tracker.register(TrackingImage::Volume(&sample.volume)).unwrap();
    assert_eq!(a.transform, b.transform);
    assert_eq!(a.final_energy.to_bits(), b.final_energy.to_bits());
    assert_eq!(a.candidates, b.candidates);
    let s = classify_success(&a.transform, &sample.scene.true_pose, &gland_center(&scene.spec));
    assert!(s.success, "{s:?}");
}

#[test]
fn cached_exploration_gives_the_same_result() {
    let scene = Scene::new(small_spec(14));
    let tracker = scene.tracker(Mode::Volume);
    let sample = scene.tracking(1);
    let plain = tracker.register(TrackingImage::Volume(&sample.volume)).unwrap();
    let lattice = tracker.lattice_for(sample.volume.geometry()).unwrap();
    let cache = tracker.precompute(&lattice).unwrap();
    let cached = scene.tracker(Mode::Volume).with_cache(lattice, cache).unwrap();
    assert!(cached.has_cache());
    let fast = cached.register(TrackingImage::Volume(&sample.volume)).unwrap();
    assert_eq!(plain.transform, fast.transform);
    assert_eq!(plain.exploration_energy.to_bits(), fast.exploration_energy.to_bits());
}

#[test]
fn slice_and_volume_modes_agree_without_speckle() {
    let scene = Scene::new(noise_free(small_spec(15)));
    let c = gland_center(&scene.spec);
    let volume = scene.tracker(Mode::Volume);
    let slices = scene.tracker(Mode::OrthoSlices);
    for index in 0..2 {
        let sample = scene.tracking(index);
        let a = volume.register(TrackingImage::Volume(&sample.volume)).unwrap();
        let b = slices.register(TrackingImage::Volume(&sample.volume)).unwrap();
        let (e, ang) = (euclidean_error(&a.transform, &b.transform, &c), angular_error(&a.transform, &b.transform));
        assert!(e <= 1.0 && ang <= 2.0, "acquisition {index}: {e:.3} mm {ang:.3} deg");
    }
}

#[test]
fn explicit_slices_register() {
    let scene = Scene::new(small_spec(16));
    let tracker = scene.tracker(Mode::OrthoSlices);
    let sample = scene.tracking(2);
    let planes = extract_ortho_slices(&sample.volume, &Frame::of_volume(sample.volume.geometry())).unwrap();
    let r = tracker.register(TrackingImage::Slices(&planes)).unwrap();
    let s = classify_success(&r.transform, &sample.scene.true_pose, &gland_center(&scene.spec));
    assert!(s.eps_e_mm < 2.0 && s.eps_a_deg < 10.0, "{s:?}");
}

#[test]
fn swapped_roles_give_inverse_transforms() {
    // two acquisitions of one phantom: registering A to B and B to A
    let scene = Scene::new(small_spec(17));
    let a = scene.tracking(0);
    let b = scene.tracking(1);
    let c = gland_center(&scene.spec);
    let box_in = |scene_truth: &RigidTransform| {
        // gland box seen in an acquisition frame
        let center = scene_truth.apply(&c);
        let half = Vector3::from(scene.spec.gland_semi_axes_mm).map(|x| x * 1.1);
        let r = half.norm();
        trus_track::volume::Aabb::new(center - Vector3::repeat(r.min(half.max())), center + Vector3::repeat(r.min(half.max())))
            .unwrap()
    };
    let cfg = small_config(Mode::Volume);
    let ab = register(&a.volume, box_in(&a.scene.true_pose), TrackingImage::Volume(&b.volume), &cfg).unwrap();
    let ba = register(&b.volume, box_in(&b.scene.true_pose), TrackingImage::Volume(&a.volume), &cfg).unwrap();
    let expected = b.scene.true_pose.compose(&a.scene.true_pose.inverse());
    let ca = a.scene.true_pose.apply(&c);
    let loop_closure = ba.transform.compose(&ab.transform);
    eprintln!(
        "A->B vs truth {:.2} mm {:.2} deg; loop {:.2} mm {:.2} deg",
        euclidean_error(&ab.transform, &expected, &ca),
        angular_error(&ab.transform, &expected),
        euclidean_error(&loop_closure, &RigidTransform::identity(), &ca),
        angular_error(&loop_closure, &RigidTransform::identity())
    );
    assert!(euclidean_error(&loop_closure, &RigidTransform::identity(), &ca) < 2.0);
    assert!(angular_error(&loop_closure, &RigidTransform::identity()) < 5.0);
}
