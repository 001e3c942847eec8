mod common;

use fallwatch::geometry::{camera_to_world, PixelPoint, Pose};
use fallwatch::pointcloud::{depth_to_cloud, fit_floor_plane, DepthImage, RansacParams};
use fallwatch::synth::{render, SceneSpec, Shape};
use fallwatch::Error;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn noiseless_cloud_reconstructs_surfaces() {
    let mut spec = common::separated_objects_scene(2, 0.0);
    spec.objects[0].shape = Shape::Box { size: [0.3, 0.2, 0.4] };
    let (bundle, truth) = render(&spec, 1).unwrap();
    let cloud = depth_to_cloud(&bundle.depth, &bundle.intrinsics).unwrap();
    assert_eq!(cloud.point_count(), bundle.depth.valid_count());
    let mut floor_points = 0;
    for (i, q) in cloud.iter_points() {
        let p = camera_to_world(q, &bundle.pose);
        if truth.hit_object[i].is_none() {
            assert!(p.z.abs() < 1e-6, "floor point at z = {}", p.z);
            floor_points += 1;
        } else {
            assert!(p.z > -1e-6);
        }
        // Every point lies on the ray through its own pixel.
        let (u, v) = cloud.pixel_of(i);
        let ray = bundle.intrinsics.pixel_ray(PixelPoint::new(u as f64, v as f64));
        assert!((ray * q.z - q.coords()).norm() < 1e-9);
    }
    assert!(floor_points > 10_000);
}

#[test]
fn box_top_face_is_at_box_height() {
    let mut spec = common::separated_objects_scene(1, 0.0);
    spec.objects[0].shape = Shape::Box { size: [0.3, 0.3, 0.2] };
    let (bundle, truth) = render(&spec, 1).unwrap();
    let cloud = depth_to_cloud(&bundle.depth, &bundle.intrinsics).unwrap();
    let tops = cloud
        .iter_points()
        .filter(|(i, _)| truth.hit_object[*i] == Some(0))
        .map(|(_, q)| camera_to_world(q, &bundle.pose).z)
        .filter(|z| (z - 0.2).abs() < 1e-6)
        .count();
    assert!(tops > 50, "{tops} top-face points");
}

#[test]
fn depth_png_round_trip_is_millimeter_exact() {
    let values = vec![0.0, 2.0, 1.2346, 0.0004, 65.0];
    let d = DepthImage::new(5, 1, values).unwrap();
    let mm = d.to_millimeters();
    assert_eq!(mm, vec![0, 2000, 1235, 0, 65000]);
    let back = DepthImage::from_millimeters(5, 1, &mm).unwrap();
    assert_eq!(back.at(1, 0), Some(2.0));
    assert_eq!(back.at(0, 0), None);
}

#[test]
fn floor_recovered_under_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, pitch) in [15.0, 25.0, 40.0].into_iter().enumerate() {
        let spec = common::random_floor_scene(&mut rng, pitch, 1.0, 0.005, 3);
        let (bundle, truth) = render(&spec, n as u64).unwrap();
        let cloud = depth_to_cloud(&bundle.depth, &bundle.intrinsics).unwrap();
        let mut fit_rng = ChaCha8Rng::seed_from_u64(0);
        let plane = fit_floor_plane(
            &cloud,
            &RansacParams::default(),
            Some(bundle.pose.up_in_camera()),
            &mut fit_rng,
        )
        .unwrap();
        assert!(common::angle_deg(&plane.normal_vector(), &truth.floor_normal) < 1.0);
        assert!((plane.offset - truth.floor_offset).abs() < 0.01);
    }
}

#[test]
fn wall_only_view_has_no_floor() {
    // Level camera staring into a big box face: every point is vertical.
    let pose = Pose::looking(Vector3::new(0.0, 0.0, 1.0), 0.0, 0.0);
    let mut spec = SceneSpec::new(common::intrinsics(), pose);
    spec.objects.push(common::object(
        "wall",
        Shape::Box { size: [0.2, 6.0, 3.0] },
        1.5,
        0.0,
        0.0,
    ));
    let (bundle, _) = render(&spec, 0).unwrap();
    let cloud = depth_to_cloud(&bundle.depth, &bundle.intrinsics).unwrap();
    let r = fit_floor_plane(
        &cloud,
        &RansacParams::default(),
        Some(bundle.pose.up_in_camera()),
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    assert!(matches!(r, Err(Error::NoFloorFound(_))));
}

#[test]
fn single_box_segment_matches_mask() {
    let spec = common::separated_objects_scene(1, 0.0);
    let (segments, truth) = common::segment_scene(&spec, 4);
    assert_eq!(segments.len(), 1);
    let gt = &truth.objects[0].mask;
    let seg = &segments[0].0;
    let inter = seg.indices().iter().filter(|&&i| gt.get(i as u32 % 320, i as u32 / 320)).count();
    let sym_diff = seg.area() + gt.area() - 2 * inter;
    assert!((sym_diff as f64) <= 0.1 * gt.area() as f64, "{sym_diff} of {}", gt.area());
}

#[test]
fn n_separated_objects_give_n_segments() {
    for n in 1..=5 {
        let (iou, err) = common::region_growing_scores(n).unwrap();
        assert!(iou >= 0.9, "n = {n}: IoU {iou}");
        assert!(err <= 0.02, "n = {n}: centroid error {err}");
    }
}

#[test]
fn small_clusters_are_dropped() {
    let mut spec = common::separated_objects_scene(1, 0.0);
    spec.objects[0].shape = Shape::Box { size: [0.02, 0.02, 0.04] };
    let (segments, _) = common::segment_scene(&spec, 0);
    assert!(segments.is_empty());
}

#[test]
fn render_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut spec = common::random_floor_scene(&mut rng, 30.0, 1.1, 0.005, 4);
    spec.invalid_pixel_fraction = 0.05;
    let (a, _) = render(&spec, 9).unwrap();
    let (b, _) = render(&spec, 9).unwrap();
    assert_eq!(a.depth, b.depth);
    assert_eq!(a.rgb, b.rgb);
    let (c, _) = render(&spec, 10).unwrap();
    assert_ne!(a.depth, c.depth);
    let n = 320 * 240;
    let invalid = n - a.depth.valid_count();
    assert_eq!(invalid, (0.05 * n as f64).round() as usize);
}
