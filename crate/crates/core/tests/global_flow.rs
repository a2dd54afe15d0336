use metastab_core::flow::{global_flow, global_flow_with, GlobalFlowConfig};
use metastab_core::image::Frame;
use metastab_core::rigid::{image_center, warp, RigidTransform};
use metastab_core::synth::ProceduralScene;

/// Blacks out a band covering `fraction` of each dimension (half per side).
fn crop_border(f: &Frame, fraction: f64) -> Frame {
    let (w, h) = f.dims();
    let bx = (fraction * 0.5 * w as f64).round() as usize;
    let by = (fraction * 0.5 * h as f64).round() as usize;
    let mut data = f.data().to_vec();
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                if x < bx || x >= w - bx || y < by || y >= h - by {
                    data[c * w * h + y * w + x] = 0.0;
                }
            }
        }
    }
    Frame::new(w, h, data, f.index).unwrap()
}

#[test]
fn global_flow_of_identical_frames_is_zero() {
    let scene = ProceduralScene::new(64, 64, 2, 0);
    let a = scene.render(&RigidTransform::identity(image_center(64, 64)), 0);
    assert!(global_flow(&a, &a).unwrap().mean_magnitude() < 0.05);
}

#[test]
fn sprite_region_follows_camera_motion() {
    let (w, h) = (96, 96);
    let scene = ProceduralScene::new(w, h, 1, 2);
    let cam_a = RigidTransform::identity(image_center(w, h));
    let cam_b = RigidTransform::for_frame(0.01, 2.0, -1.0, w, h);
    // sprite moves between t=0 and t=4 while the camera shifts
    let a = scene.render(&cam_a, 0);
    let b = scene.render(&cam_b, 4);
    let mask = scene.object_mask(&cam_a, 0);
    let g = global_flow_with(&a, &b, &GlobalFlowConfig::default()).unwrap();
    let truth = cam_b.to_flow(w, h);
    let (mut err, mut n) = (0.0, 0.0);
    for i in 0..w * h {
        if mask[i] {
            err += ((g.flow.u()[i] - truth.u()[i]) as f64).hypot((g.flow.v()[i] - truth.v()[i]) as f64);
            n += 1.0;
        }
    }
    assert!(n > 0.05 * (w * h) as f64);
    assert!(err / n < 0.5, "sprite region endpoint error {}", err / n);
}

#[test]
fn border_crop_barely_moves_fit() {
    let (w, h) = (96, 96);
    let scene = ProceduralScene::new(w, h, 0, 7);
    let a = scene.render(&RigidTransform::identity(image_center(w, h)), 0);
    let t = RigidTransform::for_frame(0.02, 3.0, 1.5, w, h);
    let b = warp(&a, &t);
    let cfg = GlobalFlowConfig::default();
    let full = global_flow_with(&a, &b, &cfg).unwrap();
    let cropped = global_flow_with(&a, &crop_border(&b, 0.15), &cfg).unwrap();
    let dtheta = (full.rigid.theta - cropped.rigid.theta).abs().to_degrees();
    let dt = (full.rigid.tx - cropped.rigid.tx).hypot(full.rigid.ty - cropped.rigid.ty);
    assert!(dtheta < 0.05 && dt < 0.3, "{dtheta} deg, {dt} px");
    // cropped band is filled with the rigid prediction
    let pred = cropped.rigid.to_flow(w, h);
    for y in 0..h {
        for x in 0..4 {
            let i = y * w + x;
            assert!((cropped.flow.u()[i] - pred.u()[i]).abs() < 1.5);
        }
    }
}
