//! Procedural test scenes.
//!
//! [`arm_swing_sequence`] produces a standing figure whose right arm swings
//! back and forth while the rest of the body stays still, with a LiDAR-like
//! surface cloud sampled around the bones every frame.

use std::f64::consts::PI;

use rand::Rng;

use crate::geom::{Frame, Point3, PointCloud, Sequence, Skeleton, SourceTag, Vec3, BONES, NUM_JOINTS};
use crate::rng::SeededRng;

const UPPER_ARM: f64 = 0.28;
const FOREARM: f64 = 0.25;
/// Swing amplitude of the right shoulder, radians.
const SWING: f64 = 60.0 * PI / 180.0;
/// Swing period in frames.
const PERIOD: f64 = 20.0;

fn rest_pose() -> [Point3; NUM_JOINTS] {
    [
        Vec3::new(0.0, 0.0, 0.95),
        Vec3::new(0.10, 0.0, 0.92),
        Vec3::new(0.10, 0.02, 0.50),
        Vec3::new(0.10, 0.0, 0.08),
        Vec3::new(-0.10, 0.0, 0.92),
        Vec3::new(-0.10, 0.02, 0.50),
        Vec3::new(-0.10, 0.0, 0.08),
        Vec3::new(0.0, 0.0, 1.45),
        Vec3::new(0.0, 0.02, 1.65),
        Vec3::new(0.18, 0.0, 1.42),
        Vec3::new(0.20, 0.0, 1.15),
        Vec3::new(0.21, 0.02, 0.91),
        Vec3::new(-0.18, 0.0, 1.42),
        Vec3::new(-0.20, 0.0, 1.14),
        Vec3::new(-0.21, 0.02, 0.89),
    ]
}

/// Skeleton at frame index `i` of the swing.
pub fn arm_swing_skeleton(i: usize) -> Skeleton {
    let mut joints = rest_pose();
    let phase = 2.0 * PI * i as f64 / PERIOD;
    let shoulder_angle = SWING * phase.sin();
    let elbow_angle = shoulder_angle + 0.35 * (1.0 + phase.sin());
    let dir = |a: f64| Vec3::new(0.0, a.sin(), -a.cos());
    let shoulder = joints[12];
    joints[13] = shoulder + dir(shoulder_angle) * UPPER_ARM;
    joints[14] = joints[13] + dir(elbow_angle) * FOREARM;
    Skeleton::new(joints).expect("finite pose")
}

fn bone_radius(bone: (usize, usize)) -> f64 {
    match bone {
        (0, 7) => 0.13,
        (7, 8) => 0.09,
        (0, 1) | (0, 4) | (1, 2) | (4, 5) => 0.07,
        _ => 0.045,
    }
}

/// Samples `n` points on capsules around the bones of `skeleton`.
pub fn body_cloud(skeleton: &Skeleton, n: usize, rng: &mut SeededRng) -> PointCloud {
    let lengths: Vec<f64> = BONES
        .iter()
        .map(|&(a, b)| skeleton.joint(a).distance(skeleton.joint(b)).max(1e-3))
        .collect();
    let total: f64 = lengths.iter().sum();
    let points = (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < lengths.len() && pick >= lengths[k] {
                pick -= lengths[k];
                k += 1;
            }
            let (a, b) = BONES[k];
            let u: f64 = rng.random();
            let axis_point = skeleton.joint(a) + (skeleton.joint(b) - skeleton.joint(a)) * u;
            let dir = loop {
                let v = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let n2 = v.norm_squared();
                if n2 > 1e-6 && n2 <= 1.0 {
                    break v / n2.sqrt();
                }
            };
            axis_point + dir * bone_radius(BONES[k])
        })
        .collect();
    PointCloud::new(points).expect("finite cloud")
}

/// Labeled LiDAR sequence of `frames` frames at 10 Hz with `points` points
/// per frame.
pub fn arm_swing_sequence(frames: usize, points: usize, seed: u64) -> Sequence {
    let rng = SeededRng::new(seed, 0);
    let frames = (0..frames)
        .map(|i| {
            let s = arm_swing_skeleton(i);
            let cloud = body_cloud(&s, points, &mut rng.fork("synth", i as u64));
            Frame::new(i as u64, cloud, Some(s))
        })
        .collect();
    Sequence::new(frames, SourceTag::Lidar, 10.0).expect("valid synthetic sequence")
}
