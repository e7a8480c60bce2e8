//! Cross-checks against independent brute-force, Monte Carlo and
//! finite-difference computations.

use mmwave_synth::convert::{
    convert_sequence_traced, idw_weights, interpolate_point_flow, ConversionConfig, ExtendedSkeletonFlow, NUM_EXTENDED,
};
use mmwave_synth::metrics::{mpjpe, pa_mpjpe, procrustes_align, squared_error, SimilarityTransform};
use mmwave_synth::utcl::{dynamic_set, static_set, utcl_grad, utcl_loss, UtclConfig};
use mmwave_synth::{nearest_point_distance, skeleton_center, synth, PointCloud, SeededRng, Skeleton, Vec3, NUM_JOINTS};
use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use rand::Rng;

fn rand_vec(rng: &mut impl Rng, r: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

fn rand_cloud(rng: &mut impl Rng, m: usize, r: f64) -> PointCloud {
    PointCloud::new((0..m).map(|_| rand_vec(rng, r)).collect()).unwrap()
}

fn rand_skeleton(rng: &mut impl Rng, r: f64) -> Skeleton {
    Skeleton::new(std::array::from_fn(|_| rand_vec(rng, r))).unwrap()
}

fn rand_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 {
            break Unit::new_normalize(v);
        }
    };
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    *UnitQuaternion::from_axis_angle(&axis, angle)
        .to_rotation_matrix()
        .matrix()
}

#[test]
fn nearest_distance_matches_exhaustive_scan() {
    let mut rng = SeededRng::new(100, 0);
    for _ in 0..50 {
        let cloud = rand_cloud(&mut rng, 50, 2.0);
        let joint = Vec3::new(1.0, 1.0, 1.0);
        let mut best = f64::INFINITY;
        for p in cloud.points() {
            let d = ((joint.x - p.x).powi(2) + (joint.y - p.y).powi(2) + (joint.z - p.z).powi(2)).sqrt();
            if d < best {
                best = d;
            }
        }
        assert_eq!(nearest_point_distance(joint, &cloud).unwrap(), best);
    }
}

#[test]
fn skeleton_center_matches_summation() {
    let mut rng = SeededRng::new(101, 0);
    let s = rand_skeleton(&mut rng, 1.0);
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for j in s.joints() {
        x += j.x;
        y += j.y;
        z += j.z;
    }
    let c = skeleton_center(&s);
    assert!((c.x - x / 15.0).abs() < 1e-15);
    assert!((c.y - y / 15.0).abs() < 1e-15);
    assert!((c.z - z / 15.0).abs() < 1e-15);
}

#[test]
fn joint_sets_match_threshold_oracle() {
    let mut rng = SeededRng::new(102, 0);
    let cfg = UtclConfig::default();
    for _ in 0..200 {
        let cloud = rand_cloud(&mut rng, 30, 0.6);
        let s = rand_skeleton(&mut rng, 0.6);
        let mut dyn_expected = Vec::new();
        let mut sta_expected = Vec::new();
        for (j, joint) in s.joints().iter().enumerate() {
            let d = cloud
                .points()
                .iter()
                .map(|p| (*joint - *p).norm())
                .fold(f64::INFINITY, f64::min);
            if d < cfg.mu {
                dyn_expected.push(j);
            }
            if d > cfg.rho {
                sta_expected.push(j);
            }
        }
        assert_eq!(dynamic_set(&cloud, &s, cfg.mu), dyn_expected);
        assert_eq!(static_set(&cloud, &s, cfg.rho), sta_expected);
    }
}

/// Literal evaluation of the dynamic + static consistency terms.
fn loss_oracle(cloud: &PointCloud, cur: &Skeleton, prev: &Skeleton, cfg: &UtclConfig) -> f64 {
    let mut dyn_terms = Vec::new();
    let mut sta_terms = Vec::new();
    for j in 0..NUM_JOINTS {
        let f = cur.joint(j) - prev.joint(j);
        let d = cloud
            .points()
            .iter()
            .map(|p| (cur.joint(j) - *p).norm())
            .fold(f64::INFINITY, f64::min);
        if d < cfg.mu {
            dyn_terms.push((cfg.eta - f.norm()).max(0.0));
        }
        if d > cfg.rho {
            sta_terms.push(f.norm());
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    mean(&dyn_terms) + mean(&sta_terms)
}

#[test]
fn utcl_loss_matches_literal_oracle() {
    let mut rng = SeededRng::new(103, 0);
    let cfg = UtclConfig::default();
    for _ in 0..300 {
        let cloud = rand_cloud(&mut rng, 40, 0.5);
        let prev = rand_skeleton(&mut rng, 0.5);
        let cur = Skeleton::new(prev.joints().map(|j| j + rand_vec(&mut rng, 0.08))).unwrap();
        let r = utcl_loss(&cloud, &cur, &prev, &cfg);
        assert!((r.l_con - loss_oracle(&cloud, &cur, &prev, &cfg)).abs() < 1e-14);
        assert!(r.l_dyn >= 0.0 && r.l_sta >= 0.0 && r.l_dyn <= cfg.eta);
    }
}

/// Random scene whose joint distances and flow norms all sit at least
/// `margin` away from every threshold and from zero.
pub fn non_degenerate_scene(rng: &mut SeededRng, cfg: &UtclConfig, margin: f64) -> (PointCloud, Skeleton, Skeleton) {
    loop {
        let cur = rand_skeleton(rng, 0.5);
        let mut pts = Vec::new();
        for &j in cur.joints() {
            if rng.random_bool(0.5) {
                pts.push(j + rand_vec(rng, 0.12));
            }
        }
        pts.extend((0..10).map(|_| rand_vec(rng, 0.8)));
        let cloud = PointCloud::new(pts).unwrap();
        let flows: [Vec3; NUM_JOINTS] = std::array::from_fn(|_| {
            let dir = rand_vec(rng, 1.0);
            dir / dir.norm() * rng.random_range(margin..0.15)
        });
        let prev = Skeleton::new(std::array::from_fn(|j| cur.joint(j) - flows[j])).unwrap();
        let ok = cur.joints().iter().zip(&flows).all(|(j, f)| {
            let d = nearest_point_distance(*j, &cloud).unwrap();
            let n = f.norm();
            (d - cfg.mu).abs() >= margin
                && (d - cfg.rho).abs() >= margin
                && n >= margin
                && (n - cfg.eta).abs() >= margin
        });
        if ok {
            return (cloud, cur, prev);
        }
    }
}

fn perturb(s: &Skeleton, j: usize, axis: usize, h: f64) -> Skeleton {
    let mut joints = *s.joints();
    let mut a = joints[j].to_array();
    a[axis] += h;
    joints[j] = Vec3::from_array(a);
    Skeleton::new(joints).unwrap()
}

#[test]
fn utcl_gradient_matches_central_differences() {
    let cfg = UtclConfig::default();
    let mut rng = SeededRng::new(104, 0);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (cloud, cur, prev) = non_degenerate_scene(&mut rng, &cfg, 1e-3);
        let g = utcl_grad(&cloud, &cur, &prev, &cfg);
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for j in 0..NUM_JOINTS {
            for axis in 0..3 {
                let fd_cur = (utcl_loss(&cloud, &perturb(&cur, j, axis, h), &prev, &cfg).l_con
                    - utcl_loss(&cloud, &perturb(&cur, j, axis, -h), &prev, &cfg).l_con)
                    / (2.0 * h);
                let fd_prev = (utcl_loss(&cloud, &cur, &perturb(&prev, j, axis, h), &cfg).l_con
                    - utcl_loss(&cloud, &cur, &perturb(&prev, j, axis, -h), &cfg).l_con)
                    / (2.0 * h);
                let (ac, ap) = (g.d_cur[j].component(axis), g.d_prev[j].component(axis));
                diff2 += (ac - fd_cur).powi(2) + (ap - fd_prev).powi(2);
                a2 += ac * ac + ap * ap;
                n2 += fd_cur * fd_cur + fd_prev * fd_prev;
            }
        }
        let denom = a2.max(n2).sqrt();
        let rel = if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom };
        worst = worst.max(rel);
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn idw_weights_are_normalized() {
    let mut rng = SeededRng::new(105, 0);
    for _ in 0..2000 {
        let sources: [Vec3; NUM_EXTENDED] = std::array::from_fn(|_| rand_vec(&mut rng, 1.0));
        let p = rand_vec(&mut rng, 1.2);
        let w = idw_weights(p, &sources, 1e-6);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn interpolation_recovers_coincident_joint_flow() {
    // exact weight computation for the locality example
    let mut rng = SeededRng::new(106, 0);
    for _ in 0..100 {
        let target = rand_vec(&mut rng, 0.2);
        let mut positions = [Vec3::ZERO; NUM_EXTENDED];
        let mut flows = [Vec3::ZERO; NUM_EXTENDED];
        positions[0] = target;
        flows[0] = Vec3::new(1.0, 0.0, 0.0);
        for k in 1..NUM_EXTENDED {
            let dir = rand_vec(&mut rng, 1.0);
            positions[k] = target + dir / dir.norm() * rng.random_range(0.5..1.5);
            flows[k] = rand_vec(&mut rng, 0.2);
        }
        let ext = ExtendedSkeletonFlow { positions, flows };
        let cloud = PointCloud::new(vec![target]).unwrap();
        let f = interpolate_point_flow(&cloud, &ext, 1e-6).vectors()[0];
        // weight 1/ε on the coincident joint vs at most 22·2 on the rest
        let mut num = flows[0] * 1e6;
        let mut den = 1e6;
        for k in 1..NUM_EXTENDED {
            let w = 1.0 / ((positions[k] - target).norm() + 1e-6);
            num += flows[k] * w;
            den += w;
        }
        assert!((f - num / den).norm() < 1e-12);
        assert!((f - flows[0]).norm() < 1e-4);
    }
}

#[test]
fn mpjpe_matches_per_joint_sum() {
    let mut rng = SeededRng::new(107, 0);
    let (a, b) = (rand_skeleton(&mut rng, 1.0), rand_skeleton(&mut rng, 1.0));
    let mut sum = 0.0;
    for j in 0..NUM_JOINTS {
        let d = a.joint(j) - b.joint(j);
        sum += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
    }
    assert!((mpjpe(&a, &b) - sum / 15.0 * 100.0).abs() < 1e-12);
}

#[test]
fn procrustes_recovers_constructed_transform() {
    let mut rng = SeededRng::new(108, 0);
    for _ in 0..200 {
        let gt = rand_skeleton(&mut rng, 0.8);
        let s0 = rng.random_range(0.5..2.0);
        let r0 = rand_rotation(&mut rng);
        let t0 = rand_vec(&mut rng, 2.0);
        let pred = Skeleton::new(gt.joints().map(|g| {
            let v = r0.transpose() * Vector3::new(g.x - t0.x, g.y - t0.y, g.z - t0.z) / s0;
            Vec3::new(v.x, v.y, v.z)
        }))
        .unwrap();
        let tf = procrustes_align(&pred, &gt).unwrap();
        assert!((tf.scale - s0).abs() < 1e-6);
        assert!((tf.rotation - r0).norm() < 1e-6);
        assert!((tf.translation - t0).norm() < 1e-6);
        assert!(pa_mpjpe(&pred, &gt).unwrap() < 1e-7);
    }
}

fn apply(tf: &SimilarityTransform, s: &Skeleton) -> Skeleton {
    tf.apply_skeleton(s)
}

#[test]
fn procrustes_beats_random_candidates() {
    let mut rng = SeededRng::new(109, 0);
    for _ in 0..10 {
        let gt = rand_skeleton(&mut rng, 0.8);
        let pred = rand_skeleton(&mut rng, 0.8);
        let best = procrustes_align(&pred, &gt).unwrap();
        let optimum = squared_error(&apply(&best, &pred), &gt);
        for k in 0..10_000 {
            let cand = if k % 2 == 0 {
                SimilarityTransform {
                    scale: rng.random_range(0.2..3.0),
                    rotation: rand_rotation(&mut rng),
                    translation: rand_vec(&mut rng, 1.0),
                }
            } else {
                // local perturbation of the closed-form answer
                let small = UnitQuaternion::from_scaled_axis(Vector3::new(
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                ));
                SimilarityTransform {
                    scale: best.scale * rng.random_range(0.95..1.05),
                    rotation: small.to_rotation_matrix().matrix() * best.rotation,
                    translation: best.translation + rand_vec(&mut rng, 0.02),
                }
            };
            assert!(optimum <= squared_error(&apply(&cand, &pred), &gt) + 1e-12);
        }
    }
}

#[test]
fn alignment_never_increases_squared_error() {
    let mut rng = SeededRng::new(110, 0);
    for _ in 0..1000 {
        let gt = rand_skeleton(&mut rng, 0.8);
        let pred = Skeleton::new(gt.joints().map(|j| j + rand_vec(&mut rng, 0.3))).unwrap();
        let tf = procrustes_align(&pred, &gt).unwrap();
        assert!(squared_error(&apply(&tf, &pred), &gt) <= squared_error(&pred, &gt) + 1e-12);
        let det = tf.rotation.determinant();
        assert!((det - 1.0).abs() < 1e-9);
        assert!((tf.rotation.transpose() * tf.rotation - Matrix3::identity()).norm() < 1e-9);
        assert!(tf.scale > 0.0);
    }
}

#[test]
fn converted_flow_prefers_moving_points() {
    let seq = synth::arm_swing_sequence(30, 800, 5);
    let traces = convert_sequence_traced(&seq, &ConversionConfig::default(), &SeededRng::new(5, 0)).unwrap();
    for tr in &traces[1..] {
        let st = tr.stats();
        assert!(st.mean_flow_kept.unwrap() > st.mean_flow_all.unwrap(), "frame {}", tr.t);
    }
}
