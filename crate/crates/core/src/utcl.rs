//! Unsupervised temporal consistency loss.
//!
//! Radar detects moving surfaces far more readily than static ones, so a
//! predicted joint sitting inside the detected cloud should be moving and a
//! joint far from every detection should be still. The dynamic term hinges
//! joints closer than `mu` to the cloud whose flow is below `eta`; the static
//! term penalizes the flow of joints farther than `rho` from the cloud.
//!
//! Set membership is decided from the current prediction and treated as a
//! constant when differentiating.

use crate::error::{Error, Result};
use crate::geom::{nearest_point_distance, PointCloud, Skeleton, Vec3, NUM_JOINTS};

#[derive(Clone, Debug, PartialEq)]
pub struct UtclConfig {
    /// Dynamic-set distance threshold, meters.
    pub mu: f64,
    /// Minimum flow expected of a dynamic joint, meters.
    pub eta: f64,
    /// Static-set distance threshold, meters.
    pub rho: f64,
    pub lambda_con: f64,
}

impl Default for UtclConfig {
    fn default() -> Self {
        Self {
            mu: 0.20,
            eta: 0.05,
            rho: 0.05,
            lambda_con: 0.01,
        }
    }
}

impl UtclConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("mu", self.mu), ("eta", self.eta), ("rho", self.rho)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be a finite value > 0"));
            }
        }
        if !(self.lambda_con.is_finite() && self.lambda_con >= 0.0) {
            return Err(Error::config("lambda_con", "must be a finite value >= 0"));
        }
        Ok(())
    }
}

pub type SkeletonFlow = [Vec3; NUM_JOINTS];

pub fn skeleton_flow(s_cur: &Skeleton, s_prev: &Skeleton) -> SkeletonFlow {
    std::array::from_fn(|j| s_cur.joint(j) - s_prev.joint(j))
}

fn joint_distances(cloud: &PointCloud, s_hat: &Skeleton) -> Option<[f64; NUM_JOINTS]> {
    if cloud.is_empty() {
        return None;
    }
    Some(
        s_hat
            .joints()
            .map(|j| nearest_point_distance(j, cloud).expect("cloud is nonempty")),
    )
}

/// Joints strictly closer than `mu` to the cloud. Empty for an empty cloud.
pub fn dynamic_set(cloud: &PointCloud, s_hat: &Skeleton, mu: f64) -> Vec<usize> {
    match joint_distances(cloud, s_hat) {
        Some(d) => (0..NUM_JOINTS).filter(|&j| d[j] < mu).collect(),
        None => Vec::new(),
    }
}

/// Joints strictly farther than `rho` from the cloud. Every joint for an
/// empty cloud.
pub fn static_set(cloud: &PointCloud, s_hat: &Skeleton, rho: f64) -> Vec<usize> {
    match joint_distances(cloud, s_hat) {
        Some(d) => (0..NUM_JOINTS).filter(|&j| d[j] > rho).collect(),
        None => (0..NUM_JOINTS).collect(),
    }
}

/// Mean hinge `max(0, eta - |flow|)` over the dynamic joints; 0 if none.
pub fn dcl(flow: &SkeletonFlow, dyn_set: &[usize], eta: f64) -> f64 {
    if dyn_set.is_empty() {
        return 0.0;
    }
    let sum: f64 = dyn_set.iter().map(|&j| (eta - flow[j].norm()).max(0.0)).sum();
    sum / dyn_set.len() as f64
}

/// Mean flow magnitude over the static joints; 0 if none.
pub fn scl(flow: &SkeletonFlow, sta_set: &[usize]) -> f64 {
    if sta_set.is_empty() {
        return 0.0;
    }
    let sum: f64 = sta_set.iter().map(|&j| flow[j].norm()).sum();
    sum / sta_set.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub l_dyn: f64,
    pub l_sta: f64,
    pub l_con: f64,
    /// Supervised term, when ground truth was available.
    pub l_lab: Option<f64>,
    pub l_total: f64,
    pub dyn_indices: Vec<usize>,
    pub sta_indices: Vec<usize>,
}

/// Consistency loss for one adjacent pair of predictions. `cloud` is the
/// point cloud at the current frame.
pub fn utcl_loss(cloud: &PointCloud, s_hat_cur: &Skeleton, s_hat_prev: &Skeleton, cfg: &UtclConfig) -> LossReport {
    let flow = skeleton_flow(s_hat_cur, s_hat_prev);
    let dyn_indices = dynamic_set(cloud, s_hat_cur, cfg.mu);
    let sta_indices = static_set(cloud, s_hat_cur, cfg.rho);
    let l_dyn = dcl(&flow, &dyn_indices, cfg.eta);
    let l_sta = scl(&flow, &sta_indices);
    let l_con = l_dyn + l_sta;
    LossReport {
        l_dyn,
        l_sta,
        l_con,
        l_lab: None,
        l_total: total_loss(0.0, l_con, cfg),
        dyn_indices,
        sta_indices,
    }
}

impl LossReport {
    /// Adds the supervised term and recomputes the total.
    pub fn with_label_loss(mut self, l_lab: f64, cfg: &UtclConfig) -> Self {
        self.l_lab = Some(l_lab);
        self.l_total = total_loss(l_lab, self.l_con, cfg);
        self
    }
}

/// Mean squared error over all joints and axes.
pub fn mse_loss(s_hat: &Skeleton, s_gt: &Skeleton) -> f64 {
    let sum: f64 = s_hat
        .joints()
        .iter()
        .zip(s_gt.joints())
        .map(|(a, b)| (*a - *b).norm_squared())
        .sum();
    sum / (3 * NUM_JOINTS) as f64
}

pub fn total_loss(l_lab: f64, l_con: f64, cfg: &UtclConfig) -> f64 {
    l_lab + cfg.lambda_con * l_con
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtclGradient {
    pub d_cur: [Vec3; NUM_JOINTS],
    pub d_prev: [Vec3; NUM_JOINTS],
}

/// Analytic gradient of the consistency loss w.r.t. both predictions.
///
/// Set membership is frozen. At zero flow the norm contributes a zero
/// subgradient; at the hinge kink `|flow| = eta` the zero branch is taken.
pub fn utcl_grad(cloud: &PointCloud, s_hat_cur: &Skeleton, s_hat_prev: &Skeleton, cfg: &UtclConfig) -> UtclGradient {
    let flow = skeleton_flow(s_hat_cur, s_hat_prev);
    let dyn_set = dynamic_set(cloud, s_hat_cur, cfg.mu);
    let sta_set = static_set(cloud, s_hat_cur, cfg.rho);
    let mut d_flow = [Vec3::ZERO; NUM_JOINTS];

    let unit = |f: Vec3| {
        let n = f.norm();
        if n > 0.0 {
            f / n
        } else {
            Vec3::ZERO
        }
    };

    if !dyn_set.is_empty() {
        let w = 1.0 / dyn_set.len() as f64;
        for &j in &dyn_set {
            if flow[j].norm() < cfg.eta {
                d_flow[j] += -unit(flow[j]) * w;
            }
        }
    }
    if !sta_set.is_empty() {
        let w = 1.0 / sta_set.len() as f64;
        for &j in &sta_set {
            d_flow[j] += unit(flow[j]) * w;
        }
    }
    UtclGradient {
        d_cur: d_flow,
        d_prev: d_flow.map(|g| -g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skel(f: impl Fn(usize) -> Vec3) -> Skeleton {
        Skeleton::new(std::array::from_fn(f)).unwrap()
    }

    fn pose() -> Skeleton {
        skel(|j| Vec3::new(0.1 * (j % 3) as f64, 0.05 * j as f64, 0.12 * j as f64))
    }

    #[test]
    fn flow_cases() {
        let a = pose();
        assert!(skeleton_flow(&a, &a).iter().all(|v| *v == Vec3::ZERO));
        let mut j = *a.joints();
        j[11] += Vec3::new(0.0, 0.05, 0.0);
        let b = Skeleton::new(j).unwrap();
        let f = skeleton_flow(&b, &a);
        for (k, v) in f.iter().enumerate() {
            if k == 11 {
                assert!((*v - Vec3::new(0.0, 0.05, 0.0)).norm() < 1e-15);
            } else {
                assert_eq!(*v, Vec3::ZERO);
            }
        }
        let r = skeleton_flow(&a, &b);
        assert!(f.iter().zip(&r).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn set_cases() {
        let s = pose();
        let far = PointCloud::new(vec![Vec3::new(10.0, 10.0, 10.0)]).unwrap();
        assert!(dynamic_set(&far, &s, 0.2).is_empty());
        assert_eq!(static_set(&far, &s, 0.05), (0..15).collect::<Vec<_>>());

        let one = PointCloud::new(vec![s.joint(6), Vec3::new(10.0, 0.0, 0.0)]).unwrap();
        assert!(dynamic_set(&one, &s, 0.01).contains(&6));

        let all = PointCloud::new(s.joints().to_vec()).unwrap();
        assert!(static_set(&all, &s, 0.05).is_empty());
    }

    #[test]
    fn empty_cloud_sets() {
        let s = pose();
        assert!(dynamic_set(&PointCloud::empty(), &s, 0.2).is_empty());
        assert_eq!(static_set(&PointCloud::empty(), &s, 0.05).len(), 15);
    }

    #[test]
    fn dcl_and_scl_cases() {
        let mut f = [Vec3::ZERO; NUM_JOINTS];
        assert_eq!(dcl(&f, &[], 0.05), 0.0);
        assert_eq!(dcl(&f, &[3], 0.05), 0.05);
        f[3] = Vec3::new(0.08, 0.0, 0.0);
        assert_eq!(dcl(&f, &[3], 0.05), 0.0);

        let mut f = [Vec3::ZERO; NUM_JOINTS];
        assert_eq!(scl(&f, &[2]), 0.0);
        assert_eq!(scl(&f, &[]), 0.0);
        f[2] = Vec3::new(0.03, 0.0, 0.04);
        assert!((scl(&f, &[2]) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn loss_hand_cases() {
        let cfg = UtclConfig::default();
        let s = pose();
        let far = PointCloud::new(vec![Vec3::new(5.0, 5.0, 5.0)]).unwrap();
        let r = utcl_loss(&far, &s, &s, &cfg);
        assert_eq!((r.l_dyn, r.l_sta, r.l_con), (0.0, 0.0, 0.0));

        let embedded = PointCloud::new(s.joints().to_vec()).unwrap();
        let r = utcl_loss(&embedded, &s, &s, &cfg);
        assert_eq!(r.dyn_indices.len(), 15);
        assert!((r.l_con - 0.05).abs() < 1e-15);
        assert_eq!(format!("{:.6}", r.l_con), "0.050000");
    }

    #[test]
    fn mse_cases() {
        let a = pose();
        assert_eq!(mse_loss(&a, &a), 0.0);
        let b = a.map(|p| p + Vec3::new(0.1, 0.0, 0.0));
        assert!((mse_loss(&b, &a) - 0.01 / 3.0).abs() < 1e-15);
        assert_eq!(mse_loss(&a, &b), mse_loss(&b, &a));
    }

    #[test]
    fn total_cases() {
        let cfg = UtclConfig::default();
        assert!((total_loss(1.0, 2.0, &cfg) - 1.02).abs() < 1e-15);
        let zero = UtclConfig { lambda_con: 0.0, ..cfg };
        assert_eq!(total_loss(0.7, 3.0, &zero), 0.7);
    }

    #[test]
    fn gradient_single_static_joint() {
        // only joint 0 is far from the cloud; every other joint is embedded
        let prev = pose();
        let mut j = *prev.joints();
        j[0] = Vec3::new(3.0, 3.0, 3.0);
        let mut jp = j;
        let f = Vec3::new(0.03, -0.01, 0.02);
        jp[0] = j[0] - f;
        let cur = Skeleton::new(j).unwrap();
        let prev = Skeleton::new(jp).unwrap();
        let cloud = PointCloud::new(j[1..].to_vec()).unwrap();
        let cfg = UtclConfig {
            mu: 0.001,
            ..Default::default()
        };
        assert_eq!(static_set(&cloud, &cur, cfg.rho), vec![0]);
        let g = utcl_grad(&cloud, &cur, &prev, &cfg);
        let expected = f / f.norm();
        assert!((g.d_cur[0] - expected).norm() < 1e-12);
        assert!((g.d_prev[0] + expected).norm() < 1e-12);
        assert!(g.d_cur[1..].iter().all(|v| *v == Vec3::ZERO));
    }

    #[test]
    fn gradient_zero_in_flat_region() {
        let cfg = UtclConfig::default();
        let s = pose();
        let far = PointCloud::new(vec![Vec3::new(5.0, 5.0, 5.0)]).unwrap();
        let g = utcl_grad(&far, &s, &s, &cfg);
        assert!(g.d_cur.iter().chain(&g.d_prev).all(|v| *v == Vec3::ZERO));
    }

    #[test]
    fn config_validation() {
        assert!(UtclConfig::default().validate().is_ok());
        assert!(UtclConfig {
            mu: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(UtclConfig {
            lambda_con: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
