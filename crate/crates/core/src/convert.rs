//! Closed-form LiDAR → mmWave conversion.
//!
//! Each frame runs noisy point addition (NPA), flow-based point filtering
//! (FPF), random sampling (RS) and noise injection (NI), in that order. FPF
//! needs the previous frame's skeleton to estimate motion, so the first
//! frame of a sequence skips it.
//!
//! Point flow is interpolated from an *extended skeleton*: the 15 joints plus
//! the 8 corners of a cube bounding both frames. Corners are static, which
//! anchors the flow field to zero far from the body.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geom::{
    bounding_cube, skeleton_center, FlowField, Frame, Point3, PointCloud, Sequence, Skeleton, SourceTag, Vec3,
    NUM_JOINTS,
};
use crate::preprocess::{sorted_subset, uniform};
use crate::rng::SeededRng;

/// Joints plus bounding-cube corners.
pub const NUM_EXTENDED: usize = NUM_JOINTS + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ConversionConfig {
    /// NPA noise spread around the skeleton center, meters.
    pub npa_sigma: f64,
    /// Probability that a frame receives NPA noise points.
    pub npa_prob: f64,
    pub npa_count: usize,
    /// Lower bound of the FPF flow threshold, meters.
    pub fpf_gamma: f64,
    /// Upper bound of the FPF flow threshold, meters.
    pub fpf_delta: f64,
    pub rs_rmin: f64,
    pub rs_rmax: f64,
    /// Clouds with fewer points than this skip RS.
    pub rs_min_points: usize,
    /// NI per-axis noise std, meters.
    pub ni_sigma: f64,
    pub idw_epsilon: f64,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            npa_sigma: 0.02,
            npa_prob: 0.5,
            npa_count: 32,
            fpf_gamma: 0.02,
            fpf_delta: 0.05,
            rs_rmin: 0.125,
            rs_rmax: 1.0,
            rs_min_points: 128,
            ni_sigma: 0.05,
            idw_epsilon: 1e-6,
        }
    }
}

impl ConversionConfig {
    /// Defaults with the wider 2–10 cm FPF threshold range.
    pub fn supplement_preset() -> Self {
        Self {
            fpf_delta: 0.10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("npa_sigma", self.npa_sigma),
            ("npa_prob", self.npa_prob),
            ("fpf_gamma", self.fpf_gamma),
            ("fpf_delta", self.fpf_delta),
            ("rs_rmin", self.rs_rmin),
            ("rs_rmax", self.rs_rmax),
            ("ni_sigma", self.ni_sigma),
            ("idw_epsilon", self.idw_epsilon),
        ];
        for (key, v) in fields {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.npa_prob) {
            return Err(Error::config("npa_prob", "must lie in [0, 1]"));
        }
        if self.fpf_gamma <= 0.0 {
            return Err(Error::config("fpf_gamma", "must be > 0"));
        }
        if self.fpf_gamma > self.fpf_delta {
            return Err(Error::config("fpf_delta", "must be >= fpf_gamma"));
        }
        if self.rs_rmin <= 0.0 || self.rs_rmin > 1.0 {
            return Err(Error::config("rs_rmin", "must lie in (0, 1]"));
        }
        if self.rs_rmax < self.rs_rmin || self.rs_rmax > 1.0 {
            return Err(Error::config("rs_rmax", "must lie in [rs_rmin, 1]"));
        }
        if self.npa_sigma < 0.0 {
            return Err(Error::config("npa_sigma", "must be >= 0"));
        }
        if self.ni_sigma < 0.0 {
            return Err(Error::config("ni_sigma", "must be >= 0"));
        }
        if self.idw_epsilon <= 0.0 {
            return Err(Error::config("idw_epsilon", "must be > 0"));
        }
        Ok(())
    }
}

fn gaussian3(rng: &mut SeededRng, sigma: f64) -> Vec3 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    Vec3::new(x, y, z) * sigma
}

/// Noisy point addition: with probability `npa_prob`, appends `npa_count`
/// Gaussian points around the skeleton center.
pub fn npa(cloud: &PointCloud, skeleton: &Skeleton, cfg: &ConversionConfig, rng: &mut SeededRng) -> PointCloud {
    let fire = rng.random::<f64>() < cfg.npa_prob;
    if !fire {
        return cloud.clone();
    }
    let center = skeleton_center(skeleton);
    let mut points = cloud.points().to_vec();
    points.reserve(cfg.npa_count);
    points.extend((0..cfg.npa_count).map(|_| center + gaussian3(rng, cfg.npa_sigma)));
    PointCloud::from_points_unchecked(points)
}

/// Positions and per-frame displacements of the 23 extended joints at the
/// current frame. The last 8 entries are cube corners with zero flow.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedSkeletonFlow {
    pub positions: [Point3; NUM_EXTENDED],
    pub flows: [Vec3; NUM_EXTENDED],
}

pub fn extended_skeleton_flow(prev: &Frame, cur: &Frame) -> Result<ExtendedSkeletonFlow> {
    if prev.t >= cur.t {
        return Err(Error::NonIncreasingTime {
            prev: prev.t,
            next: cur.t,
        });
    }
    let s_prev = prev.skeleton()?;
    let s_cur = cur.skeleton()?;
    let cube = bounding_cube(
        s_prev
            .joints()
            .iter()
            .chain(s_cur.joints())
            .chain(prev.cloud.points())
            .chain(cur.cloud.points())
            .copied(),
    )?;
    let positions = std::array::from_fn(|k| {
        if k < NUM_JOINTS {
            s_cur.joint(k)
        } else {
            cube[k - NUM_JOINTS]
        }
    });
    let flows = std::array::from_fn(|k| {
        if k < NUM_JOINTS {
            s_cur.joint(k) - s_prev.joint(k)
        } else {
            Vec3::ZERO
        }
    });
    Ok(ExtendedSkeletonFlow { positions, flows })
}

/// Normalized inverse-distance weights of `point` against each source.
pub fn idw_weights(point: Point3, sources: &[Point3; NUM_EXTENDED], epsilon: f64) -> [f64; NUM_EXTENDED] {
    let mut w = sources.map(|s| 1.0 / (point.distance(s) + epsilon));
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Per-point flow as the IDW-weighted combination of extended joint flows.
pub fn interpolate_point_flow(cloud: &PointCloud, ext: &ExtendedSkeletonFlow, epsilon: f64) -> FlowField {
    let vectors = cloud
        .points()
        .iter()
        .map(|&p| {
            let w = idw_weights(p, &ext.positions, epsilon);
            w.iter().zip(&ext.flows).fold(Vec3::ZERO, |acc, (&wi, &f)| acc + f * wi)
        })
        .collect();
    // finite inputs and positive weights keep every vector finite
    FlowField::new(vectors).expect("interpolated flow is finite")
}

/// One FPF threshold draw from `U[fpf_gamma, fpf_delta]`.
pub fn sample_flow_threshold(cfg: &ConversionConfig, rng: &mut SeededRng) -> f64 {
    uniform(rng, cfg.fpf_gamma, cfg.fpf_delta)
}

/// Probability that FPF keeps a point moving by `flow_norm`.
pub fn keep_probability(flow_norm: f64, nu: f64) -> f64 {
    (flow_norm / nu).min(1.0)
}

/// Indices kept by FPF, ascending. When every point is dropped from a
/// nonempty cloud, the point with the largest flow survives (lowest index on
/// ties).
pub fn fpf_indices(cloud: &PointCloud, flow: &FlowField, nu: f64, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if cloud.len() != flow.len() {
        return Err(Error::LengthMismatch {
            cloud: cloud.len(),
            flow: flow.len(),
        });
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Invalid(format!("flow threshold must be positive, got {nu}")));
    }
    let mut kept = Vec::new();
    for (i, mag) in flow.magnitudes().enumerate() {
        let u: f64 = rng.random();
        if u < keep_probability(mag, nu) {
            kept.push(i);
        }
    }
    if kept.is_empty() && !cloud.is_empty() {
        let best = flow.magnitudes().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, m)| if m > best.1 { (i, m) } else { best },
        );
        kept.push(best.0);
    }
    Ok(kept)
}

pub fn fpf(cloud: &PointCloud, flow: &FlowField, nu: f64, rng: &mut SeededRng) -> Result<PointCloud> {
    let kept = fpf_indices(cloud, flow, nu, rng)?;
    Ok(cloud.select(&kept))
}

/// RS: clouds with at least `rs_min_points` points keep a random fraction
/// `r ~ U[rs_rmin, rs_rmax]` of their points.
pub fn random_sample(cloud: &PointCloud, cfg: &ConversionConfig, rng: &mut SeededRng) -> PointCloud {
    if cloud.len() < cfg.rs_min_points {
        return cloud.clone();
    }
    let ratio = uniform(rng, cfg.rs_rmin, cfg.rs_rmax);
    random_sample_with_ratio(cloud, ratio, rng)
}

/// Keeps an order-preserving uniform subset of `max(1, floor(ratio·M))` points.
pub fn random_sample_with_ratio(cloud: &PointCloud, ratio: f64, rng: &mut SeededRng) -> PointCloud {
    let m = cloud.len();
    if m == 0 {
        return cloud.clone();
    }
    let k = ((ratio * m as f64).floor() as usize).clamp(1, m);
    if k == m {
        return cloud.clone();
    }
    cloud.select(&sorted_subset(rng, m, k))
}

/// NI: independent Gaussian jitter on every coordinate.
pub fn noise_inject(cloud: &PointCloud, cfg: &ConversionConfig, rng: &mut SeededRng) -> PointCloud {
    if cfg.ni_sigma == 0.0 {
        return cloud.clone();
    }
    let points = cloud
        .points()
        .iter()
        .map(|&p| p + gaussian3(rng, cfg.ni_sigma))
        .collect();
    PointCloud::from_points_unchecked(points)
}

/// Every intermediate of one converted frame.
#[derive(Clone, Debug)]
pub struct FrameTrace {
    pub t: u64,
    pub input: PointCloud,
    pub after_npa: PointCloud,
    /// Interpolated flow over `after_npa`; `None` on the first frame.
    pub flow: Option<FlowField>,
    pub nu: Option<f64>,
    /// Indices into `after_npa` kept by FPF.
    pub kept: Option<Vec<usize>>,
    pub after_fpf: PointCloud,
    pub after_rs: PointCloud,
    pub after_ni: PointCloud,
}

impl FrameTrace {
    pub fn stats(&self) -> StageStats {
        let (mean_flow_all, mean_flow_kept) = match (&self.flow, &self.kept) {
            (Some(flow), Some(kept)) if !flow.is_empty() => {
                let mags: Vec<f64> = flow.magnitudes().collect();
                let all = mags.iter().sum::<f64>() / mags.len() as f64;
                let kept_mean = kept.iter().map(|&i| mags[i]).sum::<f64>() / kept.len() as f64;
                (Some(all), Some(kept_mean))
            }
            _ => (None, None),
        };
        StageStats {
            t: self.t,
            input: self.input.len(),
            after_npa: self.after_npa.len(),
            after_fpf: self.after_fpf.len(),
            after_rs: self.after_rs.len(),
            after_ni: self.after_ni.len(),
            nu: self.nu,
            mean_flow_all,
            mean_flow_kept,
        }
    }
}

/// Per-frame point counts after each stage, plus FPF diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StageStats {
    pub t: u64,
    pub input: usize,
    pub after_npa: usize,
    pub after_fpf: usize,
    pub after_rs: usize,
    pub after_ni: usize,
    pub nu: Option<f64>,
    pub mean_flow_all: Option<f64>,
    pub mean_flow_kept: Option<f64>,
}

/// Converts one frame given the original (unconverted) previous frame.
///
/// The flow source cube bounds the original clouds and joints of both
/// frames; flow is then interpolated onto the NPA-augmented cloud so noise
/// points are filtered like any other point.
pub fn convert_frame(prev: Option<&Frame>, cur: &Frame, cfg: &ConversionConfig, rng: &SeededRng) -> Result<FrameTrace> {
    let skeleton = cur.skeleton().map_err(|_| Error::Unlabeled)?;
    let after_npa = npa(&cur.cloud, skeleton, cfg, &mut rng.fork("npa", 0));

    let (flow, nu, kept, after_fpf) = match prev {
        Some(prev) => {
            let ext = extended_skeleton_flow(prev, cur)?;
            let flow = interpolate_point_flow(&after_npa, &ext, cfg.idw_epsilon);
            let mut fpf_rng = rng.fork("fpf", 0);
            let nu = sample_flow_threshold(cfg, &mut fpf_rng);
            let kept = fpf_indices(&after_npa, &flow, nu, &mut fpf_rng)?;
            let out = after_npa.select(&kept);
            (Some(flow), Some(nu), Some(kept), out)
        }
        None => (None, None, None, after_npa.clone()),
    };

    let after_rs = random_sample(&after_fpf, cfg, &mut rng.fork("rs", 0));
    let after_ni = noise_inject(&after_rs, cfg, &mut rng.fork("ni", 0));
    Ok(FrameTrace {
        t: cur.t,
        input: cur.cloud.clone(),
        after_npa,
        flow,
        nu,
        kept,
        after_fpf,
        after_rs,
        after_ni,
    })
}

/// Runs [`convert_frame`] over a labeled sequence and returns every trace.
/// Each frame draws from `rng.fork("frame", t)`.
pub fn convert_sequence_traced(seq: &Sequence, cfg: &ConversionConfig, rng: &SeededRng) -> Result<Vec<FrameTrace>> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !seq.is_labeled() {
        return Err(Error::Unlabeled);
    }
    let frames = seq.frames();
    frames
        .iter()
        .enumerate()
        .map(|(i, cur)| {
            let prev = i.checked_sub(1).map(|p| &frames[p]);
            convert_frame(prev, cur, cfg, &rng.fork("frame", cur.t))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ConversionOutput {
    pub sequence: Sequence,
    pub stages: Vec<StageStats>,
}

pub fn convert_sequence_with_stats(
    seq: &Sequence,
    cfg: &ConversionConfig,
    rng: &SeededRng,
) -> Result<ConversionOutput> {
    let traces = convert_sequence_traced(seq, cfg, rng)?;
    let stages = traces.iter().map(FrameTrace::stats).collect();
    let frames = traces
        .into_iter()
        .zip(seq.frames())
        .map(|(tr, f)| Frame::new(f.t, tr.after_ni, f.skeleton))
        .collect();
    Ok(ConversionOutput {
        sequence: Sequence::new(frames, SourceTag::Converted, seq.frame_rate_hz)?,
        stages,
    })
}

pub fn convert_sequence(seq: &Sequence, cfg: &ConversionConfig, rng: &SeededRng) -> Result<Sequence> {
    convert_sequence_with_stats(seq, cfg, rng).map(|o| o.sequence)
}
