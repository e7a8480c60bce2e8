//! Training-time preprocessing: sequence normalization, box filtering,
//! per-clip rigid augmentation and fixed-size resampling.
//!
//! [`preprocess_sequence`] applies the chain in the order
//! normalize → box filter → augment → resample.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{Frame, Point3, PointCloud, Sequence, Vec3};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// Half-width of the box along x and y, meters.
    pub box_xy_half: f64,
    pub box_z_min: f64,
    pub box_z_max: f64,
    pub rot_max_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Per-axis translation bound, meters.
    pub trans_max: f64,
    pub target_points: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            box_xy_half: 1.5,
            box_z_min: 0.0,
            box_z_max: 2.0,
            rot_max_deg: 10.0,
            scale_min: 0.9,
            scale_max: 1.1,
            trans_max: 0.01,
            target_points: 256,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("box_xy_half", self.box_xy_half),
            ("box_z_min", self.box_z_min),
            ("box_z_max", self.box_z_max),
            ("rot_max_deg", self.rot_max_deg),
            ("scale_min", self.scale_min),
            ("scale_max", self.scale_max),
            ("trans_max", self.trans_max),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if self.box_xy_half < 0.0 {
            return Err(Error::config("box_xy_half", "must be >= 0"));
        }
        if self.box_z_min >= self.box_z_max {
            return Err(Error::config("box_z_max", "must exceed box_z_min"));
        }
        if self.rot_max_deg < 0.0 {
            return Err(Error::config("rot_max_deg", "must be >= 0"));
        }
        if self.scale_min <= 0.0 {
            return Err(Error::config("scale_min", "must be > 0"));
        }
        if self.scale_min > self.scale_max {
            return Err(Error::config("scale_max", "must be >= scale_min"));
        }
        if self.trans_max < 0.0 {
            return Err(Error::config("trans_max", "must be >= 0"));
        }
        if self.target_points < 1 {
            return Err(Error::config("target_points", "must be >= 1"));
        }
        Ok(())
    }
}

/// Which coordinates the normalization statistics were computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizationBasis {
    Joints,
    /// Fallback for unlabeled sequences.
    Points,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub sequence: Sequence,
    /// Subtracted from every point and joint; add it back to undo.
    pub offset: Vec3,
    pub basis: NormalizationBasis,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Shifts the sequence by (median x, median y, min z) of its skeleton joints,
/// or of its points when the sequence is unlabeled.
pub fn normalize_sequence(seq: &Sequence) -> Result<Normalized> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let basis = if seq.is_labeled() {
        NormalizationBasis::Joints
    } else {
        NormalizationBasis::Points
    };
    let coords: Vec<Point3> = match basis {
        NormalizationBasis::Joints => seq
            .frames()
            .iter()
            .filter_map(|f| f.skeleton.as_ref())
            .flat_map(|s| s.joints().iter().copied())
            .collect(),
        NormalizationBasis::Points => seq
            .frames()
            .iter()
            .flat_map(|f| f.cloud.points().iter().copied())
            .collect(),
    };
    if coords.is_empty() {
        return Err(Error::Invalid("unlabeled sequence has no points to normalize".into()));
    }
    let mut xs: Vec<f64> = coords.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = coords.iter().map(|p| p.y).collect();
    let min_z = coords.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let offset = Vec3::new(median(&mut xs), median(&mut ys), min_z);

    let frames = seq
        .frames()
        .iter()
        .map(|f| Frame {
            t: f.t,
            cloud: f.cloud.map(|p| p - offset),
            skeleton: f.skeleton.map(|s| s.map(|j| j - offset)),
        })
        .collect();
    Ok(Normalized {
        sequence: seq.with_frames(frames)?,
        offset,
        basis,
    })
}

/// Keeps the points inside the (inclusive) outlier box. Order is preserved.
pub fn box_filter(cloud: &PointCloud, cfg: &PreprocessConfig) -> PointCloud {
    let h = cfg.box_xy_half;
    let kept = cloud
        .points()
        .iter()
        .copied()
        .filter(|p| p.x.abs() <= h && p.y.abs() <= h && p.z >= cfg.box_z_min && p.z <= cfg.box_z_max)
        .collect();
    PointCloud::from_points_unchecked(kept)
}

/// A similarity transform `p ↦ scale · Rz(angle) · p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidAugment {
    pub angle_rad: f64,
    pub scale: f64,
    pub translation: Vec3,
}

impl RigidAugment {
    pub const IDENTITY: RigidAugment = RigidAugment {
        angle_rad: 0.0,
        scale: 1.0,
        translation: Vec3::ZERO,
    };

    pub fn draw(cfg: &PreprocessConfig, rng: &mut SeededRng) -> Self {
        let max = cfg.rot_max_deg.to_radians();
        let angle_rad = uniform(rng, -max, max);
        let scale = uniform(rng, cfg.scale_min, cfg.scale_max);
        let t = cfg.trans_max;
        let translation = Vec3::new(uniform(rng, -t, t), uniform(rng, -t, t), uniform(rng, -t, t));
        Self {
            angle_rad,
            scale,
            translation,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let (s, c) = self.angle_rad.sin_cos();
        let rotated = Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z);
        rotated * self.scale + self.translation
    }

    pub fn apply_sequence(&self, seq: &Sequence) -> Result<Sequence> {
        let frames = seq
            .frames()
            .iter()
            .map(|f| Frame {
                t: f.t,
                cloud: f.cloud.map(|p| self.apply(p)),
                skeleton: f.skeleton.map(|s| s.map(|j| self.apply(j))),
            })
            .collect();
        seq.with_frames(frames)
    }
}

/// Uniform draw on `[lo, hi]`; returns `lo` without drawing when the range
/// is degenerate.
pub(crate) fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws one rigid transform and applies it to the whole clip.
pub fn rigid_augment(seq: &Sequence, cfg: &PreprocessConfig, rng: &mut SeededRng) -> Result<Sequence> {
    RigidAugment::draw(cfg, rng).apply_sequence(seq)
}

/// Brings a cloud to exactly `n` points: an order-preserving random subset
/// when it is larger, cyclic repetition when it is smaller.
pub fn resample_to_n(cloud: &PointCloud, n: usize, rng: &mut SeededRng) -> Result<PointCloud> {
    let m = cloud.len();
    if m == 0 {
        return Err(Error::ResampleEmpty);
    }
    if m == n {
        return Ok(cloud.clone());
    }
    if m > n {
        return Ok(cloud.select(&sorted_subset(rng, m, n)));
    }
    let pts = cloud.points();
    Ok(PointCloud::from_points_unchecked((0..n).map(|i| pts[i % m]).collect()))
}

/// Uniformly random `k`-subset of `0..m`, ascending.
pub(crate) fn sorted_subset(rng: &mut SeededRng, m: usize, k: usize) -> Vec<usize> {
    let mut idx = index::sample(rng, m, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub sequence: Sequence,
    pub offset: Vec3,
    pub basis: NormalizationBasis,
    pub augment: RigidAugment,
}

/// Full chain. `augment = false` skips the rigid transform (evaluation mode).
pub fn preprocess_sequence(
    seq: &Sequence,
    cfg: &PreprocessConfig,
    rng: &SeededRng,
    augment: bool,
) -> Result<Preprocessed> {
    cfg.validate()?;
    let Normalized {
        sequence,
        offset,
        basis,
    } = normalize_sequence(seq)?;

    let filtered: Vec<Frame> = sequence
        .frames()
        .iter()
        .map(|f| Frame {
            t: f.t,
            cloud: box_filter(&f.cloud, cfg),
            skeleton: f.skeleton,
        })
        .collect();
    let filtered = sequence.with_frames(filtered)?;

    let transform = if augment {
        RigidAugment::draw(cfg, &mut rng.fork("augment", 0))
    } else {
        RigidAugment::IDENTITY
    };
    let augmented = if augment {
        transform.apply_sequence(&filtered)?
    } else {
        filtered
    };

    let frames = augmented
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let cloud = resample_to_n(&f.cloud, cfg.target_points, &mut rng.fork("resample", i as u64))
                .map_err(|_| Error::Invalid(format!("frame t={} has no points left after box filtering", f.t)))?;
            Ok(Frame {
                t: f.t,
                cloud,
                skeleton: f.skeleton,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Preprocessed {
        sequence: augmented.with_frames(frames)?,
        offset,
        basis,
        augment: transform,
    })
}
