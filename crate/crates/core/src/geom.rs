//! Geometric value types shared by every stage, plus the canonical
//! 15-joint skeleton convention.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of joints in the canonical skeleton.
pub const NUM_JOINTS: usize = 15;

/// Canonical joint order. Sequence files carry this list in their header.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
];

/// Bones of the canonical skeleton as (parent, child) joint indices.
pub const BONES: [(usize, usize); 14] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (0, 4),
    (4, 5),
    (5, 6),
    (0, 7),
    (7, 8),
    (7, 9),
    (9, 10),
    (10, 11),
    (7, 12),
    (12, 13),
    (13, 14),
];

/// A 3-vector in meters. Used both for positions and for displacements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Positions and displacements share one representation.
pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis out of range: {axis}"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// One sensor frame worth of points. Order is significant: flow fields are
/// index-aligned with it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Skips the finiteness check. Callers must only pass points derived
    /// from already validated data.
    pub(crate) fn from_points_unchecked(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points at `indices`, which must be sorted ascending.
    pub(crate) fn select(&self, indices: &[usize]) -> PointCloud {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self::from_points_unchecked(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub(crate) fn map(&self, f: impl Fn(Point3) -> Point3) -> PointCloud {
        Self::from_points_unchecked(self.points.iter().map(|&p| f(p)).collect())
    }
}

/// A 15-joint pose in the canonical order of [`JOINT_NAMES`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Skeleton {
    joints: [Point3; NUM_JOINTS],
}

impl Skeleton {
    pub fn new(joints: [Point3; NUM_JOINTS]) -> Result<Self> {
        if joints.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("skeleton"));
        }
        Ok(Self { joints })
    }

    pub fn from_slice(joints: &[Point3]) -> Result<Self> {
        let joints: [Point3; NUM_JOINTS] = joints.try_into().map_err(|_| Error::JointCount(joints.len()))?;
        Self::new(joints)
    }

    pub(crate) fn from_joints_unchecked(joints: [Point3; NUM_JOINTS]) -> Self {
        Self { joints }
    }

    pub fn joints(&self) -> &[Point3; NUM_JOINTS] {
        &self.joints
    }

    pub fn joint(&self, j: usize) -> Point3 {
        self.joints[j]
    }

    pub(crate) fn map(&self, f: impl Fn(Point3) -> Point3) -> Skeleton {
        Self::from_joints_unchecked(self.joints.map(f))
    }
}

/// Per-point displacement vectors, index-aligned with a [`PointCloud`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowField {
    vectors: Vec<Vec3>,
}

impl FlowField {
    pub fn new(vectors: Vec<Vec3>) -> Result<Self> {
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow field"));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.vectors.iter().map(|v| v.norm())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: u64,
    pub cloud: PointCloud,
    pub skeleton: Option<Skeleton>,
}

impl Frame {
    pub fn new(t: u64, cloud: PointCloud, skeleton: Option<Skeleton>) -> Self {
        Self { t, cloud, skeleton }
    }

    pub fn skeleton(&self) -> Result<&Skeleton> {
        self.skeleton.as_ref().ok_or(Error::MissingSkeleton(self.t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Lidar,
    Mmwave,
    Converted,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Lidar => "lidar",
            SourceTag::Mmwave => "mmwave",
            SourceTag::Converted => "converted",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered clip of frames at a fixed frame rate.
///
/// Timesteps are strictly increasing and either every frame carries a
/// skeleton or none does.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    frames: Vec<Frame>,
    pub source: SourceTag,
    pub frame_rate_hz: f64,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>, source: SourceTag, frame_rate_hz: f64) -> Result<Self> {
        for w in frames.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::NonIncreasingTime {
                    prev: w[0].t,
                    next: w[1].t,
                });
            }
        }
        if let Some(first) = frames.first() {
            let labeled = first.skeleton.is_some();
            if frames.iter().any(|f| f.skeleton.is_some() != labeled) {
                return Err(Error::MixedLabels);
            }
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(Error::Invalid(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        Ok(Self {
            frames,
            source,
            frame_rate_hz,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.frames.first().is_some_and(|f| f.skeleton.is_some())
    }

    /// Rebuilds the sequence with per-frame replacements, keeping metadata.
    pub(crate) fn with_frames(&self, frames: Vec<Frame>) -> Result<Self> {
        Sequence::new(frames, self.source, self.frame_rate_hz)
    }
}

/// Exact nearest-neighbour distance by exhaustive scan.
pub fn nearest_point_distance(joint: Point3, cloud: &PointCloud) -> Result<f64> {
    cloud
        .points()
        .iter()
        .map(|p| joint.distance(*p))
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyCloud)
}

/// Side length used when every input coincides on all axes.
pub const MIN_CUBE_SIDE: f64 = 1e-3;

/// Eight corners of an axis-aligned cube enclosing every input point.
///
/// The bounding box of the input is grown symmetrically about its center
/// until every side equals the longest one (or [`MIN_CUBE_SIDE`] if the box
/// is a single point). Corner `k` takes the max along x if bit 0 of `k` is
/// set, along y for bit 1 and along z for bit 2.
pub fn bounding_cube<I>(points: I) -> Result<[Point3; 8]>
where
    I: IntoIterator<Item = Point3>,
{
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(Error::EmptyPointSet)?;
    let (mut lo, mut hi) = (first, first);
    for p in iter {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    let extent = hi - lo;
    let mut side = extent.x.max(extent.y).max(extent.z);
    if side <= 0.0 {
        side = MIN_CUBE_SIDE;
    }
    let center = (lo + hi) * 0.5;
    let half = side * 0.5;
    let (cmin, cmax) = (
        center - Vec3::new(half, half, half),
        center + Vec3::new(half, half, half),
    );
    Ok(std::array::from_fn(|k| {
        Vec3::new(
            if k & 1 == 0 { cmin.x } else { cmax.x },
            if k & 2 == 0 { cmin.y } else { cmax.y },
            if k & 4 == 0 { cmin.z } else { cmax.z },
        )
    }))
}

/// Arithmetic mean of the joints.
pub fn skeleton_center(skeleton: &Skeleton) -> Point3 {
    let sum = skeleton.joints().iter().fold(Vec3::ZERO, |acc, &j| acc + j);
    sum / NUM_JOINTS as f64
}
