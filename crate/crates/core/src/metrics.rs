//! Pose error metrics in centimeters: MPJPE and Procrustes-aligned MPJPE.

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};
use crate::geom::{Point3, Sequence, Skeleton, Vec3, NUM_JOINTS};

const M_TO_CM: f64 = 100.0;

/// Variance (m²) below which a skeleton counts as collapsed to a point.
const MIN_VARIANCE: f64 = 1e-20;

/// `p ↦ scale · rotation · p + translation`, with a proper rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vec3::ZERO,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let v = self.rotation * Vector3::new(p.x, p.y, p.z) * self.scale;
        Vec3::new(v.x, v.y, v.z) + self.translation
    }

    pub fn apply_skeleton(&self, s: &Skeleton) -> Skeleton {
        s.map(|p| self.apply(p))
    }
}

fn to_na(p: Point3) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.z)
}

/// Sum of squared joint distances, m².
pub fn squared_error(pred: &Skeleton, gt: &Skeleton) -> f64 {
    pred.joints()
        .iter()
        .zip(gt.joints())
        .map(|(a, b)| (*a - *b).norm_squared())
        .sum()
}

/// Mean per-joint Euclidean distance, in cm.
pub fn mpjpe(pred: &Skeleton, gt: &Skeleton) -> f64 {
    let sum: f64 = pred.joints().iter().zip(gt.joints()).map(|(a, b)| a.distance(*b)).sum();
    sum / NUM_JOINTS as f64 * M_TO_CM
}

/// Least-squares similarity transform taking `pred` onto `gt`.
///
/// Closed form: centre both sets, take the SVD of the cross-covariance, flip
/// the smallest singular direction if that is needed to avoid a reflection,
/// and read the scale off the singular values.
pub fn procrustes_align(pred: &Skeleton, gt: &Skeleton) -> Result<SimilarityTransform> {
    let n = NUM_JOINTS as f64;
    let mu_p = pred.joints().iter().fold(Vector3::zeros(), |a, &p| a + to_na(p)) / n;
    let mu_g = gt.joints().iter().fold(Vector3::zeros(), |a, &p| a + to_na(p)) / n;

    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    let mut var_g = 0.0;
    for (p, g) in pred.joints().iter().zip(gt.joints()) {
        let pc = to_na(*p) - mu_p;
        let gc = to_na(*g) - mu_g;
        cov += gc * pc.transpose();
        var_p += pc.norm_squared();
        var_g += gc.norm_squared();
    }
    cov /= n;
    var_p /= n;
    var_g /= n;
    if var_p < MIN_VARIANCE || var_g < MIN_VARIANCE {
        return Err(Error::DegenerateSkeleton);
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or(Error::DegenerateSkeleton)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateSkeleton)?;
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        // nalgebra does not sort singular values; flip the smallest one
        let k = svd.singular_values.imin();
        sign[k] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = svd.singular_values.component_mul(&sign).sum() / var_p;
    let t = mu_g - rotation * mu_p * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation: Vec3::new(t.x, t.y, t.z),
    })
}

/// MPJPE after Procrustes alignment, in cm.
pub fn pa_mpjpe(pred: &Skeleton, gt: &Skeleton) -> Result<f64> {
    let tf = procrustes_align(pred, gt)?;
    Ok(mpjpe(&tf.apply_skeleton(pred), gt))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceMetrics {
    pub frames: usize,
    pub mpjpe_cm: f64,
    pub pa_mpjpe_cm: f64,
}

/// Per-frame metrics for two aligned labeled sequences.
pub fn frame_metrics(pred: &Sequence, gt: &Sequence) -> Result<Vec<(f64, f64)>> {
    if pred.len() != gt.len() {
        return Err(Error::Misaligned(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    pred.frames()
        .iter()
        .zip(gt.frames())
        .map(|(p, g)| {
            if p.t != g.t {
                return Err(Error::Misaligned(format!("timestep {} does not match {}", p.t, g.t)));
            }
            let (sp, sg) = (p.skeleton()?, g.skeleton()?);
            Ok((mpjpe(sp, sg), pa_mpjpe(sp, sg)?))
        })
        .collect()
}

/// Uniform average of per-frame MPJPE and PA-MPJPE.
pub fn sequence_metrics(pred: &Sequence, gt: &Sequence) -> Result<SequenceMetrics> {
    let per_frame = frame_metrics(pred, gt)?;
    if per_frame.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = per_frame.len() as f64;
    Ok(SequenceMetrics {
        frames: per_frame.len(),
        mpjpe_cm: per_frame.iter().map(|m| m.0).sum::<f64>() / n,
        pa_mpjpe_cm: per_frame.iter().map(|m| m.1).sum::<f64>() / n,
    })
}
