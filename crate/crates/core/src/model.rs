//! Core domain types: boxes, detections, the ground-plane camera, and
//! emitted track records.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner and `v`
/// grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Kalman-friendly parametrisation of a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFeatures {
    pub cx: f64,
    pub cy: f64,
    /// Area `w * h`.
    pub s: f64,
    /// Aspect ratio `w / h`.
    pub r: f64,
    /// Bottom edge `y + h`.
    pub v_l: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0)
            || !x.is_finite()
            || !y.is_finite()
            || !w.is_finite()
            || !h.is_finite()
        {
            return Err(Error::Config(format!(
                "box ({x}, {y}, {w}, {h}) needs finite coordinates and positive size"
            )));
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox {
            x: x1,
            y: y1,
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn features(&self) -> BoxFeatures {
        let (cx, cy) = self.center();
        BoxFeatures {
            cx,
            cy,
            s: self.area(),
            r: self.w / self.h,
            v_l: self.bottom(),
        }
    }

    /// Inverse of [`BBox::features`]: `w = sqrt(s r)`, `h = sqrt(s / r)`.
    /// Returns `None` when `s` or `r` is not strictly positive.
    pub fn from_center_scale_ratio(cx: f64, cy: f64, s: f64, r: f64) -> Option<Self> {
        if !(s > 0.0 && r > 0.0) {
            return None;
        }
        let w = (s * r).sqrt();
        let h = (s / r).sqrt();
        Some(BBox {
            x: cx - 0.5 * w,
            y: cy - 0.5 * h,
            w,
            h,
        })
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Smallest box covering both.
    pub fn union_box(&self, other: &BBox) -> BBox {
        BBox::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.right().max(other.right()),
            self.bottom().max(other.bottom()),
        )
    }
}

/// One observed box in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 1-based frame index.
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub embedding: Option<Vec<f32>>,
    /// Quantized depth order, filled in by [`crate::sode::order_detections`].
    pub depth_order: Option<u32>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, confidence: f64) -> Self {
        Detection {
            frame,
            bbox,
            confidence,
            embedding: None,
            depth_order: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f32>) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// Pinhole camera looking at a ground plane `y = 0`, with translation
/// `t = [0, y_c, 0]` and rotation `R = R_z(theta_z) R_y(theta_y) R_x(theta_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub f: f64,
    pub u_c: f64,
    pub v_c: f64,
    /// Camera height in meters.
    pub y_c: f64,
    /// Pitch.
    pub theta_x: f64,
    /// Yaw.
    #[serde(default)]
    pub theta_y: f64,
    /// Roll.
    #[serde(default)]
    pub theta_z: f64,
    pub img_w: f64,
    pub img_h: f64,
}

impl CameraModel {
    /// Fallback when no calibration is available: `f = img_h`, principal
    /// point at the image centre, unit height, no rotation. Depth ordering
    /// only depends on `v_l`, so these values only change absolute depths.
    pub fn default_for(img_w: f64, img_h: f64) -> Self {
        CameraModel {
            f: img_h,
            u_c: img_w / 2.0,
            v_c: img_h / 2.0,
            y_c: 1.0,
            theta_x: 0.0,
            theta_y: 0.0,
            theta_z: 0.0,
            img_w,
            img_h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.f,
            self.u_c,
            self.v_c,
            self.y_c,
            self.theta_x,
            self.theta_y,
            self.theta_z,
            self.img_w,
            self.img_h,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("camera parameters must be finite".into()));
        }
        if self.f <= 0.0 {
            return Err(Error::Config(format!(
                "focal length must be positive, got {}",
                self.f
            )));
        }
        if self.y_c <= 0.0 {
            return Err(Error::Config(format!(
                "camera height must be positive, got {}",
                self.y_c
            )));
        }
        if self.img_w <= 0.0 || self.img_h <= 0.0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !(0.0..=self.img_h).contains(&self.v_c) {
            return Err(Error::Config(format!(
                "principal point v_c = {} outside [0, {}]",
                self.v_c, self.img_h
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(self.theta_z, self.theta_y, self.theta_x)
    }

    /// Image row of the horizon, ignoring yaw and roll: `v_c` for a level
    /// camera, shifted by `-f tan(theta_x)` under pitch.
    pub fn horizon_v(&self) -> f64 {
        self.v_c - self.f * self.theta_x.tan()
    }
}

/// `R_z(theta_z) R_y(theta_y) R_x(theta_x)` in closed form.
pub fn rotation_matrix(theta_z: f64, theta_y: f64, theta_x: f64) -> Matrix3<f64> {
    let (sz, cz) = theta_z.sin_cos();
    let (sy, cy) = theta_y.sin_cos();
    let (sx, cx) = theta_x.sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Sequence metadata, normally read from `seqinfo.ini`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInfo {
    pub name: String,
    pub img_w: u32,
    pub img_h: u32,
    pub frame_rate: f64,
    pub n_frames: u32,
    pub embedding_dim: Option<usize>,
}

/// One emitted (or ground-truth) box of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub id: u32,
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Ground-truth row with the MOT17 evaluation flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRecord {
    pub record: TrackRecord,
    pub consider: bool,
    pub class: i32,
    pub visibility: f64,
}

/// MOT17 class label for pedestrians.
pub const PEDESTRIAN_CLASS: i32 = 1;

impl GtRecord {
    pub fn pedestrian(record: TrackRecord) -> Self {
        GtRecord {
            record,
            consider: true,
            class: PEDESTRIAN_CLASS,
            visibility: 1.0,
        }
    }

    /// Whether the row counts towards metrics.
    pub fn is_evaluated(&self) -> bool {
        self.consider && self.class == PEDESTRIAN_CLASS
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn factor_product(tz: f64, ty: f64, tx: f64) -> Matrix3<f64> {
        let rz = Matrix3::new(
            tz.cos(),
            -tz.sin(),
            0.0,
            tz.sin(),
            tz.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let ry = Matrix3::new(
            ty.cos(),
            0.0,
            ty.sin(),
            0.0,
            1.0,
            0.0,
            -ty.sin(),
            0.0,
            ty.cos(),
        );
        let rx = Matrix3::new(
            1.0,
            0.0,
            0.0,
            0.0,
            tx.cos(),
            -tx.sin(),
            0.0,
            tx.sin(),
            tx.cos(),
        );
        rz * ry * rx
    }

    #[test]
    fn rotation_zero_angles_is_identity() {
        assert_eq!(rotation_matrix(0.0, 0.0, 0.0), Matrix3::identity());
    }

    #[test]
    fn rotation_pure_pitch() {
        let r = rotation_matrix(0.0, 0.0, FRAC_PI_2);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_abs_diff_eq!(r, expected, epsilon = 1e-15);
    }

    #[test]
    fn rotation_matches_factor_product() {
        let r = rotation_matrix(0.1, 0.2, 0.3);
        let oracle = factor_product(0.1, 0.2, 0.3);
        for (a, b) in r.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn features_direct_arithmetic() {
        let f = BBox::new(0.0, 0.0, 10.0, 20.0).unwrap().features();
        assert_eq!((f.cx, f.cy, f.s, f.r, f.v_l), (5.0, 10.0, 200.0, 0.5, 20.0));
        let f = BBox::new(100.0, 50.0, 50.0, 100.0).unwrap().features();
        assert_eq!(
            (f.cx, f.cy, f.s, f.r, f.v_l),
            (125.0, 100.0, 5000.0, 0.5, 150.0)
        );
    }

    #[test]
    fn features_round_trip_exact_case() {
        let b = BBox::new(0.0, 0.0, 10.0, 20.0).unwrap();
        let f = b.features();
        let back = BBox::from_center_scale_ratio(f.cx, f.cy, f.s, f.r).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn bbox_rejects_nonpositive_size() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn iou_half_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::new(5.0, 0.0, 10.0, 10.0).unwrap();
        assert_abs_diff_eq!(a.iou(&b), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(a.iou(&BBox::new(20.0, 0.0, 1.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn camera_validation() {
        let mut cam = CameraModel::default_for(1920.0, 1080.0);
        assert!(cam.validate().is_ok());
        cam.y_c = 0.0;
        assert!(cam.validate().is_err());
        cam.y_c = 1.0;
        cam.v_c = 2000.0;
        assert!(cam.validate().is_err());
    }

    proptest! {
        #[test]
        fn rotation_is_proper_orthonormal(tz in -3.2f64..3.2, ty in -3.2f64..3.2, tx in -3.2f64..3.2) {
            let r = rotation_matrix(tz, ty, tx);
            let rrt = r * r.transpose();
            for (a, b) in rrt.iter().zip(Matrix3::<f64>::identity().iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn feature_map_round_trips(x in -500.0f64..2000.0, y in -500.0f64..2000.0,
                                   w in 0.1f64..4000.0, h in 0.1f64..4000.0) {
            let b = BBox::new(x, y, w, h).unwrap();
            let f = b.features();
            let back = BBox::from_center_scale_ratio(f.cx, f.cy, f.s, f.r).unwrap();
            prop_assert!((back.x - b.x).abs() < 1e-9);
            prop_assert!((back.y - b.y).abs() < 1e-9);
            prop_assert!((back.w - b.w).abs() < 1e-9);
            prop_assert!((back.h - b.h).abs() < 1e-9);
        }
    }
}
