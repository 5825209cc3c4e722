//! Subject-ordered depth estimation.
//!
//! Objects stand on a ground plane `y = 0`, so the bottom edge `v_l` of a
//! box is the projection of a ground point. Inverting the projection for
//! `y = 0` gives a continuous depth `z_bar`, and since `z_bar` falls
//! monotonically with `v_l`, a quantized order `z_hat = q(1 / v_l)` is
//! enough for association: nearer objects get smaller `z_hat`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CameraModel, Detection};

/// Denominators smaller than this mean the viewing ray is parallel to the
/// plane being intersected.
const DEGENERATE_EPS: f64 = 1e-9;

/// Default scale of the depth-order quantizer.
pub const DEFAULT_LAMBDA_Q: f64 = 10.0;

/// How the camera relates to the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthMode {
    /// Fixed camera with calibrated pitch (and optionally small yaw/roll).
    #[default]
    Static,
    /// Camera on a moving platform; extrinsics are taken in the ego frame
    /// with identity rotation.
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEstimate {
    /// Continuous depth in meters. Only meaningful when `valid`.
    pub z_bar: f64,
    /// Quantized depth order; the farthest bin when not `valid`.
    pub z_hat: u32,
    /// False when the box bottom lies on or above the horizon.
    pub valid: bool,
}

/// World height `y` of the point on image row `v` at world `(x, z)`.
pub fn y_of_v(camera: &CameraModel, v: f64, x: f64, z: f64) -> Result<f64> {
    let r = camera.rotation();
    let (r4, r5, r6) = (r[(1, 0)], r[(1, 1)], r[(1, 2)]);
    let (r7, r8, r9) = (r[(2, 0)], r[(2, 1)], r[(2, 2)]);
    let dv = v - camera.v_c;
    let den = -dv * r8 + camera.f * r5;
    if den.abs() < DEGENERATE_EPS {
        return Err(Error::DegenerateGeometry(
            "viewing ray parallel to the vertical axis",
        ));
    }
    let num = z * (dv * r9 - camera.f * r6) - camera.f * camera.y_c + x * (dv * r7 - camera.f * r4);
    Ok(num / den)
}

/// Depth of a ground point seen on row `v_l` with a static camera.
///
/// `x_hint` is the lateral world position; it only matters when yaw or roll
/// is non-zero and defaults to 0 in the tracker. A non-positive result means
/// the row is above the horizon.
pub fn estimate_depth_static(camera: &CameraModel, v_l: f64, x_hint: f64) -> Result<f64> {
    let r = camera.rotation();
    let (r4, r6) = (r[(1, 0)], r[(1, 2)]);
    let (r7, r9) = (r[(2, 0)], r[(2, 2)]);
    let dv = v_l - camera.v_c;
    let den = dv * r9 - camera.f * r6;
    if den.abs() < DEGENERATE_EPS {
        return Err(Error::DegenerateGeometry("box bottom on the horizon"));
    }
    let num = camera.f * camera.y_c + x_hint * (camera.f * r4 - dv * r7);
    Ok(num / den)
}

/// Depth in the ego frame of a moving camera, `f Y_c / (v_l - v_c)`.
/// Returns a non-positive or infinite value for rows at or above `v_c`.
pub fn estimate_depth_moving(camera: &CameraModel, v_l: f64) -> f64 {
    camera.f * camera.y_c / (v_l - camera.v_c)
}

/// `floor(lambda_q * img_h / v_l)` with `v_l` clamped to `[1, 1.5 img_h]`.
pub fn quantize_order(v_l: f64, img_h: f64, lambda_q: f64) -> u32 {
    let v = if v_l.is_nan() {
        1.0
    } else {
        v_l.clamp(1.0, 1.5 * img_h)
    };
    (lambda_q * img_h / v).floor() as u32
}

/// Bin assigned to boxes whose bottom is above the horizon.
pub fn farthest_order(img_h: f64, lambda_q: f64) -> u32 {
    (lambda_q * img_h).floor() as u32
}

/// Full estimate for one box bottom. Degenerate rows are reported as
/// invalid rather than as errors so that association stays total.
pub fn estimate(camera: &CameraModel, mode: DepthMode, v_l: f64, lambda_q: f64) -> DepthEstimate {
    let z_bar = match mode {
        DepthMode::Static => estimate_depth_static(camera, v_l, 0.0).unwrap_or(f64::NAN),
        DepthMode::Moving => estimate_depth_moving(camera, v_l),
    };
    let valid = z_bar.is_finite() && z_bar > 0.0;
    let z_hat = if valid {
        quantize_order(v_l, camera.img_h, lambda_q)
    } else {
        farthest_order(camera.img_h, lambda_q)
    };
    DepthEstimate {
        z_bar,
        z_hat,
        valid,
    }
}

/// Assigns `depth_order` to every detection and returns their indices
/// nearest first: by `z_hat` ascending, then `v_l` descending, then `x`
/// ascending.
pub fn order_detections(
    detections: &mut [Detection],
    camera: &CameraModel,
    mode: DepthMode,
    lambda_q: f64,
) -> Vec<usize> {
    for det in detections.iter_mut() {
        det.depth_order = Some(estimate(camera, mode, det.bbox.bottom(), lambda_q).z_hat);
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| compare_nearest_first(&detections[a], &detections[b]));
    order
}

fn compare_nearest_first(a: &Detection, b: &Detection) -> Ordering {
    a.depth_order
        .cmp(&b.depth_order)
        .then_with(|| b.bbox.bottom().total_cmp(&a.bbox.bottom()))
        .then_with(|| a.bbox.x.total_cmp(&b.bbox.x))
}
