//! Pseudo-3D Kalman filter with an acceleration control input.
//!
//! State layout: `[cx, cy, zw, s, r, cx', cy', zw', s']` where `zw` is the
//! quantized depth order scaled into pixel-comparable units, `s` the box
//! area and `r` its aspect ratio. One step is one frame.

use std::collections::{HashMap, VecDeque};

use nalgebra::{SMatrix, SVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BBox;

pub type StateVec = SVector<f64, 9>;
pub type StateCov = SMatrix<f64, 9, 9>;
pub type Measurement = SVector<f64, 5>;
pub type Gain = SMatrix<f64, 9, 5>;

pub const CX: usize = 0;
pub const CY: usize = 1;
pub const ZW: usize = 2;
pub const SCALE: usize = 3;
pub const RATIO: usize = 4;
pub const VCX: usize = 5;
pub const VCY: usize = 6;
pub const VZW: usize = 7;
pub const VSCALE: usize = 8;

/// Innovation covariances worse conditioned than this abort the update.
pub const MAX_INNOVATION_COND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KfConfig {
    /// Process noise scale.
    pub sigma: f64,
    /// Initial covariance diagonal.
    pub p0: [f64; 9],
    /// Measurement noise diagonal for `[cx, cy, zw, s, r]`.
    pub r: [f64; 5],
    /// Diagonal regularization added to the process noise.
    pub q_eps: f64,
}

impl Default for KfConfig {
    fn default() -> Self {
        KfConfig {
            sigma: 1.0,
            p0: [
                10.0, 10.0, 10.0, 100.0, 0.01, 1000.0, 1000.0, 1000.0, 1000.0,
            ],
            r: [1.0, 1.0, 1.0, 10.0, 0.01],
            q_eps: 1e-6,
        }
    }
}

/// Model matrices shared by every track of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct KfMatrices {
    pub f: StateCov,
    pub g: SMatrix<f64, 9, 3>,
    pub q: StateCov,
    pub h: SMatrix<f64, 5, 9>,
    pub r: SMatrix<f64, 5, 5>,
    pub sigma: f64,
    pub use_depth: bool,
}

impl KfMatrices {
    /// With `use_depth = false` the depth channel is neither observed nor
    /// driven, which makes the filter equivalent to the plain 2D one.
    pub fn new(config: &KfConfig, use_depth: bool) -> Self {
        let mut f = StateCov::identity();
        f[(CX, VCX)] = 1.0;
        f[(CY, VCY)] = 1.0;
        f[(SCALE, VSCALE)] = 1.0;
        let mut g = SMatrix::<f64, 9, 3>::zeros();
        g[(CX, 0)] = 0.5;
        g[(CY, 1)] = 0.5;
        g[(VCX, 0)] = 1.0;
        g[(VCY, 1)] = 1.0;
        if use_depth {
            f[(ZW, VZW)] = 1.0;
            g[(ZW, 2)] = 0.5;
            g[(VZW, 2)] = 1.0;
        }
        let q =
            g * (config.sigma * config.sigma) * g.transpose() + StateCov::identity() * config.q_eps;
        let mut h = SMatrix::<f64, 5, 9>::zeros();
        for (row, col) in [(0, CX), (1, CY), (2, ZW), (3, SCALE), (4, RATIO)] {
            h[(row, col)] = 1.0;
        }
        let mut r_diag = config.r;
        if !use_depth {
            h[(2, ZW)] = 0.0;
            r_diag[2] = 1.0;
        }
        KfMatrices {
            f,
            g,
            q,
            h,
            r: SMatrix::from_diagonal(&SVector::from(r_diag)),
            sigma: config.sigma,
            use_depth,
        }
    }
}

/// Mean and covariance of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    pub s: StateVec,
    pub a: StateCov,
}

impl KfState {
    pub fn center(&self) -> (f64, f64) {
        (self.s[CX], self.s[CY])
    }

    /// Box described by the state, if its scale and ratio are still positive.
    pub fn bbox(&self) -> Option<BBox> {
        BBox::from_center_scale_ratio(self.s[CX], self.s[CY], self.s[SCALE], self.s[RATIO])
    }

    fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.s.iter().chain(self.a.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState(what))
        }
    }
}

/// Per-frame acceleration `[cx'', cy'', zw'']`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput(pub Vector3<f64>);

impl ControlInput {
    pub fn zero() -> Self {
        Self::default()
    }
}

fn symmetrize(a: &StateCov) -> StateCov {
    (a + a.transpose()) * 0.5
}

/// Measurement vector of a detection box at depth order `z_hat`.
pub fn measurement(bbox: &BBox, z_hat: f64, w_z: f64) -> Measurement {
    let ft = bbox.features();
    Measurement::new(ft.cx, ft.cy, z_hat * w_z, ft.s, ft.r)
}

pub fn init_track_state(bbox: &BBox, z_hat: f64, w_z: f64, config: &KfConfig) -> KfState {
    let z = measurement(bbox, z_hat, w_z);
    let mut s = StateVec::zeros();
    s.fixed_rows_mut::<5>(0).copy_from(&z);
    KfState {
        s,
        a: StateCov::from_diagonal(&SVector::from(config.p0)),
    }
}

pub fn predict(state: &KfState, m: &KfMatrices, control: &ControlInput) -> Result<KfState> {
    let out = KfState {
        s: m.f * state.s + m.g * control.0,
        a: symmetrize(&(m.f * state.a * m.f.transpose() + m.q)),
    };
    out.check_finite("predict")?;
    Ok(out)
}

fn innovation_cov(state: &KfState, m: &KfMatrices) -> SMatrix<f64, 5, 5> {
    let s = m.h * state.a * m.h.transpose() + m.r;
    (s + s.transpose()) * 0.5
}

pub fn kalman_gain(state: &KfState, m: &KfMatrices) -> Result<Gain> {
    let s = innovation_cov(state, m);
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState("innovation covariance"));
    }
    let eig = SymmetricEigen::new(s).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
        (lo.min(e), hi.max(e.abs()))
    });
    if lo <= 0.0 || hi / lo > MAX_INNOVATION_COND {
        return Err(Error::SingularInnovation(if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }));
    }
    let chol = s
        .cholesky()
        .ok_or(Error::SingularInnovation(f64::INFINITY))?;
    // K = A H^T S^-1, solved as S K^T = H A.
    let kt = chol.solve(&(m.h * state.a));
    Ok(kt.transpose())
}

/// Measurement update. The covariance uses the Joseph form, which equals
/// `(I - K H) A` for the optimal gain and keeps the result PSD in floating
/// point.
pub fn update(state: &KfState, m: &KfMatrices, z: &Measurement) -> Result<KfState> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState("measurement"));
    }
    let k = kalman_gain(state, m)?;
    let mut z = *z;
    if !m.use_depth {
        z[2] = 0.0;
    }
    let innovation = z - m.h * state.s;
    let ikh = StateCov::identity() - k * m.h;
    let out = KfState {
        s: state.s + k * innovation,
        a: symmetrize(&(ikh * state.a * ikh.transpose() + k * m.r * k.transpose())),
    };
    out.check_finite("update")?;
    Ok(out)
}

/// Rate of change of the scaled depth order with respect to the bottom row
/// under the quantization map `z_hat = lambda * img_h / v_l`.
pub fn depth_gain(v_l: f64, img_h: f64, lambda_q: f64, w_z: f64) -> f64 {
    let v = v_l.clamp(1.0, 1.5 * img_h);
    -w_z * lambda_q * img_h / (v * v)
}

/// Control from two consecutive per-frame centre displacements.
pub fn control_from_deltas(prev: (f64, f64), next: (f64, f64), gamma: f64) -> ControlInput {
    let ax = next.0 - prev.0;
    let ay = next.1 - prev.1;
    ControlInput(Vector3::new(ax, ay, gamma * ay))
}

/// A matched detection remembered by a track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterSample {
    pub frame: u32,
    pub det_index: usize,
    pub cx: f64,
    pub cy: f64,
}

/// Last few matched centres of a track.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CenterHistory(VecDeque<CenterSample>);

impl CenterHistory {
    pub const LEN: usize = 3;

    pub fn push(&mut self, sample: CenterSample) {
        if self.0.len() == Self::LEN {
            self.0.pop_front();
        }
        self.0.push_back(sample);
    }

    pub fn last(&self) -> Option<&CenterSample> {
        self.0.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CenterSample> {
        self.0.iter()
    }

    /// The two most recent displacements, when the last three samples are
    /// consecutive frames.
    pub fn deltas(&self) -> Option<((f64, f64), (f64, f64))> {
        if self.0.len() < Self::LEN {
            return None;
        }
        let (a, b, c) = (self.0[0], self.0[1], self.0[2]);
        if b.frame != a.frame + 1 || c.frame != b.frame + 1 {
            return None;
        }
        Some(((b.cx - a.cx, b.cy - a.cy), (c.cx - b.cx, c.cy - b.cy)))
    }
}

/// Per-detection displacement pairs loaded from a motion file, keyed by
/// `(frame, det_index)`: displacement from the previous frame and to the
/// next one.
pub type FlowTable = HashMap<(u32, usize), ((f64, f64), (f64, f64))>;

/// Source of the two displacements feeding the control input.
#[derive(Debug, Clone, Default)]
pub enum MotionProvider {
    /// Finite differences of the track's own matched detections.
    #[default]
    DetectionHistory,
    /// Externally computed displacements for the last matched detection.
    Flow(FlowTable),
}

impl MotionProvider {
    /// Control input for a track about to predict into `frame`. Falls back
    /// to zero whenever the motion cue is missing or stale.
    pub fn estimate_control(
        &self,
        history: &CenterHistory,
        frame: u32,
        gamma: f64,
    ) -> ControlInput {
        let Some(last) = history.last() else {
            return ControlInput::zero();
        };
        if last.frame + 1 != frame {
            return ControlInput::zero();
        }
        let deltas = match self {
            MotionProvider::DetectionHistory => history.deltas(),
            MotionProvider::Flow(table) => table.get(&(last.frame, last.det_index)).copied(),
        };
        match deltas {
            Some((prev, next)) => {
                let u = control_from_deltas(prev, next, gamma);
                if u.0.iter().all(|v| v.is_finite()) {
                    u
                } else {
                    ControlInput::zero()
                }
            }
            None => ControlInput::zero(),
        }
    }
}
