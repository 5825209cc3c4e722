//! Track to detection cost matrices.
//!
//! First-order terms compare each pair directly (appearance cosine and a
//! depth-gated IoU). Second-order terms compare neighbourhoods: every object
//! is summarised by the sorted distances to the other objects on its own
//! side, and a track/detection pair is scored by how well those signatures
//! line up.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::assign::SENTINEL;
use crate::error::{Error, Result};
use crate::model::BBox;

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssocConfig {
    /// Weight of the first-order terms.
    pub alpha: f64,
    /// Weight of the second-order terms.
    pub beta: f64,
    /// Depth-order difference (in steps) at which overlap stops counting.
    pub tau_z: f64,
    /// When set, the depth gate compares scaled depth in pixels instead.
    pub tau_z_pixels: Option<f64>,
    /// Fused costs above this are forbidden.
    pub tau_gate: f64,
    /// Scale of the spatial neighbourhood distance, in pixels.
    pub s_d: f64,
    /// Scale of the appearance neighbourhood distance.
    pub s_a: f64,
    /// Momentum of the per-track appearance memory.
    pub momentum: f64,
}

impl Default for AssocConfig {
    fn default() -> Self {
        AssocConfig {
            alpha: 0.6,
            beta: 0.4,
            tau_z: 3.0,
            tau_z_pixels: None,
            tau_gate: 1.0,
            s_d: 100.0,
            s_a: 0.5,
            momentum: 0.9,
        }
    }
}

/// Named weightings of first- and second-order terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightPreset {
    /// 0.6 / 0.4.
    Balanced,
    /// 0.45 / 0.55.
    NeighbourHeavy,
    /// First-order terms only.
    FirstOrder,
}

impl WeightPreset {
    pub fn weights(self) -> (f64, f64) {
        match self {
            WeightPreset::Balanced => (0.6, 0.4),
            WeightPreset::NeighbourHeavy => (0.45, 0.55),
            WeightPreset::FirstOrder => (1.0, 0.0),
        }
    }
}

impl AssocConfig {
    /// Rescales `alpha` and `beta` to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let total = self.alpha + self.beta;
        if self.alpha < 0.0 || self.beta < 0.0 || !(total > 0.0) || !total.is_finite() {
            return Err(Error::Config(format!(
                "alpha and beta must be non-negative with a positive sum, got {} and {}",
                self.alpha, self.beta
            )));
        }
        self.alpha /= total;
        self.beta /= total;
        for (name, v) in [
            ("tau_z", self.tau_z),
            ("tau_gate", self.tau_gate),
            ("s_d", self.s_d),
            ("s_a", self.s_a),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(self)
    }
}

/// Depth condition used by the overlap term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthGate {
    /// Plain IoU.
    Off,
    /// Overlap counts only when the depth difference is below the threshold.
    Below(f64),
}

/// One side of the association problem, in a common representation.
#[derive(Debug, Clone, Copy)]
pub struct AssocObject<'a> {
    pub bbox: BBox,
    /// Depth value compared by the depth gate.
    pub depth: f64,
    /// Position used for neighbourhood distances.
    pub position: Vector3<f64>,
    pub embedding: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostComponents {
    /// Cosine similarity in `[-1, 1]`.
    pub appearance: DMatrix<f64>,
    /// Depth-gated IoU in `[0, 1]`.
    pub diou: DMatrix<f64>,
    /// Spatial neighbourhood misalignment.
    pub spatial: DMatrix<f64>,
    /// Appearance neighbourhood misalignment.
    pub appearance_order: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedCost {
    pub cost: DMatrix<f64>,
    /// True where the entry was replaced by the sentinel.
    pub gated: DMatrix<bool>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn check_embeddings<E: AsRef<[f64]>>(
    set: &[E],
    offset: usize,
    dim: &mut Option<usize>,
) -> Result<()> {
    for (i, e) in set.iter().enumerate() {
        let e = e.as_ref();
        match *dim {
            Some(d) if d != e.len() => {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: e.len(),
                })
            }
            _ => *dim = Some(e.len()),
        }
        if e.iter().map(|v| v * v).sum::<f64>().sqrt() < MIN_NORM {
            return Err(Error::ZeroVector { index: offset + i });
        }
    }
    Ok(())
}

/// Cosine similarity of every track embedding against every detection
/// embedding. Zero-vector indices count tracks first, then detections.
pub fn appearance_matrix<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    tracks: &[A],
    dets: &[B],
) -> Result<DMatrix<f64>> {
    let mut dim = None;
    check_embeddings(tracks, 0, &mut dim)?;
    check_embeddings(dets, tracks.len(), &mut dim)?;
    Ok(DMatrix::from_fn(tracks.len(), dets.len(), |i, j| {
        cosine(tracks[i].as_ref(), dets[j].as_ref())
    }))
}

pub fn diou_matrix(tracks: &[(BBox, f64)], dets: &[(BBox, f64)], gate: DepthGate) -> DMatrix<f64> {
    DMatrix::from_fn(tracks.len(), dets.len(), |i, j| {
        let (bt, zt) = tracks[i];
        let (bd, zd) = dets[j];
        let keep = match gate {
            DepthGate::Off => true,
            DepthGate::Below(tau) => (zt - zd).abs() < tau,
        };
        if keep {
            bt.iou(&bd)
        } else {
            0.0
        }
    })
}

/// Ascending distances from object `k` to every other object.
pub fn sorted_distance_vector(k: usize, positions: &[Vector3<f64>]) -> Vec<f64> {
    let mut d: Vec<f64> = positions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, p)| (positions[k] - p).norm())
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Ascending cosine distances from embedding `k` to every other embedding.
pub fn sorted_cosine_distance_vector<E: AsRef<[f64]>>(k: usize, embeddings: &[E]) -> Vec<f64> {
    let mut d: Vec<f64> = embeddings
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, e)| 1.0 - cosine(embeddings[k].as_ref(), e.as_ref()))
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

fn is_sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Anchor index in `d` for the alignment: the element nearest `target`,
/// lowest index on ties.
fn nearest_index(d: &[f64], target: f64) -> usize {
    let hi = d.partition_point(|&x| x < target);
    if hi == 0 {
        return 0;
    }
    if hi == d.len() {
        let val = d[hi - 1];
        return d.partition_point(|&x| x < val);
    }
    let left = (target - d[hi - 1]).abs();
    let right = (target - d[hi]).abs();
    if left <= right {
        let val = d[hi - 1];
        d.partition_point(|&x| x < val)
    } else {
        hi
    }
}

/// Misalignment between two ascending distance signatures.
///
/// The first element of `d_tilde` is anchored at its nearest neighbour in
/// `d`; the remaining elements are compared in lockstep from there, and
/// terms that run past the end of `d` are skipped.
pub fn align_distance(d_tilde: &[f64], d: &[f64]) -> Result<f64> {
    if !is_sorted(d_tilde) || !is_sorted(d) {
        return Err(Error::UnsortedInput);
    }
    if d_tilde.is_empty() || d.is_empty() {
        return Ok(0.0);
    }
    let j = nearest_index(d, d_tilde[0]);
    Ok(d_tilde
        .iter()
        .zip(&d[j..])
        .map(|(a, b)| (a - b).abs())
        .sum())
}

fn align_all(track_sigs: &[Vec<f64>], det_sigs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(track_sigs.len(), det_sigs.len());
    for (i, t) in track_sigs.iter().enumerate() {
        for (j, d) in det_sigs.iter().enumerate() {
            m[(i, j)] = align_distance(t, d)?;
        }
    }
    Ok(m)
}

/// Spatial and appearance neighbourhood matrices. The appearance matrix is
/// all zeros unless both sides carry embeddings.
pub fn second_order_matrices<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    track_positions: &[Vector3<f64>],
    det_positions: &[Vector3<f64>],
    track_embeddings: Option<&[A]>,
    det_embeddings: Option<&[B]>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nt = track_positions.len();
    let no = det_positions.len();
    let ts: Vec<Vec<f64>> = (0..nt)
        .map(|k| sorted_distance_vector(k, track_positions))
        .collect();
    let ds: Vec<Vec<f64>> = (0..no)
        .map(|k| sorted_distance_vector(k, det_positions))
        .collect();
    let spatial = align_all(&ts, &ds)?;
    let appearance = match (track_embeddings, det_embeddings) {
        (Some(te), Some(de)) => {
            let ta: Vec<Vec<f64>> = (0..te.len())
                .map(|k| sorted_cosine_distance_vector(k, te))
                .collect();
            let da: Vec<Vec<f64>> = (0..de.len())
                .map(|k| sorted_cosine_distance_vector(k, de))
                .collect();
            align_all(&ta, &da)?
        }
        _ => DMatrix::zeros(nt, no),
    };
    Ok((spatial, appearance))
}

/// All four component matrices for one frame. Objects without embeddings
/// contribute a neutral cosine of 0.
pub fn build_components(
    tracks: &[AssocObject],
    dets: &[AssocObject],
    gate: DepthGate,
) -> Result<CostComponents> {
    let te: Option<Vec<&[f64]>> = tracks.iter().map(|t| t.embedding).collect();
    let de: Option<Vec<&[f64]>> = dets.iter().map(|d| d.embedding).collect();
    let appearance = match (&te, &de) {
        (Some(te), Some(de)) => appearance_matrix(te, de)?,
        _ => DMatrix::zeros(tracks.len(), dets.len()),
    };
    let tb: Vec<(BBox, f64)> = tracks.iter().map(|t| (t.bbox, t.depth)).collect();
    let db: Vec<(BBox, f64)> = dets.iter().map(|d| (d.bbox, d.depth)).collect();
    let diou = diou_matrix(&tb, &db, gate);
    let tp: Vec<Vector3<f64>> = tracks.iter().map(|t| t.position).collect();
    let dp: Vec<Vector3<f64>> = dets.iter().map(|d| d.position).collect();
    let (spatial, appearance_order) =
        second_order_matrices(&tp, &dp, te.as_deref(), de.as_deref())?;
    Ok(CostComponents {
        appearance,
        diou,
        spatial,
        appearance_order,
    })
}

/// Per-entry costs of each component, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryCosts {
    pub appearance: f64,
    pub diou: f64,
    pub spatial: f64,
    pub appearance_order: f64,
}

impl EntryCosts {
    pub fn from_components(c: &CostComponents, i: usize, j: usize, cfg: &AssocConfig) -> Self {
        EntryCosts {
            appearance: (1.0 - c.appearance[(i, j)]) / 2.0,
            diou: 1.0 - c.diou[(i, j)],
            spatial: 1.0 - (-c.spatial[(i, j)] / cfg.s_d).exp(),
            appearance_order: 1.0 - (-c.appearance_order[(i, j)] / cfg.s_a).exp(),
        }
    }

    pub fn fused(&self, cfg: &AssocConfig) -> f64 {
        cfg.alpha * (self.appearance + self.diou)
            + cfg.beta * (self.appearance_order + self.spatial)
    }

    /// No overlap and clearly different appearance.
    pub fn hard_gated(&self) -> bool {
        self.diou >= 1.0 && self.appearance > 0.8
    }
}

pub fn fuse(components: &CostComponents, cfg: &AssocConfig) -> FusedCost {
    let (nt, no) = components.diou.shape();
    let mut cost = DMatrix::zeros(nt, no);
    let mut gated = DMatrix::from_element(nt, no, false);
    for i in 0..nt {
        for j in 0..no {
            let e = EntryCosts::from_components(components, i, j, cfg);
            let c = e.fused(cfg);
            if c > cfg.tau_gate || e.hard_gated() {
                cost[(i, j)] = SENTINEL;
                gated[(i, j)] = true;
            } else {
                cost[(i, j)] = c;
            }
        }
    }
    FusedCost { cost, gated }
}
