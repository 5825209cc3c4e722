//! Frame-by-frame tracking loop.
//!
//! Each frame: depth-order the detections, predict every live track, build
//! the fused cost matrix, solve the assignment, then update, coast, spawn and
//! retire tracks.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::assign::{self, SENTINEL};
use crate::assoc::{self, AssocConfig, AssocObject, CostComponents, DepthGate, FusedCost};
use crate::error::{Error, Result};
use crate::kalman::{
    self, CenterHistory, CenterSample, ControlInput, FlowTable, KfConfig, KfMatrices, KfState,
    MotionProvider, ZW,
};
use crate::model::{BBox, CameraModel, Detection, SequenceInfo, TrackRecord};
use crate::sode::{self, DepthMode, DEFAULT_LAMBDA_Q};

/// Motion model variants of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionModel {
    #[serde(rename = "2dkf")]
    TwoD,
    #[serde(rename = "3dkf")]
    ThreeD,
    #[serde(rename = "a-2dkf")]
    ActiveTwoD,
    #[serde(rename = "a-3dkf")]
    ActiveThreeD,
}

impl MotionModel {
    pub const ALL: [MotionModel; 4] = [
        MotionModel::TwoD,
        MotionModel::ThreeD,
        MotionModel::ActiveTwoD,
        MotionModel::ActiveThreeD,
    ];

    pub fn uses_depth(self) -> bool {
        matches!(self, MotionModel::ThreeD | MotionModel::ActiveThreeD)
    }

    pub fn uses_control(self) -> bool {
        matches!(self, MotionModel::ActiveTwoD | MotionModel::ActiveThreeD)
    }

    pub fn label(self) -> &'static str {
        match self {
            MotionModel::TwoD => "2DKF",
            MotionModel::ThreeD => "3DKF",
            MotionModel::ActiveTwoD => "A-2DKF",
            MotionModel::ActiveThreeD => "A-3DKF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssociationMode {
    FirstOrder,
    HighOrder,
}

impl AssociationMode {
    pub const ALL: [AssociationMode; 2] = [AssociationMode::FirstOrder, AssociationMode::HighOrder];

    pub fn label(self) -> &'static str {
        match self {
            AssociationMode::FirstOrder => "First-order",
            AssociationMode::HighOrder => "High-order",
        }
    }
}

/// Source of the per-track acceleration cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionSource {
    #[default]
    History,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau_z: f64,
    pub tau_z_pixels: Option<f64>,
    pub tau_gate: f64,
    pub s_d: f64,
    pub s_a: f64,
    pub momentum: f64,
    /// Cost gap below which one detection is treated as covering two tracks.
    pub tau_c: f64,
    pub occlusion_handling: bool,
    pub min_hits: u32,
    pub max_age: u32,
    pub min_confidence: f64,
    pub sigma: f64,
    pub p0: [f64; 9],
    pub r: [f64; 5],
    pub q_eps: f64,
    /// Pixel weight of one depth step. Derived from the image height when unset.
    pub w_z: Option<f64>,
    pub lambda_q: f64,
    pub depth_mode: DepthMode,
    pub motion: MotionModel,
    pub association: AssociationMode,
    pub motion_source: MotionSource,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let a = AssocConfig::default();
        let k = KfConfig::default();
        TrackerConfig {
            alpha: a.alpha,
            beta: a.beta,
            tau_z: a.tau_z,
            tau_z_pixels: a.tau_z_pixels,
            tau_gate: a.tau_gate,
            s_d: a.s_d,
            s_a: a.s_a,
            momentum: a.momentum,
            tau_c: 0.1,
            occlusion_handling: true,
            min_hits: 3,
            max_age: 30,
            min_confidence: 0.1,
            sigma: k.sigma,
            p0: k.p0,
            r: k.r,
            q_eps: k.q_eps,
            w_z: None,
            lambda_q: DEFAULT_LAMBDA_Q,
            depth_mode: DepthMode::Static,
            motion: MotionModel::ActiveThreeD,
            association: AssociationMode::HighOrder,
            motion_source: MotionSource::History,
        }
    }
}

impl TrackerConfig {
    /// One cell of the motion model by association ablation grid. Merged
    /// detection handling is part of the full system and comes with the
    /// active 3D filter.
    pub fn ablation(motion: MotionModel, association: AssociationMode) -> Self {
        TrackerConfig {
            motion,
            association,
            occlusion_handling: motion == MotionModel::ActiveThreeD,
            ..TrackerConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrackerConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.assoc_config()?;
        let nonneg = [
            ("tau_c", self.tau_c),
            ("min_confidence", self.min_confidence),
            ("sigma", self.sigma),
            ("q_eps", self.q_eps),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number"
                )));
            }
        }
        if self.min_hits == 0 {
            return Err(Error::Config("min_hits must be at least 1".into()));
        }
        if !(self.lambda_q > 0.0) {
            return Err(Error::Config("lambda_q must be positive".into()));
        }
        if self.w_z.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::Config("w_z must be positive".into()));
        }
        if self.p0.iter().any(|v| !(*v >= 0.0)) || self.r.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(
                "p0 must be non-negative and r positive".into(),
            ));
        }
        Ok(())
    }

    /// Association settings with the weights normalized, or collapsed to
    /// first-order terms for the first-order mode.
    pub fn assoc_config(&self) -> Result<AssocConfig> {
        let (alpha, beta) = match self.association {
            AssociationMode::FirstOrder => (1.0, 0.0),
            AssociationMode::HighOrder => (self.alpha, self.beta),
        };
        AssocConfig {
            alpha,
            beta,
            tau_z: self.tau_z,
            tau_z_pixels: self.tau_z_pixels,
            tau_gate: self.tau_gate,
            s_d: self.s_d,
            s_a: self.s_a,
            momentum: self.momentum,
        }
        .normalized()
    }

    pub fn kf_config(&self) -> KfConfig {
        KfConfig {
            sigma: self.sigma,
            p0: self.p0,
            r: self.r,
            q_eps: self.q_eps,
        }
    }

    pub fn depth_weight(&self, img_h: f64) -> f64 {
        self.w_z.unwrap_or(img_h / (self.lambda_q * 10.0))
    }

    /// Motion provider selected by `motion_source`. The flow source needs
    /// a displacement table.
    pub fn motion_provider(&self, flow: Option<FlowTable>) -> Result<MotionProvider> {
        match (self.motion_source, flow) {
            (MotionSource::History, _) => Ok(MotionProvider::DetectionHistory),
            (MotionSource::Flow, Some(table)) => Ok(MotionProvider::Flow(table)),
            (MotionSource::Flow, None) => Err(Error::Config(
                "motion_source = \"flow\" needs a motion file".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrackStatus {
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub kf: KfState,
    pub status: TrackStatus,
    /// Consecutive matched frames.
    pub hits: u32,
    /// Consecutive missed frames.
    pub misses: u32,
    pub age: u32,
    pub embedding: Option<Vec<f64>>,
    pub history: CenterHistory,
    pub last_zhat: f64,
    pub last_bbox: BBox,
    pub confidence: f64,
    /// Records produced while tentative, released on confirmation.
    pending: Vec<TrackRecord>,
}

impl Track {
    fn bbox(&self) -> BBox {
        self.kf.bbox().unwrap_or(self.last_bbox)
    }

    fn record(&self, frame: u32) -> TrackRecord {
        TrackRecord {
            id: self.id,
            frame,
            bbox: self.bbox(),
            confidence: self.confidence,
        }
    }
}

/// Component and fused matrices of one frame, kept for debugging.
#[derive(Debug, Clone)]
pub struct FrameCosts {
    pub frame: u32,
    pub track_ids: Vec<u32>,
    pub components: CostComponents,
    pub fused: FusedCost,
}

/// Wall-clock time spent in each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub frames: u64,
    pub depth_ms: f64,
    pub predict_ms: f64,
    pub cost_ms: f64,
    pub assign_ms: f64,
    pub update_ms: f64,
    pub total_ms: f64,
}

impl StageTimes {
    pub fn frames_per_second(&self) -> f64 {
        if self.total_ms > 0.0 {
            self.frames as f64 * 1000.0 / self.total_ms
        } else {
            0.0
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Smallest and second smallest admissible entries of a cost column, when
/// they are closer than `tau_c`.
pub fn detect_merged_detection(column: &[f64], tau_c: f64) -> Option<(usize, usize)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second: Option<(usize, f64)> = None;
    for (i, &c) in column.iter().enumerate() {
        if c >= SENTINEL {
            continue;
        }
        if best.is_none_or(|(_, b)| c < b) {
            second = best;
            best = Some((i, c));
        } else if second.is_none_or(|(_, s)| c < s) {
            second = Some((i, c));
        }
    }
    match (best, second) {
        (Some((i, a)), Some((j, b))) if b - a < tau_c => Some((i, j)),
        _ => None,
    }
}

pub struct Tracker {
    config: TrackerConfig,
    assoc: AssocConfig,
    camera: CameraModel,
    w_z: f64,
    matrices: KfMatrices,
    provider: MotionProvider,
    tracks: Vec<Track>,
    next_id: u32,
    last_frame: Option<u32>,
    capture_costs: bool,
    costs: Vec<FrameCosts>,
    times: StageTimes,
}

enum Outcome {
    Update(usize),
    Coast,
    Miss,
}

impl Tracker {
    pub fn new(config: TrackerConfig, camera: CameraModel) -> Result<Self> {
        config.validate()?;
        camera.validate()?;
        let assoc = config.assoc_config()?;
        let w_z = config.depth_weight(camera.img_h);
        let matrices = KfMatrices::new(&config.kf_config(), config.motion.uses_depth());
        Ok(Tracker {
            config,
            assoc,
            camera,
            w_z,
            matrices,
            provider: MotionProvider::default(),
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            capture_costs: false,
            costs: Vec::new(),
            times: StageTimes::default(),
        })
    }

    pub fn with_motion_provider(mut self, provider: MotionProvider) -> Self {
        self.provider = provider;
        self
    }

    /// Keeps every frame's cost matrices for later inspection.
    pub fn capture_costs(mut self, on: bool) -> Self {
        self.capture_costs = on;
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn take_costs(&mut self) -> Vec<FrameCosts> {
        std::mem::take(&mut self.costs)
    }

    pub fn times(&self) -> &StageTimes {
        &self.times
    }

    pub fn spawned(&self) -> u32 {
        self.next_id - 1
    }

    /// Processes the detections of `frame`. Frames may be skipped; the
    /// skipped frames are advanced without detections. Returns the records
    /// released in this call, including back-filled ones of newly confirmed
    /// tracks.
    pub fn step(&mut self, frame: u32, detections: Vec<Detection>) -> Result<Vec<TrackRecord>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::InvalidFrameOrder { last, got: frame });
            }
            for gap in last + 1..frame {
                self.step_frame(gap, Vec::new())
                    .map_err(|e| Error::at_frame(gap, e))?;
            }
        }
        self.step_frame(frame, detections)
            .map_err(|e| Error::at_frame(frame, e))
    }

    fn step_frame(&mut self, frame: u32, detections: Vec<Detection>) -> Result<Vec<TrackRecord>> {
        let start = Instant::now();
        self.last_frame = Some(frame);
        self.times.frames += 1;

        let mut dets: Vec<Detection> = detections
            .into_iter()
            .filter(|d| d.confidence >= self.config.min_confidence)
            .collect();
        sode::order_detections(
            &mut dets,
            &self.camera,
            self.config.depth_mode,
            self.config.lambda_q,
        );
        let t_depth = Instant::now();

        self.predict_all(frame)?;
        let t_predict = Instant::now();

        let use_depth = self.config.motion.uses_depth();
        let det_embeddings: Vec<Option<Vec<f64>>> = dets
            .iter()
            .map(|d| {
                d.embedding
                    .as_ref()
                    .map(|e| e.iter().map(|&v| v as f64).collect())
            })
            .collect();
        let fused = if self.tracks.is_empty() || dets.is_empty() {
            None
        } else {
            let track_objs: Vec<AssocObject> = self
                .tracks
                .iter()
                .map(|t| {
                    let b = t.bbox();
                    let (cx, cy) = b.center();
                    let zw = if use_depth { t.kf.s[ZW] } else { 0.0 };
                    AssocObject {
                        bbox: b,
                        depth: t.kf.s[ZW] / self.w_z,
                        position: Vector3::new(cx, cy, zw),
                        embedding: t.embedding.as_deref(),
                    }
                })
                .collect();
            let det_objs: Vec<AssocObject> = dets
                .iter()
                .zip(&det_embeddings)
                .map(|(d, e)| {
                    let (cx, cy) = d.bbox.center();
                    let z = d.depth_order.unwrap_or(0) as f64;
                    AssocObject {
                        bbox: d.bbox,
                        depth: z,
                        position: Vector3::new(cx, cy, if use_depth { z * self.w_z } else { 0.0 }),
                        embedding: e.as_deref(),
                    }
                })
                .collect();
            let gate = match (use_depth, self.assoc.tau_z_pixels) {
                (false, _) => DepthGate::Off,
                (true, Some(px)) => DepthGate::Below(px / self.w_z),
                (true, None) => DepthGate::Below(self.assoc.tau_z),
            };
            let components = assoc::build_components(&track_objs, &det_objs, gate)?;
            let fused = assoc::fuse(&components, &self.assoc);
            if self.capture_costs {
                self.costs.push(FrameCosts {
                    frame,
                    track_ids: self.tracks.iter().map(|t| t.id).collect(),
                    components,
                    fused: fused.clone(),
                });
            }
            Some(fused)
        };
        let t_cost = Instant::now();

        let assignment = match &fused {
            Some(f) => assign::solve(&f.cost, SENTINEL),
            None => assign::Assignment {
                matches: Vec::new(),
                unmatched_rows: (0..self.tracks.len()).collect(),
                unmatched_cols: (0..dets.len()).collect(),
            },
        };
        let t_assign = Instant::now();

        let mut outcome: Vec<Outcome> = self.tracks.iter().map(|_| Outcome::Miss).collect();
        let mut det_taken = vec![false; dets.len()];
        for &(t, d, _) in &assignment.matches {
            outcome[t] = Outcome::Update(d);
            det_taken[d] = true;
        }
        if self.config.occlusion_handling {
            if let Some(f) = &fused {
                self.apply_merges(f, &assignment.matches, &mut outcome);
            }
        }

        let mut released = Vec::new();
        for (k, out) in outcome.iter().enumerate() {
            match *out {
                Outcome::Update(d) => {
                    let det = &dets[d];
                    self.update_track(k, frame, d, det, det_embeddings[d].as_deref())?;
                    released.extend(self.confirm_and_emit(k, frame));
                }
                Outcome::Coast => {
                    if self.tracks[k].status == TrackStatus::Active {
                        released.push(self.tracks[k].record(frame));
                    }
                }
                Outcome::Miss => self.miss(k),
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for (d, det) in dets.iter().enumerate() {
            if !det_taken[d] {
                let emb = det_embeddings[d].clone().map(normalized);
                released.extend(self.spawn(frame, d, det, emb));
            }
        }
        released.sort_by_key(|r| (r.frame, r.id));

        let end = Instant::now();
        self.times.depth_ms += ms(t_depth - start);
        self.times.predict_ms += ms(t_predict - t_depth);
        self.times.cost_ms += ms(t_cost - t_predict);
        self.times.assign_ms += ms(t_assign - t_cost);
        self.times.update_ms += ms(end - t_assign);
        self.times.total_ms += ms(end - start);
        Ok(released)
    }

    fn predict_all(&mut self, frame: u32) -> Result<()> {
        let use_control = self.config.motion.uses_control();
        let use_depth = self.config.motion.uses_depth();
        for t in &mut self.tracks {
            let control = if use_control {
                let gamma = if use_depth {
                    kalman::depth_gain(
                        t.bbox().bottom(),
                        self.camera.img_h,
                        self.config.lambda_q,
                        self.w_z,
                    )
                } else {
                    0.0
                };
                self.provider.estimate_control(&t.history, frame, gamma)
            } else {
                ControlInput::zero()
            };
            t.kf = kalman::predict(&t.kf, &self.matrices, &control)?;
            t.age += 1;
        }
        Ok(())
    }

    /// Turns matches that look like one detection covering two tracks into
    /// coasting for both tracks. The detection stays consumed.
    fn apply_merges(
        &self,
        fused: &FusedCost,
        matches: &[(usize, usize, f64)],
        outcome: &mut [Outcome],
    ) {
        for &(t, d, _) in matches {
            let column: Vec<f64> = fused.cost.column(d).iter().copied().collect();
            let Some((a, b)) = detect_merged_detection(&column, self.config.tau_c) else {
                continue;
            };
            let other = if a == t {
                b
            } else if b == t {
                a
            } else {
                continue;
            };
            // The partner must have lost its own detection this frame.
            if matches!(outcome[other], Outcome::Miss) {
                outcome[t] = Outcome::Coast;
                outcome[other] = Outcome::Coast;
            }
        }
    }

    fn update_track(
        &mut self,
        k: usize,
        frame: u32,
        d: usize,
        det: &Detection,
        embedding: Option<&[f64]>,
    ) -> Result<()> {
        let z_hat = det.depth_order.unwrap_or(0) as f64;
        let z = kalman::measurement(&det.bbox, z_hat, self.w_z);
        let momentum = self.assoc.momentum;
        let t = &mut self.tracks[k];
        t.kf = kalman::update(&t.kf, &self.matrices, &z)?;
        t.hits += 1;
        t.misses = 0;
        t.last_zhat = z_hat;
        t.last_bbox = det.bbox;
        t.confidence = det.confidence;
        let (cx, cy) = det.bbox.center();
        t.history.push(CenterSample {
            frame,
            det_index: d,
            cx,
            cy,
        });
        if let Some(e) = embedding {
            let mixed = match t.embedding.take() {
                Some(mem) => mem
                    .iter()
                    .zip(e)
                    .map(|(m, v)| momentum * m + (1.0 - momentum) * v)
                    .collect(),
                None => e.to_vec(),
            };
            t.embedding = Some(normalized(mixed));
        }
        Ok(())
    }

    fn confirm_and_emit(&mut self, k: usize, frame: u32) -> Vec<TrackRecord> {
        let min_hits = self.config.min_hits;
        let t = &mut self.tracks[k];
        match t.status {
            TrackStatus::Tentative if t.hits >= min_hits => {
                t.status = TrackStatus::Active;
                let mut out = std::mem::take(&mut t.pending);
                out.push(t.record(frame));
                out
            }
            TrackStatus::Tentative => {
                let r = t.record(frame);
                t.pending.push(r);
                Vec::new()
            }
            TrackStatus::Lost | TrackStatus::Active => {
                t.status = TrackStatus::Active;
                vec![t.record(frame)]
            }
            TrackStatus::Removed => Vec::new(),
        }
    }

    fn miss(&mut self, k: usize) {
        let max_age = self.config.max_age;
        let t = &mut self.tracks[k];
        t.misses += 1;
        t.hits = 0;
        t.status = match t.status {
            TrackStatus::Tentative => TrackStatus::Removed,
            TrackStatus::Active if t.misses >= max_age => TrackStatus::Removed,
            TrackStatus::Active => TrackStatus::Lost,
            TrackStatus::Lost if t.misses >= max_age => TrackStatus::Removed,
            other => other,
        };
    }

    fn spawn(
        &mut self,
        frame: u32,
        d: usize,
        det: &Detection,
        embedding: Option<Vec<f64>>,
    ) -> Vec<TrackRecord> {
        let z_hat = det.depth_order.unwrap_or(0) as f64;
        let kf = kalman::init_track_state(&det.bbox, z_hat, self.w_z, &self.config.kf_config());
        let (cx, cy) = det.bbox.center();
        let mut history = CenterHistory::default();
        history.push(CenterSample {
            frame,
            det_index: d,
            cx,
            cy,
        });
        let track = Track {
            id: self.next_id,
            kf,
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            age: 1,
            embedding,
            history,
            last_zhat: z_hat,
            last_bbox: det.bbox,
            confidence: det.confidence,
            pending: Vec::new(),
        };
        self.next_id += 1;
        self.tracks.push(track);
        let k = self.tracks.len() - 1;
        self.confirm_and_emit(k, frame)
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Tracking output of a whole sequence.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Records sorted by frame, then id.
    pub records: Vec<TrackRecord>,
    pub times: StageTimes,
    pub costs: Vec<FrameCosts>,
}

/// Tracks every frame `1..=info.n_frames`; frames without an entry in
/// `detections` are processed as empty.
pub fn run_sequence(
    detections: &BTreeMap<u32, Vec<Detection>>,
    config: &TrackerConfig,
    camera: &CameraModel,
    info: &SequenceInfo,
) -> Result<RunOutput> {
    run_with(Tracker::new(config.clone(), *camera)?, detections, info)
}

/// Like [`run_sequence`] with a preconfigured tracker.
pub fn run_with(
    mut tracker: Tracker,
    detections: &BTreeMap<u32, Vec<Detection>>,
    info: &SequenceInfo,
) -> Result<RunOutput> {
    let last = detections
        .keys()
        .next_back()
        .copied()
        .unwrap_or(0)
        .max(info.n_frames);
    let mut records = Vec::new();
    for frame in 1..=last {
        let dets = detections.get(&frame).cloned().unwrap_or_default();
        records.extend(tracker.step(frame, dets)?);
    }
    records.sort_by_key(|r| (r.frame, r.id));
    Ok(RunOutput {
        records,
        times: tracker.times.clone(),
        costs: tracker.take_costs(),
    })
}

/// Detections grouped by frame from per-frame lists starting at frame 1.
pub fn frames_from_lists(lists: Vec<Vec<Detection>>) -> BTreeMap<u32, Vec<Detection>> {
    lists
        .into_iter()
        .enumerate()
        .map(|(k, d)| (k as u32 + 1, d))
        .collect()
}
