//! Synthetic ground-plane scenes.
//!
//! Agents walk on `y = 0` and are projected through the exact pinhole model
//! to produce detections, ground truth and the true depth order of every
//! frame. All randomness is derived from the scenario seed, frame by frame,
//! so any frame can be rendered on its own and reproduces bit for bit.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::FlowTable;
use crate::model::{BBox, CameraModel, Detection, GtRecord, SequenceInfo, TrackRecord};

/// Closest camera-frame depth at which an agent is still rendered.
const MIN_RENDER_DEPTH: f64 = 0.5;

/// Projects world point `(x, y, z)` through `K [R | t]` with
/// `t = [0, y_c, 0]`. World `y` grows downward, so heads have negative `y`.
pub fn project_point(camera: &CameraModel, x: f64, y: f64, z: f64) -> Result<(f64, f64)> {
    let p = camera_frame(camera, x, y, z);
    if p.z <= 0.0 {
        return Err(Error::BehindCamera { depth: p.z });
    }
    Ok((
        camera.u_c + camera.f * p.x / p.z,
        camera.v_c + camera.f * p.y / p.z,
    ))
}

/// World point expressed in camera coordinates.
pub fn camera_frame(camera: &CameraModel, x: f64, y: f64, z: f64) -> Vector3<f64> {
    camera.rotation() * Vector3::new(x, y, z) + Vector3::new(0.0, camera.y_c, 0.0)
}

/// One piece of an agent's ground trajectory, valid from `frame` until the
/// next segment starts. Velocities are in meters per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub frame: u32,
    pub x: f64,
    pub z: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vz: f64,
    #[serde(default)]
    pub ax: f64,
    #[serde(default)]
    pub az: f64,
}

impl Segment {
    fn position(&self, frame: u32) -> (f64, f64) {
        let dt = frame as f64 - self.frame as f64;
        (
            self.x + self.vx * dt + 0.5 * self.ax * dt * dt,
            self.z + self.vz * dt + 0.5 * self.az * dt * dt,
        )
    }
}

fn default_height() -> f64 {
    1.7
}

fn default_width() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Agent {
    pub id: u32,
    /// First and last frame (inclusive) the agent exists.
    pub frames: [u32; 2],
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub appearance_seed: u64,
    /// Per-frame perturbation of the embedding, relative to unit length.
    #[serde(default)]
    pub appearance_noise: f64,
}

impl Agent {
    /// Agent with a single quadratic segment.
    pub fn kinematic(
        id: u32,
        frames: [u32; 2],
        start: (f64, f64),
        velocity: (f64, f64),
        accel: (f64, f64),
    ) -> Self {
        Agent {
            id,
            frames,
            segments: vec![Segment {
                frame: frames[0],
                x: start.0,
                z: start.1,
                vx: velocity.0,
                vz: velocity.1,
                ax: accel.0,
                az: accel.1,
            }],
            height: default_height(),
            width: default_width(),
            appearance_seed: id as u64,
            appearance_noise: 0.0,
        }
    }

    pub fn is_alive(&self, frame: u32) -> bool {
        self.frames[0] <= frame && frame <= self.frames[1]
    }

    /// World ground position `(x, z)` at `frame`.
    pub fn position(&self, frame: u32) -> (f64, f64) {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.frame <= frame)
            .or(self.segments.first())
            .expect("agent has at least one segment");
        seg.position(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionMode {
    /// The farther agent's detection is missing.
    DropFar,
    /// Both detections are replaced by one box covering the pair.
    MergeBoxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionEvent {
    /// Inclusive frame range.
    pub frames: [u32; 2],
    pub agents: [u32; 2],
    pub mode: OcclusionMode,
}

fn default_frame_rate() -> f64 {
    30.0
}

fn default_embedding_dim() -> usize {
    512
}

fn default_separation() -> f64 {
    1.0
}

fn default_pan_period() -> f64 {
    60.0
}

fn default_name() -> String {
    "SYNTH".to_string()
}

/// A complete synthetic world. Deserializes from the TOML scenario files
/// accepted by the `synth` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub camera: CameraModel,
    pub n_frames: u32,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    /// Standard deviation of the Gaussian noise on each box edge, in pixels.
    #[serde(default)]
    pub det_noise: f64,
    /// Standard deviation of the noise on each motion displacement, in
    /// pixels.
    #[serde(default)]
    pub flow_noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Forward speed of the camera platform in meters per frame. Agent
    /// positions are world positions; the rendered depth is relative to the
    /// camera.
    #[serde(default)]
    pub ego_speed: f64,
    /// Amplitude in radians of a sinusoidal yaw oscillation of the camera,
    /// as from a hand-held or vehicle-mounted platform.
    #[serde(default)]
    pub pan_amplitude: f64,
    /// Period of the yaw oscillation in frames.
    #[serde(default = "default_pan_period")]
    pub pan_period: f64,
    /// Embedding dimension; 0 disables embeddings.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    /// 0 makes every agent look identical, 1 gives independent appearances.
    #[serde(default = "default_separation")]
    pub appearance_separation: f64,
    #[serde(default, rename = "agent")]
    pub agents: Vec<Agent>,
    #[serde(default, rename = "occlusion")]
    pub occlusions: Vec<OcclusionEvent>,
}

/// Everything observed (and true) in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub frame: u32,
    pub detections: Vec<Detection>,
    /// Camera-frame depth of the ground contact point behind each detection
    /// (the nearer agent for merged boxes).
    pub detection_depths: Vec<f64>,
    /// Agent ids behind each detection.
    pub detection_agents: Vec<Vec<u32>>,
    pub gt: Vec<GtRecord>,
    /// Detection indices sorted by ascending true depth.
    pub true_order: Vec<usize>,
    /// Image motion of the front agent of each detection: displacement of
    /// its box centre from the previous frame and to the next one. `None`
    /// at the ends of the agent's visible span.
    pub motion: Vec<Option<FlowPair>>,
}

/// Displacement pair `((dx, dy) from previous frame, (dx, dy) to next frame)`.
pub type FlowPair = ((f64, f64), (f64, f64));

/// A rendered scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub info: SequenceInfo,
    pub camera: CameraModel,
    pub frames: Vec<RenderedFrame>,
}

impl SyntheticSequence {
    pub fn gt_records(&self) -> Vec<GtRecord> {
        self.frames
            .iter()
            .flat_map(|f| f.gt.iter().copied())
            .collect()
    }

    pub fn gt_tracks(&self) -> Vec<TrackRecord> {
        self.frames
            .iter()
            .flat_map(|f| f.gt.iter().map(|g| g.record))
            .collect()
    }

    pub fn detections(&self) -> Vec<Vec<Detection>> {
        self.frames.iter().map(|f| f.detections.clone()).collect()
    }

    /// Per-detection motion keyed by `(frame, detection index)`.
    pub fn flow_table(&self) -> FlowTable {
        self.frames
            .iter()
            .flat_map(|f| {
                f.motion
                    .iter()
                    .enumerate()
                    .filter_map(move |(i, m)| m.map(|m| ((f.frame, i), m)))
            })
            .collect()
    }
}

struct Projected {
    agent: u32,
    bbox: BBox,
    depth: f64,
}

impl Scenario {
    pub fn new(name: &str, camera: CameraModel, n_frames: u32) -> Self {
        Scenario {
            name: name.to_string(),
            camera,
            n_frames,
            frame_rate: default_frame_rate(),
            det_noise: 0.0,
            flow_noise: 0.0,
            seed: 0,
            ego_speed: 0.0,
            pan_amplitude: 0.0,
            pan_period: default_pan_period(),
            embedding_dim: default_embedding_dim(),
            appearance_separation: default_separation(),
            agents: Vec::new(),
            occlusions: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.n_frames == 0 {
            return Err(Error::Config("scenario needs at least one frame".into()));
        }
        if !(0.0..=1.0).contains(&self.appearance_separation) {
            return Err(Error::Config(
                "appearance_separation must lie in [0, 1]".into(),
            ));
        }
        if self.det_noise < 0.0 || !self.det_noise.is_finite() {
            return Err(Error::Config(
                "det_noise must be a non-negative number".into(),
            ));
        }
        if !self.pan_amplitude.is_finite() || !(self.pan_period > 0.0) {
            return Err(Error::Config(
                "pan_amplitude must be finite and pan_period positive".into(),
            ));
        }
        if self.flow_noise < 0.0 || !self.flow_noise.is_finite() {
            return Err(Error::Config(
                "flow_noise must be a non-negative number".into(),
            ));
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("agent ids must be unique".into()));
        }
        for agent in &self.agents {
            if agent.id == 0 {
                return Err(Error::Config("agent ids start at 1".into()));
            }
            if agent.segments.is_empty() {
                return Err(Error::Config(format!(
                    "agent {} has no trajectory segment",
                    agent.id
                )));
            }
            if agent.frames[0] > agent.frames[1] {
                return Err(Error::Config(format!(
                    "agent {} has an empty frame range",
                    agent.id
                )));
            }
            if agent.height <= 0.0 || agent.width <= 0.0 {
                return Err(Error::Config(format!(
                    "agent {} needs positive size",
                    agent.id
                )));
            }
        }
        for ev in &self.occlusions {
            for id in ev.agents {
                if ids.binary_search(&id).is_err() {
                    return Err(Error::Config(format!(
                        "occlusion event references unknown agent {id}"
                    )));
                }
            }
            if ev.agents[0] == ev.agents[1] {
                return Err(Error::Config(
                    "occlusion event needs two distinct agents".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn info(&self) -> SequenceInfo {
        SequenceInfo {
            name: self.name.clone(),
            img_w: self.camera.img_w.round() as u32,
            img_h: self.camera.img_h.round() as u32,
            frame_rate: self.frame_rate,
            n_frames: self.n_frames,
            embedding_dim: (self.embedding_dim > 0).then_some(self.embedding_dim),
        }
    }

    fn frame_rng(&self, frame: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame as u64);
        rng
    }

    /// Camera-frame position of an agent's ground contact at `frame`.
    fn ground_point(&self, agent: &Agent, frame: u32) -> (f64, f64) {
        let (x, z) = agent.position(frame);
        (x, z - self.ego_speed * (frame as f64 - 1.0))
    }

    /// Camera pose at (possibly fractional) frame `t`.
    pub fn camera_at(&self, t: f64) -> CameraModel {
        if self.pan_amplitude == 0.0 {
            return self.camera;
        }
        let phase = std::f64::consts::TAU * (t - 1.0) / self.pan_period;
        CameraModel {
            theta_y: self.camera.theta_y + self.pan_amplitude * phase.sin(),
            ..self.camera
        }
    }

    fn project_agent(&self, agent: &Agent, frame: u32) -> Option<Projected> {
        let (x, z) = self.ground_point(agent, frame);
        let cam = self.camera_at(frame as f64);
        let depth = camera_frame(&cam, x, 0.0, z).z;
        if depth < MIN_RENDER_DEPTH {
            return None;
        }
        let (u_b, v_b) = project_point(&cam, x, 0.0, z).ok()?;
        let (_, v_t) = project_point(&cam, x, -agent.height, z).ok()?;
        let w = cam.f * agent.width / depth;
        let h = v_b - v_t;
        if h <= 0.0 {
            return None;
        }
        let bbox = BBox {
            x: u_b - 0.5 * w,
            y: v_t,
            w,
            h,
        };
        let inside = bbox.right() > 0.0
            && bbox.x < self.camera.img_w
            && bbox.bottom() > 0.0
            && bbox.y < self.camera.img_h;
        inside.then_some(Projected {
            agent: agent.id,
            bbox,
            depth,
        })
    }

    /// Unit appearance vector of an agent before per-frame noise.
    pub fn base_embedding(&self, agent: &Agent) -> Vec<f64> {
        let d = self.embedding_dim;
        let mut shared_rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_5ca1e);
        let shared = random_unit(&mut shared_rng, d);
        let mut own_rng = ChaCha8Rng::seed_from_u64(
            agent.appearance_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xa99e,
        );
        let own = random_unit(&mut own_rng, d);
        let sep = self.appearance_separation;
        let keep = (1.0 - sep * sep).sqrt();
        let mut v: Vec<f64> = shared
            .iter()
            .zip(&own)
            .map(|(s, o)| keep * s + sep * o)
            .collect();
        normalize(&mut v);
        v
    }

    fn embedding(&self, agent: &Agent, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut e = self.base_embedding(agent);
        if agent.appearance_noise > 0.0 {
            let scale = agent.appearance_noise / (e.len() as f64).sqrt();
            for v in e.iter_mut() {
                *v += scale * rng.sample::<f64, _>(StandardNormal);
            }
            normalize(&mut e);
        }
        e
    }

    fn add_noise(&self, bbox: BBox, rng: &mut ChaCha8Rng) -> BBox {
        if self.det_noise == 0.0 {
            return bbox;
        }
        let mut n = || self.det_noise * rng.sample::<f64, _>(StandardNormal);
        let (l, t, r, b) = (
            bbox.x + n(),
            bbox.y + n(),
            bbox.right() + n(),
            bbox.bottom() + n(),
        );
        let w = (r - l).max(1.0);
        let h = (b - t).max(1.0);
        BBox { x: l, y: t, w, h }
    }

    /// Renders one frame. Panics if `frame` is outside `1..=n_frames`.
    pub fn render_frame(&self, frame: u32) -> RenderedFrame {
        assert!(
            (1..=self.n_frames).contains(&frame),
            "frame {frame} out of range"
        );
        let mut rng = self.frame_rng(frame);
        let visible: Vec<Projected> = self
            .agents
            .iter()
            .filter(|a| a.is_alive(frame))
            .filter_map(|a| self.project_agent(a, frame))
            .collect();

        let gt = visible
            .iter()
            .map(|p| {
                GtRecord::pedestrian(TrackRecord {
                    id: p.agent,
                    frame,
                    bbox: p.bbox,
                    confidence: 1.0,
                })
            })
            .collect();

        // Group agents into observed boxes according to the occlusion script.
        let mut hidden = vec![false; visible.len()];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let index_of = |id: u32| visible.iter().position(|p| p.agent == id);
        for ev in self
            .occlusions
            .iter()
            .filter(|e| e.frames[0] <= frame && frame <= e.frames[1])
        {
            let (Some(a), Some(b)) = (index_of(ev.agents[0]), index_of(ev.agents[1])) else {
                continue;
            };
            if hidden[a] || hidden[b] {
                continue;
            }
            match ev.mode {
                OcclusionMode::DropFar => {
                    let far = if visible[a].depth >= visible[b].depth {
                        a
                    } else {
                        b
                    };
                    hidden[far] = true;
                }
                OcclusionMode::MergeBoxes => {
                    hidden[a] = true;
                    hidden[b] = true;
                    groups.push(vec![a, b]);
                }
            }
        }
        groups.extend((0..visible.len()).filter(|&i| !hidden[i]).map(|i| vec![i]));
        groups.shuffle(&mut rng);

        let mut detections = Vec::with_capacity(groups.len());
        let mut detection_depths = Vec::with_capacity(groups.len());
        let mut detection_agents = Vec::with_capacity(groups.len());
        for group in &groups {
            let bbox = group
                .iter()
                .map(|&i| visible[i].bbox)
                .reduce(|a, b| a.union_box(&b))
                .expect("non-empty group");
            let bbox = self.add_noise(bbox, &mut rng);
            let confidence = if group.len() > 1 { 0.6 } else { 0.9 };
            let mut det = Detection::new(frame, bbox, confidence);
            if self.embedding_dim > 0 {
                let mut e = vec![0.0; self.embedding_dim];
                for &i in group {
                    let agent = self
                        .agents
                        .iter()
                        .find(|a| a.id == visible[i].agent)
                        .expect("agent");
                    for (acc, v) in e.iter_mut().zip(self.embedding(agent, &mut rng)) {
                        *acc += v;
                    }
                }
                normalize(&mut e);
                det.embedding = Some(e.into_iter().map(|v| v as f32).collect());
            }
            detections.push(det);
            detection_depths.push(
                group
                    .iter()
                    .map(|&i| visible[i].depth)
                    .fold(f64::INFINITY, f64::min),
            );
            detection_agents.push(group.iter().map(|&i| visible[i].agent).collect());
        }

        let mut true_order: Vec<usize> = (0..detections.len()).collect();
        true_order.sort_by(|&a, &b| detection_depths[a].total_cmp(&detection_depths[b]));

        let mut motion = Vec::with_capacity(groups.len());
        for group in &groups {
            let front = group
                .iter()
                .copied()
                .min_by(|&a, &b| visible[a].depth.total_cmp(&visible[b].depth))
                .expect("non-empty group");
            let m = self
                .agent_motion(visible[front].agent, frame)
                .map(|((px, py), (nx, ny))| {
                    if self.flow_noise > 0.0 {
                        let mut n = || self.flow_noise * rng.sample::<f64, _>(StandardNormal);
                        ((px + n(), py + n()), (nx + n(), ny + n()))
                    } else {
                        ((px, py), (nx, ny))
                    }
                });
            motion.push(m);
        }

        RenderedFrame {
            frame,
            detections,
            detection_depths,
            detection_agents,
            gt,
            true_order,
            motion,
        }
    }

    /// Noiseless centre displacements of an agent around `frame`.
    fn agent_motion(&self, id: u32, frame: u32) -> Option<FlowPair> {
        if frame <= 1 || frame >= self.n_frames {
            return None;
        }
        let agent = self.agents.iter().find(|a| a.id == id)?;
        let centre = |t: u32| {
            agent
                .is_alive(t)
                .then(|| self.project_agent(agent, t))
                .flatten()
                .map(|p| p.bbox.center())
        };
        let (a, b, c) = (centre(frame - 1)?, centre(frame)?, centre(frame + 1)?);
        Some(((b.0 - a.0, b.1 - a.1), (c.0 - b.0, c.1 - b.1)))
    }

    pub fn render(&self) -> SyntheticSequence {
        SyntheticSequence {
            info: self.info(),
            camera: self.camera,
            frames: (1..=self.n_frames).map(|t| self.render_frame(t)).collect(),
        }
    }

    /// Image-space acceleration of an agent's box centre at `frame` from a
    /// central difference of the noiseless projection with step `h` frames
    /// (fractional frames evaluate the continuous trajectory).
    pub fn true_center_acceleration(
        &self,
        agent: &Agent,
        frame: f64,
        h: f64,
    ) -> Option<(f64, f64)> {
        let c = |t: f64| self.continuous_center(agent, t);
        let (x0, y0) = c(frame - h)?;
        let (x1, y1) = c(frame)?;
        let (x2, y2) = c(frame + h)?;
        Some((
            (x2 - 2.0 * x1 + x0) / (h * h),
            (y2 - 2.0 * y1 + y0) / (h * h),
        ))
    }

    fn continuous_center(&self, agent: &Agent, t: f64) -> Option<(f64, f64)> {
        let seg = agent
            .segments
            .iter()
            .rev()
            .find(|s| s.frame as f64 <= t)
            .or(agent.segments.first())?;
        let dt = t - seg.frame as f64;
        let x = seg.x + seg.vx * dt + 0.5 * seg.ax * dt * dt;
        let z = seg.z + seg.vz * dt + 0.5 * seg.az * dt * dt - self.ego_speed * (t - 1.0);
        let cam = self.camera_at(t);
        let (u, v_b) = project_point(&cam, x, 0.0, z).ok()?;
        let (_, v_t) = project_point(&cam, x, -agent.height, z).ok()?;
        Some((u, 0.5 * (v_b + v_t)))
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Scene builders used by the test suites, benches and the CLI.
pub mod presets {
    use super::*;

    /// A 1920x1080 surveillance camera at head height, slightly pitched.
    pub fn street_camera(theta_x: f64) -> CameraModel {
        CameraModel {
            f: 1100.0,
            u_c: 960.0,
            v_c: 540.0,
            y_c: 1.8,
            theta_x,
            theta_y: 0.0,
            theta_z: 0.0,
            img_w: 1920.0,
            img_h: 1080.0,
        }
    }

    /// Draws `n` depths in `[z_min, z_max]` at least `min_sep` apart.
    pub fn separated_depths(
        rng: &mut impl Rng,
        n: usize,
        z_min: f64,
        z_max: f64,
        min_sep: f64,
    ) -> Vec<f64> {
        assert!(
            (n as f64 - 1.0) * min_sep <= z_max - z_min,
            "cannot place {n} depths {min_sep} apart in [{z_min}, {z_max}]"
        );
        // Sample gaps on the slack interval, then re-insert the minimum spacing.
        let slack = z_max - z_min - (n as f64 - 1.0) * min_sep;
        let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
        u.sort_by(f64::total_cmp);
        let mut z: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, v)| z_min + v + i as f64 * min_sep)
            .collect();
        z.shuffle(rng);
        z
    }

    /// Static scene of `n_agents` pedestrians at separated depths, drifting
    /// laterally, for depth-ordering checks.
    pub fn ordering_scene(
        seed: u64,
        camera: CameraModel,
        n_agents: usize,
        depth_range: (f64, f64),
        min_sep: f64,
        n_frames: u32,
    ) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scenario = Scenario::new(&format!("ORDER-{seed:04}"), camera, n_frames);
        scenario.seed = seed;
        scenario.embedding_dim = 0;
        let depths = separated_depths(&mut rng, n_agents, depth_range.0, depth_range.1, min_sep);
        for (k, z) in depths.into_iter().enumerate() {
            // Keep the agent inside the horizontal field of view.
            let half_fov = 0.8 * camera.u_c / camera.f * z;
            let x = rng.random_range(-half_fov..half_fov);
            let vx = rng.random_range(-0.03..0.03);
            scenario.agents.push(Agent::kinematic(
                k as u32 + 1,
                [1, n_frames],
                (x, z),
                (vx, 0.0),
                (0.0, 0.0),
            ));
        }
        scenario
    }

    /// Adds single-frame occlusion events wherever the noiseless boxes of two
    /// agents overlap: a far box covered by more than `cover` of its area is
    /// hidden, and pairs overlapping with IoU above `merge_iou` are detected
    /// as one box instead.
    pub fn derive_occlusions(scenario: &mut Scenario, cover: f64, merge_iou: f64) {
        let clean = Scenario {
            occlusions: Vec::new(),
            det_noise: 0.0,
            ..scenario.clone()
        }
        .render();
        let depth_of = |frame: &RenderedFrame, id: u32| {
            frame
                .detection_agents
                .iter()
                .position(|a| a == &[id])
                .map(|i| frame.detection_depths[i])
        };
        let mut events = Vec::new();
        for f in &clean.frames {
            for (i, a) in f.gt.iter().enumerate() {
                for b in &f.gt[i + 1..] {
                    let (a, b) = (a.record, b.record);
                    let (Some(za), Some(zb)) = (depth_of(f, a.id), depth_of(f, b.id)) else {
                        continue;
                    };
                    let far = if za > zb { b.bbox } else { a.bbox };
                    if a.bbox.intersection(&b.bbox) <= cover * far.area() {
                        continue;
                    }
                    let mode = if a.bbox.iou(&b.bbox) > merge_iou {
                        OcclusionMode::MergeBoxes
                    } else {
                        OcclusionMode::DropFar
                    };
                    events.push(OcclusionEvent {
                        frames: [f.frame, f.frame],
                        agents: [a.id, b.id],
                        mode,
                    });
                }
            }
        }
        scenario.occlusions = events;
    }

    /// A crowd of look-alike pedestrians crossing each other in front of a
    /// swaying camera, with occlusions derived from the scene geometry.
    pub fn adversarial_crossing(seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc055_1e55);
        let n_frames = 150;
        let mut s = Scenario::new(&format!("ADV-{seed:02}"), street_camera(0.0), n_frames);
        s.seed = seed;
        s.embedding_dim = 64;
        s.appearance_separation = 0.05;
        s.det_noise = 1.0;
        s.flow_noise = 0.1;
        s.pan_amplitude = rng.random_range(0.02..0.05);
        s.pan_period = rng.random_range(16.0..40.0);
        let n = rng.random_range(6..=10);
        for id in 1..=n {
            let z = rng.random_range(5.0..20.0);
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let speed = rng.random_range(0.03..0.08);
            // Every agent passes the optical axis somewhere mid-sequence.
            let t_cross = rng.random_range(30.0..120.0);
            let ax = if rng.random_bool(0.3) {
                rng.random_range(-0.001..0.001)
            } else {
                0.0
            };
            let vz = rng.random_range(-0.01..0.01);
            let mut a = Agent::kinematic(
                id,
                [1, n_frames],
                (-dir * speed * t_cross, z),
                (dir * speed, vz),
                (ax, 0.0),
            );
            a.height = rng.random_range(1.5..1.9);
            a.appearance_seed = seed * 100 + id as u64;
            s.agents.push(a);
        }
        derive_occlusions(&mut s, 0.7, 0.5);
        s
    }

    /// `n` adversarial crossing scenarios with consecutive seeds.
    pub fn adversarial_suite(n: u64) -> Vec<Scenario> {
        (0..n).map(adversarial_crossing).collect()
    }

    /// Two pedestrians with indistinguishable appearance crossing paths at
    /// nearly the same depth under a swaying camera. Their boxes merge into
    /// one detection at the crossing, which coincides with the peak of the
    /// camera sway.
    pub fn crossing_merge_fixture() -> Scenario {
        let mut s = Scenario::new("CROSS-MERGE", street_camera(0.0), 60);
        s.appearance_separation = 0.0;
        s.embedding_dim = 64;
        s.det_noise = 1.0;
        s.flow_noise = 0.1;
        s.pan_amplitude = 0.06;
        s.pan_period = 24.0;
        s.agents.push(Agent::kinematic(
            1,
            [1, 60],
            (-2.1, 10.0),
            (0.07, 0.0),
            (0.0, 0.0),
        ));
        s.agents.push(Agent::kinematic(
            2,
            [1, 60],
            (2.1, 10.3),
            (-0.07, 0.0),
            (0.0, 0.0),
        ));
        s.occlusions.push(OcclusionEvent {
            frames: [31, 31],
            agents: [1, 2],
            mode: OcclusionMode::MergeBoxes,
        });
        s
    }
}
