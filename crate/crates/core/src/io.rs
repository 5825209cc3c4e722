//! Readers and writers for sequence directories.
//!
//! Layout of a sequence directory:
//!
//! ```text
//! seqinfo.ini            [Sequence] name, imWidth, imHeight, frameRate, seqLength
//! camera.toml            optional calibration (f, u_c, v_c, y_c, theta_x, theta_y, theta_z)
//! det/det.txt            frame,id,left,top,w,h,conf,x,y,z
//! det/embeddings.bin     optional appearance vectors, see below
//! det/motion.txt         optional frame,det_index,dx_prev,dy_prev,dx_next,dy_next
//! gt/gt.txt              frame,id,left,top,w,h,consider,class,visibility
//! gt/depth_order.csv     optional frame,order (detection indices, nearest first)
//! ```
//!
//! `embeddings.bin` is little-endian: the magic `DPEM`, a `u8` version (1),
//! a `u32` dimension and a `u64` record count, followed by records of
//! `u32 frame`, `u32 det_index` and `dim` `f32` values. `det_index` is the
//! 0-based position of the detection among its frame's rows in `det.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::FlowTable;
use crate::model::{BBox, CameraModel, Detection, GtRecord, SequenceInfo, TrackRecord};
use crate::synth::SyntheticSequence;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"DPEM";
pub const EMBEDDING_VERSION: u8 = 1;
pub const MAX_EMBEDDING_DIM: usize = 8192;
const EMBEDDING_HEADER_LEN: u64 = 4 + 1 + 4 + 8;

pub type FrameDetections = BTreeMap<u32, Vec<Detection>>;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

struct Row<'a> {
    path: &'a Path,
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Row<'a> {
    fn new(path: &'a Path, line: usize, text: &'a str, expected: usize) -> Result<Self> {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != expected {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "expected {expected} comma-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        Ok(Row { path, line, fields })
    }

    fn f64(&self, k: usize, name: &str) -> Result<f64> {
        let v: f64 = self.fields[k].parse().map_err(|_| {
            Error::parse(
                self.path,
                self.line,
                format!("{name}: `{}` is not a number", self.fields[k]),
            )
        })?;
        if !v.is_finite() {
            return Err(Error::parse(
                self.path,
                self.line,
                format!("{name} is not finite"),
            ));
        }
        Ok(v)
    }

    fn int(&self, k: usize, name: &str) -> Result<i64> {
        let v = self.f64(k, name)?;
        if v.fract() != 0.0 {
            return Err(Error::parse(
                self.path,
                self.line,
                format!("{name} must be an integer"),
            ));
        }
        Ok(v as i64)
    }

    fn frame(&self) -> Result<u32> {
        let f = self.int(0, "frame")?;
        if f < 1 || f > u32::MAX as i64 {
            return Err(Error::parse(
                self.path,
                self.line,
                "frame must be a positive integer",
            ));
        }
        Ok(f as u32)
    }

    fn bbox(&self) -> Result<BBox> {
        let (x, y) = (self.f64(2, "bb_left")?, self.f64(3, "bb_top")?);
        let (w, h) = (self.f64(4, "bb_width")?, self.f64(5, "bb_height")?);
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::parse(
                self.path,
                self.line,
                "box width and height must be positive",
            ));
        }
        Ok(BBox { x, y, w, h })
    }
}

pub fn parse_detections_str(text: &str, path: &Path) -> Result<FrameDetections> {
    let mut out = FrameDetections::new();
    for (line, l) in data_lines(text) {
        let row = Row::new(path, line, l, 10)?;
        let frame = row.frame()?;
        let bbox = row.bbox()?;
        let conf = row.f64(6, "conf")?;
        for (k, name) in [(1, "id"), (7, "x"), (8, "y"), (9, "z")] {
            row.f64(k, name)?;
        }
        out.entry(frame)
            .or_default()
            .push(Detection::new(frame, bbox, conf));
    }
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

pub fn parse_detections(path: &Path) -> Result<FrameDetections> {
    parse_detections_str(&read_text(path)?, path)
}

pub fn format_detections(frames: &FrameDetections) -> String {
    let mut s = String::new();
    for (frame, dets) in frames {
        for d in dets {
            let b = d.bbox;
            writeln!(
                s,
                "{frame},-1,{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
                b.x, b.y, b.w, b.h, d.confidence
            )
            .unwrap();
        }
    }
    s
}

pub fn write_detections(path: &Path, frames: &FrameDetections) -> Result<()> {
    write_text(path, &format_detections(frames))
}

/// Track output in the MOT submission layout.
pub fn format_tracks(records: &[TrackRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let b = r.bbox;
        writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
            r.frame, r.id, b.x, b.y, b.w, b.h, r.confidence
        )
        .unwrap();
    }
    s
}

pub fn write_tracks(path: &Path, records: &[TrackRecord]) -> Result<()> {
    write_text(path, &format_tracks(records))
}

/// Reads a track file. An empty file is a valid empty result.
pub fn parse_tracks_str(text: &str, path: &Path) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let row = Row::new(path, line, l, 10)?;
        let id = row.int(1, "id")?;
        if id < 1 || id > u32::MAX as i64 {
            return Err(Error::parse(
                path,
                line,
                "track id must be a positive integer",
            ));
        }
        out.push(TrackRecord {
            id: id as u32,
            frame: row.frame()?,
            bbox: row.bbox()?,
            confidence: row.f64(6, "conf")?,
        });
    }
    Ok(out)
}

pub fn parse_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_tracks_str(&read_text(path)?, path)
}

pub fn parse_gt_str(text: &str, path: &Path) -> Result<Vec<GtRecord>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let row = Row::new(path, line, l, 9)?;
        let id = row.int(1, "id")?;
        if id < 0 || id > u32::MAX as i64 {
            return Err(Error::parse(
                path,
                line,
                "id must be a non-negative integer",
            ));
        }
        let consider = row.int(6, "consider")?;
        if consider != 0 && consider != 1 {
            return Err(Error::parse(path, line, "consider flag must be 0 or 1"));
        }
        let class = row.int(7, "class")?;
        out.push(GtRecord {
            record: TrackRecord {
                id: id as u32,
                frame: row.frame()?,
                bbox: row.bbox()?,
                confidence: 1.0,
            },
            consider: consider == 1,
            class: class as i32,
            visibility: row.f64(8, "visibility")?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

pub fn parse_gt(path: &Path) -> Result<Vec<GtRecord>> {
    parse_gt_str(&read_text(path)?, path)
}

pub fn format_gt(records: &[GtRecord]) -> String {
    let mut s = String::new();
    for g in records {
        let (r, b) = (g.record, g.record.bbox);
        writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},{},{},{:.2}",
            r.frame, r.id, b.x, b.y, b.w, b.h, g.consider as u8, g.class, g.visibility
        )
        .unwrap();
    }
    s
}

pub fn write_gt(path: &Path, records: &[GtRecord]) -> Result<()> {
    write_text(path, &format_gt(records))
}

pub fn parse_seqinfo_str(text: &str, path: &Path) -> Result<SequenceInfo> {
    let ini = ini::Ini::load_from_str(text).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let section = ini
        .section(Some("Sequence"))
        .ok_or_else(|| Error::MissingField {
            path: path.to_path_buf(),
            field: "[Sequence]".into(),
        })?;
    let get = |key: &str| section.get(key).map(str::trim);
    let number = |key: &str| -> Result<Option<f64>> {
        match get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .map(Some)
                .ok_or_else(|| {
                    Error::parse(path, 0, format!("{key}: `{v}` is not a positive number"))
                }),
        }
    };
    let required = |key: &str| -> Result<f64> {
        number(key)?.ok_or_else(|| Error::MissingField {
            path: path.to_path_buf(),
            field: key.to_string(),
        })
    };
    let name = get("name").map(str::to_string).unwrap_or_else(|| {
        path.parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(SequenceInfo {
        name,
        img_w: required("imWidth")? as u32,
        img_h: required("imHeight")? as u32,
        frame_rate: number("frameRate")?.unwrap_or(30.0),
        n_frames: required("seqLength")? as u32,
        embedding_dim: number("embeddingDim")?.map(|d| d as usize),
    })
}

pub fn parse_seqinfo(path: &Path) -> Result<SequenceInfo> {
    parse_seqinfo_str(&read_text(path)?, path)
}

pub fn format_seqinfo(info: &SequenceInfo) -> String {
    let mut s = format!(
        "[Sequence]\nname={}\nimDir=img1\nframeRate={}\nseqLength={}\nimWidth={}\nimHeight={}\nimExt=.jpg\n",
        info.name, info.frame_rate, info.n_frames, info.img_w, info.img_h
    );
    if let Some(d) = info.embedding_dim {
        writeln!(s, "embeddingDim={d}").unwrap();
    }
    s
}

/// One appearance vector attached to a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub frame: u32,
    pub det_index: u32,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
}

pub fn encode_embeddings(file: &EmbeddingFile) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(EMBEDDING_HEADER_LEN as usize + file.records.len() * (8 + 4 * file.dim));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.push(EMBEDDING_VERSION);
    out.extend_from_slice(&(file.dim as u32).to_le_bytes());
    out.extend_from_slice(&(file.records.len() as u64).to_le_bytes());
    for r in &file.records {
        out.extend_from_slice(&r.frame.to_le_bytes());
        out.extend_from_slice(&r.det_index.to_le_bytes());
        for v in &r.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_embeddings(
    bytes: &[u8],
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<EmbeddingFile> {
    let truncated = |offset: usize| Error::TruncatedFile {
        path: path.to_path_buf(),
        offset: offset as u64,
    };
    if bytes.len() < 4 {
        return Err(if EMBEDDING_MAGIC.starts_with(bytes) {
            truncated(bytes.len())
        } else {
            Error::BadMagic(path.to_path_buf())
        });
    }
    if &bytes[..4] != EMBEDDING_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < EMBEDDING_HEADER_LEN as usize {
        return Err(truncated(bytes.len()));
    }
    if bytes[4] != EMBEDDING_VERSION {
        return Err(Error::parse(
            path,
            0,
            format!("unsupported embedding file version {}", bytes[4]),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let dim = u32_at(5) as usize;
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    if dim == 0 || dim > MAX_EMBEDDING_DIM {
        return Err(Error::DimMismatch {
            expected: expected_dim.unwrap_or(MAX_EMBEDDING_DIM),
            actual: dim,
        });
    }
    if let Some(e) = expected_dim {
        if e != dim {
            return Err(Error::DimMismatch {
                expected: e,
                actual: dim,
            });
        }
    }
    let rec_len = 8 + 4 * dim;
    let mut records = Vec::new();
    let mut o = EMBEDDING_HEADER_LEN as usize;
    for _ in 0..count {
        if bytes.len() < o + rec_len {
            return Err(truncated(bytes.len()));
        }
        let frame = u32_at(o);
        let det_index = u32_at(o + 4);
        let vector = bytes[o + 8..o + rec_len]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(EmbeddingRecord {
            frame,
            det_index,
            vector,
        });
        o += rec_len;
    }
    if o != bytes.len() {
        return Err(Error::parse(
            path,
            0,
            format!("{} trailing bytes after the last record", bytes.len() - o),
        ));
    }
    Ok(EmbeddingFile { dim, records })
}

pub fn read_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes, path, expected_dim)
}

pub fn write_embeddings(path: &Path, file: &EmbeddingFile) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_embeddings(file)).map_err(|e| Error::io(path, e))
}

/// Attaches each embedding record to the detection it references.
pub fn attach_embeddings(
    frames: &mut FrameDetections,
    file: &EmbeddingFile,
    path: &Path,
) -> Result<()> {
    for (k, r) in file.records.iter().enumerate() {
        let det = frames
            .get_mut(&r.frame)
            .and_then(|d| d.get_mut(r.det_index as usize))
            .ok_or_else(|| {
                Error::parse(
                    path,
                    0,
                    format!(
                        "record {k} references missing detection {} of frame {}",
                        r.det_index, r.frame
                    ),
                )
            })?;
        det.embedding = Some(r.vector.clone());
    }
    Ok(())
}

/// Collects the embeddings carried by detections, in file order.
pub fn collect_embeddings(frames: &FrameDetections) -> Option<EmbeddingFile> {
    let mut dim = None;
    let mut records = Vec::new();
    for (&frame, dets) in frames {
        for (k, d) in dets.iter().enumerate() {
            if let Some(e) = &d.embedding {
                dim.get_or_insert(e.len());
                records.push(EmbeddingRecord {
                    frame,
                    det_index: k as u32,
                    vector: e.clone(),
                });
            }
        }
    }
    dim.map(|dim| EmbeddingFile { dim, records })
}

/// Calibration file contents; absent keys fall back to the default camera.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub f: Option<f64>,
    pub u_c: Option<f64>,
    pub v_c: Option<f64>,
    pub y_c: Option<f64>,
    pub theta_x: Option<f64>,
    pub theta_y: Option<f64>,
    pub theta_z: Option<f64>,
}

impl CameraFile {
    pub fn from_camera(c: &CameraModel) -> Self {
        CameraFile {
            f: Some(c.f),
            u_c: Some(c.u_c),
            v_c: Some(c.v_c),
            y_c: Some(c.y_c),
            theta_x: Some(c.theta_x),
            theta_y: Some(c.theta_y),
            theta_z: Some(c.theta_z),
        }
    }

    pub fn camera(&self, img_w: f64, img_h: f64) -> CameraModel {
        let d = CameraModel::default_for(img_w, img_h);
        CameraModel {
            f: self.f.unwrap_or(d.f),
            u_c: self.u_c.unwrap_or(d.u_c),
            v_c: self.v_c.unwrap_or(d.v_c),
            y_c: self.y_c.unwrap_or(d.y_c),
            theta_x: self.theta_x.unwrap_or(d.theta_x),
            theta_y: self.theta_y.unwrap_or(d.theta_y),
            theta_z: self.theta_z.unwrap_or(d.theta_z),
            img_w,
            img_h,
        }
    }
}

/// Reads the calibration for a sequence; a missing file yields the default
/// camera for the image size.
pub fn read_camera(path: &Path, info: &SequenceInfo) -> Result<CameraModel> {
    let (w, h) = (info.img_w as f64, info.img_h as f64);
    let file = if path.exists() {
        let text = read_text(path)?;
        toml::from_str::<CameraFile>(&text).map_err(|e| Error::parse(path, 0, e.to_string()))?
    } else {
        CameraFile::default()
    };
    let cam = file.camera(w, h);
    cam.validate()?;
    Ok(cam)
}

pub fn write_camera(path: &Path, camera: &CameraModel) -> Result<()> {
    write_text(
        path,
        &toml::to_string(&CameraFile::from_camera(camera)).expect("camera serializes"),
    )
}

pub fn format_truth_order(orders: &BTreeMap<u32, Vec<usize>>) -> String {
    let mut s = String::from("frame,order\n");
    for (frame, order) in orders {
        let joined: Vec<String> = order.iter().map(|i| i.to_string()).collect();
        writeln!(s, "{frame},{}", joined.join(" ")).unwrap();
    }
    s
}

pub fn parse_truth_order_str(text: &str, path: &Path) -> Result<BTreeMap<u32, Vec<usize>>> {
    let mut out = BTreeMap::new();
    for (line, l) in data_lines(text) {
        if l == "frame,order" {
            continue;
        }
        let (frame, order) = l
            .split_once(',')
            .ok_or_else(|| Error::parse(path, line, "expected `frame,order`"))?;
        let frame: u32 = frame
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad frame `{frame}`")))?;
        let order = order
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(path, line, format!("bad index `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if out.insert(frame, order).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("frame {frame} appears twice"),
            ));
        }
    }
    Ok(out)
}

pub fn parse_truth_order(path: &Path) -> Result<BTreeMap<u32, Vec<usize>>> {
    parse_truth_order_str(&read_text(path)?, path)
}

pub fn parse_flow_str(text: &str, path: &Path) -> Result<FlowTable> {
    let mut table = FlowTable::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let row = Row { path, line, fields };
        let frame = row.frame()?;
        let idx = row.int(1, "det_index")?;
        if idx < 0 {
            return Err(Error::parse(path, line, "det_index must be non-negative"));
        }
        let prev = (row.f64(2, "dx_prev")?, row.f64(3, "dy_prev")?);
        let next = (row.f64(4, "dx_next")?, row.f64(5, "dy_next")?);
        table.insert((frame, idx as usize), (prev, next));
    }
    Ok(table)
}

pub fn parse_flow(path: &Path) -> Result<FlowTable> {
    parse_flow_str(&read_text(path)?, path)
}

/// Motion rows sorted by frame and detection index.
pub fn format_flow(table: &FlowTable) -> String {
    let mut keys: Vec<&(u32, usize)> = table.keys().collect();
    keys.sort_unstable();
    let mut out = String::new();
    for key in keys {
        let ((px, py), (nx, ny)) = table[key];
        let _ = writeln!(out, "{},{},{px:.4},{py:.4},{nx:.4},{ny:.4}", key.0, key.1);
    }
    out
}

/// Paths of the files inside a sequence directory.
#[derive(Debug, Clone)]
pub struct SequencePaths {
    pub root: PathBuf,
}

impl SequencePaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SequencePaths { root: root.into() }
    }
    pub fn seqinfo(&self) -> PathBuf {
        self.root.join("seqinfo.ini")
    }
    pub fn camera(&self) -> PathBuf {
        self.root.join("camera.toml")
    }
    pub fn detections(&self) -> PathBuf {
        self.root.join("det").join("det.txt")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("det").join("embeddings.bin")
    }
    pub fn motion(&self) -> PathBuf {
        self.root.join("det").join("motion.txt")
    }
    pub fn gt(&self) -> PathBuf {
        self.root.join("gt").join("gt.txt")
    }
    pub fn truth_order(&self) -> PathBuf {
        self.root.join("gt").join("depth_order.csv")
    }
}

/// A sequence directory loaded into memory.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub info: SequenceInfo,
    pub camera: CameraModel,
    pub detections: FrameDetections,
    pub flow: Option<FlowTable>,
}

/// Loads seqinfo, calibration, detections and (when present) embeddings and
/// motion.
pub fn load_sequence(dir: &Path) -> Result<SequenceData> {
    let paths = SequencePaths::new(dir);
    let info = parse_seqinfo(&paths.seqinfo())?;
    let camera = read_camera(&paths.camera(), &info)?;
    let mut detections = parse_detections(&paths.detections())?;
    let emb_path = paths.embeddings();
    if emb_path.exists() {
        let file = read_embeddings(&emb_path, info.embedding_dim)?;
        attach_embeddings(&mut detections, &file, &emb_path)?;
    }
    let motion = paths.motion();
    let flow = if motion.exists() {
        Some(parse_flow(&motion)?)
    } else {
        None
    };
    Ok(SequenceData {
        info,
        camera,
        detections,
        flow,
    })
}

/// Writes a rendered scenario as a complete sequence directory.
pub fn write_synthetic_sequence(dir: &Path, seq: &SyntheticSequence) -> Result<()> {
    let paths = SequencePaths::new(dir);
    write_text(&paths.seqinfo(), &format_seqinfo(&seq.info))?;
    write_camera(&paths.camera(), &seq.camera)?;
    let frames: FrameDetections = seq
        .frames
        .iter()
        .map(|f| (f.frame, f.detections.clone()))
        .collect();
    write_detections(&paths.detections(), &frames)?;
    if let Some(file) = collect_embeddings(&frames) {
        write_embeddings(&paths.embeddings(), &file)?;
    }
    let flow = seq.flow_table();
    if !flow.is_empty() {
        write_text(&paths.motion(), &format_flow(&flow))?;
    }
    write_gt(&paths.gt(), &seq.gt_records())?;
    let orders: BTreeMap<u32, Vec<usize>> = seq
        .frames
        .iter()
        .map(|f| (f.frame, f.true_order.clone()))
        .collect();
    write_text(&paths.truth_order(), &format_truth_order(&orders))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> PathBuf {
        PathBuf::from("det.txt")
    }

    #[test]
    fn detection_row_maps_fields() {
        let f = parse_detections_str("1,-1,100.0,50.0,20.0,40.0,0.9,-1,-1,-1\n", &p()).unwrap();
        let d = &f[&1][0];
        assert_eq!(d.bbox, BBox::new(100.0, 50.0, 20.0, 40.0).unwrap());
        assert_eq!(d.confidence, 0.9);
    }

    #[test]
    fn bad_rows_name_their_line() {
        let text = "1,-1,1,1,5,5,0.9,-1,-1,-1\n2,-1,1,1,0,5,0.9,-1,-1,-1\n";
        match parse_detections_str(text, &p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        for bad in [
            "1,-1,1,1,5,5,nan,-1,-1,-1",
            "1,-1,1,1,5,5,0.9,-1,-1",
            "0,-1,1,1,5,5,0.9,-1,-1,-1",
            "1.5,-1,1,1,5,5,0.9,-1,-1,-1",
            "1,-1,x,1,5,5,0.9,-1,-1,-1",
        ] {
            assert!(
                matches!(
                    parse_detections_str(bad, &p()),
                    Err(Error::Parse { line: 1, .. })
                ),
                "{bad}"
            );
        }
        assert!(matches!(
            parse_detections_str("\n", &p()),
            Err(Error::EmptyFile(_))
        ));
    }

    #[test]
    fn detections_keep_file_order_and_round_trip() {
        let text = "1,-1,5.00,6.00,7.00,8.00,0.90,-1,-1,-1\n1,-1,1.00,2.00,3.00,4.00,0.50,-1,-1,-1\n3,-1,10.25,20.50,30.75,40.00,1.00,-1,-1,-1\n";
        let f = parse_detections_str(text, &p()).unwrap();
        assert_eq!(f[&1][0].bbox.x, 5.0);
        assert_eq!(format_detections(&f), text);
    }

    #[test]
    fn gt_rows_and_flags() {
        let g = parse_gt_str(
            "1,1,100,50,20,40,1,1,1.0\n2,1,100,50,20,40,0,1,0.25\n",
            Path::new("gt.txt"),
        )
        .unwrap();
        assert!(g[0].is_evaluated());
        assert!(!g[1].is_evaluated());
        assert_eq!(g[1].visibility, 0.25);
        let again = parse_gt_str(&format_gt(&g), Path::new("gt.txt")).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn tracks_round_trip() {
        let recs = vec![TrackRecord {
            id: 3,
            frame: 2,
            bbox: BBox::new(1.5, 2.25, 10.0, 20.0).unwrap(),
            confidence: 0.75,
        }];
        let text = format_tracks(&recs);
        assert_eq!(text, "2,3,1.50,2.25,10.00,20.00,0.75,-1,-1,-1\n");
        assert_eq!(parse_tracks_str(&text, &p()).unwrap(), recs);
        assert!(parse_tracks_str("", &p()).unwrap().is_empty());
    }

    #[test]
    fn seqinfo_fields() {
        let text = "[Sequence]\nname=MOT17-02\nimDir=img1\nframeRate=30\nseqLength=600\nimWidth=1920\nimHeight=1080\nimExt=.jpg\nfoo=bar\n";
        let info = parse_seqinfo_str(text, Path::new("seqinfo.ini")).unwrap();
        assert_eq!(
            (info.img_w, info.img_h, info.n_frames, info.frame_rate),
            (1920, 1080, 600, 30.0)
        );
        assert_eq!(info.name, "MOT17-02");
        let missing = text.replace("imHeight=1080\n", "");
        match parse_seqinfo_str(&missing, Path::new("seqinfo.ini")) {
            Err(Error::MissingField { field, .. }) => assert_eq!(field, "imHeight"),
            other => panic!("{other:?}"),
        }
        let back = parse_seqinfo_str(&format_seqinfo(&info), Path::new("seqinfo.ini")).unwrap();
        assert_eq!(back, info);
    }

    fn random_file(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> EmbeddingFile {
        EmbeddingFile {
            dim,
            records: (0..n)
                .map(|k| EmbeddingRecord {
                    frame: 1 + k as u32 / 7,
                    det_index: k as u32 % 7,
                    vector: (0..dim)
                        .map(|_| f32::from_bits(rng.random::<u32>() & 0xbf7f_ffff))
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn embeddings_round_trip_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let file = random_file(&mut rng, 16, 1000);
        let back = decode_embeddings(&encode_embeddings(&file), &p(), Some(16)).unwrap();
        assert_eq!(back.records.len(), 1000);
        for (a, b) in file.records.iter().zip(&back.records) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.vector), bits(&b.vector));
        }
    }

    #[test]
    fn embedding_header_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bytes = encode_embeddings(&random_file(&mut rng, 4, 3));
        let cut = bytes.len() - 5;
        match decode_embeddings(&bytes[..cut], &p(), None) {
            Err(Error::TruncatedFile { offset, .. }) => assert_eq!(offset, cut as u64),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_embeddings(&bad, &p(), None),
            Err(Error::BadMagic(_))
        ));
        let mut zero = bytes.clone();
        zero[5..9].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_embeddings(&zero, &p(), None),
            Err(Error::DimMismatch { actual: 0, .. })
        ));
        assert!(matches!(
            decode_embeddings(&bytes, &p(), Some(8)),
            Err(Error::DimMismatch {
                expected: 8,
                actual: 4
            })
        ));
    }

    #[test]
    fn camera_file_defaults() {
        let info = SequenceInfo {
            name: "S".into(),
            img_w: 640,
            img_h: 480,
            frame_rate: 30.0,
            n_frames: 1,
            embedding_dim: None,
        };
        let cam = read_camera(Path::new("/nonexistent/camera.toml"), &info).unwrap();
        assert_eq!(cam, CameraModel::default_for(640.0, 480.0));
        let partial: CameraFile = toml::from_str("f = 500.0\ny_c = 1.5").unwrap();
        let c = partial.camera(640.0, 480.0);
        assert_eq!((c.f, c.y_c, c.v_c), (500.0, 1.5, 240.0));
    }

    #[test]
    fn truth_order_round_trip() {
        let mut m = BTreeMap::new();
        m.insert(1, vec![2, 0, 1]);
        m.insert(2, vec![]);
        let text = format_truth_order(&m);
        assert_eq!(parse_truth_order_str(&text, &p()).unwrap(), m);
    }

    #[test]
    fn flow_rows() {
        let t = parse_flow_str("3,1,1.0,2.0,3.0,5.0\n", &p()).unwrap();
        assert_eq!(t[&(3, 1)], ((1.0, 2.0), (3.0, 5.0)));
        assert!(parse_flow_str("3,1,1.0,2.0,3.0\n", &p()).is_err());
    }

    #[test]
    fn synthetic_directory_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = crate::synth::presets::crossing_merge_fixture();
        s.embedding_dim = 8;
        let seq = s.render();
        write_synthetic_sequence(dir.path(), &seq).unwrap();
        let data = load_sequence(dir.path()).unwrap();
        assert_eq!(data.info, seq.info);
        assert_eq!(data.camera, seq.camera);
        let n: usize = data.detections.values().map(Vec::len).sum();
        assert_eq!(
            n,
            seq.frames.iter().map(|f| f.detections.len()).sum::<usize>()
        );
        assert!(data
            .detections
            .values()
            .flatten()
            .all(|d| d.embedding.as_ref().map(Vec::len) == Some(8)));
        let gt = parse_gt(&SequencePaths::new(dir.path()).gt()).unwrap();
        assert_eq!(gt.len(), seq.gt_records().len());
        let flow = data.flow.unwrap();
        let truth = seq.flow_table();
        assert_eq!(flow.len(), truth.len());
        for (k, ((a, b), (c, d))) in &truth {
            let ((e, f), (g, h)) = flow[k];
            for (x, y) in [(a, e), (b, f), (c, g), (d, h)] {
                assert!((x - y).abs() <= 5e-5);
            }
        }
    }
}
