//! CLEAR-MOT, identity F1 and depth-ordering accuracy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assign::{self, SENTINEL};
use crate::error::{Error, Result};
use crate::model::{GtRecord, TrackRecord};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Fraction of its span a trajectory must be covered to count as mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub mota: f64,
    pub idf1: f64,
    pub mt: usize,
    pub ml: usize,
    pub id_switches: usize,
    pub fragments: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt_count: usize,
    pub gt_trajectories: usize,
    pub idtp: usize,
    pub hyp_count: usize,
}

impl MotReport {
    /// Sums the counts of several sequences and recomputes the ratios.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MotReport>) -> Option<MotReport> {
        let mut it = reports.into_iter();
        let mut acc = it.next()?.clone();
        for r in it {
            acc.mt += r.mt;
            acc.ml += r.ml;
            acc.id_switches += r.id_switches;
            acc.fragments += r.fragments;
            acc.fp += r.fp;
            acc.fn_ += r.fn_;
            acc.gt_count += r.gt_count;
            acc.gt_trajectories += r.gt_trajectories;
            acc.idtp += r.idtp;
            acc.hyp_count += r.hyp_count;
        }
        acc.mota = mota(acc.fn_, acc.fp, acc.id_switches, acc.gt_count);
        acc.idf1 = idf1_from_counts(acc.idtp, acc.gt_count, acc.hyp_count);
        Some(acc)
    }
}

fn mota(fn_: usize, fp: usize, idsw: usize, gt: usize) -> f64 {
    1.0 - (fn_ + fp + idsw) as f64 / gt as f64
}

fn idf1_from_counts(idtp: usize, gt: usize, hyp: usize) -> f64 {
    if gt + hyp == 0 {
        return 1.0;
    }
    2.0 * idtp as f64 / (gt + hyp) as f64
}

struct FrameData<'a> {
    gt: Vec<&'a TrackRecord>,
    excluded: Vec<&'a TrackRecord>,
    hyp: Vec<&'a TrackRecord>,
}

fn group_frames<'a>(gt: &'a [GtRecord], hyp: &'a [TrackRecord]) -> BTreeMap<u32, FrameData<'a>> {
    let mut frames: BTreeMap<u32, FrameData> = BTreeMap::new();
    let empty = || FrameData {
        gt: Vec::new(),
        excluded: Vec::new(),
        hyp: Vec::new(),
    };
    for g in gt {
        let fd = frames.entry(g.record.frame).or_insert_with(empty);
        if g.is_evaluated() {
            fd.gt.push(&g.record);
        } else {
            fd.excluded.push(&g.record);
        }
    }
    for h in hyp {
        frames.entry(h.frame).or_insert_with(empty).hyp.push(h);
    }
    frames
}

/// Hypothesis rows kept for scoring: those not explained by an excluded
/// ground-truth box.
fn scored_hyps<'a>(fd: &FrameData<'a>, threshold: f64) -> Vec<&'a TrackRecord> {
    if fd.excluded.is_empty() {
        return fd.hyp.clone();
    }
    // Evaluated boxes get first claim; only leftovers are tested against
    // excluded ones.
    let claimed = match_boxes(&fd.gt, &fd.hyp, threshold);
    let claimed: BTreeSet<usize> = claimed.into_iter().map(|(_, h)| h).collect();
    fd.hyp
        .iter()
        .enumerate()
        .filter(|(k, h)| {
            claimed.contains(k) || !fd.excluded.iter().any(|e| e.bbox.iou(&h.bbox) >= threshold)
        })
        .map(|(_, h)| *h)
        .collect()
}

/// Maximum-IoU one-to-one matching restricted to pairs at or above `threshold`.
fn match_boxes(gt: &[&TrackRecord], hyp: &[&TrackRecord], threshold: f64) -> Vec<(usize, usize)> {
    let cost = DMatrix::from_fn(gt.len(), hyp.len(), |i, j| {
        let iou = gt[i].bbox.iou(&hyp[j].bbox);
        if iou >= threshold {
            1.0 - iou
        } else {
            SENTINEL
        }
    });
    assign::solve(&cost, SENTINEL)
        .matches
        .into_iter()
        .map(|(i, j, _)| (i, j))
        .collect()
}

#[derive(Default)]
struct GtState {
    last_hyp: Option<u32>,
    frames: usize,
    matched: usize,
    was_tracked: bool,
    ever_tracked: bool,
}

/// CLEAR-MOT counts plus IDF1 for one sequence.
pub fn clear_mot(gt: &[GtRecord], hyp: &[TrackRecord], threshold: f64) -> Result<MotReport> {
    let frames = group_frames(gt, hyp);
    let gt_count: usize = frames.values().map(|f| f.gt.len()).sum();
    if gt_count == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut states: BTreeMap<u32, GtState> = BTreeMap::new();
    let (mut fp, mut fn_, mut idsw, mut frag) = (0, 0, 0, 0);
    let mut scored: Vec<&TrackRecord> = Vec::new();

    for fd in frames.values() {
        let hyps = scored_hyps(fd, threshold);
        scored.extend(hyps.iter().copied());
        let mut gt_match: Vec<Option<usize>> = vec![None; fd.gt.len()];
        let mut hyp_used = vec![false; hyps.len()];

        // Keep last frame's correspondences while they still overlap.
        for (gi, g) in fd.gt.iter().enumerate() {
            let Some(prev) = states.get(&g.id).and_then(|s| s.last_hyp) else {
                continue;
            };
            if let Some(hj) = hyps.iter().position(|h| h.id == prev) {
                if !hyp_used[hj] && g.bbox.iou(&hyps[hj].bbox) >= threshold {
                    gt_match[gi] = Some(hj);
                    hyp_used[hj] = true;
                }
            }
        }
        let free_gt: Vec<usize> = (0..fd.gt.len())
            .filter(|&i| gt_match[i].is_none())
            .collect();
        let free_hyp: Vec<usize> = (0..hyps.len()).filter(|&j| !hyp_used[j]).collect();
        let sub_gt: Vec<&TrackRecord> = free_gt.iter().map(|&i| fd.gt[i]).collect();
        let sub_hyp: Vec<&TrackRecord> = free_hyp.iter().map(|&j| hyps[j]).collect();
        for (a, b) in match_boxes(&sub_gt, &sub_hyp, threshold) {
            gt_match[free_gt[a]] = Some(free_hyp[b]);
            hyp_used[free_hyp[b]] = true;
        }

        for (gi, g) in fd.gt.iter().enumerate() {
            let st = states.entry(g.id).or_default();
            st.frames += 1;
            match gt_match[gi] {
                Some(hj) => {
                    let hid = hyps[hj].id;
                    if st.last_hyp.is_some_and(|p| p != hid) {
                        idsw += 1;
                    }
                    if st.ever_tracked && !st.was_tracked {
                        frag += 1;
                    }
                    st.last_hyp = Some(hid);
                    st.matched += 1;
                    st.was_tracked = true;
                    st.ever_tracked = true;
                }
                None => {
                    fn_ += 1;
                    st.was_tracked = false;
                }
            }
        }
        fp += hyp_used.iter().filter(|u| !**u).count();
    }

    let mt = states
        .values()
        .filter(|s| s.matched as f64 >= MOSTLY_TRACKED * s.frames as f64)
        .count();
    let ml = states
        .values()
        .filter(|s| s.matched as f64 <= MOSTLY_LOST * s.frames as f64)
        .count();
    let evaluated: Vec<&TrackRecord> = frames.values().flat_map(|f| f.gt.iter().copied()).collect();
    let idtp = id_true_positives(&evaluated, &scored, threshold);
    Ok(MotReport {
        mota: mota(fn_, fp, idsw, gt_count),
        idf1: idf1_from_counts(idtp, gt_count, scored.len()),
        mt,
        ml,
        id_switches: idsw,
        fragments: frag,
        fp,
        fn_,
        gt_count,
        gt_trajectories: states.len(),
        idtp,
        hyp_count: scored.len(),
    })
}

/// Identity true positives under the best global one-to-one id mapping.
fn id_true_positives(gt: &[&TrackRecord], hyp: &[&TrackRecord], threshold: f64) -> usize {
    let gt_ids: Vec<u32> = gt
        .iter()
        .map(|r| r.id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let hyp_ids: Vec<u32> = hyp
        .iter()
        .map(|r| r.id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if gt_ids.is_empty() || hyp_ids.is_empty() {
        return 0;
    }
    let gt_index: HashMap<u32, usize> = gt_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let hyp_index: HashMap<u32, usize> =
        hyp_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut hyp_by_frame: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for h in hyp {
        hyp_by_frame.entry(h.frame).or_default().push(h);
    }
    let mut overlap = DMatrix::<f64>::zeros(gt_ids.len(), hyp_ids.len());
    for g in gt {
        if let Some(hs) = hyp_by_frame.get(&g.frame) {
            for h in hs {
                if g.bbox.iou(&h.bbox) >= threshold {
                    overlap[(gt_index[&g.id], hyp_index[&h.id])] += 1.0;
                }
            }
        }
    }
    let mapping = assign::optimal_columns(&(-overlap.clone()));
    mapping
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| overlap[(i, j)]))
        .sum::<f64>() as usize
}

/// Identity F1 on its own.
pub fn idf1(gt: &[GtRecord], hyp: &[TrackRecord], threshold: f64) -> Result<f64> {
    Ok(clear_mot(gt, hyp, threshold)?.idf1)
}

/// Length of the longest common subsequence.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Percentage of the true ordering preserved by the estimated one.
pub fn lcs_accuracy(truth: &[usize], estimated: &[usize]) -> Result<f64> {
    let mut a = truth.to_vec();
    let mut b = estimated.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    if a != b || a.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::MismatchedIndexSets { frame: None });
    }
    if truth.is_empty() {
        return Ok(100.0);
    }
    Ok(lcs_length(truth, estimated) as f64 * 100.0 / truth.len() as f64)
}

/// Accumulates ordering accuracy over many frames.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OrderingScore {
    pub matched: usize,
    pub total: usize,
    pub frames: usize,
    pub perfect_frames: usize,
}

impl OrderingScore {
    pub fn add(&mut self, frame: u32, truth: &[usize], estimated: &[usize]) -> Result<f64> {
        let acc = lcs_accuracy(truth, estimated)
            .map_err(|_| Error::MismatchedIndexSets { frame: Some(frame) })?;
        self.matched += lcs_length(truth, estimated);
        self.total += truth.len();
        self.frames += 1;
        if acc == 100.0 {
            self.perfect_frames += 1;
        }
        Ok(acc)
    }

    /// Aggregate accuracy in percent over all ordered items.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            100.0
        } else {
            self.matched as f64 * 100.0 / self.total as f64
        }
    }
}
