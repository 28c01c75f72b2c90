//! Score filtering, top-k selection and greedy class-wise NMS.
//!
//! Every ordering step here is a stable sort on descending score, so score
//! ties always resolve by input position and the output is a pure function
//! of the input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// One scored, classified box on one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
    pub image_id: u64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: u32, score: f64, image_id: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("detection score {score} outside [0, 1]")));
        }
        Ok(Self { bbox, class_id, score, image_id })
    }
}

/// Post-prediction callback settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub score_threshold: f64,
    pub pre_nms_top_k: usize,
    pub nms_iou_threshold: f64,
    pub max_predictions: usize,
}

impl Default for PostprocessConfig {
    /// Runtime defaults: score 0.01, top-k 1000, NMS IoU 0.8, 200 final boxes.
    fn default() -> Self {
        Self {
            score_threshold: 0.01,
            pre_nms_top_k: 1000,
            nms_iou_threshold: 0.8,
            max_predictions: 200,
        }
    }
}

impl PostprocessConfig {
    /// The smaller preset used while tracking validation mAP during training.
    pub fn training_validation() -> Self {
        Self {
            score_threshold: 0.01,
            pre_nms_top_k: 10,
            nms_iou_threshold: 0.7,
            max_predictions: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::invalid(format!("score_threshold {} outside [0, 1]", self.score_threshold)));
        }
        if !(self.nms_iou_threshold > 0.0 && self.nms_iou_threshold <= 1.0) {
            return Err(Error::invalid(format!("nms_iou_threshold {} outside (0, 1]", self.nms_iou_threshold)));
        }
        if self.pre_nms_top_k == 0 || self.max_predictions == 0 {
            return Err(Error::invalid("pre_nms_top_k and max_predictions must be positive"));
        }
        Ok(())
    }
}

/// Keeps detections with `score >= threshold`, in input order.
pub fn filter_by_score(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().copied().filter(|d| d.score >= threshold).collect()
}

/// Input indices sorted by descending score; equal scores keep input order.
fn rank_by_score(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// The `k` highest-scoring detections, sorted descending.
pub fn top_k(dets: &[Detection], k: usize) -> Vec<Detection> {
    let mut order = rank_by_score(dets);
    order.truncate(k);
    order.into_iter().map(|i| dets[i]).collect()
}

fn nms_indices(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let order = rank_by_score(dets);
    let mut suppressed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Greedy hard NMS over detections of a single class on a single image.
///
/// A box is removed when its IoU with an already selected box is strictly
/// greater than `iou_threshold`. The kept boxes come back in selection order.
pub fn nms_single_class(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    if let Some(first) = dets.first() {
        if let Some(odd) = dets.iter().find(|d| d.class_id != first.class_id || d.image_id != first.image_id) {
            return Err(Error::ContractViolation(format!(
                "nms_single_class needs one class on one image, got (image {}, class {}) and (image {}, class {})",
                first.image_id, first.class_id, odd.image_id, odd.class_id
            )));
        }
    }
    Ok(nms_indices(dets, iou_threshold).into_iter().map(|i| dets[i]).collect())
}

/// Runs the full post-prediction pipeline independently for each image:
/// score filter, top-k, per-class NMS, then truncation to `max_predictions`.
///
/// Images are emitted in ascending `image_id`; within an image detections
/// are ordered by descending score, then class id, then input position.
pub fn postprocess(dets: &[Detection], cfg: &PostprocessConfig) -> Result<Vec<Detection>> {
    Ok(postprocess_indices(dets, cfg)?.into_iter().map(|i| dets[i]).collect())
}

/// Input positions of the detections [`postprocess`] keeps, in output order.
pub fn postprocess_indices(dets: &[Detection], cfg: &PostprocessConfig) -> Result<Vec<usize>> {
    cfg.validate()?;

    let mut per_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        per_image.entry(d.image_id).or_default().push(i);
    }

    let mut out = Vec::new();
    for indices in per_image.values() {
        let mut candidates: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| dets[i].score >= cfg.score_threshold)
            .collect();
        candidates.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
        candidates.truncate(cfg.pre_nms_top_k);

        let mut per_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &i in &candidates {
            per_class.entry(dets[i].class_id).or_default().push(i);
        }

        let mut kept: Vec<usize> = Vec::new();
        for members in per_class.values() {
            let group: Vec<Detection> = members.iter().map(|&i| dets[i]).collect();
            kept.extend(nms_indices(&group, cfg.nms_iou_threshold).into_iter().map(|k| members[k]));
        }

        kept.sort_by(|&a, &b| {
            dets[b]
                .score
                .total_cmp(&dets[a].score)
                .then(dets[a].class_id.cmp(&dets[b].class_id))
                .then(a.cmp(&b))
        });
        kept.truncate(cfg.max_predictions);
        out.extend(kept);
    }
    Ok(out)
}
