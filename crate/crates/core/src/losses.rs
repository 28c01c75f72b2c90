//! Loss components for offline diagnostics of detector outputs: IoU loss,
//! distribution focal loss over per-edge bin distributions, a per-class
//! binary cross-entropy classification loss, and their weighted total.
//!
//! The classification term is a stand-in: per-class BCE with natural logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::metrics::Annotation;
use crate::postprocess::Detection;

/// Bins per box edge used by the regression head.
pub const DEFAULT_REG_MAX: usize = 16;

/// Floor applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-6;

/// Four categorical distributions (left, top, right, bottom) over `bins`
/// discrete offsets, stored row-major.
///
/// Used both for predicted distributions and for one-hot or two-bin soft
/// targets.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDistribution {
    bins: usize,
    probs: Vec<f64>,
}

impl EdgeDistribution {
    pub fn new(rows: [Vec<f64>; 4]) -> Result<Self> {
        let bins = rows[0].len();
        if bins == 0 {
            return Err(Error::InvalidDistribution("distribution needs at least one bin".into()));
        }
        let mut probs = Vec::with_capacity(4 * bins);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != bins {
                return Err(Error::InvalidDistribution(format!(
                    "row {j} has {} bins, expected {bins}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::InvalidDistribution(format!("row {j} has entry {bad}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!("row {j} sums to {sum}")));
            }
            probs.extend_from_slice(row);
        }
        Ok(Self { bins, probs })
    }

    /// Same distribution on all four edges.
    pub fn repeated(row: Vec<f64>) -> Result<Self> {
        Self::new([row.clone(), row.clone(), row.clone(), row])
    }

    pub fn uniform(bins: usize) -> Result<Self> {
        Self::repeated(vec![1.0 / bins as f64; bins])
    }

    /// One-hot rows with the hot bin per edge given by `hot`.
    pub fn one_hot(bins: usize, hot: [usize; 4]) -> Result<Self> {
        let row = |k: usize| -> Result<Vec<f64>> {
            if k >= bins {
                return Err(Error::InvalidDistribution(format!("hot bin {k} out of range for {bins} bins")));
            }
            let mut r = vec![0.0; bins];
            r[k] = 1.0;
            Ok(r)
        };
        Self::new([row(hot[0])?, row(hot[1])?, row(hot[2])?, row(hot[3])?])
    }

    /// Two-bin soft target for continuous edge offsets measured in bins:
    /// offset `t` splits its mass between `floor(t)` and `floor(t) + 1` in
    /// proportion to distance. Offsets are clamped to `[0, bins - 1]`.
    pub fn soft_target(bins: usize, offsets: [f64; 4]) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidDistribution("soft targets need at least two bins".into()));
        }
        let max = (bins - 1) as f64;
        let row = |t: f64| -> Result<Vec<f64>> {
            if !t.is_finite() {
                return Err(Error::InvalidDistribution(format!("offset {t} is not finite")));
            }
            let t = t.clamp(0.0, max);
            let left = (t.floor() as usize).min(bins - 2);
            let w_right = t - left as f64;
            let mut r = vec![0.0; bins];
            r[left] = 1.0 - w_right;
            r[left + 1] = w_right;
            Ok(r)
        };
        Self::new([row(offsets[0])?, row(offsets[1])?, row(offsets[2])?, row(offsets[3])?])
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, edge: usize) -> &[f64] {
        &self.probs[edge * self.bins..(edge + 1) * self.bins]
    }

    /// Expected offset (in bins) per edge.
    pub fn expectation(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.row(j).iter().enumerate().map(|(k, p)| k as f64 * p).sum())
    }
}

/// `1 - IoU(pred, gt)`.
pub fn loss_iou(pred: &BBox, gt: &BBox) -> f64 {
    1.0 - iou(pred, gt)
}

/// Distribution focal loss averaged over the batch: the per-sample sum over
/// four edges and all bins of `-target * ln(max(pred, eps))`.
pub fn loss_dfl(preds: &[EdgeDistribution], targets: &[EdgeDistribution]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predicted distributions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("loss_dfl needs at least one sample"));
    }
    let mut total = 0.0;
    for (i, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.bins != t.bins {
            return Err(Error::InvalidDistribution(format!(
                "sample {i}: prediction has {} bins, target has {}",
                p.bins, t.bins
            )));
        }
        total += p
            .probs
            .iter()
            .zip(&t.probs)
            .filter(|(_, &y)| y > 0.0)
            .map(|(&yhat, &y)| -y * yhat.max(PROB_EPS).ln())
            .sum::<f64>();
    }
    Ok(total / preds.len() as f64)
}

/// Mean per-class binary cross-entropy. Each sample pairs a probability
/// vector with a target vector (one-hot, or all zero for background).
pub fn loss_cls(pred_scores: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if pred_scores.len() != targets.len() {
        return Err(Error::invalid("loss_cls: sample count mismatch"));
    }
    let mut total = 0.0;
    let mut terms = 0usize;
    for (i, (p, t)) in pred_scores.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(Error::invalid(format!("loss_cls: sample {i} has {} scores and {} targets", p.len(), t.len())));
        }
        for (&pk, &tk) in p.iter().zip(t) {
            if !(0.0..=1.0).contains(&pk) {
                return Err(Error::invalid(format!("loss_cls: probability {pk} outside [0, 1]")));
            }
            if !(0.0..=1.0).contains(&tk) {
                return Err(Error::invalid(format!("loss_cls: target {tk} outside [0, 1]")));
            }
            let pk = pk.clamp(PROB_EPS, 1.0 - PROB_EPS);
            total += -(tk * pk.ln() + (1.0 - tk) * (1.0 - pk).ln());
            terms += 1;
        }
    }
    if terms == 0 {
        return Err(Error::invalid("loss_cls needs at least one score"));
    }
    Ok(total / terms as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_iou: f64,
    pub lambda_dfl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_iou: 1.0, lambda_dfl: 1.0 }
    }
}

impl LossWeights {
    pub fn new(lambda_iou: f64, lambda_dfl: f64) -> Result<Self> {
        let w = Self { lambda_iou, lambda_dfl };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_iou >= 0.0 && self.lambda_dfl >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "loss weights must be non-negative, got iou={}, dfl={}",
                self.lambda_iou, self.lambda_dfl
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub iou: f64,
    pub dfl: f64,
    pub total: f64,
}

/// Weighted sum `cls + lambda_iou * iou + lambda_dfl * dfl`.
pub fn total_loss(cls: f64, iou: f64, dfl: f64, w: &LossWeights) -> Result<LossBreakdown> {
    w.validate()?;
    if !(cls >= 0.0 && iou >= 0.0 && dfl >= 0.0) {
        return Err(Error::invalid(format!("loss components must be non-negative: {cls}, {iou}, {dfl}")));
    }
    Ok(LossBreakdown { cls, iou, dfl, total: cls + w.lambda_iou * iou + w.lambda_dfl * dfl })
}

/// Loss components over one evaluated prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedLosses {
    pub breakdown: LossBreakdown,
    pub weights: LossWeights,
    pub predictions: usize,
    pub matched_pairs: usize,
    pub dfl_samples: usize,
}

/// Edge offsets of `gt` measured from the centre of `pred`, in units of
/// `stride` pixels: left, top, right, bottom.
pub fn edge_offsets(pred: &BBox, gt: &BBox, stride: f64) -> [f64; 4] {
    let (cx, cy) = pred.center();
    [(cx - gt.x1()) / stride, (cy - gt.y1()) / stride, (gt.x2() - cx) / stride, (gt.y2() - cy) / stride]
}

/// Loss diagnostics for predictions already matched to ground truth.
///
/// * classification: BCE of each prediction's score against 1 for a match
///   and 0 otherwise;
/// * IoU: mean `1 - IoU` over matched pairs;
/// * DFL: over matched pairs whose prediction carries an edge distribution,
///   against a two-bin soft target built from [`edge_offsets`].
///
/// Terms with no samples contribute 0.
pub fn matched_pair_losses(
    preds: &[Detection],
    distributions: &[Option<EdgeDistribution>],
    gts: &[Annotation],
    matched_gt: &[Option<usize>],
    weights: &LossWeights,
    stride: f64,
) -> Result<MatchedLosses> {
    if preds.len() != distributions.len() || preds.len() != matched_gt.len() {
        return Err(Error::invalid("predictions, distributions and matches must align"));
    }
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(Error::invalid(format!("stride must be positive, got {stride}")));
    }

    let scores: Vec<Vec<f64>> = preds.iter().map(|d| vec![d.score]).collect();
    let targets: Vec<Vec<f64>> = matched_gt.iter().map(|m| vec![if m.is_some() { 1.0 } else { 0.0 }]).collect();
    let cls = if preds.is_empty() { 0.0 } else { loss_cls(&scores, &targets)? };

    let mut iou_sum = 0.0;
    let mut pairs = 0;
    let mut dfl_preds = Vec::new();
    let mut dfl_targets = Vec::new();
    for (i, m) in matched_gt.iter().enumerate() {
        let Some(g) = *m else { continue };
        let gt = gts.get(g).ok_or_else(|| Error::invalid(format!("match index {g} out of range")))?;
        iou_sum += loss_iou(&preds[i].bbox, &gt.bbox);
        pairs += 1;
        if let Some(dist) = &distributions[i] {
            let offsets = edge_offsets(&preds[i].bbox, &gt.bbox, stride);
            dfl_targets.push(EdgeDistribution::soft_target(dist.bins(), offsets)?);
            dfl_preds.push(dist.clone());
        }
    }
    let iou = if pairs == 0 { 0.0 } else { iou_sum / pairs as f64 };
    let dfl = if dfl_preds.is_empty() { 0.0 } else { loss_dfl(&dfl_preds, &dfl_targets)? };

    Ok(MatchedLosses {
        breakdown: total_loss(cls, iou, dfl, weights)?,
        weights: *weights,
        predictions: preds.len(),
        matched_pairs: pairs,
        dfl_samples: dfl_preds.len(),
    })
}
