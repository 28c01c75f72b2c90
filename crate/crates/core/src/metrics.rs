//! Detection/ground-truth matching and the precision, recall, AP, mAP and F1
//! metrics computed at a single IoU operating point.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::ingest::Dataset;
use crate::postprocess::Detection;

/// IoU at which a detection counts as a true positive.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Number of recall points used for interpolated AP (0.00, 0.01, ..., 1.00).
pub const RECALL_POINTS: usize = 101;

/// A ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub class_id: u32,
    pub image_id: u64,
    pub annotation_id: u64,
}

impl Annotation {
    pub fn new(bbox: BBox, class_id: u32, image_id: u64, annotation_id: u64) -> Result<Self> {
        if bbox.area() <= 0.0 {
            return Err(Error::Validation(format!("annotation {annotation_id} has a zero-area box")));
        }
        Ok(Self { bbox, class_id, image_id, annotation_id })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `tp / (tp + fp)`, or 0 with no predictions.
pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

/// `tp / (tp + fn)`, or 0 with no ground truth.
pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

/// Result of matching one image/class group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    /// For each prediction (input order), the index of the ground truth it
    /// consumed, or `None` for a false positive.
    pub matched_gt: Vec<Option<usize>>,
    pub false_negatives: usize,
}

impl MatchOutcome {
    pub fn is_tp(&self, pred: usize) -> bool {
        self.matched_gt[pred].is_some()
    }

    pub fn counts(&self) -> ConfusionCounts {
        let tp = self.matched_gt.iter().filter(|m| m.is_some()).count() as u64;
        ConfusionCounts::new(tp, self.matched_gt.len() as u64 - tp, self.false_negatives as u64)
    }
}

fn greedy_match(preds: &[Detection], gts: &[Annotation], iou_threshold: f64) -> MatchOutcome {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));

    let mut taken = vec![false; gts.len()];
    let mut matched_gt = vec![None; preds.len()];
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&preds[p].bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matched_gt[p] = Some(g);
        }
    }
    let false_negatives = taken.iter().filter(|t| !**t).count();
    MatchOutcome { matched_gt, false_negatives }
}

fn check_iou_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("IoU threshold {t} outside (0, 1]")))
    }
}

/// Greedy one-to-one matching for a single image and class.
///
/// Predictions are visited by descending score (ties by input position).
/// Each takes the still-unmatched ground truth with the highest IoU, provided
/// that IoU is at least `iou_threshold`.
pub fn match_detections(preds: &[Detection], gts: &[Annotation], iou_threshold: f64) -> Result<MatchOutcome> {
    check_iou_threshold(iou_threshold)?;
    let key = preds
        .first()
        .map(|d| (d.image_id, d.class_id))
        .or_else(|| gts.first().map(|g| (g.image_id, g.class_id)));
    if let Some(key) = key {
        let mixed = preds.iter().any(|d| (d.image_id, d.class_id) != key)
            || gts.iter().any(|g| (g.image_id, g.class_id) != key);
        if mixed {
            return Err(Error::ContractViolation(
                "match_detections needs predictions and ground truth from one image and one class".into(),
            ));
        }
    }
    Ok(greedy_match(preds, gts, iou_threshold))
}

/// 101-point interpolated average precision.
///
/// `scored_labels` holds `(score, is_true_positive)` pairs; they are ranked by
/// descending score with ties kept in input order. Precision at each recall
/// point `r` is the best precision achieved at any recall `>= r`.
pub fn average_precision(scored_labels: &[(f64, bool)], total_gt: usize) -> Result<f64> {
    if total_gt == 0 {
        return Err(Error::invalid("average_precision needs at least one ground-truth instance"));
    }
    let mut ranked: Vec<(f64, bool)> = scored_labels.to_vec();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n = ranked.len();
    let mut tps = Vec::with_capacity(n);
    let mut precisions = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (rank, &(_, hit)) in ranked.iter().enumerate() {
        if hit {
            tp += 1;
        }
        tps.push(tp);
        precisions.push(tp as f64 / (rank + 1) as f64);
    }
    if tp > total_gt {
        return Err(Error::invalid(format!("{tp} true positives exceed {total_gt} ground-truth instances")));
    }
    for i in (1..n).rev() {
        precisions[i - 1] = precisions[i - 1].max(precisions[i]);
    }

    // recall_i >= j/100  <=>  100 * tp_i >= j * total_gt, compared exactly.
    let mut sum = 0.0;
    let mut cursor = 0;
    for j in 0..RECALL_POINTS {
        while cursor < n && 100 * tps[cursor] < j * total_gt {
            cursor += 1;
        }
        if cursor == n {
            break;
        }
        sum += precisions[cursor];
    }
    Ok(sum / RECALL_POINTS as f64)
}

/// Unweighted mean of per-class AP.
pub fn mean_ap(per_class_ap: &BTreeMap<u32, f64>) -> Result<f64> {
    if per_class_ap.is_empty() {
        return Err(Error::invalid("mean_ap over an empty class set"));
    }
    Ok(per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou_threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub f1: f64,
    pub totals: ConfusionCounts,
    /// AP for every class with at least one ground-truth instance.
    pub per_class_ap: BTreeMap<u32, f64>,
    /// Recall per class, reported as AR.
    pub per_class_ar: BTreeMap<u32, f64>,
    pub per_class_counts: BTreeMap<u32, ConfusionCounts>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_names: BTreeMap<u32, String>,
}

/// Evaluation output plus the per-prediction ground-truth assignment.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// For each input prediction, the index into the ground-truth slice it
    /// matched.
    pub matched_gt: Vec<Option<usize>>,
}

fn pred_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    a.image_id
        .cmp(&b.image_id)
        .then(a.class_id.cmp(&b.class_id))
        .then(b.score.total_cmp(&a.score))
        .then(a.bbox.x1().total_cmp(&b.bbox.x1()))
        .then(a.bbox.y1().total_cmp(&b.bbox.y1()))
        .then(a.bbox.x2().total_cmp(&b.bbox.x2()))
        .then(a.bbox.y2().total_cmp(&b.bbox.y2()))
}

fn gt_order(a: &Annotation, b: &Annotation) -> std::cmp::Ordering {
    a.image_id
        .cmp(&b.image_id)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.x1().total_cmp(&b.bbox.x1()))
        .then(a.bbox.y1().total_cmp(&b.bbox.y1()))
        .then(a.bbox.x2().total_cmp(&b.bbox.x2()))
        .then(a.bbox.y2().total_cmp(&b.bbox.y2()))
        .then(a.annotation_id.cmp(&b.annotation_id))
}

fn evaluate_impl(
    preds: &[Detection],
    gts: &[Annotation],
    iou_threshold: f64,
    known_images: &BTreeSet<u64>,
    class_names: BTreeMap<u32, String>,
) -> Result<Evaluation> {
    check_iou_threshold(iou_threshold)?;
    let unknown: BTreeSet<u64> = preds
        .iter()
        .map(|d| d.image_id)
        .filter(|id| !known_images.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownImages(unknown.into_iter().collect()));
    }

    // Canonical order so the report does not depend on input permutation.
    let mut p_order: Vec<usize> = (0..preds.len()).collect();
    p_order.sort_by(|&a, &b| pred_order(&preds[a], &preds[b]));
    let mut g_order: Vec<usize> = (0..gts.len()).collect();
    g_order.sort_by(|&a, &b| gt_order(&gts[a], &gts[b]));

    let mut groups: BTreeMap<(u64, u32), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &i in &p_order {
        groups.entry((preds[i].image_id, preds[i].class_id)).or_default().0.push(i);
    }
    for &g in &g_order {
        groups.entry((gts[g].image_id, gts[g].class_id)).or_default().1.push(g);
    }

    let mut matched_gt = vec![None; preds.len()];
    let mut counts: BTreeMap<u32, ConfusionCounts> = BTreeMap::new();
    let mut labels: BTreeMap<u32, Vec<(f64, bool)>> = BTreeMap::new();
    let mut gt_totals: BTreeMap<u32, usize> = BTreeMap::new();

    for (&(_, class_id), (p_idx, g_idx)) in &groups {
        let group_preds: Vec<Detection> = p_idx.iter().map(|&i| preds[i]).collect();
        let group_gts: Vec<Annotation> = g_idx.iter().map(|&g| gts[g]).collect();
        let outcome = greedy_match(&group_preds, &group_gts, iou_threshold);

        *counts.entry(class_id).or_default() += outcome.counts();
        *gt_totals.entry(class_id).or_default() += group_gts.len();
        let class_labels = labels.entry(class_id).or_default();
        for (k, m) in outcome.matched_gt.iter().enumerate() {
            matched_gt[p_idx[k]] = m.map(|g| g_idx[g]);
            class_labels.push((group_preds[k].score, m.is_some()));
        }
    }

    let mut per_class_ap = BTreeMap::new();
    let mut per_class_ar = BTreeMap::new();
    for (&class_id, &total) in &gt_totals {
        if total == 0 {
            continue;
        }
        per_class_ap.insert(class_id, average_precision(&labels[&class_id], total)?);
        per_class_ar.insert(class_id, recall(&counts[&class_id]));
    }

    let mut totals = ConfusionCounts::default();
    for c in counts.values() {
        totals += *c;
    }
    let p = precision(&totals);
    let r = recall(&totals);
    let map50 = if per_class_ap.is_empty() { 0.0 } else { mean_ap(&per_class_ap)? };

    Ok(Evaluation {
        report: MetricsReport {
            iou_threshold,
            precision: p,
            recall: r,
            map50,
            f1: f1(p, r),
            totals,
            per_class_ap,
            per_class_ar,
            per_class_counts: counts,
            class_names,
        },
        matched_gt,
    })
}

/// Evaluates predictions against ground truth. Images are known only through
/// their annotations; use [`evaluate_dataset`] when images may have no boxes.
pub fn evaluate(preds: &[Detection], gts: &[Annotation], iou_threshold: f64) -> Result<MetricsReport> {
    let known = gts.iter().map(|g| g.image_id).collect();
    Ok(evaluate_impl(preds, gts, iou_threshold, &known, BTreeMap::new())?.report)
}

/// Evaluates against a parsed dataset, keeping the per-prediction matches.
pub fn evaluate_dataset(preds: &[Detection], dataset: &Dataset, iou_threshold: f64) -> Result<Evaluation> {
    let known = dataset.images.iter().map(|im| im.id).collect();
    let names = dataset.classes.iter().map(|(id, name)| (id, name.to_string())).collect();
    evaluate_impl(preds, &dataset.annotations, iou_threshold, &known, names)
}

impl MetricsReport {
    /// One row per class (`class_id,name,tp,fp,fn,ap,ar`) followed by an
    /// `all` summary row carrying totals, mAP and overall recall.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["class_id", "name", "tp", "fp", "fn", "ap", "ar"]).map_err(io)?;
        for (class_id, c) in &self.per_class_counts {
            let name = self.class_names.get(class_id).map(String::as_str).unwrap_or("");
            let opt = |v: Option<&f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            w.write_record([
                class_id.to_string(),
                name.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                opt(self.per_class_ap.get(class_id)),
                opt(self.per_class_ar.get(class_id)),
            ])
            .map_err(io)?;
        }
        w.write_record([
            "all".to_string(),
            String::new(),
            self.totals.tp.to_string(),
            self.totals.fp.to_string(),
            self.totals.fn_.to_string(),
            format!("{:.6}", self.map50),
            format!("{:.6}", self.recall),
        ])
        .map_err(io)?;
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    /// Summary table followed by a per-class AP/AR table, in Markdown.
    pub fn to_markdown(&self) -> String {
        let pct = format!("{:.2}", self.iou_threshold);
        let mut out = String::new();
        out.push_str("| Evaluation Metrics | Score |\n|---|---|\n");
        out.push_str(&format!("| Precision@{pct} | {:.2} |\n", self.precision));
        out.push_str(&format!("| Recall@{pct} | {:.2} |\n", self.recall));
        out.push_str(&format!("| mAP@{pct} | {:.2} |\n", self.map50));
        out.push_str(&format!("| F1@{pct} | {:.2} |\n", self.f1));
        out.push_str("\n| Object | AP | AR |\n|---|---|---|\n");
        for (class_id, ap) in &self.per_class_ap {
            let name = self.class_names.get(class_id).cloned().unwrap_or_else(|| class_id.to_string());
            let ar = self.per_class_ar.get(class_id).copied().unwrap_or(0.0);
            out.push_str(&format!("| {name} | {ap:.2} | {ar:.2} |\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn pred(b: BBox, score: f64) -> Detection {
        Detection::new(b, 0, score, 1).unwrap()
    }

    fn gt(b: BBox, id: u64) -> Annotation {
        Annotation::new(b, 0, 1, id).unwrap()
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(precision(&ConfusionCounts::new(64, 36, 0)), 0.64);
        assert_eq!(precision(&ConfusionCounts::new(0, 0, 3)), 0.0);
        assert_eq!(precision(&ConfusionCounts::new(5, 0, 0)), 1.0);
        assert_eq!(recall(&ConfusionCounts::new(98, 0, 2)), 0.98);
        assert_eq!(recall(&ConfusionCounts::new(0, 4, 0)), 0.0);
        assert_eq!(recall(&ConfusionCounts::new(3, 0, 1)), 0.75);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert!((f1(0.64, 0.98) - 0.774_320_987_654_321).abs() < 1e-12);
        assert_eq!(f1(0.0, 0.5), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn match_examples() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let one = match_detections(&[pred(b, 0.9)], &[gt(b, 1)], 0.5).unwrap();
        assert_eq!(one.counts(), ConfusionCounts::new(1, 0, 0));

        let two = match_detections(&[pred(b, 0.9), pred(b, 0.8)], &[gt(b, 1)], 0.5).unwrap();
        assert_eq!(two.counts(), ConfusionCounts::new(1, 1, 0));
        assert!(two.is_tp(0) && !two.is_tp(1));

        // IoU exactly 0.5 counts.
        let half = bb(0.0, 0.0, 5.0, 10.0);
        assert_eq!(iou(&half, &b), 0.5);
        let edge = match_detections(&[pred(half, 0.7)], &[gt(b, 1)], 0.5).unwrap();
        assert_eq!(edge.counts(), ConfusionCounts::new(1, 0, 0));
    }

    #[test]
    fn match_prefers_highest_iou_unmatched_gt() {
        let g1 = gt(bb(0.0, 0.0, 10.0, 10.0), 1);
        let g2 = gt(bb(1.0, 0.0, 11.0, 10.0), 2);
        let p = pred(bb(1.0, 0.0, 11.0, 10.0), 0.9);
        let out = match_detections(&[p], &[g1, g2], 0.5).unwrap();
        assert_eq!(out.matched_gt, vec![Some(1)]);
        assert_eq!(out.false_negatives, 1);
    }

    #[test]
    fn match_rejects_mixed_groups() {
        let b = bb(0.0, 0.0, 1.0, 1.0);
        let other = Annotation::new(b, 4, 1, 9).unwrap();
        assert!(matches!(match_detections(&[pred(b, 0.5)], &[other], 0.5), Err(Error::ContractViolation(_))));
        assert!(match_detections(&[pred(b, 0.5)], &[gt(b, 1)], 0.0).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[(0.9, true), (0.4, true)], 2).unwrap(), 1.0);
        assert_eq!(average_precision(&[], 3).unwrap(), 0.0);
        assert!(average_precision(&[(0.5, true)], 0).is_err());
        assert!(average_precision(&[(0.5, true), (0.4, true)], 1).is_err());
    }

    #[test]
    fn ap_mixed_labels_matches_frozen_value() {
        // PR points (r, p): (0.5, 1), (0.5, 0.5), (1, 2/3). 51 recall points
        // sit at or below 0.5 with precision 1, the other 50 get 2/3.
        // The all-point area for the same curve is 5/6.
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
        assert!((ap - 5.0 / 6.0).abs() <= 0.01);
    }

    #[test]
    fn mean_ap_examples() {
        let m = |v: &[(u32, f64)]| mean_ap(&v.iter().copied().collect()).unwrap();
        assert!((m(&[(1, 0.9), (2, 1.0)]) - 0.95).abs() < 1e-12);
        assert_eq!(m(&[(1, 0.96)]), 0.96);
        assert_eq!(m(&[(1, 0.0), (2, 0.0), (3, 0.0)]), 0.0);
        assert!(mean_ap(&BTreeMap::new()).is_err());
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let gts = vec![gt(bb(0.0, 0.0, 5.0, 5.0), 1), gt(bb(10.0, 10.0, 20.0, 20.0), 2)];
        let preds: Vec<_> = gts.iter().map(|g| pred(g.bbox, 1.0)).collect();
        let r = evaluate(&preds, &gts, 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.map50, r.f1), (1.0, 1.0, 1.0, 1.0));

        let r = evaluate(&[], &gts, 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.map50), (0.0, 0.0, 0.0));
        assert_eq!(r.totals, ConfusionCounts::new(0, 0, 2));
    }

    #[test]
    fn evaluate_rejects_unknown_images() {
        let gts = vec![gt(bb(0.0, 0.0, 5.0, 5.0), 1)];
        let mut p = pred(bb(0.0, 0.0, 5.0, 5.0), 0.5);
        p.image_id = 42;
        assert_eq!(evaluate(&[p], &gts, 0.5).unwrap_err(), Error::UnknownImages(vec![42]));
    }

    #[test]
    fn classes_without_ground_truth_stay_out_of_map() {
        let gts = vec![gt(bb(0.0, 0.0, 5.0, 5.0), 1)];
        let hit = pred(bb(0.0, 0.0, 5.0, 5.0), 0.9);
        let mut stray = pred(bb(20.0, 20.0, 25.0, 25.0), 0.8);
        stray.class_id = 7;
        let r = evaluate(&[hit, stray], &gts, 0.5).unwrap();
        assert_eq!(r.map50, 1.0);
        assert_eq!(r.per_class_counts[&7], ConfusionCounts::new(0, 1, 0));
        assert!(!r.per_class_ap.contains_key(&7));
        assert_eq!(r.precision, 0.5);
    }

    #[test]
    fn csv_has_class_rows_and_summary() {
        let gts = vec![gt(bb(0.0, 0.0, 5.0, 5.0), 1)];
        let mut r = evaluate(&[pred(bb(0.0, 0.0, 5.0, 5.0), 0.9)], &gts, 0.5).unwrap();
        r.class_names.insert(0, "004_sugar_box".into());
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class_id,name,tp,fp,fn,ap,ar");
        assert_eq!(lines[1], "0,004_sugar_box,1,0,0,1.000000,1.000000");
        assert_eq!(lines[2], "all,,1,0,0,1.000000,1.000000");
        assert!(r.to_markdown().contains("| 004_sugar_box | 1.00 | 1.00 |"));
    }

    #[test]
    fn report_json_round_trips() {
        let gts = vec![gt(bb(0.0, 0.0, 5.0, 5.0), 1)];
        let r = evaluate(&[pred(bb(0.0, 0.0, 5.0, 6.0), 0.9)], &gts, 0.5).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":0"));
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), r);
    }
}
