//! COCO annotation and results-file ingestion, pixel normalization and
//! box-level augmentation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, BBox, ImageDims};
use crate::losses::EdgeDistribution;
use crate::metrics::Annotation;
use crate::postprocess::Detection;

/// Ordered `(class_id, name)` pairs with unique ids and unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassTable {
    entries: Vec<(u32, String)>,
}

impl ClassTable {
    pub fn new(entries: Vec<(u32, String)>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for (id, name) in &entries {
            if name.trim().is_empty() {
                return Err(Error::Validation(format!("category {id} has an empty name")));
            }
            if !ids.insert(*id) {
                return Err(Error::Validation(format!("duplicate category id {id}")));
            }
            if !names.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate category name {name:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.entries.iter().any(|(i, _)| *i == id)
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, n)| n.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.entries.iter().map(|(i, n)| (*i, n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    pub dims: ImageDims,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub classes: ClassTable,
}

impl Dataset {
    /// Checks referential integrity and box bounds.
    pub fn validate(&self) -> Result<()> {
        let mut image_ids = BTreeMap::new();
        for im in &self.images {
            if image_ids.insert(im.id, im.dims).is_some() {
                return Err(Error::Validation(format!("duplicate image id {}", im.id)));
            }
        }
        let mut ann_ids = BTreeSet::new();
        let mut dangling_images = BTreeSet::new();
        let mut dangling_classes = BTreeSet::new();
        for a in &self.annotations {
            if !ann_ids.insert(a.annotation_id) {
                return Err(Error::Validation(format!("duplicate annotation id {}", a.annotation_id)));
            }
            match image_ids.get(&a.image_id) {
                None => {
                    dangling_images.insert(a.image_id);
                }
                Some(&dims) => {
                    if geometry::clip(&a.bbox, dims) != a.bbox {
                        return Err(Error::Validation(format!(
                            "annotation {} extends outside image {}",
                            a.annotation_id, a.image_id
                        )));
                    }
                }
            }
            if !self.classes.contains(a.class_id) {
                dangling_classes.insert(a.class_id);
            }
        }
        if !dangling_images.is_empty() {
            return Err(Error::Validation(format!("annotations reference unknown image ids {dangling_images:?}")));
        }
        if !dangling_classes.is_empty() {
            return Err(Error::Validation(format!(
                "annotations reference unknown category ids {dangling_classes:?}"
            )));
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|im| im.id == id)
    }
}

// Wire formats. Unknown fields (segmentation, licenses, 6D pose, depth, ...)
// are ignored on input.

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    #[serde(default)]
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    #[serde(default, skip_deserializing)]
    area: f64,
    #[serde(default, skip_deserializing)]
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u32,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supercategory: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoResult {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
    /// Optional per-edge bin probabilities (left, top, right, bottom).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox_distribution: Option<[Vec<f64>; 4]>,
}

fn json_error(bytes: &[u8], e: serde_json::Error) -> Error {
    // serde_json reports 1-based line/column; turn that into a byte offset.
    let mut line = 1;
    let mut offset = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if line == e.line() {
            offset = i;
            break;
        }
        if b == b'\n' {
            line += 1;
        }
        offset = i + 1;
    }
    Error::Parse { offset: (offset + e.column().saturating_sub(1)).min(bytes.len()), message: e.to_string() }
}

/// Parses a COCO annotation file. Boxes arrive as `[x, y, w, h]` and are
/// stored as corners, clipped to their image. Referential integrity and
/// positive box area are enforced.
pub fn parse_coco(bytes: &[u8]) -> Result<Dataset> {
    let file: CocoFile = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, e))?;

    let classes = ClassTable::new(file.categories.into_iter().map(|c| (c.id, c.name)).collect())?;
    let images = file
        .images
        .into_iter()
        .map(|im| {
            let dims = ImageDims::new(im.width, im.height)
                .map_err(|_| Error::Validation(format!("image {} has zero width or height", im.id)))?;
            Ok(ImageInfo { id: im.id, file_name: im.file_name, dims })
        })
        .collect::<Result<Vec<_>>>()?;

    let dims_by_id: BTreeMap<u64, ImageDims> = images.iter().map(|im| (im.id, im.dims)).collect();
    let mut annotations = Vec::with_capacity(file.annotations.len());
    for a in file.annotations {
        let [x, y, w, h] = a.bbox;
        if w < 0.0 || h < 0.0 {
            return Err(Error::Validation(format!("annotation {} has negative width or height", a.id)));
        }
        let mut bbox =
            BBox::from_xywh(x, y, w, h).map_err(|e| Error::Validation(format!("annotation {}: {e}", a.id)))?;
        if let Some(dims) = dims_by_id.get(&a.image_id) {
            bbox = geometry::clip(&bbox, *dims);
        }
        annotations.push(Annotation::new(bbox, a.category_id, a.image_id, a.id)?);
    }

    let ds = Dataset { images, annotations, classes };
    ds.validate()?;
    Ok(ds)
}

/// Serializes a dataset back to COCO JSON.
pub fn to_coco_json(ds: &Dataset) -> Result<String> {
    let file = CocoFile {
        images: ds
            .images
            .iter()
            .map(|im| CocoImage {
                id: im.id,
                file_name: im.file_name.clone(),
                width: im.dims.width,
                height: im.dims.height,
            })
            .collect(),
        annotations: ds
            .annotations
            .iter()
            .map(|a| CocoAnnotation {
                id: a.annotation_id,
                image_id: a.image_id,
                category_id: a.class_id,
                bbox: a.bbox.to_xywh(),
                area: a.bbox.area(),
                iscrowd: 0,
            })
            .collect(),
        categories: ds
            .classes
            .iter()
            .map(|(id, name)| CocoCategory { id, name: name.to_string(), supercategory: None })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::invalid(e.to_string()))
}

/// One entry of a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub detection: Detection,
    pub distribution: Option<EdgeDistribution>,
}

/// Parses a COCO results array. When `classes` is given, every category id
/// must resolve in it.
pub fn parse_prediction_records(bytes: &[u8], classes: Option<&ClassTable>) -> Result<Vec<PredictionRecord>> {
    let records: Vec<CocoResult> = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, e))?;
    if let Some(classes) = classes {
        let unknown: BTreeSet<u32> = records
            .iter()
            .map(|r| r.category_id)
            .filter(|c| !classes.contains(*c))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownCategories(unknown.into_iter().collect()));
        }
    }
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::Validation(format!("prediction {i}: score {} outside [0, 1]", r.score)));
            }
            let [x, y, w, h] = r.bbox;
            let bbox = BBox::from_xywh(x, y, w, h).map_err(|e| Error::Validation(format!("prediction {i}: {e}")))?;
            let distribution = r
                .bbox_distribution
                .map(EdgeDistribution::new)
                .transpose()
                .map_err(|e| Error::Validation(format!("prediction {i}: {e}")))?;
            Ok(PredictionRecord { detection: Detection::new(bbox, r.category_id, r.score, r.image_id)?, distribution })
        })
        .collect()
}

/// Parses a COCO results array into detections, checking scores and
/// category ids against `classes`.
pub fn parse_predictions(bytes: &[u8], classes: &ClassTable) -> Result<Vec<Detection>> {
    Ok(parse_prediction_records(bytes, Some(classes))?
        .into_iter()
        .map(|r| r.detection)
        .collect())
}

/// Serializes detections as a COCO results array.
pub fn to_results_json(dets: &[Detection]) -> Result<String> {
    let records: Vec<CocoResult> = dets
        .iter()
        .map(|d| CocoResult {
            image_id: d.image_id,
            category_id: d.class_id,
            bbox: d.bbox.to_xywh(),
            score: d.score,
            bbox_distribution: None,
        })
        .collect();
    serde_json::to_string_pretty(&records).map_err(|e| Error::invalid(e.to_string()))
}

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormalizationStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::invalid("mean and std need the same, non-zero channel count"));
        }
        if let Some(s) = std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("standard deviation must be positive, got {s}")));
        }
        Ok(Self { mean, std })
    }

    pub fn single(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![mean], vec![std])
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

fn check_channels(values: &[f64], stats: &NormalizationStats) -> Result<()> {
    if !values.len().is_multiple_of(stats.channels()) {
        return Err(Error::invalid(format!(
            "{} values do not divide into {} interleaved channels",
            values.len(),
            stats.channels()
        )));
    }
    Ok(())
}

/// `(v - mean) / std` per channel; values are channel-interleaved.
pub fn normalize_pixels(values: &[f64], stats: &NormalizationStats) -> Result<Vec<f64>> {
    check_channels(values, stats)?;
    let c = stats.channels();
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - stats.mean[i % c]) / stats.std[i % c])
        .collect())
}

pub fn denormalize_pixels(values: &[f64], stats: &NormalizationStats) -> Result<Vec<f64>> {
    check_channels(values, stats)?;
    let c = stats.channels();
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, v)| v * stats.std[i % c] + stats.mean[i % c])
        .collect())
}

/// Scale range sampled by [`AugmentOp::RandomScale`] in the default policy.
pub const DEFAULT_SCALE_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    FlipHorizontal,
    Rotate90,
    Scale { sx: f64, sy: f64 },
    /// Flip each image with probability `p`.
    RandomFlip { p: f64 },
    /// Rotate each image by a uniformly drawn multiple of 90°.
    RandomRotate90,
    /// Isotropic scale drawn uniformly from `[min, max]` per image.
    RandomScale { min: f64, max: f64 },
}

impl AugmentOp {
    /// Seeded flip, quarter-turn and mild rescale.
    pub fn default_policy() -> Vec<AugmentOp> {
        vec![
            AugmentOp::RandomFlip { p: 0.5 },
            AugmentOp::RandomRotate90,
            AugmentOp::RandomScale { min: DEFAULT_SCALE_RANGE.0, max: DEFAULT_SCALE_RANGE.1 },
        ]
    }

    fn validate(&self) -> Result<()> {
        match *self {
            AugmentOp::Scale { sx, sy } if !(sx > 0.0 && sy > 0.0) => {
                Err(Error::invalid(format!("scale factors must be positive, got ({sx}, {sy})")))
            }
            AugmentOp::RandomFlip { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::invalid(format!("flip probability {p} outside [0, 1]")))
            }
            AugmentOp::RandomScale { min, max } if !(min > 0.0 && min <= max && max.is_finite()) => {
                Err(Error::invalid(format!("invalid scale range [{min}, {max}]")))
            }
            _ => Ok(()),
        }
    }
}

/// A concrete transform after any random parameters are drawn.
#[derive(Debug, Clone, Copy)]
enum Transform {
    Flip,
    Rotate,
    Scale(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub dataset: Dataset,
    /// Annotations removed because they collapsed to zero area.
    pub dropped: usize,
}

fn scaled_dims(dims: ImageDims, sx: f64, sy: f64) -> ImageDims {
    let side = |v: u32, s: f64| ((f64::from(v) * s).round() as u32).max(1);
    ImageDims { width: side(dims.width, sx), height: side(dims.height, sy) }
}

/// Applies `ops` in order to every image and its annotations.
///
/// Random ops draw their parameters per image from a ChaCha8 stream seeded
/// with `seed`, visiting images in dataset order, so output depends only on
/// the inputs.
pub fn augment(ds: &Dataset, ops: &[AugmentOp], seed: u64) -> Result<Augmented> {
    for op in ops {
        op.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, a) in ds.annotations.iter().enumerate() {
        by_image.entry(a.image_id).or_default().push(i);
    }

    let mut new_boxes: Vec<Option<BBox>> = ds.annotations.iter().map(|a| Some(a.bbox)).collect();
    let mut images = Vec::with_capacity(ds.images.len());
    for im in &ds.images {
        let mut plan = Vec::new();
        for op in ops {
            match *op {
                AugmentOp::FlipHorizontal => plan.push(Transform::Flip),
                AugmentOp::Rotate90 => plan.push(Transform::Rotate),
                AugmentOp::Scale { sx, sy } => plan.push(Transform::Scale(sx, sy)),
                AugmentOp::RandomFlip { p } => {
                    if rng.gen_bool(p) {
                        plan.push(Transform::Flip);
                    }
                }
                AugmentOp::RandomRotate90 => {
                    for _ in 0..rng.gen_range(0..4) {
                        plan.push(Transform::Rotate);
                    }
                }
                AugmentOp::RandomScale { min, max } => {
                    let s = if min == max { min } else { rng.gen_range(min..=max) };
                    plan.push(Transform::Scale(s, s));
                }
            }
        }

        let mut dims = im.dims;
        let members = by_image.get(&im.id).map(Vec::as_slice).unwrap_or(&[]);
        for t in plan {
            let next_dims = match t {
                Transform::Flip => dims,
                Transform::Rotate => ImageDims { width: dims.height, height: dims.width },
                Transform::Scale(sx, sy) => scaled_dims(dims, sx, sy),
            };
            for &i in members {
                let Some(b) = new_boxes[i] else { continue };
                let b = geometry::clip(&b, dims);
                let moved = match t {
                    Transform::Flip => geometry::flip_horizontal(&b, dims)?,
                    Transform::Rotate => geometry::rotate90(&b, dims)?.0,
                    Transform::Scale(sx, sy) => geometry::clip(&geometry::scale(&b, sx, sy)?, next_dims),
                };
                new_boxes[i] = (moved.area() > 0.0).then_some(moved);
            }
            dims = next_dims;
        }
        images.push(ImageInfo { id: im.id, file_name: im.file_name.clone(), dims });
    }

    let mut annotations = Vec::with_capacity(ds.annotations.len());
    let mut dropped = 0;
    for (a, b) in ds.annotations.iter().zip(new_boxes) {
        match b {
            Some(bbox) => annotations.push(Annotation { bbox, ..*a }),
            None => dropped += 1,
        }
    }
    let dataset = Dataset { images, annotations, classes: ds.classes.clone() };
    dataset.validate()?;
    Ok(Augmented { dataset, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 1, "file_name": "a.jpg", "width": 100, "height": 80}],
        "annotations": [{"id": 5, "image_id": 1, "category_id": 3, "bbox": [10, 20, 30, 40], "iscrowd": 0}],
        "categories": [{"id": 3, "name": "004_sugar_box"}]
    }"#;

    #[test]
    fn parses_minimal_file() {
        let ds = parse_coco(MINIMAL.as_bytes()).unwrap();
        assert_eq!(ds.images.len(), 1);
        assert_eq!(ds.annotations.len(), 1);
        assert_eq!(ds.classes.len(), 1);
        assert_eq!(ds.annotations[0].bbox, BBox::new(10.0, 20.0, 40.0, 60.0).unwrap());
        assert_eq!(ds.classes.name(3), Some("004_sugar_box"));
    }

    #[test]
    fn ignores_extra_fields() {
        let json = MINIMAL.replace("\"iscrowd\": 0", "\"iscrowd\": 0, \"pose\": [[1,0,0],[0,1,0]], \"segmentation\": []");
        assert!(parse_coco(json.as_bytes()).is_ok());
    }

    #[test]
    fn dangling_category_is_named() {
        let json = MINIMAL.replace("\"category_id\": 3", "\"category_id\": 9");
        let err = parse_coco(json.as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains('9')), "{err}");
    }

    #[test]
    fn dangling_image_and_bad_boxes_rejected() {
        let json = MINIMAL.replace("\"image_id\": 1", "\"image_id\": 2");
        assert!(matches!(parse_coco(json.as_bytes()), Err(Error::Validation(m)) if m.contains('2')));
        let json = MINIMAL.replace("[10, 20, 30, 40]", "[10, 20, -30, 40]");
        assert!(matches!(parse_coco(json.as_bytes()), Err(Error::Validation(m)) if m.contains("negative")));
        let json = MINIMAL.replace("[10, 20, 30, 40]", "[10, 20, 0, 40]");
        assert!(parse_coco(json.as_bytes()).is_err());
        let json = MINIMAL.replace("[10, 20, 30, 40]", "[100, 20, 30, 40]");
        assert!(parse_coco(json.as_bytes()).is_err());
        let json = MINIMAL.replace("[10, 20, 30, 40]", "[90, 20, 30, 40]");
        let clipped = parse_coco(json.as_bytes()).unwrap();
        assert_eq!(clipped.annotations[0].bbox, BBox::new(90.0, 20.0, 100.0, 60.0).unwrap());
    }

    #[test]
    fn malformed_json_reports_offset() {
        let text = "{\"images\": [}";
        match parse_coco(text.as_bytes()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\n  \"images\": ,\n}";
        match parse_coco(text.as_bytes()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], ","),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_classes_rejected() {
        assert!(ClassTable::new(vec![(1, "a".into()), (1, "b".into())]).is_err());
        assert!(ClassTable::new(vec![(1, "a".into()), (2, "a".into())]).is_err());
        assert!(ClassTable::new(vec![(1, " ".into())]).is_err());
    }

    #[test]
    fn prediction_examples() {
        let classes = ClassTable::new(vec![(1, "mug".into())]).unwrap();
        assert!(parse_predictions(b"[]", &classes).unwrap().is_empty());

        let one = br#"[{"image_id": 4, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.73}]"#;
        let dets = parse_predictions(one, &classes).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap());
        assert_eq!((dets[0].score, dets[0].image_id), (0.73, 4));

        let high = br#"[{"image_id": 4, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 1.5}]"#;
        assert!(matches!(parse_predictions(high, &classes), Err(Error::Validation(_))));

        let stray = br#"[{"image_id": 4, "category_id": 8, "bbox": [0, 0, 10, 10], "score": 0.5}]"#;
        assert_eq!(parse_predictions(stray, &classes).unwrap_err(), Error::UnknownCategories(vec![8]));
    }

    #[test]
    fn records_carry_optional_distributions() {
        let json = br#"[
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 4, 4], "score": 0.5,
             "bbox_distribution": [[0.5, 0.5], [1, 0], [0, 1], [0.25, 0.75]]},
            {"image_id": 1, "category_id": 2, "bbox": [0, 0, 4, 4], "score": 0.5}
        ]"#;
        let recs = parse_prediction_records(json, None).unwrap();
        assert_eq!(recs[0].distribution.as_ref().unwrap().row(3), &[0.25, 0.75]);
        assert!(recs[1].distribution.is_none());

        let bad = br#"[{"image_id": 1, "category_id": 1, "bbox": [0, 0, 4, 4], "score": 0.5,
             "bbox_distribution": [[0.5, 0.6], [1, 0], [0, 1], [0, 1]]}]"#;
        assert!(matches!(parse_prediction_records(bad, None), Err(Error::Validation(_))));
    }

    #[test]
    fn results_round_trip() {
        let classes = ClassTable::new(vec![(1, "mug".into())]).unwrap();
        let one = br#"[{"image_id": 4, "category_id": 1, "bbox": [1.5, 2, 10, 10.25], "score": 0.73}]"#;
        let dets = parse_predictions(one, &classes).unwrap();
        let again = parse_predictions(to_results_json(&dets).unwrap().as_bytes(), &classes).unwrap();
        assert_eq!(dets, again);
    }

    #[test]
    fn normalize_examples() {
        let stats = NormalizationStats::single(128.0, 64.0).unwrap();
        assert_eq!(normalize_pixels(&[0.0, 128.0, 255.0], &stats).unwrap(), vec![-2.0, 0.0, 1.984375]);
        let id = NormalizationStats::single(0.0, 1.0).unwrap();
        assert_eq!(normalize_pixels(&[3.5, -1.0], &id).unwrap(), vec![3.5, -1.0]);
        assert_eq!(normalize_pixels(&[128.0; 4], &stats).unwrap(), vec![0.0; 4]);
        assert!(NormalizationStats::single(0.0, 0.0).is_err());
        assert!(NormalizationStats::single(0.0, -1.0).is_err());
    }

    #[test]
    fn normalize_is_per_channel() {
        let stats = NormalizationStats::new(vec![10.0, 20.0, 30.0], vec![1.0, 2.0, 5.0]).unwrap();
        let v = normalize_pixels(&[11.0, 22.0, 35.0, 10.0, 20.0, 30.0], &stats).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(normalize_pixels(&[1.0, 2.0], &stats).is_err());
    }

    fn square_dataset() -> Dataset {
        Dataset {
            images: vec![ImageInfo { id: 1, file_name: "x.png".into(), dims: ImageDims::new(100, 100).unwrap() }],
            annotations: vec![Annotation::new(BBox::new(10.0, 10.0, 20.0, 20.0).unwrap(), 0, 1, 1).unwrap()],
            classes: ClassTable::new(vec![(0, "001_chips_can".into())]).unwrap(),
        }
    }

    #[test]
    fn augment_examples() {
        let ds = square_dataset();
        assert_eq!(augment(&ds, &[], 0).unwrap().dataset, ds);

        let twice = augment(&ds, &[AugmentOp::FlipHorizontal, AugmentOp::FlipHorizontal], 0).unwrap();
        assert_eq!(twice.dataset, ds);

        let scaled = augment(&ds, &[AugmentOp::Scale { sx: 2.0, sy: 2.0 }], 0).unwrap().dataset;
        assert_eq!(scaled.images[0].dims, ImageDims::new(200, 200).unwrap());
        assert_eq!(scaled.annotations[0].bbox, BBox::new(20.0, 20.0, 40.0, 40.0).unwrap());
    }

    #[test]
    fn augment_drops_collapsed_boxes() {
        let ds = Dataset {
            images: vec![ImageInfo { id: 1, file_name: "x.png".into(), dims: ImageDims::new(7, 7).unwrap() }],
            annotations: vec![
                Annotation::new(BBox::new(0.0, 0.0, 5.0, 5.0).unwrap(), 0, 1, 1).unwrap(),
                Annotation::new(BBox::new(6.9, 0.0, 7.0, 1.0).unwrap(), 0, 1, 2).unwrap(),
            ],
            classes: ClassTable::new(vec![(0, "025_mug".into())]).unwrap(),
        };
        // 7 * 0.3 = 2.1 rounds to 2; the sliver at x = 2.07..2.1 clips to nothing.
        let out = augment(&ds, &[AugmentOp::Scale { sx: 0.3, sy: 0.3 }], 0).unwrap();
        assert_eq!(out.dataset.images[0].dims, ImageDims::new(2, 2).unwrap());
        assert_eq!(out.dropped, 1);
        assert_eq!(out.dataset.annotations.len(), 1);
        assert_eq!(out.dataset.annotations[0].annotation_id, 1);
    }

    #[test]
    fn augment_is_seed_deterministic() {
        let ds = square_dataset();
        let policy = AugmentOp::default_policy();
        let a = augment(&ds, &policy, 17).unwrap();
        let b = augment(&ds, &policy, 17).unwrap();
        assert_eq!(a, b);
        assert!(augment(&ds, &[AugmentOp::RandomScale { min: 2.0, max: 1.0 }], 0).is_err());
    }
}
