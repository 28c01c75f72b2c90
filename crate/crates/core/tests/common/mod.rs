//! Independent reference implementations and fixtures shared by the
//! integration suites. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use detkit_core::geometry::{BBox, ImageDims};
use detkit_core::ingest::{ClassTable, Dataset, ImageInfo};
use detkit_core::metrics::Annotation;
use detkit_core::postprocess::Detection;
use rand::Rng;

/// Object names used by the 13-class fixtures.
pub const OBJECTS: [&str; 13] = [
    "001_chips_can",
    "003_cracker_box",
    "004_sugar_box",
    "005_tomato_soup_can",
    "011_banana",
    "012_strawberry",
    "013_apple",
    "017_orange",
    "019_pitcher_base",
    "025_mug",
    "055_baseball",
    "056_tennis_ball",
    "057_racquetball",
];

pub fn object_classes() -> ClassTable {
    ClassTable::new(
        OBJECTS
            .iter()
            .map(|n| (n[..3].parse::<u32>().unwrap(), n.to_string()))
            .collect(),
    )
    .unwrap()
}

pub fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).unwrap()
}

/// Rasterized IoU: counts unit cells `[i, i+1) × [j, j+1)` covered by each
/// integer-coordinate box on a `size × size` canvas, subdivided `sub` times.
pub fn raster_iou(a: [i64; 4], b: [i64; 4], size: i64, sub: i64) -> f64 {
    let inside = |r: [i64; 4], x: i64, y: i64| r[0] * sub <= x && x < r[2] * sub && r[1] * sub <= y && y < r[3] * sub;
    let (mut inter, mut union) = (0u64, 0u64);
    for x in 0..size * sub {
        for y in 0..size * sub {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pixel mask of an integer box on a `w × h` image, indexed `[y][x]`.
pub fn mask(b: [i64; 4], w: usize, h: usize) -> Vec<Vec<bool>> {
    (0..h)
        .map(|y| (0..w).map(|x| b[0] <= x as i64 && (x as i64) < b[2] && b[1] <= y as i64 && (y as i64) < b[3]).collect())
        .collect()
}

/// Tight bounding box of the set pixels, as continuous corners.
pub fn mask_bounds(m: &[Vec<bool>]) -> Option<[i64; 4]> {
    let mut r: Option<[i64; 4]> = None;
    for (y, row) in m.iter().enumerate() {
        for (x, &on) in row.iter().enumerate() {
            if on {
                let (x, y) = (x as i64, y as i64);
                r = Some(match r {
                    None => [x, y, x + 1, y + 1],
                    Some(q) => [q[0].min(x), q[1].min(y), q[2].max(x + 1), q[3].max(y + 1)],
                });
            }
        }
    }
    r
}

/// Mirror every row of the mask.
pub fn flip_mask(m: &[Vec<bool>]) -> Vec<Vec<bool>> {
    m.iter().map(|row| row.iter().rev().copied().collect()).collect()
}

/// Rotate a `w × h` mask 90° clockwise into an `h × w` mask.
pub fn rotate_mask(m: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let h = m.len();
    let w = m[0].len();
    // New pixel (nx, ny) came from old (x = ny, y = h - 1 - nx).
    (0..w).map(|ny| (0..h).map(|nx| m[h - 1 - nx][ny]).collect()).collect()
}

fn plain_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    let union = a.width() * a.height() + b.width() * b.height() - inter;
    if inter == 0.0 || union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Positions ranked by descending score, earlier position first on ties,
/// found by repeated selection.
fn rank(scores: &[f64]) -> Vec<usize> {
    let mut used = vec![false; scores.len()];
    let mut out = Vec::with_capacity(scores.len());
    for _ in 0..scores.len() {
        let mut best: Option<usize> = None;
        for i in 0..scores.len() {
            if !used[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        out.push(b);
    }
    out
}

/// Reference NMS: in rank order, a box survives iff no earlier survivor
/// overlaps it by more than `t`.
pub fn brute_nms(dets: &[Detection], t: f64) -> Vec<Detection> {
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let order = rank(&scores);
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let blocked = kept.iter().any(|&k| plain_iou(&dets[k].bbox, &dets[i].bbox) > t);
        if !blocked {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| dets[i]).collect()
}

/// Exact all-point interpolated AP from brute-force prefix counting.
pub fn all_point_ap(labels: &[(f64, bool)], total_gt: usize) -> f64 {
    let scores: Vec<f64> = labels.iter().map(|l| l.0).collect();
    let order = rank(&scores);
    let n = order.len();
    let mut prec = Vec::with_capacity(n);
    let mut rec = Vec::with_capacity(n);
    for k in 1..=n {
        let tp = order[..k].iter().filter(|&&i| labels[i].1).count();
        prec.push(tp as f64 / k as f64);
        rec.push(tp as f64 / total_gt as f64);
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for k in 0..n {
        if rec[k] > prev_r {
            let best = prec[k..].iter().cloned().fold(0.0, f64::max);
            area += (rec[k] - prev_r) * best;
            prev_r = rec[k];
        }
    }
    area
}

/// 101-point AP for a class whose true positives all outrank its false
/// positives: precision is 1 up to recall `tp / gt`, then 0.
pub fn clean_ranking_ap(tp: usize, gt: usize) -> f64 {
    let covered = (0..=100usize).filter(|&j| (j as f64) / 100.0 <= tp as f64 / gt as f64 + 1e-12).count();
    covered as f64 / 101.0
}

#[derive(Debug, Clone, Copy)]
pub struct Planted {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub struct PlantedFixture {
    pub dataset: Dataset,
    pub preds: Vec<Detection>,
    pub plan: Vec<(u32, Planted)>,
}

/// Builds a dataset plus predictions with exactly the planted per-class
/// counts. Every object gets its own 40-pixel cell, so no box touches
/// another; true positives sit exactly on their ground truth and score
/// above every false positive.
pub fn planted_fixture(plan: &[(u32, Planted)], classes: ClassTable) -> PlantedFixture {
    const COLS: usize = 16;
    const ROWS: usize = 12;
    let per_image = COLS * ROWS;
    let mut cell = 0usize;
    let mut next_cell = || {
        let c = cell;
        cell += 1;
        let image = (c / per_image) as u64;
        let local = c % per_image;
        let (cx, cy) = ((local % COLS) as f64 * 40.0, (local / COLS) as f64 * 40.0);
        (image, bb(cx + 5.0, cy + 5.0, cx + 35.0, cy + 35.0))
    };

    let mut annotations = Vec::new();
    let mut preds = Vec::new();
    let mut ann_id = 1;
    for &(class_id, p) in plan {
        for k in 0..p.tp + p.fn_ {
            let (image, b) = next_cell();
            annotations.push(Annotation::new(b, class_id, image, ann_id).unwrap());
            ann_id += 1;
            if k < p.tp {
                let score = 0.99 - 0.4 * k as f64 / (p.tp.max(1)) as f64;
                preds.push(Detection::new(b, class_id, score, image).unwrap());
            }
        }
        for k in 0..p.fp {
            let (image, b) = next_cell();
            let score = 0.5 - 0.4 * k as f64 / (p.fp.max(1)) as f64;
            preds.push(Detection::new(b, class_id, score, image).unwrap());
        }
    }
    let n_images = cell.div_ceil(per_image).max(1);
    let images = (0..n_images as u64)
        .map(|id| ImageInfo { id, file_name: format!("{id:04}.jpg"), dims: ImageDims::new(640, 480).unwrap() })
        .collect();
    PlantedFixture { dataset: Dataset { images, annotations, classes }, preds, plan: plan.to_vec() }
}

pub fn random_box<R: Rng>(rng: &mut R, size: f64) -> BBox {
    let x1 = rng.gen_range(0.0..size * 0.9);
    let y1 = rng.gen_range(0.0..size * 0.9);
    let w = rng.gen_range(1.0..size * 0.3);
    let h = rng.gen_range(1.0..size * 0.3);
    bb(x1, y1, (x1 + w).min(size), (y1 + h).min(size))
}
