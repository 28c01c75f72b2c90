//! Axis-aligned box arithmetic.
//!
//! Boxes use the corner convention `(x1, y1, x2, y2)` over continuous pixel
//! coordinates: a box covers the real region `[x1, x2] × [y1, y2]`, so the
//! unit box `(0, 0, 1, 1)` covers exactly one pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned rectangle with `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let reject = |reason| Err(Error::InvalidBox { x1, y1, x2, y2, reason });
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return reject("coordinates must be finite");
        }
        if x2 < x1 || y2 < y1 {
            return reject("negative extent");
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from COCO `[x, y, width, height]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if w < 0.0 || h < 0.0 {
            return Err(Error::InvalidBox { x1: x, y1: y, x2: x + w, y2: y + h, reason: "negative width or height" });
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// COCO `[x, y, width, height]`.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    fn within(&self, dims: ImageDims) -> bool {
        self.x1 >= 0.0
            && self.y1 >= 0.0
            && self.x2 <= f64::from(dims.width)
            && self.y2 <= f64::from(dims.height)
    }

    fn require_within(&self, dims: ImageDims) -> Result<()> {
        if self.within(dims) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x1: self.x1,
                y1: self.y1,
                x2: self.x2,
                y2: self.y2,
                width: dims.width,
                height: dims.height,
            })
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Image size in pixels. Both sides are positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image dimensions must be positive, got {width}x{height}")));
        }
        Ok(Self { width, height })
    }
}

pub fn area(b: &BBox) -> f64 {
    b.width() * b.height()
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x2.min(b.x2) - a.x1.max(b.x1);
    let h = a.y2.min(b.y2) - a.y1.max(b.y1);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union. Two boxes whose union has zero area score 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Mirrors the box about the vertical centre line of the image.
pub fn flip_horizontal(b: &BBox, dims: ImageDims) -> Result<BBox> {
    b.require_within(dims)?;
    let w = f64::from(dims.width);
    BBox::new(w - b.x2, b.y1, w - b.x1, b.y2)
}

pub fn scale(b: &BBox, sx: f64, sy: f64) -> Result<BBox> {
    if !(sx > 0.0 && sx.is_finite() && sy > 0.0 && sy.is_finite()) {
        return Err(Error::invalid(format!("scale factors must be positive, got sx={sx}, sy={sy}")));
    }
    BBox::new(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy)
}

/// Rotates the image 90° clockwise, mapping `(x, y)` to `(height - y, x)`.
/// Returns the transformed box together with the swapped dimensions.
pub fn rotate90(b: &BBox, dims: ImageDims) -> Result<(BBox, ImageDims)> {
    b.require_within(dims)?;
    let h = f64::from(dims.height);
    let rotated = BBox::new(h - b.y2, b.x1, h - b.y1, b.x2)?;
    Ok((rotated, ImageDims { width: dims.height, height: dims.width }))
}

/// Clamps the box to the image; a box entirely outside collapses to zero area.
pub fn clip(b: &BBox, dims: ImageDims) -> BBox {
    let w = f64::from(dims.width);
    let h = f64::from(dims.height);
    BBox {
        x1: b.x1.clamp(0.0, w),
        y1: b.y1.clamp(0.0, h),
        x2: b.x2.clamp(0.0, w),
        y2: b.y2.clamp(0.0, h),
    }
}
