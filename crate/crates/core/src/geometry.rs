//! Boxes, overlap, the per-pair spatial relation vector and background-grid construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::matrix::{dot, norm};

/// Axis-aligned box in pixel coordinates of a `image_width × image_height` image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, image_width: f64, image_height: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            image_width,
            image_height,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.image_width > 0.0
            && self.image_height > 0.0
            && 0.0 <= self.x_min
            && self.x_min <= self.x_max
            && self.x_max <= self.image_width
            && 0.0 <= self.y_min
            && self.y_min <= self.y_max
            && self.y_max <= self.image_height;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid box {self:?}")))
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area as a fraction of the image.
    pub fn area_fraction(&self) -> f64 {
        self.area() / (self.image_width * self.image_height)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && other.x_max <= self.x_max && other.y_max <= self.y_max
    }

    /// Same box moved by `(dx, dy)`; the caller keeps it inside the image.
    pub fn translated(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
            ..*self
        }
    }
}

/// Intersection over union; a zero-area union yields 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// `[x_min/W, y_min/H, x_max/W, y_max/H, (x_max−x_min)/W, (y_max−y_min)/H]`.
pub fn box_encoding(b: &BoundingBox) -> [f64; 6] {
    let (w, h) = (b.image_width, b.image_height);
    [
        b.x_min / w,
        b.y_min / h,
        b.x_max / w,
        b.y_max / h,
        (b.x_max - b.x_min) / w,
        (b.y_max - b.y_min) / h,
    ]
}

/// Something with a box and a feature vector: a proposal or a background patch.
pub trait Region {
    fn bbox(&self) -> &BoundingBox;
    fn features(&self) -> &[f64];
}

/// Foreground region proposal: a candidate box and its appearance features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    pub bbox: BoundingBox,
    pub features: Vec<f64>,
}

/// One cell of the background grid with its pooled features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundPatch {
    pub bbox: BoundingBox,
    pub features: Vec<f64>,
}

impl Region for RegionProposal {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn features(&self) -> &[f64] {
        &self.features
    }
}

impl Region for BackgroundPatch {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn features(&self) -> &[f64] {
        &self.features
    }
}

pub const SPATIAL_WIDTH: usize = 16;

/// `[ℓ_i (6), ℓ_j (6), ξ, IoU, IoU/a_i, IoU/a_j]` for an ordered pair of regions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialRelation(pub [f64; SPATIAL_WIDTH]);

impl SpatialRelation {
    pub fn similarity(&self) -> f64 {
        self.0[12]
    }

    pub fn iou(&self) -> f64 {
        self.0[13]
    }

    pub fn iou_over_left_area(&self) -> f64 {
        self.0[14]
    }

    pub fn iou_over_right_area(&self) -> f64 {
        self.0[15]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine of two feature vectors; 0 when either has zero norm.
pub fn feature_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub fn spatial_relation<L: Region + ?Sized, R: Region + ?Sized>(i: &L, j: &R) -> Result<SpatialRelation> {
    if i.features().len() != j.features().len() {
        return Err(Error::Shape {
            context: "spatial relation feature width".into(),
            expected: i.features().len(),
            actual: j.features().len(),
        });
    }
    let (bi, bj) = (i.bbox(), j.bbox());
    let overlap = iou(bi, bj);
    let ratio = |a: f64| if a > 0.0 { overlap / a } else { 0.0 };
    let mut s = [0.0; SPATIAL_WIDTH];
    s[..6].copy_from_slice(&box_encoding(bi));
    s[6..12].copy_from_slice(&box_encoding(bj));
    s[12] = feature_similarity(i.features(), j.features());
    s[13] = overlap;
    s[14] = ratio(bi.area_fraction());
    s[15] = ratio(bj.area_fraction());
    Ok(SpatialRelation(s))
}

/// `g × g` equal cells tiling a `width × height` image, row-major from the top-left.
pub fn background_grid(width: f64, height: f64, g: usize) -> Result<Vec<BoundingBox>> {
    if g == 0 {
        return Err(Error::InvalidArgument("background grid size must be positive".into()));
    }
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::InvalidArgument("image dimensions must be positive".into()));
    }
    let edge = |extent: f64, k: usize| grid_edge(extent, k, g);
    let mut cells = Vec::with_capacity(g * g);
    for row in 0..g {
        for col in 0..g {
            cells.push(BoundingBox {
                x_min: edge(width, col),
                x_max: edge(width, col + 1),
                y_min: edge(height, row),
                y_max: edge(height, row + 1),
                image_width: width,
                image_height: height,
            });
        }
    }
    Ok(cells)
}

fn grid_edge(extent: f64, k: usize, g: usize) -> f64 {
    if k == g {
        extent
    } else {
        extent * k as f64 / g as f64
    }
}

/// Index of the grid cell holding point `(x, y)`, using the same edges as [`background_grid`].
/// Cells are half-open except at the far edges.
pub fn grid_cell_of(x: f64, y: f64, width: f64, height: f64, g: usize) -> usize {
    let locate = |v: f64, extent: f64| (1..g).take_while(|&k| grid_edge(extent, k, g) <= v).count();
    locate(y, height) * g + locate(x, width)
}

/// Pairwise evaluations for `n` proposals and `m` background patches: `n² + n·m`.
pub fn comparison_count(n: f64, m: f64) -> f64 {
    n * n + n * m
}

/// Pairwise evaluations over every cell of a `d × d` feature map: `d⁴`.
pub fn grid_comparison_count(d: u64) -> u64 {
    d.pow(4)
}
