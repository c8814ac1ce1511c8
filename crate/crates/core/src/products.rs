//! Pseudo-color products: normalized-difference indices rendered through
//! piecewise-linear colormaps, and three-band composites.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{normalize_band, to_byte, unit_to_byte, BandGrid, BandId, NormalizationMethod, Patch, RasterError};

#[derive(Debug, Error, PartialEq)]
pub enum ProductError {
    #[error("dimension mismatch: {left_name} is {}x{} but {right_name} is {}x{}", .left.0, .left.1, .right.0, .right.1)]
    DimensionMismatch {
        left_name: String,
        left: (usize, usize),
        right_name: String,
        right: (usize, usize),
    },
    #[error("product {product} needs band {band}, which the patch does not have")]
    MissingBand { product: ProductId, band: BandId },
    #[error("invalid colormap: {0}")]
    InvalidColormap(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Evenly spaced RGB anchors over a value domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    points: Vec<[f32; 3]>,
    lo: f32,
    hi: f32,
}

impl Colormap {
    pub fn new(points: Vec<[f32; 3]>, lo: f32, hi: f32) -> Result<Self, ProductError> {
        if points.len() < 2 {
            return Err(ProductError::InvalidColormap("need at least two control points".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ProductError::InvalidColormap(format!("empty domain [{lo}, {hi}]")));
        }
        if points.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(ProductError::InvalidColormap("components must lie in [0, 1]".into()));
        }
        Ok(Self { points, lo, hi })
    }

    /// Red, yellow, green over [-1, 1].
    pub fn ndvi() -> Self {
        Self::new(vec![[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]], -1.0, 1.0).unwrap()
    }

    /// White, white, blue over [-0.8, 0.8].
    pub fn ndwi() -> Self {
        Self::new(vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.0, 0.0, 1.0]], -0.8, 0.8).unwrap()
    }

    /// Red, green, blue over [-1, 1].
    pub fn ndmi() -> Self {
        Self::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], -1.0, 1.0).unwrap()
    }

    pub fn domain(&self) -> (f32, f32) {
        (self.lo, self.hi)
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    /// Unit-range color for one value. NaN maps to the low end.
    pub fn color(&self, value: f32) -> [f32; 3] {
        let v = if value.is_nan() { self.lo } else { value.clamp(self.lo, self.hi) };
        let segments = self.points.len() - 1;
        let pos = (v - self.lo) / (self.hi - self.lo) * segments as f32;
        let i = (pos.floor() as usize).min(segments - 1);
        let frac = (pos - i as f32).clamp(0.0, 1.0);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (a[c] + (b[c] - a[c]) * frac).clamp(0.0, 1.0);
        }
        out
    }

    pub fn color_bytes(&self, value: f32) -> [u8; 3] {
        self.color(value).map(|c| unit_to_byte(c).expect("clamped to unit range"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProductId {
    TrueColor,
    FalseColor,
    #[serde(rename = "NDVI")]
    Ndvi,
    #[serde(rename = "NDWI")]
    Ndwi,
    #[serde(rename = "NDMI_B11")]
    NdmiB11,
    #[serde(rename = "NDMI_B12")]
    NdmiB12,
}

impl ProductId {
    /// The full six-image set, in prompt order.
    pub const DEFAULT_SELECTION: [ProductId; 6] = [
        ProductId::TrueColor,
        ProductId::FalseColor,
        ProductId::Ndvi,
        ProductId::Ndwi,
        ProductId::NdmiB11,
        ProductId::NdmiB12,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProductId::TrueColor => "TrueColor",
            ProductId::FalseColor => "FalseColor",
            ProductId::Ndvi => "NDVI",
            ProductId::Ndwi => "NDWI",
            ProductId::NdmiB11 => "NDMI_B11",
            ProductId::NdmiB12 => "NDMI_B12",
        }
    }

    pub fn spec(self) -> ProductSpec {
        let kind = match self {
            ProductId::TrueColor => ProductKind::Composite {
                r: BandId::B04,
                g: BandId::B03,
                b: BandId::B02,
            },
            ProductId::FalseColor => ProductKind::Composite {
                r: BandId::B08,
                g: BandId::B04,
                b: BandId::B03,
            },
            ProductId::Ndvi => ProductKind::Index {
                plus: BandId::B08,
                minus: BandId::B04,
                colormap: Colormap::ndvi(),
            },
            ProductId::Ndwi => ProductKind::Index {
                plus: BandId::B03,
                minus: BandId::B08,
                colormap: Colormap::ndwi(),
            },
            ProductId::NdmiB11 => ProductKind::Index {
                plus: BandId::B8A,
                minus: BandId::B11,
                colormap: Colormap::ndmi(),
            },
            ProductId::NdmiB12 => ProductKind::Index {
                plus: BandId::B8A,
                minus: BandId::B12,
                colormap: Colormap::ndmi(),
            },
        };
        ProductSpec { product_id: self, kind }
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProductId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProductId::DEFAULT_SELECTION
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown product `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProductKind {
    Composite { r: BandId, g: BandId, b: BandId },
    Index { plus: BandId, minus: BandId, colormap: Colormap },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpec {
    pub product_id: ProductId,
    pub kind: ProductKind,
}

impl ProductSpec {
    pub fn bands(&self) -> Vec<BandId> {
        match &self.kind {
            ProductKind::Composite { r, g, b } => vec![*r, *g, *b],
            ProductKind::Index { plus, minus, .. } => vec![*plus, *minus],
        }
    }
}

/// Single-channel index values in [-1, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// An 8-bit RGB image, row-major, no alpha.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoImage {
    pub product_id: ProductId,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl PseudoImage {
    pub fn raw_rgb(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }
}

fn check_same_dims(pairs: &[(&str, &BandGrid)]) -> Result<(), ProductError> {
    let (first_name, first) = pairs[0];
    for &(name, grid) in &pairs[1..] {
        if grid.dims() != first.dims() {
            return Err(ProductError::DimensionMismatch {
                left_name: first_name.to_string(),
                left: first.dims(),
                right_name: name.to_string(),
                right: grid.dims(),
            });
        }
    }
    Ok(())
}

/// `(plus - minus) / (plus + minus)`, 0 where the denominator is 0.
pub fn normalized_difference(plus: &BandGrid, minus: &BandGrid) -> Result<IndexGrid, ProductError> {
    check_same_dims(&[("plus", plus), ("minus", minus)])?;
    let values = plus
        .values()
        .iter()
        .zip(minus.values())
        .map(|(&a, &b)| {
            let den = a + b;
            if den == 0.0 {
                0.0
            } else {
                ((a - b) / den).clamp(-1.0, 1.0)
            }
        })
        .collect();
    Ok(IndexGrid {
        width: plus.width(),
        height: plus.height(),
        values,
    })
}

pub fn apply_colormap(product_id: ProductId, index: &IndexGrid, cmap: &Colormap) -> PseudoImage {
    PseudoImage {
        product_id,
        width: index.width,
        height: index.height,
        pixels: index.values.iter().map(|&v| cmap.color_bytes(v)).collect(),
    }
}

/// Normalizes each band independently and stacks them as R, G, B.
pub fn compose_rgb(
    product_id: ProductId,
    r: &BandGrid,
    g: &BandGrid,
    b: &BandGrid,
    method: NormalizationMethod,
) -> Result<PseudoImage, ProductError> {
    check_same_dims(&[("red", r), ("green", g), ("blue", b)])?;
    let channels = [r, g, b]
        .into_iter()
        .map(|band| normalize_band(band, method).and_then(|n| to_byte(&n)))
        .collect::<Result<Vec<_>, _>>()?;
    let pixels = (0..r.len())
        .map(|i| [channels[0][i], channels[1][i], channels[2][i]])
        .collect();
    Ok(PseudoImage {
        product_id,
        width: r.width(),
        height: r.height(),
        pixels,
    })
}

pub fn render_product(
    patch: &Patch,
    product: ProductId,
    method: NormalizationMethod,
) -> Result<PseudoImage, ProductError> {
    let spec = product.spec();
    let band = |id: BandId| {
        patch
            .band(id)
            .ok_or(ProductError::MissingBand { product, band: id })
    };
    match &spec.kind {
        ProductKind::Composite { r, g, b } => {
            let (rb, gb, bb) = (band(*r)?, band(*g)?, band(*b)?);
            compose_rgb(product, rb, gb, bb, method).map_err(|e| name_bands(e, &spec))
        }
        ProductKind::Index { plus, minus, colormap } => {
            let index = normalized_difference(band(*plus)?, band(*minus)?).map_err(|e| name_bands(e, &spec))?;
            Ok(apply_colormap(product, &index, colormap))
        }
    }
}

fn name_bands(err: ProductError, spec: &ProductSpec) -> ProductError {
    match err {
        ProductError::DimensionMismatch { left, right, .. } => {
            let bands = spec.bands();
            ProductError::DimensionMismatch {
                left_name: format!("{}:{}", spec.product_id, bands[0]),
                left,
                right_name: format!("{}:{}", spec.product_id, bands[bands.len() - 1]),
                right,
            }
        }
        other => other,
    }
}

/// Renders `selection` in order. Each image keeps the native grid of its bands.
pub fn render_products(
    patch: &Patch,
    selection: &[ProductId],
    method: NormalizationMethod,
) -> Result<Vec<PseudoImage>, ProductError> {
    selection
        .iter()
        .map(|&p| render_product(patch, p, method))
        .collect()
}
