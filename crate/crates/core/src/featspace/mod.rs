//! Feature spaces and the vectors that live in them.
//!
//! A [`FeatureSpace`] describes the domain of stimuli and templates: raw
//! pixels, a cell-based HOG layout, or an opaque externally supplied space.
//! Noise is sampled with [`sample_white_noise`]; vectors are turned into
//! images for labeling by [`render_glyph`] and [`render_pixel`].

mod hog;
mod render;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

pub use hog::{extract_hog, HOG_EPSILON};
pub use render::{render, render_glyph, render_pixel, GrayImage};

/// Layout of a feature space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    RawPixel {
        width: usize,
        height: usize,
    },
    Hog {
        cells_x: usize,
        cells_y: usize,
        orientations: usize,
        cell_size_px: usize,
    },
    External {
        dimension: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct FeatureSpace {
    id: String,
    geometry: Geometry,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    id: String,
    #[serde(flatten)]
    geometry: Geometry,
}

impl TryFrom<RawSpace> for FeatureSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        FeatureSpace::new(raw.id, raw.geometry)
    }
}

impl From<FeatureSpace> for RawSpace {
    fn from(space: FeatureSpace) -> Self {
        RawSpace {
            id: space.id,
            geometry: space.geometry,
        }
    }
}

impl FeatureSpace {
    pub fn new(id: impl Into<String>, geometry: Geometry) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("feature space id must not be empty"));
        }
        let dims: &[usize] = match &geometry {
            Geometry::RawPixel { width, height } => &[*width, *height],
            Geometry::Hog {
                cells_x,
                cells_y,
                orientations,
                cell_size_px,
            } => &[*cells_x, *cells_y, *orientations, *cell_size_px],
            Geometry::External { dimension } => &[*dimension],
        };
        if dims.iter().any(|&v| v == 0) {
            return Err(Error::invalid(format!(
                "feature space `{id}`: every geometry field must be at least 1"
            )));
        }
        Ok(Self { id, geometry })
    }

    pub fn raw_pixel(id: impl Into<String>, width: usize, height: usize) -> Result<Self> {
        Self::new(id, Geometry::RawPixel { width, height })
    }

    pub fn hog(
        id: impl Into<String>,
        cells_x: usize,
        cells_y: usize,
        orientations: usize,
        cell_size_px: usize,
    ) -> Result<Self> {
        Self::new(
            id,
            Geometry::Hog {
                cells_x,
                cells_y,
                orientations,
                cell_size_px,
            },
        )
    }

    pub fn external(id: impl Into<String>, dimension: usize) -> Result<Self> {
        Self::new(id, Geometry::External { dimension })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dimension(&self) -> usize {
        match self.geometry {
            Geometry::RawPixel { width, height } => width * height,
            Geometry::Hog {
                cells_x,
                cells_y,
                orientations,
                ..
            } => cells_x * cells_y * orientations,
            Geometry::External { dimension } => dimension,
        }
    }

    /// Builds a vector in this space after checking its length.
    pub fn vector(&self, values: Vec<f64>) -> Result<FeatureVector> {
        if values.len() != self.dimension() {
            return Err(Error::invalid(format!(
                "space `{}` has dimension {}, got {} values",
                self.id,
                self.dimension(),
                values.len()
            )));
        }
        FeatureVector::new(self.id.clone(), values)
    }

    pub fn zeros(&self) -> FeatureVector {
        FeatureVector {
            space_id: self.id.clone(),
            values: vec![0.0; self.dimension()],
        }
    }

    pub(crate) fn check(&self, v: &FeatureVector) -> Result<()> {
        if v.space_id != self.id {
            return Err(Error::space_mismatch(&self.id, &v.space_id));
        }
        if v.values.len() != self.dimension() {
            return Err(Error::invalid(format!(
                "vector has {} values, space `{}` has dimension {}",
                v.values.len(),
                self.id,
                self.dimension()
            )));
        }
        Ok(())
    }
}

/// Shorthand used on the command line; the shorthand itself becomes the id.
///
/// - `raw:WxH`
/// - `hog:CXxCYxO/CELL` (e.g. `hog:4x4x9/8`)
/// - `ext:D`
impl FromStr for FeatureSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse feature space `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums = |part: &str| -> Result<Vec<usize>> {
            part.split('x')
                .map(|n| n.trim().parse::<usize>().map_err(|_| bad()))
                .collect()
        };
        match kind {
            "raw" => match nums(rest)?.as_slice() {
                [w, h] => FeatureSpace::raw_pixel(s, *w, *h),
                _ => Err(bad()),
            },
            "hog" => {
                let (cells, cell_size) = rest.split_once('/').ok_or_else(bad)?;
                let cell_size = cell_size.parse().map_err(|_| bad())?;
                match nums(cells)?.as_slice() {
                    [cx, cy, o] => FeatureSpace::hog(s, *cx, *cy, *o, cell_size),
                    _ => Err(bad()),
                }
            }
            "ext" => FeatureSpace::external(s, rest.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Dense real vector tagged with the id of its feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    space_id: String,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(space_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature vector entry {i} is not finite"
            )));
        }
        Ok(Self {
            space_id: space_id.into(),
            values,
        })
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_pair(&self, other: &FeatureVector) -> Result<()> {
        if self.space_id != other.space_id {
            return Err(Error::space_mismatch(&self.space_id, &other.space_id));
        }
        if self.values.len() != other.values.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} vs {}",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(())
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        self.check_pair(other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// Cosine of the angle between two vectors, clamped to [-1, 1].
    pub fn cosine(&self, other: &FeatureVector) -> Result<f64> {
        self.check_pair(other)?;
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::invalid("cosine of a zero vector is undefined"));
        }
        Ok((dot(&self.values, &other.values) / (na * nb)).clamp(-1.0, 1.0))
    }

    pub fn l2_normalize(&self) -> Result<FeatureVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Ok(FeatureVector {
            space_id: self.space_id.clone(),
            values: self.values.iter().map(|v| v / n).collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> FeatureVector {
        FeatureVector {
            space_id: self.space_id.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn neg(&self) -> FeatureVector {
        self.scaled(-1.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// i.i.d. standard-normal vector in `space`, fully determined by `seed`.
pub fn sample_white_noise(space: &FeatureSpace, seed: u64) -> FeatureVector {
    let mut rng = rng::stream(seed);
    let values = (0..space.dimension())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    FeatureVector {
        space_id: space.id.clone(),
        values,
    }
}
