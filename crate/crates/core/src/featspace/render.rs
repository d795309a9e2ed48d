use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Cursor;

use super::{FeatureSpace, FeatureVector, Geometry};
use crate::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("pixel intensities must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upscale(&self, factor: usize) -> GrayImage {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                pixels.push(self.pixel(x / factor, y / factor));
            }
        }
        GrayImage {
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn to_luma8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p * 255.0).round() as u8)
            .collect()
    }

    /// Encodes as an 8-bit grayscale PNG.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_luma8())
            .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        Ok(out.into_inner())
    }

    /// Decodes an 8-bit grayscale PNG.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::invalid(format!("bad PNG: {e}")))?
            .into_luma8();
        let (w, h) = img.dimensions();
        let pixels = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
        GrayImage::new(w as usize, h as usize, pixels)
    }
}

/// Draws each HOG cell as a star of oriented line segments.
///
/// Bin `k` represents gradients at angle `k * pi / orientations`; its segment
/// is drawn along the edge direction, perpendicular to the gradient, through
/// the cell centre. Brightness is the bin weight clamped at zero and divided by
/// the largest positive weight in the vector. Overlapping segments keep the
/// brighter value.
pub fn render_glyph(x: &FeatureVector, space: &FeatureSpace, scale: usize) -> Result<GrayImage> {
    let Geometry::Hog {
        cells_x,
        cells_y,
        orientations,
        ..
    } = *space.geometry()
    else {
        return Err(Error::invalid(format!(
            "glyph rendering needs a HOG space, `{}` is not one",
            space.id()
        )));
    };
    space.check(x)?;
    if scale == 0 {
        return Err(Error::invalid("glyph scale must be at least 1 px per cell"));
    }

    let (w, h) = (cells_x * scale, cells_y * scale);
    let mut img = GrayImage::black(w, h);
    let peak = x.values().iter().copied().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Ok(img);
    }

    let half = scale as f64 / 2.0;
    let directions: Vec<(f64, f64)> = (0..orientations)
        .map(|k| {
            let phi = k as f64 * PI / orientations as f64 + FRAC_PI_2;
            (phi.cos(), phi.sin())
        })
        .collect();

    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let bins = &x.values()[(cy * cells_x + cx) * orientations..][..orientations];
            for (&weight, &(ux, uy)) in bins.iter().zip(&directions) {
                if weight <= 0.0 {
                    continue;
                }
                let brightness = weight / peak;
                for py in 0..scale {
                    for px in 0..scale {
                        let dx = px as f64 + 0.5 - half;
                        let dy = py as f64 + 0.5 - half;
                        let along = dx * ux + dy * uy;
                        let across = -dx * uy + dy * ux;
                        if across.abs() <= 0.5 + 1e-9 && along.abs() <= half {
                            let idx = (cy * scale + py) * w + cx * scale + px;
                            img.pixels[idx] = img.pixels[idx].max(brightness);
                        }
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Affine min-max map of a raw-pixel vector into `[0, 1]`; a constant vector
/// becomes a uniform 0.5 image.
pub fn render_pixel(x: &FeatureVector, space: &FeatureSpace) -> Result<GrayImage> {
    let Geometry::RawPixel { width, height } = *space.geometry() else {
        return Err(Error::invalid(format!(
            "pixel rendering needs a raw-pixel space, `{}` is not one",
            space.id()
        )));
    };
    space.check(x)?;
    let v = x.values();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = if hi > lo {
        v.iter().map(|p| ((p - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; v.len()]
    };
    GrayImage::new(width, height, pixels)
}

/// Visualization at a given scale: glyphs for HOG, enlarged min-max pixels for
/// raw-pixel spaces. External spaces cannot be visualized.
pub fn render(x: &FeatureVector, space: &FeatureSpace, scale: usize) -> Result<GrayImage> {
    match space.geometry() {
        Geometry::Hog { .. } => render_glyph(x, space, scale),
        Geometry::RawPixel { .. } => {
            if scale == 0 {
                return Err(Error::invalid("scale must be at least 1"));
            }
            Ok(render_pixel(x, space)?.upscale(scale))
        }
        Geometry::External { .. } => Err(Error::invalid(format!(
            "space `{}` is external and has no visualization",
            space.id()
        ))),
    }
}
