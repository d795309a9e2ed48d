//! Cell-wise histogram of oriented gradients.
//!
//! Gradients are `[-1, 0, 1]` differences with replicated borders. Unsigned
//! orientations in `[0, pi)` are split linearly between the two nearest of
//! `orientations` bins, whose centres sit at `k * pi / orientations` (bin 0 is
//! a purely horizontal gradient, i.e. a vertical edge). Each cell histogram is
//! L2-normalized on its own; there is no block normalization.

use std::f64::consts::PI;

use super::{FeatureSpace, FeatureVector, Geometry, GrayImage};
use crate::{Error, Result};

pub const HOG_EPSILON: f64 = 1e-6;

pub fn extract_hog(image: &GrayImage, space: &FeatureSpace) -> Result<FeatureVector> {
    let Geometry::Hog {
        cells_x,
        cells_y,
        orientations,
        cell_size_px,
    } = *space.geometry()
    else {
        return Err(Error::invalid(format!(
            "space `{}` is not a HOG space",
            space.id()
        )));
    };
    let (w, h) = (image.width(), image.height());
    if w != cells_x * cell_size_px || h != cells_y * cell_size_px {
        return Err(Error::invalid(format!(
            "image is {w}x{h} px, space `{}` expects {}x{} px",
            space.id(),
            cells_x * cell_size_px,
            cells_y * cell_size_px
        )));
    }

    let px = |x: usize, y: usize| image.pixel(x, y);
    let bin_width = PI / orientations as f64;
    let mut hist = vec![0.0; cells_x * cells_y * orientations];

    for y in 0..h {
        for x in 0..w {
            let gx = px((x + 1).min(w - 1), y) - px(x.saturating_sub(1), y);
            let gy = px(x, (y + 1).min(h - 1)) - px(x, y.saturating_sub(1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += PI;
            }
            if angle >= PI {
                angle -= PI;
            }
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % orientations;
            let hi = (lo + 1) % orientations;

            let cell = (y / cell_size_px) * cells_x + x / cell_size_px;
            let base = cell * orientations;
            hist[base + lo] += mag * (1.0 - frac);
            hist[base + hi] += mag * frac;
        }
    }

    for cell in hist.chunks_mut(orientations) {
        let sq: f64 = cell.iter().map(|v| v * v).sum();
        let denom = (sq + HOG_EPSILON * HOG_EPSILON).sqrt();
        for v in cell.iter_mut() {
            *v /= denom;
        }
    }
    FeatureVector::new(space.id(), hist)
}
