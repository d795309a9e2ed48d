use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use visbias_core::featspace::FeatureSpace;

/// Parses a feature space given as a short id or a JSON file.
///
/// Short ids name their own geometry: `ext:64`, `raw:16x16` and
/// `hog:4x4x9/8` (cells across, cells down, orientations, pixels per cell).
pub fn parse_space(spec: &str) -> Result<FeatureSpace> {
    if spec.ends_with(".json") || Path::new(spec).is_file() {
        let text = fs::read_to_string(spec).with_context(|| format!("cannot read space file `{spec}`"))?;
        return serde_json::from_str(&text).with_context(|| format!("bad space file `{spec}`"));
    }
    let Some((kind, rest)) = spec.split_once(':') else {
        bail!("bad space `{spec}`: expected ext:D, raw:WxH, hog:CXxCYxO/S or a .json file");
    };
    let nums = |s: &str| -> Result<Vec<usize>> {
        s.split(['x', '/'])
            .map(|p| p.parse::<usize>().with_context(|| format!("bad number `{p}` in space `{spec}`")))
            .collect()
    };
    let space = match (kind, nums(rest)?.as_slice()) {
        ("ext", [d]) => FeatureSpace::external(spec, *d)?,
        ("raw", [w, h]) if !rest.contains('/') => FeatureSpace::raw_pixel(spec, *w, *h)?,
        ("hog", [cx, cy, o, s]) if rest.matches('/').count() == 1 => FeatureSpace::hog(spec, *cx, *cy, *o, *s)?,
        _ => bail!("bad space `{spec}`: expected ext:D, raw:WxH, hog:CXxCYxO/S or a .json file"),
    };
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use visbias_core::featspace::Geometry;

    #[test]
    fn short_ids() {
        assert_eq!(parse_space("ext:64").unwrap().dimension(), 64);
        assert_eq!(
            *parse_space("raw:16x8").unwrap().geometry(),
            Geometry::RawPixel { width: 16, height: 8 }
        );
        let hog = parse_space("hog:4x3x9/8").unwrap();
        assert_eq!(hog.id(), "hog:4x3x9/8");
        assert_eq!(hog.dimension(), 4 * 3 * 9);
        for bad in ["ext", "ext:0", "ext:4x4", "raw:4", "raw:4/4", "hog:4x4x9x8", "pix:3", "ext:-1"] {
            assert!(parse_space(bad).is_err(), "{bad}");
        }
    }
}
