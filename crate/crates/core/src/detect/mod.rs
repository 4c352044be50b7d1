//! Keypoint detection: three built-in detectors plus ingestion of external
//! detector output in the affine-region interchange format.
//!
//! All built-ins work on the luminance plane (`0.299 R + 0.587 G + 0.114 B`
//! in 8-bit units), are pure functions of (image, config), and refine each
//! maximum to sub-pixel precision by fitting a parabola through the
//! response along each axis.

mod fast;
mod harris;
mod hessian;
mod interchange;

use std::fmt;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::filter::Plane;
use crate::types::Keypoint;

pub use fast::{detect_fast_segment, FastParams};
pub use harris::{detect_harris, HarrisParams};
pub use hessian::{detect_hessian_blob, HessianParams};
pub use interchange::{parse_keypoint_file, read_keypoint_file, write_keypoint_file, format_keypoints};

/// Smallest image side the built-in detectors accept.
pub const MIN_SIDE: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub enum DetectorKind {
    HarrisCorner(HarrisParams),
    HessianBlob(HessianParams),
    FastSegment(FastParams),
    /// Keypoints are read from `<dir>/<image path>.txt`.
    External { dir: PathBuf },
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::HarrisCorner(_) => "harris-corner",
            DetectorKind::HessianBlob(_) => "hessian-blob",
            DetectorKind::FastSegment(_) => "fast-segment",
            DetectorKind::External { .. } => "external",
        }
    }
}

/// A detector and its parameters. One config is used unchanged for every
/// image of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub id: String,
    pub kind: DetectorKind,
}

impl fmt::Display for DetectorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.id, self.kind.name())
    }
}

impl DetectorConfig {
    pub fn harris() -> Self {
        DetectorConfig {
            id: "harris".into(),
            kind: DetectorKind::HarrisCorner(HarrisParams::default()),
        }
    }

    pub fn hessian() -> Self {
        DetectorConfig {
            id: "hessian".into(),
            kind: DetectorKind::HessianBlob(HessianParams::default()),
        }
    }

    pub fn fast() -> Self {
        DetectorConfig {
            id: "fast".into(),
            kind: DetectorKind::FastSegment(FastParams::default()),
        }
    }

    pub fn builtins() -> Vec<Self> {
        vec![Self::harris(), Self::hessian(), Self::fast()]
    }

    /// Parses a command-line detector spec:
    ///
    /// * `harris`, `hessian`, `fast` (or their long kind names), optionally
    ///   followed by `:key=value,...` overriding `id` or parameters;
    /// * `external:id=NAME,dir=PATH`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut pairs = Vec::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::param(format!("detector option `{kv}` is not key=value")))?;
            pairs.push((k.trim(), v.trim()));
        }
        let mut cfg = match head {
            "harris" | "harris-corner" => Self::harris(),
            "hessian" | "hessian-blob" => Self::hessian(),
            "fast" | "fast-segment" => Self::fast(),
            "external" => DetectorConfig {
                id: String::new(),
                kind: DetectorKind::External { dir: PathBuf::new() },
            },
            other => return Err(Error::param(format!("unknown detector `{other}`"))),
        };
        let num = |k: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::param(format!("detector option {k}: `{v}` is not a number")))
        };
        for (k, v) in pairs {
            match (&mut cfg.kind, k) {
                (_, "id") => cfg.id = v.to_string(),
                (DetectorKind::External { dir }, "dir") => *dir = PathBuf::from(v),
                (DetectorKind::HarrisCorner(p), "k") => p.k = num(k, v)?,
                (DetectorKind::HarrisCorner(p), "sigma") => p.sigma = num(k, v)?,
                (DetectorKind::HarrisCorner(p), "threshold") => p.threshold = num(k, v)?,
                (DetectorKind::HessianBlob(p), "threshold") => p.threshold = num(k, v)?,
                (DetectorKind::FastSegment(p), "threshold") => p.threshold = num(k, v)?,
                (DetectorKind::FastSegment(p), "arc") => p.arc = num(k, v)? as usize,
                _ => return Err(Error::param(format!("option `{k}` not valid for {head}"))),
            }
        }
        if cfg.id.is_empty() || cfg.id.contains(['/', '\\', ',']) {
            return Err(Error::param(format!("detector `{spec}` needs a plain id")));
        }
        if let DetectorKind::External { dir } = &cfg.kind {
            if dir.as_os_str().is_empty() {
                return Err(Error::param(format!("external detector `{}` needs dir=PATH", cfg.id)));
            }
        }
        Ok(cfg)
    }

    pub fn is_external(&self) -> bool {
        matches!(self.kind, DetectorKind::External { .. })
    }

    /// Runs a built-in detector. External detectors have no in-process
    /// implementation; use [`DetectorConfig::external_path`].
    pub fn detect(&self, img: &DynamicImage) -> Result<Vec<Keypoint>> {
        let luma = luminance(img);
        Ok(match &self.kind {
            DetectorKind::HarrisCorner(p) => detect_harris(&luma, p),
            DetectorKind::HessianBlob(p) => detect_hessian_blob(&luma, p),
            DetectorKind::FastSegment(p) => detect_fast_segment(&luma, p),
            DetectorKind::External { .. } => {
                return Err(Error::param(format!("{} is external and cannot run in-process", self.id)))
            }
        })
    }

    /// Location of the keypoint file an external detector produced for a
    /// manifest-relative image path.
    pub fn external_path(&self, image_rel: &str) -> Option<PathBuf> {
        match &self.kind {
            DetectorKind::External { dir } => Some(keypoint_file_path(dir, image_rel)),
            _ => None,
        }
    }
}

/// `<dir>/<image path>.txt`
pub fn keypoint_file_path(dir: &Path, image_rel: &str) -> PathBuf {
    dir.join(format!("{image_rel}.txt"))
}

/// Luminance plane in 8-bit units.
pub fn luminance(img: &DynamicImage) -> Plane {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => {
            let raw = g.as_raw();
            Plane::from_fn(w, h, |x, y| raw[y * w + x] as f64)
        }
        other => {
            let rgb = other.to_rgb8();
            let raw = rgb.as_raw();
            Plane::from_fn(w, h, |x, y| {
                let p = &raw[(y * w + x) * 3..];
                0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
            })
        }
    }
}

fn too_small(plane: &Plane, name: &str) -> bool {
    if plane.width < MIN_SIDE || plane.height < MIN_SIDE {
        log::warn!(
            "{name}: image {}x{} is smaller than {MIN_SIDE}x{MIN_SIDE}, no keypoints",
            plane.width,
            plane.height
        );
        return true;
    }
    false
}

/// Vertex offset of the parabola through three samples, clamped to half a
/// pixel.
fn parabola_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Sub-pixel position of a maximum of `resp` at integer (x, y).
fn refine(resp: &Plane, x: usize, y: usize) -> (f64, f64) {
    let c = resp.get(x, y);
    let dx = if x > 0 && x + 1 < resp.width {
        parabola_offset(resp.get(x - 1, y), c, resp.get(x + 1, y))
    } else {
        0.0
    };
    let dy = if y > 0 && y + 1 < resp.height {
        parabola_offset(resp.get(x, y - 1), c, resp.get(x, y + 1))
    } else {
        0.0
    };
    (x as f64 + dx, y as f64 + dy)
}

/// Whether (x, y) is a 3x3 maximum. Ties are resolved in raster order:
/// the pixel must beat earlier neighbours strictly and later ones weakly,
/// so a plateau yields exactly one maximum.
fn is_local_max(resp: &Plane, x: usize, y: usize) -> bool {
    let c = resp.get(x, y);
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= resp.width as isize || ny >= resp.height as isize {
                continue;
            }
            let v = resp.get(nx as usize, ny as usize);
            let earlier = dy < 0 || (dy == 0 && dx < 0);
            if (earlier && v >= c) || (!earlier && v > c) {
                return false;
            }
        }
    }
    true
}

/// Canonical output order: strongest first, then raster order.
fn sort_keypoints(kps: &mut [Keypoint]) {
    kps.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
}


#[cfg(test)]
mod tests {
    use super::*;
    use fixtures::gray;

    #[test]
    fn parse_detector_specs() {
        assert_eq!(DetectorConfig::parse("harris").unwrap(), DetectorConfig::harris());
        let c = DetectorConfig::parse("fast:id=fast30,threshold=30").unwrap();
        assert_eq!(c.id, "fast30");
        assert_eq!(c.kind, DetectorKind::FastSegment(FastParams { threshold: 30.0, ..Default::default() }));
        let e = DetectorConfig::parse("external:id=mser,dir=/tmp/kp").unwrap();
        assert_eq!(e.external_path("images/a.png").unwrap(), PathBuf::from("/tmp/kp/images/a.png.txt"));
        assert!(DetectorConfig::parse("external:id=x").is_err());
        assert!(DetectorConfig::parse("sift").is_err());
        assert!(DetectorConfig::parse("harris:arc=3").is_err());
        assert!(DetectorConfig::parse("harris:id=a/b").is_err());
    }

    #[test]
    fn luminance_weights() {
        let img = DynamicImage::ImageRgb8(image::RgbImage::from_pixel(1, 1, image::Rgb([100, 200, 50])));
        let l = luminance(&img);
        assert!((l.get(0, 0) - (29.9 + 117.4 + 5.7)).abs() < 1e-9);
    }

    #[test]
    fn tiny_images_yield_nothing() {
        let img = gray(6, 30, |x, _| (x * 40) as u8);
        for d in DetectorConfig::builtins() {
            assert!(d.detect(&img).unwrap().is_empty());
        }
    }

    #[test]
    fn plateau_has_single_maximum() {
        let p = Plane::from_fn(5, 5, |x, y| if (1..3).contains(&x) && y == 2 { 1.0 } else { 0.0 });
        let maxima: Vec<_> = (0..5)
            .flat_map(|y| (0..5).map(move |x| (x, y)))
            .filter(|&(x, y)| p.get(x, y) > 0.0 && is_local_max(&p, x, y))
            .collect();
        assert_eq!(maxima, vec![(1, 2)]);
    }

    #[test]
    fn parabola_vertex() {
        // samples of -(t - 0.3)^2 at t = -1, 0, 1
        let f = |t: f64| -(t - 0.3) * (t - 0.3);
        assert!((parabola_offset(f(-1.0), f(0.0), f(1.0)) - 0.3).abs() < 1e-12);
        assert_eq!(parabola_offset(1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn keypoints_are_in_bounds_with_positive_scale() {
        let img = crate::synth::complex_scene(9, 90, 70);
        for d in DetectorConfig::builtins() {
            let kps = d.detect(&img).unwrap();
            assert!(!kps.is_empty(), "{d}");
            for k in kps {
                assert!(k.is_valid());
                assert!(k.x >= 0.0 && k.x <= 89.0 && k.y >= 0.0 && k.y <= 69.0, "{d}: {k:?}");
            }
        }
    }
}
