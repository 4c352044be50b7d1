//! Photometric transformations and dataset materialization.
//!
//! Each scene is turned into one dataset per schedule: step 1 is the
//! unmodified reference, every further step applies the scheduled amount of
//! Gaussian blur, JPEG compression or uniform light reduction. Color images
//! are transformed in color.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, GrayImage, ImageEncoder, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{gaussian_blur, Plane};
use crate::manifest::{DatasetManifest, ImageEntry, SceneEntry};
use crate::types::{Homography, SceneId, SceneLabels, StepIndex, TransformKind, TransformSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurParams {
    /// Standard deviation in pixels.
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JpegParams {
    /// Compression rate in percent; the encoder quality is `100 - rate`.
    pub compression_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightParams {
    /// Light reduction in percent.
    pub reduction: f64,
}

/// Reduces any decoded image to 8-bit gray or 8-bit RGB.
pub fn normalize(img: DynamicImage) -> DynamicImage {
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageRgb8(_) => img,
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            DynamicImage::ImageLuma8(img.to_luma8())
        }
        other => DynamicImage::ImageRgb8(other.to_rgb8()),
    }
}

fn map_bytes(img: &DynamicImage, f: impl Fn(&[u8], usize, usize, usize) -> Vec<u8>) -> DynamicImage {
    let (w, h) = (img.width(), img.height());
    match normalize(img.clone()) {
        DynamicImage::ImageLuma8(g) => {
            let out = f(g.as_raw(), w as usize, h as usize, 1);
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, out).expect("dimensions preserved"))
        }
        DynamicImage::ImageRgb8(c) => {
            let out = f(c.as_raw(), w as usize, h as usize, 3);
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, out).expect("dimensions preserved"))
        }
        _ => unreachable!("normalize yields gray or rgb"),
    }
}

/// Separable Gaussian blur with radius `ceil(3 sigma)` and reflected
/// borders. `sigma == 0` returns a pixel-identical copy.
pub fn apply_gaussian_blur(img: &DynamicImage, params: BlurParams) -> Result<DynamicImage> {
    let sigma = params.sigma;
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::param(format!("blur sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(normalize(img.clone()));
    }
    Ok(map_bytes(img, |raw, w, h, ch| {
        let mut out = vec![0u8; raw.len()];
        for c in 0..ch {
            let plane = Plane::from_fn(w, h, |x, y| raw[(y * w + x) * ch + c] as f64);
            let blurred = gaussian_blur(&plane, sigma);
            for (i, v) in blurred.data.iter().enumerate() {
                out[i * ch + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        out
    }))
}

fn jpeg_quality(params: JpegParams) -> Result<u8> {
    let rate = params.compression_rate;
    if !(0.0..=98.0).contains(&rate) {
        return Err(Error::param(format!("JPEG compression rate must be in [0, 98], got {rate}")));
    }
    Ok((100.0 - rate).round().clamp(1.0, 100.0) as u8)
}

/// Encodes at quality `100 - rate`.
pub fn encode_jpeg(img: &DynamicImage, params: JpegParams) -> Result<Vec<u8>> {
    let quality = jpeg_quality(params)?;
    let img = normalize(img.clone());
    let mut buf = Vec::new();
    let encoder = JpegEncoder::new_with_quality(&mut buf, quality);
    encoder
        .write_image(img.as_bytes(), img.width(), img.height(), img.color().into())
        .map_err(|source| Error::Image {
            path: PathBuf::from("<jpeg encoder>"),
            source,
        })?;
    Ok(buf)
}

fn decode_jpeg(bytes: &[u8]) -> Result<DynamicImage> {
    image::load(Cursor::new(bytes), image::ImageFormat::Jpeg)
        .map(normalize)
        .map_err(|source| Error::Image {
            path: PathBuf::from("<jpeg decoder>"),
            source,
        })
}

/// Encodes and decodes at quality `100 - rate`. A rate of 0 is the
/// identity.
pub fn apply_jpeg_roundtrip(img: &DynamicImage, params: JpegParams) -> Result<DynamicImage> {
    jpeg_quality(params)?;
    if params.compression_rate == 0.0 {
        return Ok(normalize(img.clone()));
    }
    decode_jpeg(&encode_jpeg(img, params)?)
}

/// Scales every channel by `1 - reduction/100`, rounding to nearest.
pub fn apply_light_reduction(img: &DynamicImage, params: LightParams) -> Result<DynamicImage> {
    let r = params.reduction;
    if !(0.0..=90.0).contains(&r) {
        return Err(Error::param(format!("light reduction must be in [0, 90], got {r}")));
    }
    let factor = 1.0 - r / 100.0;
    Ok(map_bytes(img, |raw, _, _, _| {
        raw.iter()
            .map(|&v| (v as f64 * factor).round().clamp(0.0, 255.0) as u8)
            .collect()
    }))
}

/// Applies one schedule step to an image.
pub fn apply(img: &DynamicImage, kind: TransformKind, amount: f64) -> Result<DynamicImage> {
    match kind {
        TransformKind::GaussianBlur => apply_gaussian_blur(img, BlurParams { sigma: amount }),
        TransformKind::JpegCompression => apply_jpeg_roundtrip(
            img,
            JpegParams {
                compression_rate: amount,
            },
        ),
        TransformKind::LightReduction => apply_light_reduction(img, LightParams { reduction: amount }),
    }
}

/// Default schedule for a transform kind.
pub fn build_schedule(kind: TransformKind) -> TransformSpec {
    let amounts = match kind {
        TransformKind::GaussianBlur => (0..10).map(|i| i as f64 * 0.5).collect(),
        TransformKind::JpegCompression => vec![
            0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 92.0, 95.0, 96.0, 98.0,
        ],
        TransformKind::LightReduction => vec![
            0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 55.0, 60.0, 65.0, 70.0, 75.0, 80.0, 85.0, 90.0,
        ],
    };
    TransformSpec { kind, amounts }
}

/// Schedule configuration file: one amount list per transform kind, e.g.
///
/// ```toml
/// gaussian-blur = [0, 0.5, 1.0, 1.5]
/// light-reduction = [0, 30, 60, 90]
/// ```
///
/// Kinds absent from the file are not generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScheduleConfig(pub BTreeMap<TransformKind, Vec<f64>>);

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig(
            TransformKind::ALL
                .into_iter()
                .map(|k| (k, build_schedule(k).amounts))
                .collect(),
        )
    }
}

impl ScheduleConfig {
    pub fn from_toml_str(text: &str, context: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                context: context.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schedule serializes")
    }

    /// Validated specs in canonical kind order.
    pub fn specs(&self) -> Result<Vec<TransformSpec>> {
        self.0
            .iter()
            .map(|(&kind, amounts)| TransformSpec::new(kind, amounts.clone()))
            .collect()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// One input scene for database generation.
#[derive(Clone, Debug)]
pub struct SceneSource {
    pub path: PathBuf,
    pub labels: SceneLabels,
}

/// Relative path of the reference copy of a scene.
pub fn reference_path(scene: SceneId) -> String {
    format!("reference/s{:04}.png", scene.0)
}

/// Relative path of one dataset image.
pub fn image_path(scene: SceneId, kind: TransformKind, step: StepIndex) -> String {
    let ext = if kind == TransformKind::JpegCompression && !step.is_reference() {
        "jpg"
    } else {
        "png"
    };
    format!("images/s{:04}/{}/k{:02}.{ext}", scene.0, kind, step.0)
}

fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: PathBuf::from("<png encoder>"),
            source,
        })?;
    Ok(buf)
}

/// Materializes one dataset per (scene, schedule) under `output_dir` and
/// writes `manifest.json` there. Scene ids follow the order of `scenes`.
///
/// Jobs run on the current rayon pool. If any job fails, generation is
/// aborted with a report of how many images were written.
pub fn generate_database(
    scenes: &[SceneSource],
    specs: &[TransformSpec],
    output_dir: &Path,
) -> Result<DatasetManifest> {
    for s in specs {
        s.check()?;
    }
    let mut manifest = DatasetManifest {
        transforms: specs.to_vec(),
        ..Default::default()
    };
    for (i, src) in scenes.iter().enumerate() {
        let id = SceneId(i as u32 + 1);
        manifest.scenes.push(SceneEntry {
            id,
            path: reference_path(id),
            labels: src.labels,
        });
        for spec in specs {
            for step in spec.steps() {
                manifest.images.push(ImageEntry {
                    scene: id,
                    kind: spec.kind,
                    step,
                    amount: spec.amounts[step.offset()],
                    path: image_path(id, spec.kind, step),
                    homography: Homography::IDENTITY,
                });
            }
        }
    }

    let total = manifest.images.len();
    let results: Vec<(usize, Result<()>)> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, src)| {
            let id = SceneId(i as u32 + 1);
            let reference = match crate::io::read_image(&src.path) {
                Ok(img) => normalize(img),
                Err(e) => return (0, Err(e)),
            };
            let mut written = 0;
            let write = |rel: &str, bytes: Result<Vec<u8>>| -> Result<()> {
                crate::io::write_atomic(&output_dir.join(rel), &bytes?)
            };
            if let Err(e) = write(&reference_path(id), encode_png(&reference)) {
                return (written, Err(e));
            }
            let jobs: Vec<(&TransformSpec, StepIndex)> = specs
                .iter()
                .flat_map(|s| s.steps().map(move |k| (s, k)))
                .collect();
            let outcomes: Vec<Result<()>> = jobs
                .par_iter()
                .map(|&(spec, step)| {
                    let amount = spec.amounts[step.offset()];
                    let bytes = if step.is_reference() {
                        encode_png(&reference)
                    } else if spec.kind == TransformKind::JpegCompression {
                        encode_jpeg(&reference, JpegParams { compression_rate: amount })
                    } else {
                        apply(&reference, spec.kind, amount).and_then(|img| encode_png(&img))
                    };
                    write(&image_path(id, spec.kind, step), bytes)
                })
                .collect();
            let mut first_err = None;
            for o in outcomes {
                match o {
                    Ok(()) => written += 1,
                    Err(e) if first_err.is_none() => first_err = Some(e),
                    Err(_) => {}
                }
            }
            (written, first_err.map_or(Ok(()), Err))
        })
        .collect();

    let written: usize = results.iter().map(|(w, _)| w).sum();
    if let Some((_, Err(e))) = results.into_iter().find(|(_, r)| r.is_err()) {
        return Err(Error::Aborted {
            written,
            total,
            source: Box::new(e),
        });
    }

    let violations = manifest.validate(output_dir);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::data(format!("generated manifest is invalid: {}", list.join("; "))));
    }
    manifest.save(&output_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> DynamicImage {
        DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| Luma([f(x, y)])))
    }

    fn texture() -> DynamicImage {
        crate::synth::natural_texture(3, 96, 64)
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = texture();
        let out = apply_gaussian_blur(&img, BlurParams { sigma: 0.0 }).unwrap();
        assert_eq!(out.as_bytes(), img.as_bytes());
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = gray(20, 15, |_, _| 137);
        let out = apply_gaussian_blur(&img, BlurParams { sigma: 2.0 }).unwrap();
        assert!(out.as_bytes().iter().all(|&v| v == 137));
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let img = gray(4, 4, |_, _| 0);
        assert!(apply_gaussian_blur(&img, BlurParams { sigma: f64::NAN }).is_err());
        assert!(apply_gaussian_blur(&img, BlurParams { sigma: -1.0 }).is_err());
    }

    /// Direct 2-D convolution with reflected borders, independent of the
    /// separable implementation.
    fn direct_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as isize;
        let refl = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let mut i = i;
            while i < 0 || i >= n {
                i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
            }
            i as usize
        };
        let mut weights = Vec::new();
        let mut total = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let wgt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                weights.push((dx, dy, wgt));
                total += wgt;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for &(dx, dy, wgt) in &weights {
                    let sx = refl(x as isize + dx, w);
                    let sy = refl(y as isize + dy, h);
                    acc += wgt * src[sy * w + sx];
                }
                out[y * w + x] = acc / total;
            }
        }
        out
    }

    #[test]
    fn impulse_matches_direct_convolution() {
        let img = gray(33, 33, |x, y| if x == 16 && y == 16 { 255 } else { 0 });
        let out = apply_gaussian_blur(&img, BlurParams { sigma: 1.0 }).unwrap();
        let src: Vec<f64> = img.as_bytes().iter().map(|&v| v as f64).collect();
        let oracle = direct_blur(&src, 33, 33, 1.0);
        let center = out.as_bytes()[16 * 33 + 16];
        assert_eq!(center as f64, oracle[16 * 33 + 16].round());
        // 255 * (peak of the normalized 7-tap kernel)^2
        assert_eq!(center, 41);
        for (o, e) in out.as_bytes().iter().zip(&oracle) {
            assert_eq!(*o as f64, e.round().clamp(0.0, 255.0));
        }
    }

    #[test]
    fn blur_on_textured_matches_direct_convolution() {
        let img = texture();
        let out = apply_gaussian_blur(&img, BlurParams { sigma: 1.5 }).unwrap();
        let src: Vec<f64> = img.as_bytes().iter().map(|&v| v as f64).collect();
        let oracle = direct_blur(&src, 96, 64, 1.5);
        let worst = out
            .as_bytes()
            .iter()
            .zip(&oracle)
            .map(|(&o, &e)| (o as f64 - e.round()).abs())
            .fold(0.0, f64::max);
        // float summation order may flip an exact .5 tie
        assert!(worst <= 1.0);
    }

    #[test]
    fn light_reduction_values() {
        let img = gray(2, 1, |x, _| if x == 0 { 200 } else { 255 });
        let out = apply_light_reduction(&img, LightParams { reduction: 60.0 }).unwrap();
        assert_eq!(out.as_bytes(), &[80, 102]);
        let out = apply_light_reduction(&img, LightParams { reduction: 0.0 }).unwrap();
        assert_eq!(out.as_bytes(), img.as_bytes());
        let black = gray(8, 8, |_, _| 0);
        let out = apply_light_reduction(&black, LightParams { reduction: 90.0 }).unwrap();
        assert!(out.as_bytes().iter().all(|&v| v == 0));
        assert!(apply_light_reduction(&img, LightParams { reduction: 91.0 }).is_err());
        assert!(apply_light_reduction(&img, LightParams { reduction: -1.0 }).is_err());
    }

    #[test]
    fn light_reduction_in_color() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(3, 3, image::Rgb([200, 100, 50])));
        let out = apply_light_reduction(&img, LightParams { reduction: 60.0 }).unwrap();
        assert_eq!(&out.as_bytes()[..3], &[80, 40, 20]);
    }

    fn mae(a: &DynamicImage, b: &DynamicImage) -> f64 {
        let (a, b) = (a.as_bytes(), b.as_bytes());
        a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn jpeg_rate_zero_is_near_lossless() {
        let img = texture();
        let out = apply_jpeg_roundtrip(&img, JpegParams { compression_rate: 0.0 }).unwrap();
        let worst = img.as_bytes().iter().zip(out.as_bytes()).map(|(&a, &b)| a.abs_diff(b)).max();
        assert!(worst.unwrap() <= 1);
    }

    #[test]
    fn jpeg_quality_100_encode_decode_is_near_lossless_on_gray() {
        let img = crate::synth::natural_texture(11, 64, 64);
        let bytes = encode_jpeg(&img, JpegParams { compression_rate: 0.0 }).unwrap();
        let out = decode_jpeg(&bytes).unwrap();
        assert_eq!((out.width(), out.height()), (64, 64));
        let worst = img.as_bytes().iter().zip(out.as_bytes()).map(|(&a, &b)| a.abs_diff(b)).max();
        // measured bound: the encoder rounds in the DCT domain even at Q=100
        assert!(worst.unwrap() <= 2, "worst deviation {worst:?}");
    }

    #[test]
    fn jpeg_98_is_worse_than_60() {
        let img = texture();
        let e60 = mae(&img, &apply_jpeg_roundtrip(&img, JpegParams { compression_rate: 60.0 }).unwrap());
        let e98 = mae(&img, &apply_jpeg_roundtrip(&img, JpegParams { compression_rate: 98.0 }).unwrap());
        assert!(e98 > e60, "{e98} <= {e60}");
    }

    /// Luminance DC quantizer step under the usual quality scaling of the
    /// base table entry 16, capped at 255 for baseline JPEG.
    fn dc_step(quality: f64) -> f64 {
        let scale = if quality < 50.0 { 5000.0 / quality } else { 200.0 - 2.0 * quality };
        ((16.0 * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0)
    }

    #[test]
    fn jpeg_flat_image_survives() {
        for v in [0u8, 17, 93, 128, 200, 255] {
            let img = gray(40, 24, |_, _| v);
            for rate in [10.0, 30.0, 50.0, 60.0, 80.0, 90.0, 95.0, 98.0] {
                let out = apply_jpeg_roundtrip(&img, JpegParams { compression_rate: rate }).unwrap();
                let b = out.as_bytes();
                assert!(b.iter().all(|&x| x == b[0]), "rate {rate}: not uniform");
                let dev = b[0].abs_diff(v) as f64;
                // a flat block only carries a DC term: error <= step / 16
                assert!(dev <= (dc_step(100.0 - rate) / 16.0).ceil(), "v {v} rate {rate}: {dev}");
                if rate <= 60.0 {
                    assert!(dev <= 1.0, "v {v} rate {rate}: {dev}");
                }
            }
        }
        assert!(apply_jpeg_roundtrip(&gray(8, 8, |_, _| 0), JpegParams { compression_rate: 99.0 }).is_err());
    }

    #[test]
    fn default_schedules() {
        let blur = build_schedule(TransformKind::GaussianBlur);
        assert_eq!(blur.len(), 10);
        assert_eq!((blur.amounts[0], blur.amounts[9]), (0.0, 4.5));
        let jpeg = build_schedule(TransformKind::JpegCompression);
        assert_eq!(jpeg.len(), 14);
        assert_eq!((jpeg.amounts[0], jpeg.amounts[13]), (0.0, 98.0));
        let light = build_schedule(TransformKind::LightReduction);
        assert_eq!(light.len(), 14);
        assert_eq!((light.amounts[0], light.amounts[13]), (0.0, 90.0));
        for k in TransformKind::ALL {
            build_schedule(k).check().unwrap();
        }
        assert_eq!(10 * 539, 5390);
        assert_eq!(14 * 539, 7546);
    }

    #[test]
    fn schedule_config_roundtrip_and_errors() {
        let cfg = ScheduleConfig::default();
        let back = ScheduleConfig::from_toml_str(&cfg.to_toml_string(), "x").unwrap();
        assert_eq!(back, cfg);
        let only_blur = ScheduleConfig::from_toml_str("gaussian-blur = [0, 0.5, 1]\n", "x").unwrap();
        assert_eq!(only_blur.specs().unwrap().len(), 1);
        let err = ScheduleConfig::from_toml_str("\nwarp = [0, 1]\n", "cfg.toml").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
        let bad = ScheduleConfig::from_toml_str("light-reduction = [5, 10]\n", "x").unwrap();
        assert!(bad.specs().is_err());
    }

    #[test]
    fn transforms_are_deterministic() {
        let img = texture();
        for kind in TransformKind::ALL {
            let a = apply(&img, kind, 4.0).unwrap();
            let b = apply(&img, kind, 4.0).unwrap();
            assert_eq!(a.as_bytes(), b.as_bytes());
        }
    }
}
