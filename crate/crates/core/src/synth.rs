//! Deterministic synthetic scenes for desk-scale runs and tests.
//!
//! "Simple" scenes are a handful of flat shapes on a smooth background;
//! "complex" scenes are multi-octave value noise overlaid with many small
//! shapes. Everything is a pure function of the seed.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::SceneLabels;
use crate::xform::SceneSource;

/// Multi-octave lattice value noise in [0, 1].
fn value_noise(rng: &mut ChaCha8Rng, w: u32, h: u32, base_cell: f64, octaves: u32) -> Vec<f64> {
    let mut acc = vec![0.0; (w * h) as usize];
    let mut amp = 1.0;
    let mut total = 0.0;
    let mut cell = base_cell;
    for _ in 0..octaves {
        let gw = (w as f64 / cell).ceil() as usize + 2;
        let gh = (h as f64 / cell).ceil() as usize + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        for y in 0..h {
            for x in 0..w {
                let fx = x as f64 / cell;
                let fy = y as f64 / cell;
                let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
                let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
                let (tx, ty) = (smooth(fx.fract()), smooth(fy.fract()));
                let g = |i: usize, j: usize| grid[j * gw + i];
                let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
                let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
                acc[(y * w + x) as usize] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
        total += amp;
        amp *= 0.55;
        cell /= 2.0;
    }
    acc.iter_mut().for_each(|v| *v /= total);
    acc
}

/// Gray fractal texture, stretched to the full 8-bit range.
pub fn natural_texture(seed: u64, w: u32, h: u32) -> DynamicImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = value_noise(&mut rng, w, h, 24.0, 5);
    let (lo, hi) = noise
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-9);
    DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| {
        let v = (noise[(y * w + x) as usize] - lo) / span;
        Luma([(v * 255.0).round() as u8])
    }))
}

enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }

    fn random(rng: &mut ChaCha8Rng, w: u32, h: u32, min: f64, max: f64) -> Shape {
        let size = rng.random_range(min..max.max(min + 1.0));
        let cx = rng.random_range(size..(w as f64 - size).max(size + 1.0));
        let cy = rng.random_range(size..(h as f64 - size).max(size + 1.0));
        if rng.random_bool(0.5) {
            let aspect = rng.random_range(0.6..1.6);
            Shape::Rect {
                x0: (cx - size * aspect).floor(),
                y0: (cy - size / aspect).floor(),
                x1: (cx + size * aspect).floor(),
                y1: (cy + size / aspect).floor(),
            }
        } else {
            Shape::Disc { cx, cy, r: size * 0.8 }
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
    ]
}

/// Distinct enough in luminance from `other` to give crisp edges.
fn contrasting_color(rng: &mut ChaCha8Rng, other: [f64; 3]) -> [f64; 3] {
    let luma = |c: [f64; 3]| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
    loop {
        let c = random_color(rng);
        if (luma(c) - luma(other)).abs() > 60.0 {
            return c;
        }
    }
}

/// A scene with a few flat shapes over a gentle gradient.
pub fn simple_scene(seed: u64, w: u32, h: u32) -> DynamicImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = random_color(&mut rng);
    let grad = rng.random_range(-0.15..0.15);
    let count = rng.random_range(3..6);
    let shapes: Vec<(Shape, [f64; 3])> = (0..count)
        .map(|_| {
            let s = Shape::random(&mut rng, w, h, 8.0, w.min(h) as f64 / 4.0);
            (s, contrasting_color(&mut rng, bg))
        })
        .collect();
    render(w, h, |x, y| {
        let base = bg.map(|c| c + grad * (x as f64 - w as f64 / 2.0));
        shapes
            .iter()
            .rev()
            .find(|(s, _)| s.contains(x as f64, y as f64))
            .map_or(base, |(_, c)| *c)
    })
}

/// A scene with fractal texture and many small shapes.
pub fn complex_scene(seed: u64, w: u32, h: u32) -> DynamicImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tint = [
        rng.random_range(0.5..1.0),
        rng.random_range(0.5..1.0),
        rng.random_range(0.5..1.0),
    ];
    let noise = value_noise(&mut rng, w, h, 16.0, 5);
    let count = rng.random_range(25..40);
    let shapes: Vec<(Shape, [f64; 3])> = (0..count)
        .map(|_| {
            let s = Shape::random(&mut rng, w, h, 2.0, 7.0);
            (s, random_color(&mut rng))
        })
        .collect();
    render(w, h, |x, y| {
        let n = noise[(y * w + x) as usize];
        let base = tint.map(|t| t * (n * 1.6 - 0.3).clamp(0.0, 1.0) * 255.0);
        shapes
            .iter()
            .rev()
            .find(|(s, _)| s.contains(x as f64, y as f64))
            .map_or(base, |(_, c)| *c)
    })
}

fn render(w: u32, h: u32, f: impl Fn(u32, u32) -> [f64; 3]) -> DynamicImage {
    DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
        Rgb(f(x, y).map(|c| c.round().clamp(0.0, 255.0) as u8))
    }))
}

/// Labels for the `i`-th scene of a generated corpus. Every label is
/// balanced over any multiple of 12 scenes.
pub fn corpus_labels(i: usize) -> SceneLabels {
    SceneLabels::new((i / 2) % 2 == 1, (i / 3) % 2 == 1, i.is_multiple_of(2))
}

/// Scene image for the `i`-th corpus entry, simple or complex according
/// to its label.
pub fn corpus_scene(seed: u64, i: usize, w: u32, h: u32) -> DynamicImage {
    let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
    if corpus_labels(i).simple {
        simple_scene(s, w, h)
    } else {
        complex_scene(s, w, h)
    }
}

/// Writes `n` scenes as `scene_XXX.png` plus `labels.csv` into `dir`.
pub fn write_corpus(dir: &Path, n: usize, seed: u64, w: u32, h: u32) -> Result<Vec<SceneSource>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut labels_csv = String::from("file,f,g,h\n");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let name = format!("scene_{:03}.png", i + 1);
        let path: PathBuf = dir.join(&name);
        corpus_scene(seed, i, w, h)
            .save(&path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
        let labels = corpus_labels(i);
        let [f, g, h] = labels.bits();
        labels_csv.push_str(&format!("{name},{f},{g},{h}\n"));
        out.push(SceneSource { path, labels });
    }
    crate::io::write_atomic(&dir.join("labels.csv"), labels_csv.as_bytes())?;
    Ok(out)
}
