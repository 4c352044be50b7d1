use crate::filter::Plane;
use crate::types::Keypoint;

use super::{is_local_max, refine, sort_keypoints, too_small};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastParams {
    /// Intensity difference a circle pixel needs to count as brighter or
    /// darker than the center.
    pub threshold: f64,
    /// Minimum length of the contiguous brighter or darker arc.
    pub arc: usize,
}

impl Default for FastParams {
    fn default() -> Self {
        FastParams {
            threshold: 20.0,
            arc: 9,
        }
    }
}

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

fn longest_circular_run(flags: &[bool; 16]) -> usize {
    if flags.iter().all(|&f| f) {
        return 16;
    }
    let mut best = 0;
    let mut run = 0;
    for i in 0..32 {
        if flags[i % 16] {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Segment-test score at (x, y): the larger of the summed excess
/// brightness and summed excess darkness over the circle, or 0 when
/// neither arc is long enough.
fn corner_score(img: &Plane, x: usize, y: usize, p: &FastParams) -> f64 {
    let center = img.get(x, y);
    let mut bright = [false; 16];
    let mut dark = [false; 16];
    let mut bright_sum = 0.0;
    let mut dark_sum = 0.0;
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        if v > center + p.threshold {
            bright[i] = true;
            bright_sum += v - center - p.threshold;
        } else if v < center - p.threshold {
            dark[i] = true;
            dark_sum += center - v - p.threshold;
        }
    }
    let mut score: f64 = 0.0;
    if longest_circular_run(&bright) >= p.arc {
        score = score.max(bright_sum);
    }
    if longest_circular_run(&dark) >= p.arc {
        score = score.max(dark_sum);
    }
    score
}

/// FAST segment-test corners with 3x3 non-maximum suppression on the
/// corner score. Scale is fixed at 1.
pub fn detect_fast_segment(img: &Plane, params: &FastParams) -> Vec<Keypoint> {
    if too_small(img, "fast") {
        return Vec::new();
    }
    let (w, h) = (img.width, img.height);
    let mut score = Plane::new(w, h);
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            score.set(x, y, corner_score(img, x, y, params));
        }
    }
    let mut out = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let s = score.get(x, y);
            if s > 0.0 && is_local_max(&score, x, y) {
                let (fx, fy) = refine(&score, x, y);
                let mut kp = Keypoint::new(fx, fy, 1.0);
                kp.response = s;
                out.push(kp);
            }
        }
    }
    sort_keypoints(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::fixtures::{gray, near};
    use crate::detect::DetectorConfig;

    #[test]
    fn run_lengths() {
        let mut f = [false; 16];
        assert_eq!(longest_circular_run(&f), 0);
        for i in [14, 15, 0, 1, 2] {
            f[i] = true;
        }
        assert_eq!(longest_circular_run(&f), 5);
        assert_eq!(longest_circular_run(&[true; 16]), 16);
    }

    #[test]
    fn constant_image_has_no_corners() {
        let img = gray(30, 30, |_, _| 200);
        assert!(DetectorConfig::fast().detect(&img).unwrap().is_empty());
    }

    /// Grid of separated 8x8 squares: every square corner is an L-corner.
    #[test]
    fn square_grid_corners() {
        let img = gray(80, 80, |x, y| {
            let on = (x % 16) >= 4 && (x % 16) < 12 && (y % 16) >= 4 && (y % 16) < 12;
            if on { 230 } else { 30 }
        });
        let kps = DetectorConfig::fast().detect(&img).unwrap();
        for by in 0..5 {
            for bx in 0..5 {
                for (cx, cy) in [(4, 4), (11, 4), (4, 11), (11, 11)] {
                    let (x, y) = ((bx * 16 + cx) as f64, (by * 16 + cy) as f64);
                    if x < 3.0 || y < 3.0 || x > 76.0 || y > 76.0 {
                        continue;
                    }
                    assert!(kps.iter().any(|k| near(k, x, y, 2.0)), "missing ({x},{y})");
                }
            }
        }
    }

    /// Ideal X-junctions split the circle into four quadrant arcs of at
    /// most eight pixels, so the 9-arc test cannot fire on them.
    #[test]
    fn checkerboard_x_junctions_are_not_segment_corners() {
        let img = gray(64, 64, |x, y| if ((x / 8) + (y / 8)) % 2 == 0 { 255 } else { 0 });
        let kps = DetectorConfig::fast().detect(&img).unwrap();
        assert!(kps.is_empty(), "{kps:?}");
    }

    #[test]
    fn inversion_keeps_positions() {
        let base = crate::synth::natural_texture(21, 70, 50);
        let inv = gray(70, 50, |x, y| 255 - base.as_luma8().unwrap().get_pixel(x, y)[0]);
        let a = DetectorConfig::fast().detect(&base).unwrap();
        let b = DetectorConfig::fast().detect(&inv).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}
