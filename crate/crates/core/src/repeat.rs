//! Repeatability of a keypoint set under a known homography.
//!
//! `rate = n_rep / n_ref`, where `n_ref` counts reference keypoints inside
//! the part of the reference image that maps into the transformed image,
//! and `n_rep` counts those re-detected: one-to-one matches whose mapped
//! position lies within `epsilon` pixels of a transformed keypoint
//! (optionally also requiring a small region overlap error).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::{Ellipse, Homography, Keypoint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    /// Maximum distance in pixels between a mapped reference keypoint and
    /// its match.
    pub epsilon: f64,
    /// Maximum ellipse overlap error, `1 - IoU`.
    pub overlap_max_error: f64,
    /// Enforce the overlap criterion. Only takes effect when every keypoint
    /// in both sets carries an elliptical region.
    pub use_overlap: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            epsilon: 1.5,
            overlap_max_error: 0.4,
            use_overlap: false,
        }
    }
}

impl MatchParams {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::param(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.overlap_max_error > 0.0 && self.overlap_max_error < 1.0) {
            return Err(Error::param(format!(
                "overlap error bound must be in (0, 1), got {}",
                self.overlap_max_error
            )));
        }
        Ok(())
    }
}

/// Image size in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub fn new(width: u32, height: u32) -> Self {
        Dims { width, height }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }
}

/// Region of the reference image whose points map inside the transformed
/// image.
#[derive(Clone, Copy, Debug)]
pub struct CommonPart {
    homography: Homography,
    reference: Dims,
    test: Dims,
}

impl CommonPart {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.reference.contains(x, y)
            && self
                .homography
                .apply(x, y)
                .is_some_and(|(u, v)| self.test.contains(u, v))
    }
}

pub fn common_part(homography: &Homography, reference: Dims, test: Dims) -> Result<CommonPart> {
    if !homography.is_invertible() {
        return Err(Error::data("common part: homography is singular"));
    }
    Ok(CommonPart {
        homography: *homography,
        reference,
        test,
    })
}

/// A matched pair of indices into the reference and test lists.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub reference: usize,
    pub test: usize,
    pub distance: f64,
}

/// Reference ellipse mapped through the local affine approximation of `h`.
fn map_ellipse(e: &Ellipse, h: &Homography, x: f64, y: f64) -> Ellipse {
    let [a, b, c, d] = h.jacobian(x, y);
    let det = a * d - b * c;
    // inverse of the Jacobian
    let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
    // M' = J^-T M J^-1
    let m = [[e.a, e.b], [e.b, e.c]];
    let inv = [[ia, ib], [ic, id]];
    let mut tmp = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            tmp[i][j] = m[i][0] * inv[0][j] + m[i][1] * inv[1][j];
        }
    }
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = inv[0][i] * tmp[0][j] + inv[1][i] * tmp[1][j];
        }
    }
    Ellipse {
        a: out[0][0],
        b: 0.5 * (out[0][1] + out[1][0]),
        c: out[1][1],
    }
}

/// Samples per side of the grid used to estimate ellipse overlap.
const OVERLAP_GRID: usize = 64;

/// `1 - |A ∩ B| / |A ∪ B|` for two ellipses centered at `pa` and `pb`,
/// estimated on a regular grid over their joint bounding box.
pub fn overlap_error(ea: &Ellipse, pa: (f64, f64), eb: &Ellipse, pb: (f64, f64)) -> f64 {
    let (ax, ay) = ea.extent();
    let (bx, by) = eb.extent();
    let x0 = (pa.0 - ax).min(pb.0 - bx);
    let x1 = (pa.0 + ax).max(pb.0 + bx);
    let y0 = (pa.1 - ay).min(pb.1 - by);
    let y1 = (pa.1 + ay).max(pb.1 + by);
    let (sx, sy) = ((x1 - x0) / OVERLAP_GRID as f64, (y1 - y0) / OVERLAP_GRID as f64);
    let (mut both, mut either) = (0usize, 0usize);
    for j in 0..OVERLAP_GRID {
        let y = y0 + (j as f64 + 0.5) * sy;
        for i in 0..OVERLAP_GRID {
            let x = x0 + (i as f64 + 0.5) * sx;
            let in_a = ea.contains(x - pa.0, y - pa.1);
            let in_b = eb.contains(x - pb.0, y - pb.1);
            both += (in_a && in_b) as usize;
            either += (in_a || in_b) as usize;
        }
    }
    if either == 0 {
        return 1.0;
    }
    1.0 - both as f64 / either as f64
}

/// Greedy one-to-one matching. Admissible pairs are taken in ascending
/// distance, ties broken by (reference index, test index); each keypoint is
/// used at most once.
pub fn match_keypoints(
    reference: &[Keypoint],
    test: &[Keypoint],
    homography: &Homography,
    params: &MatchParams,
) -> Vec<Match> {
    let eps = params.epsilon;
    let use_overlap = params.use_overlap
        && reference.iter().chain(test).all(|k| k.region.is_some());

    let cell = |v: f64| (v / eps).floor() as i64;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, t) in test.iter().enumerate() {
        grid.entry((cell(t.x), cell(t.y))).or_default().push(i);
    }

    let mut candidates = Vec::new();
    for (ri, r) in reference.iter().enumerate() {
        let Some((u, v)) = homography.apply(r.x, r.y) else {
            continue;
        };
        let (cx, cy) = (cell(u), cell(v));
        let mapped = use_overlap.then(|| map_ellipse(&r.ellipse(), homography, r.x, r.y));
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                let Some(bucket) = grid.get(&(gx, gy)) else {
                    continue;
                };
                for &ti in bucket {
                    let t = &test[ti];
                    let d = (t.x - u).hypot(t.y - v);
                    if d > eps {
                        continue;
                    }
                    if let Some(me) = &mapped {
                        let err = overlap_error(me, (u, v), &t.ellipse(), (t.x, t.y));
                        if err > params.overlap_max_error {
                            continue;
                        }
                    }
                    candidates.push(Match {
                        reference: ri,
                        test: ti,
                        distance: d,
                    });
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.reference.cmp(&b.reference))
            .then(a.test.cmp(&b.test))
    });

    let mut ref_used = vec![false; reference.len()];
    let mut test_used = vec![false; test.len()];
    let mut out = Vec::new();
    for m in candidates {
        if !ref_used[m.reference] && !test_used[m.test] {
            ref_used[m.reference] = true;
            test_used[m.test] = true;
            out.push(m);
        }
    }
    out
}

/// Counts behind one repeatability rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Repeatability {
    pub n_ref: usize,
    pub n_rep: usize,
}

impl Repeatability {
    /// `None` when no reference keypoint falls in the common part: the
    /// rate is undefined there, which is distinct from a rate of 0.
    pub fn rate(&self) -> Option<f64> {
        (self.n_ref > 0).then(|| self.n_rep as f64 / self.n_ref as f64)
    }
}

pub fn compute_repeatability(
    reference: &[Keypoint],
    test: &[Keypoint],
    homography: &Homography,
    reference_dims: Dims,
    test_dims: Dims,
    params: &MatchParams,
) -> Result<Repeatability> {
    params.check()?;
    let common = common_part(homography, reference_dims, test_dims)?;
    let inside: Vec<Keypoint> = reference
        .iter()
        .filter(|k| common.contains(k.x, k.y))
        .copied()
        .collect();
    let n_rep = match_keypoints(&inside, test, homography, params).len();
    Ok(Repeatability {
        n_ref: inside.len(),
        n_rep,
    })
}
