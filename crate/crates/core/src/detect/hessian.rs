use crate::filter::{gaussian_blur, Plane};
use crate::types::Keypoint;

use super::{refine, sort_keypoints, too_small};

#[derive(Clone, Debug, PartialEq)]
pub struct HessianParams {
    /// Smallest scale of the pyramid.
    pub base_sigma: f64,
    /// Ratio between consecutive scales.
    pub step: f64,
    /// Number of scales; extrema are sought on the interior ones.
    pub levels: usize,
    /// Minimum scale-normalized Hessian determinant, in (8-bit intensity)^2.
    pub threshold: f64,
}

impl Default for HessianParams {
    fn default() -> Self {
        HessianParams {
            base_sigma: 1.2,
            step: 1.4,
            levels: 9,
            threshold: 400.0,
        }
    }
}

impl HessianParams {
    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.levels)
            .map(|i| self.base_sigma * self.step.powi(i as i32))
            .collect()
    }
}

/// `sigma^4 (Lxx Lyy - Lxy^2)` on the image smoothed at `sigma`.
fn normalized_det_hessian(img: &Plane, sigma: f64) -> Plane {
    let l = gaussian_blur(img, sigma);
    let norm = sigma.powi(4);
    Plane::from_fn(img.width, img.height, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let c = l.get_reflect(x, y);
        let lxx = l.get_reflect(x + 1, y) - 2.0 * c + l.get_reflect(x - 1, y);
        let lyy = l.get_reflect(x, y + 1) - 2.0 * c + l.get_reflect(x, y - 1);
        let lxy = 0.25
            * (l.get_reflect(x + 1, y + 1) - l.get_reflect(x + 1, y - 1)
                - l.get_reflect(x - 1, y + 1)
                + l.get_reflect(x - 1, y - 1));
        norm * (lxx * lyy - lxy * lxy)
    })
}

/// Scale-space maxima of the normalized Hessian determinant over
/// `sigma_i = base * step^i`. Each keypoint's scale is its detection sigma.
pub fn detect_hessian_blob(img: &Plane, params: &HessianParams) -> Vec<Keypoint> {
    if too_small(img, "hessian") || params.levels < 3 {
        return Vec::new();
    }
    let sigmas = params.sigmas();
    let stack: Vec<Plane> = sigmas.iter().map(|&s| normalized_det_hessian(img, s)).collect();
    let (w, h) = (img.width, img.height);
    let border = 2;
    let mut out = Vec::new();
    for level in 1..stack.len() - 1 {
        let resp = &stack[level];
        for y in border..h - border {
            for x in border..w - border {
                let c = resp.get(x, y);
                if c <= params.threshold {
                    continue;
                }
                let is_max = (level - 1..=level + 1).all(|l| {
                    (y - 1..=y + 1).all(|ny| {
                        (x - 1..=x + 1).all(|nx| {
                            (l == level && nx == x && ny == y) || stack[l].get(nx, ny) < c
                        })
                    })
                });
                if is_max {
                    let (fx, fy) = refine(resp, x, y);
                    let mut kp = Keypoint::new(fx, fy, sigmas[level]);
                    kp.response = c;
                    out.push(kp);
                }
            }
        }
    }
    sort_keypoints(&mut out);
    out
}
