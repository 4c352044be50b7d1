use crate::filter::{gaussian_blur, Plane};
use crate::types::Keypoint;

use super::{is_local_max, refine, sort_keypoints, too_small};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarrisParams {
    /// Trace weight in `det - k * trace^2`.
    pub k: f64,
    /// Integration scale of the structure tensor.
    pub sigma: f64,
    /// Minimum corner response, in (8-bit intensity)^4.
    pub threshold: f64,
}

impl Default for HarrisParams {
    fn default() -> Self {
        HarrisParams {
            k: 0.04,
            sigma: 2.0,
            threshold: 1e5,
        }
    }
}

/// Harris corner response `det(M) - k trace(M)^2` of the Gaussian-weighted
/// structure tensor `M`, with central-difference gradients.
pub fn harris_response(img: &Plane, params: &HarrisParams) -> Plane {
    let (w, h) = (img.width, img.height);
    let mut ixx = Plane::new(w, h);
    let mut iyy = Plane::new(w, h);
    let mut ixy = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (img.get_reflect(xi + 1, yi) - img.get_reflect(xi - 1, yi));
            let gy = 0.5 * (img.get_reflect(xi, yi + 1) - img.get_reflect(xi, yi - 1));
            ixx.set(x, y, gx * gx);
            iyy.set(x, y, gy * gy);
            ixy.set(x, y, gx * gy);
        }
    }
    let sxx = gaussian_blur(&ixx, params.sigma);
    let syy = gaussian_blur(&iyy, params.sigma);
    let sxy = gaussian_blur(&ixy, params.sigma);
    let data = sxx
        .data
        .iter()
        .zip(&syy.data)
        .zip(&sxy.data)
        .map(|((a, c), b)| a * c - b * b - params.k * (a + c) * (a + c))
        .collect();
    Plane {
        width: w,
        height: h,
        data,
    }
}

/// Local maxima of the Harris response above threshold. The keypoint scale
/// is the integration sigma.
pub fn detect_harris(img: &Plane, params: &HarrisParams) -> Vec<Keypoint> {
    if too_small(img, "harris") {
        return Vec::new();
    }
    let resp = harris_response(img, params);
    let border = 2;
    let mut out = Vec::new();
    for y in border..img.height - border {
        for x in border..img.width - border {
            let r = resp.get(x, y);
            if r > params.threshold && is_local_max(&resp, x, y) {
                let (fx, fy) = refine(&resp, x, y);
                let mut kp = Keypoint::new(fx, fy, params.sigma);
                kp.response = r;
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
    use crate::detect::{luminance, DetectorConfig};

    #[test]
    fn constant_image_has_no_corners() {
        let img = gray(40, 40, |_, _| 120);
        assert!(DetectorConfig::harris().detect(&img).unwrap().is_empty());
    }

    #[test]
    fn square_corners() {
        // white square covering pixels 20..=43 on black
        let img = gray(64, 64, |x, y| if (20..44).contains(&x) && (20..44).contains(&y) { 255 } else { 0 });
        let kps = DetectorConfig::harris().detect(&img).unwrap();
        assert_eq!(kps.len(), 4, "{kps:?}");
        for (cx, cy) in [(19.5, 19.5), (43.5, 19.5), (19.5, 43.5), (43.5, 43.5)] {
            assert!(kps.iter().any(|k| near(k, cx, cy, 2.0)), "no corner near ({cx},{cy}): {kps:?}");
        }
    }

    #[test]
    fn deterministic() {
        let img = crate::synth::complex_scene(4, 80, 60);
        let luma = luminance(&img);
        let p = HarrisParams::default();
        assert_eq!(detect_harris(&luma, &p), detect_harris(&luma, &p));
    }
}
