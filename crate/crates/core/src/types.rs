//! Domain value types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-based scene index, unique within a database.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneId(pub u32);

impl fmt::Display for SceneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One-based transformation step. Step 1 is always the untransformed
/// reference image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepIndex(pub u32);

impl StepIndex {
    pub const REFERENCE: StepIndex = StepIndex(1);

    pub fn is_reference(self) -> bool {
        self.0 == 1
    }

    /// Zero-based position in a schedule's amount list.
    pub fn offset(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for StepIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Human-assigned scene attributes. Each label is stored with the
/// polarity fixed so that `true` means outdoor, human-made and simple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneLabels {
    #[serde(rename = "f", with = "bit")]
    pub outdoor: bool,
    #[serde(rename = "g", with = "bit")]
    pub human_made: bool,
    #[serde(rename = "h", with = "bit")]
    pub simple: bool,
}

impl SceneLabels {
    pub fn new(outdoor: bool, human_made: bool, simple: bool) -> Self {
        SceneLabels {
            outdoor,
            human_made,
            simple,
        }
    }

    /// Parse from the three 0/1 integers `f`, `g`, `h`.
    pub fn from_bits(f: u8, g: u8, h: u8) -> Result<Self> {
        let bit = |name: &str, v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::data(format!("label {name} must be 0 or 1, got {v}"))),
        };
        Ok(SceneLabels::new(bit("f", f)?, bit("g", g)?, bit("h", h)?))
    }

    pub fn bits(&self) -> [u8; 3] {
        [
            self.outdoor as u8,
            self.human_made as u8,
            self.simple as u8,
        ]
    }
}

mod bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(de::Error::custom(format!("label must be 0 or 1, got {v}"))),
        }
    }
}

/// Elliptical region `a(x-x0)^2 + 2b(x-x0)(y-y0) + c(y-y0)^2 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Ellipse {
    pub fn circle(radius: f64) -> Self {
        let inv = 1.0 / (radius * radius);
        Ellipse {
            a: inv,
            b: 0.0,
            c: inv,
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.c > 0.0 && self.det() > 0.0
    }

    /// Geometric-mean radius, `(ac - b^2)^(-1/4)`.
    pub fn scale(&self) -> f64 {
        self.det().powf(-0.25)
    }

    /// Area of the ellipse, `pi / sqrt(ac - b^2)`.
    pub fn area(&self) -> f64 {
        std::f64::consts::PI / self.det().sqrt()
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn extent(&self) -> (f64, f64) {
        let det = self.det();
        ((self.c / det).sqrt(), (self.a / det).sqrt())
    }

    pub fn contains(&self, dx: f64, dy: f64) -> bool {
        self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy <= 1.0
    }
}

/// An interest point. `response` is the detector's strength at the point
/// and is zero for keypoints read from interchange files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub region: Option<Ellipse>,
    #[serde(default)]
    pub response: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, scale: f64) -> Self {
        Keypoint {
            x,
            y,
            scale,
            region: None,
            response: 0.0,
        }
    }

    pub fn with_region(x: f64, y: f64, region: Ellipse) -> Self {
        Keypoint {
            x,
            y,
            scale: region.scale(),
            region: Some(region),
            response: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.scale > 0.0
            && self.region.is_none_or(|e| e.is_positive_definite())
    }

    /// The region used for overlap tests: the stored ellipse, or a circle
    /// of radius `scale`.
    pub fn ellipse(&self) -> Ellipse {
        self.region.unwrap_or_else(|| Ellipse::circle(self.scale))
    }
}

/// 3x3 projective mapping from reference to transformed image, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Homography(pub [f64; 9]);

impl Default for Homography {
    fn default() -> Self {
        Homography::IDENTITY
    }
}

impl Homography {
    pub const IDENTITY: Homography =
        Homography([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography([1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_invertible(&self) -> bool {
        self.is_finite() && self.det().abs() > 1e-12
    }

    pub fn inverse(&self) -> Result<Homography> {
        if !self.is_invertible() {
            return Err(Error::data("homography is singular"));
        }
        let m = &self.0;
        let det = self.det();
        let cof = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Ok(Homography(cof.map(|v| v / det)))
    }

    /// Maps a point; `None` when it lands on or behind the line at infinity.
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        if w <= f64::EPSILON {
            return None;
        }
        Some((
            (m[0] * x + m[1] * y + m[2]) / w,
            (m[3] * x + m[4] * y + m[5]) / w,
        ))
    }

    /// Local affine approximation (2x2 Jacobian, row-major) at a point.
    pub fn jacobian(&self, x: f64, y: f64) -> [f64; 4] {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        let u = m[0] * x + m[1] * y + m[2];
        let v = m[3] * x + m[4] * y + m[5];
        let w2 = w * w;
        [
            (m[0] * w - u * m[6]) / w2,
            (m[1] * w - u * m[7]) / w2,
            (m[3] * w - v * m[6]) / w2,
            (m[4] * w - v * m[7]) / w2,
        ]
    }
}

/// The three photometric transformations of the database.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    GaussianBlur,
    JpegCompression,
    LightReduction,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [
        TransformKind::GaussianBlur,
        TransformKind::JpegCompression,
        TransformKind::LightReduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::GaussianBlur => "gaussian-blur",
            TransformKind::JpegCompression => "jpeg-compression",
            TransformKind::LightReduction => "light-reduction",
        }
    }

    /// Human-readable amount, e.g. `1.5σ` or `60%`.
    pub fn format_amount(self, amount: f64) -> String {
        match self {
            TransformKind::GaussianBlur => format!("{amount}σ"),
            _ => format!("{amount}%"),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::data(format!("unknown transform kind `{s}`")))
    }
}

/// A transformation schedule: the amount applied at each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub amounts: Vec<f64>,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, amounts: Vec<f64>) -> Result<Self> {
        let spec = TransformSpec { kind, amounts };
        spec.check()?;
        Ok(spec)
    }

    /// Schedule length `m`, reference step included.
    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }

    pub fn amount(&self, step: StepIndex) -> Option<f64> {
        self.amounts.get(step.offset()).copied()
    }

    pub fn steps(&self) -> impl Iterator<Item = StepIndex> + '_ {
        (1..=self.amounts.len() as u32).map(StepIndex)
    }

    pub fn check(&self) -> Result<()> {
        match self.amounts.first() {
            None => return Err(Error::data(format!("{}: empty schedule", self.kind))),
            Some(&first) if first != 0.0 => {
                return Err(Error::data(format!(
                    "{}: first amount must be 0, got {first}",
                    self.kind
                )))
            }
            _ => {}
        }
        if self.amounts.iter().any(|a| !a.is_finite()) {
            return Err(Error::data(format!("{}: non-finite amount", self.kind)));
        }
        if let Some(w) = self.amounts.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "{}: amounts must be strictly increasing ({} then {})",
                self.kind, w[0], w[1]
            )));
        }
        let max = match self.kind {
            TransformKind::GaussianBlur => f64::INFINITY,
            TransformKind::JpegCompression => 98.0,
            TransformKind::LightReduction => 90.0,
        };
        if let Some(a) = self.amounts.iter().find(|&&a| a > max) {
            return Err(Error::data(format!(
                "{}: amount {a} exceeds maximum {max}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// One repeatability measurement for a (scene, detector, transform, step).
#[derive(Clone, Debug, PartialEq)]
pub struct RepeatabilityRecord {
    pub scene: SceneId,
    pub detector: String,
    pub kind: TransformKind,
    pub step: StepIndex,
    pub amount: f64,
    pub n_ref: usize,
    pub n_rep: usize,
}

impl RepeatabilityRecord {
    /// `n_rep / n_ref`, or `None` when no reference keypoint lies in the
    /// common part.
    pub fn rate(&self) -> Option<f64> {
        (self.n_ref > 0).then(|| self.n_rep as f64 / self.n_ref as f64)
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            detector: self.detector.clone(),
            kind: self.kind,
            scene: self.scene,
            step: self.step,
        }
    }
}

/// Identity of a record; ordering defines the canonical row order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub detector: String,
    pub kind: TransformKind,
    pub scene: SceneId,
    pub step: StepIndex,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_serialize_as_bits() {
        let l = SceneLabels::new(true, false, true);
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(s, r#"{"f":1,"g":0,"h":1}"#);
        assert_eq!(serde_json::from_str::<SceneLabels>(&s).unwrap(), l);
        assert!(serde_json::from_str::<SceneLabels>(r#"{"f":2,"g":0,"h":1}"#).is_err());
        assert!(serde_json::from_str::<SceneLabels>(r#"{"f":1,"g":0}"#).is_err());
        assert!(SceneLabels::from_bits(1, 0, 3).is_err());
    }

    #[test]
    fn ellipse_scale_of_circle() {
        let e = Ellipse::circle(10.0);
        assert!((e.scale() - 10.0).abs() < 1e-12);
        assert!(e.is_positive_definite());
        assert!(!Ellipse { a: -0.01, b: 0.0, c: 0.01 }.is_positive_definite());
        assert!(!Ellipse { a: 1.0, b: 2.0, c: 1.0 }.is_positive_definite());
    }

    #[test]
    fn homography_inverse_roundtrip() {
        let h = Homography([1.1, 0.05, 3.0, -0.02, 0.95, -7.0, 1e-4, -2e-4, 1.0]);
        let inv = h.inverse().unwrap();
        let (u, v) = h.apply(40.0, 25.0).unwrap();
        let (x, y) = inv.apply(u, v).unwrap();
        assert!((x - 40.0).abs() < 1e-9 && (y - 25.0).abs() < 1e-9);
        assert!(Homography([0.0; 9]).inverse().is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = Homography([1.1, 0.05, 3.0, -0.02, 0.95, -7.0, 1e-3, -2e-3, 1.0]);
        let j = h.jacobian(30.0, 12.0);
        let d = 1e-6;
        let f = |x, y| h.apply(x, y).unwrap();
        let (x1, y1) = f(30.0 + d, 12.0);
        let (x0, y0) = f(30.0 - d, 12.0);
        assert!((j[0] - (x1 - x0) / (2.0 * d)).abs() < 1e-6);
        assert!((j[2] - (y1 - y0) / (2.0 * d)).abs() < 1e-6);
        let (x1, y1) = f(30.0, 12.0 + d);
        let (x0, y0) = f(30.0, 12.0 - d);
        assert!((j[1] - (x1 - x0) / (2.0 * d)).abs() < 1e-6);
        assert!((j[3] - (y1 - y0) / (2.0 * d)).abs() < 1e-6);
    }

    #[test]
    fn schedule_checks() {
        use TransformKind::*;
        assert!(TransformSpec::new(GaussianBlur, vec![0.0]).is_ok());
        assert!(TransformSpec::new(GaussianBlur, vec![]).is_err());
        assert!(TransformSpec::new(GaussianBlur, vec![0.5, 1.0]).is_err());
        assert!(TransformSpec::new(GaussianBlur, vec![0.0, 1.0, 1.0]).is_err());
        assert!(TransformSpec::new(JpegCompression, vec![0.0, 99.0]).is_err());
        assert!(TransformSpec::new(LightReduction, vec![0.0, 95.0]).is_err());
    }

    #[test]
    fn undefined_rate_is_distinct_from_zero() {
        let mut r = RepeatabilityRecord {
            scene: SceneId(1),
            detector: "d".into(),
            kind: TransformKind::GaussianBlur,
            step: StepIndex(2),
            amount: 0.5,
            n_ref: 0,
            n_rep: 0,
        };
        assert_eq!(r.rate(), None);
        r.n_ref = 4;
        assert_eq!(r.rate(), Some(0.0));
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in TransformKind::ALL {
            assert_eq!(k.name().parse::<TransformKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }
}
