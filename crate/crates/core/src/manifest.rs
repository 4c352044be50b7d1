//! The dataset manifest: scenes, schedules and every materialized image.
//!
//! A manifest is a single JSON document with three top-level fields,
//! `scenes`, `transforms` and `images`. Image paths are relative to the
//! directory holding the manifest so fixtures stay portable.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Homography, SceneId, SceneLabels, StepIndex, TransformKind, TransformSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: SceneId,
    /// Reference image, relative to the manifest directory.
    pub path: String,
    pub labels: SceneLabels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub scene: SceneId,
    pub kind: TransformKind,
    pub step: StepIndex,
    pub amount: f64,
    pub path: String,
    /// Maps the scene's step-1 image onto this one.
    pub homography: Homography,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenes: Vec<SceneEntry>,
    pub transforms: Vec<TransformSpec>,
    pub images: Vec<ImageEntry>,
}

/// Total image count for `n` scenes under the given schedule lengths.
pub fn expected_image_count(n: usize, schedule_lengths: &[usize]) -> usize {
    n * schedule_lengths.iter().sum::<usize>()
}

/// A single broken manifest invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateScene(SceneId),
    SceneIdOutOfRange { id: SceneId, n: usize },
    InvalidSchedule { kind: TransformKind, reason: String },
    DuplicateSchedule(TransformKind),
    UnknownScene(SceneId),
    UnknownSchedule(TransformKind),
    StepOutOfRange { scene: SceneId, kind: TransformKind, step: StepIndex },
    AmountMismatch { scene: SceneId, kind: TransformKind, step: StepIndex, amount: f64 },
    DuplicateImage { scene: SceneId, kind: TransformKind, step: StepIndex },
    MissingImage { scene: SceneId, kind: TransformKind, step: StepIndex },
    SingularHomography { path: String },
    ImageCount { expected: usize, actual: usize },
    MissingFile(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateScene(id) => write!(f, "scene {id} listed more than once"),
            SceneIdOutOfRange { id, n } => write!(f, "scene id {id} outside 1..={n}"),
            InvalidSchedule { kind, reason } => write!(f, "schedule {kind}: {reason}"),
            DuplicateSchedule(kind) => write!(f, "schedule {kind} listed more than once"),
            UnknownScene(id) => write!(f, "image refers to unknown scene {id}"),
            UnknownSchedule(kind) => write!(f, "image refers to undeclared schedule {kind}"),
            StepOutOfRange { scene, kind, step } => {
                write!(f, "scene {scene} {kind}: step {step} outside schedule")
            }
            AmountMismatch { scene, kind, step, amount } => write!(
                f,
                "scene {scene} {kind} step {step}: amount {amount} disagrees with schedule"
            ),
            DuplicateImage { scene, kind, step } => {
                write!(f, "scene {scene} {kind} step {step} listed more than once")
            }
            MissingImage { scene, kind, step } => {
                write!(f, "scene {scene} {kind} step {step} has no image entry")
            }
            SingularHomography { path } => write!(f, "{path}: homography is singular"),
            ImageCount { expected, actual } => {
                write!(f, "expected {expected} images, manifest lists {actual}")
            }
            MissingFile(path) => write!(f, "missing file: {path}"),
        }
    }
}

impl DatasetManifest {
    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            context: context.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json_string().as_bytes())
    }

    pub fn scene_count(&self) -> usize {
        self.scenes.len()
    }

    pub fn schedule(&self, kind: TransformKind) -> Option<&TransformSpec> {
        self.transforms.iter().find(|t| t.kind == kind)
    }

    pub fn schedule_lengths(&self) -> Vec<usize> {
        self.transforms.iter().map(TransformSpec::len).collect()
    }

    pub fn labels(&self) -> BTreeMap<SceneId, SceneLabels> {
        self.scenes.iter().map(|s| (s.id, s.labels)).collect()
    }

    pub fn image(&self, scene: SceneId, kind: TransformKind, step: StepIndex) -> Option<&ImageEntry> {
        self.images
            .iter()
            .find(|i| i.scene == scene && i.kind == kind && i.step == step)
    }

    /// Index of images keyed by (scene, kind, step).
    pub fn image_index(&self) -> BTreeMap<(SceneId, TransformKind, StepIndex), &ImageEntry> {
        self.images
            .iter()
            .map(|i| ((i.scene, i.kind, i.step), i))
            .collect()
    }

    /// Checks every structural invariant and that each referenced file
    /// exists under `root`. An empty result means the manifest is sound.
    pub fn validate(&self, root: &Path) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.scenes.len();

        let mut seen = HashSet::new();
        for s in &self.scenes {
            if !seen.insert(s.id) {
                out.push(Violation::DuplicateScene(s.id));
            }
            if s.id.0 == 0 || s.id.0 as usize > n {
                out.push(Violation::SceneIdOutOfRange { id: s.id, n });
            }
        }

        let mut kinds = HashSet::new();
        for t in &self.transforms {
            if !kinds.insert(t.kind) {
                out.push(Violation::DuplicateSchedule(t.kind));
            }
            if let Err(e) = t.check() {
                out.push(Violation::InvalidSchedule {
                    kind: t.kind,
                    reason: e.to_string(),
                });
            }
        }

        let mut present = BTreeSet::new();
        for img in &self.images {
            if !seen.contains(&img.scene) {
                out.push(Violation::UnknownScene(img.scene));
            }
            match self.schedule(img.kind) {
                None => out.push(Violation::UnknownSchedule(img.kind)),
                Some(spec) => match (img.step.0 >= 1).then(|| spec.amount(img.step)).flatten() {
                    None => out.push(Violation::StepOutOfRange {
                        scene: img.scene,
                        kind: img.kind,
                        step: img.step,
                    }),
                    Some(a) if a != img.amount => out.push(Violation::AmountMismatch {
                        scene: img.scene,
                        kind: img.kind,
                        step: img.step,
                        amount: img.amount,
                    }),
                    Some(_) => {}
                },
            }
            if !present.insert((img.scene, img.kind, img.step)) {
                out.push(Violation::DuplicateImage {
                    scene: img.scene,
                    kind: img.kind,
                    step: img.step,
                });
            }
            if !img.homography.is_invertible() {
                out.push(Violation::SingularHomography {
                    path: img.path.clone(),
                });
            }
        }

        for s in &self.scenes {
            for t in &self.transforms {
                for step in t.steps() {
                    if !present.contains(&(s.id, t.kind, step)) {
                        out.push(Violation::MissingImage {
                            scene: s.id,
                            kind: t.kind,
                            step,
                        });
                    }
                }
            }
        }

        let expected = expected_image_count(n, &self.schedule_lengths());
        if expected != self.images.len() {
            out.push(Violation::ImageCount {
                expected,
                actual: self.images.len(),
            });
        }

        let paths = self
            .scenes
            .iter()
            .map(|s| &s.path)
            .chain(self.images.iter().map(|i| &i.path));
        for p in paths {
            if !resolve(root, p).is_file() {
                out.push(Violation::MissingFile(p.clone()));
            }
        }
        out
    }
}

/// Resolves a manifest-relative path.
pub fn resolve(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}
