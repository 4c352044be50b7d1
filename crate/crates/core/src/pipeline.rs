//! File-driven pipeline stages: generate, detect, evaluate, rank, report.
//!
//! Output layout under a run directory:
//!
//! ```text
//! keypoints/<detector>/<image path>.txt   keypoint cache
//! records.csv                             repeatability records
//! records.partial.csv                     in-progress records (resume)
//! evaluate.json                           match parameters of the records
//! trait_indices.csv, <d>_<kind>_<polarity>.svg
//! ```

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{
    format_keypoints, keypoint_file_path, parse_keypoint_file, read_keypoint_file, DetectorConfig,
};
use crate::error::{Error, Result};
use crate::manifest::{resolve, DatasetManifest, ImageEntry};
use crate::rank::{expected_record_count, group_rate_sets, rank_all, TraitIndexVector};
use crate::records::{format_record, header_line, parse_records, read_records, write_records};
use crate::repeat::{compute_repeatability, Dims, MatchParams};
use crate::types::{Keypoint, RecordKey, RepeatabilityRecord, SceneId, SceneLabels, StepIndex, TransformKind};
use crate::xform::{generate_database, SceneSource, ScheduleConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const PARTIAL_RECORDS_FILE: &str = "records.partial.csv";
pub const EVALUATE_PARAMS_FILE: &str = "evaluate.json";
pub const TRAIT_TABLE_FILE: &str = "trait_indices.csv";

/// Runs `f` on a dedicated rayon pool of `jobs` workers.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Err(Error::param("worker count must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Deserialize)]
struct LabelRow {
    file: String,
    f: u8,
    g: u8,
    h: u8,
}

/// Reads `labels.csv` (`file,f,g,h`) from a scene directory. Scenes are
/// returned in file-name order.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<SceneSource>> {
    let labels_path = dir.join(LABELS_FILE);
    if !labels_path.exists() {
        let has_images = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .any(|e| e.path().is_file());
        return Err(if has_images {
            Error::data(format!("{} is missing {LABELS_FILE}", dir.display()))
        } else {
            Error::data(format!("no scenes in {}", dir.display()))
        });
    }
    let text = crate::io::read_to_string(&labels_path)?;
    let ctx = labels_path.display().to_string();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut scenes = Vec::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row.map_err(|e| Error::Parse {
            context: ctx.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let labels = SceneLabels::from_bits(row.f, row.g, row.h)?;
        let path = dir.join(&row.file);
        if !path.is_file() {
            return Err(Error::data(format!("{ctx}: scene image {} not found", row.file)));
        }
        scenes.push((row.file, SceneSource { path, labels }));
    }
    if scenes.is_empty() {
        return Err(Error::data(format!("no scenes in {}", dir.display())));
    }
    scenes.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(scenes.into_iter().map(|(_, s)| s).collect())
}

/// Builds the transformed database for the scenes in `scene_dir`.
pub fn cmd_generate(
    scene_dir: &Path,
    schedule: &ScheduleConfig,
    out: &Path,
    force: bool,
    jobs: usize,
) -> Result<DatasetManifest> {
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(Error::param(format!(
            "{} already exists; refusing to overwrite without --force",
            manifest_path.display()
        )));
    }
    let scenes = load_scene_dir(scene_dir)?;
    let specs = schedule.specs()?;
    info!("generating {} scenes x {} schedules into {}", scenes.len(), specs.len(), out.display());
    with_pool(jobs, || generate_database(&scenes, &specs, out))?
}

/// Loads a manifest and rejects it if any invariant is broken.
pub fn load_valid_manifest(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let manifest = DatasetManifest::load(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let violations = manifest.validate(&root);
    if let Some(first) = violations.first() {
        return Err(Error::data(format!(
            "{}: {} manifest violation(s), first: {first}",
            path.display(),
            violations.len()
        )));
    }
    Ok((manifest, root))
}

/// Where keypoints for one (detector, image) pair live.
fn keypoint_source(d: &DetectorConfig, image_rel: &str, out: &Path) -> PathBuf {
    d.external_path(image_rel)
        .unwrap_or_else(|| keypoint_file_path(&out.join("keypoints").join(&d.id), image_rel))
}

/// Keypoints for one image: read from the cache or the external
/// detector's output, or detected and cached. Freshly detected keypoints
/// go through the file format so cached and uncached runs agree exactly.
fn keypoints_for(d: &DetectorConfig, root: &Path, image_rel: &str, out: &Path) -> Result<Vec<Keypoint>> {
    let file = keypoint_source(d, image_rel, out);
    if file.exists() {
        return read_keypoint_file(&file);
    }
    if d.is_external() {
        return Err(Error::data(format!(
            "detector {}: no keypoint file for image {image_rel} (expected {})",
            d.id,
            file.display()
        )));
    }
    let img = crate::io::read_image(&resolve(root, image_rel))?;
    let text = format_keypoints(&d.detect(&img)?);
    crate::io::write_atomic(&file, text.as_bytes())?;
    parse_keypoint_file(&text)
}

/// Runs every built-in detector over every image, filling the keypoint
/// cache. External detectors are only checked for completeness.
pub fn cmd_detect(manifest_path: &Path, detectors: &[DetectorConfig], out: &Path, jobs: usize) -> Result<usize> {
    let (manifest, root) = load_valid_manifest(manifest_path)?;
    let work: Vec<(&DetectorConfig, &ImageEntry)> = detectors
        .iter()
        .flat_map(|d| manifest.images.iter().map(move |img| (d, img)))
        .collect();
    with_pool(jobs, || {
        work.par_iter()
            .map(|(d, img)| keypoints_for(d, &root, &img.path, out).map(|k| k.len()))
            .try_reduce(|| 0, |a, b| Ok(a + b))
    })?
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EvaluateParams {
    epsilon: f64,
    overlap_max_error: f64,
    use_overlap: bool,
    detectors: BTreeMap<String, String>,
}

impl EvaluateParams {
    fn new(detectors: &[DetectorConfig], params: &MatchParams) -> Self {
        EvaluateParams {
            epsilon: params.epsilon,
            overlap_max_error: params.overlap_max_error,
            use_overlap: params.use_overlap,
            detectors: detectors
                .iter()
                .map(|d| (d.id.clone(), format!("{:?}", d.kind)))
                .collect(),
        }
    }

    /// Parameters of a previous run must agree on every shared detector.
    fn compatible(&self, other: &EvaluateParams) -> bool {
        self.epsilon == other.epsilon
            && self.overlap_max_error == other.overlap_max_error
            && self.use_overlap == other.use_overlap
            && self
                .detectors
                .iter()
                .all(|(id, kind)| other.detectors.get(id).is_none_or(|k| k == kind))
    }

    fn merge(&mut self, other: &EvaluateParams) {
        for (id, kind) in &other.detectors {
            self.detectors.entry(id.clone()).or_insert_with(|| kind.clone());
        }
    }
}

/// Settings shared by evaluate, rank and report.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub detectors: Vec<DetectorConfig>,
    pub params: MatchParams,
    pub j: usize,
    pub out: PathBuf,
    pub jobs: usize,
}

impl RunConfig {
    pub fn new(manifest: PathBuf, out: PathBuf) -> Self {
        RunConfig {
            manifest,
            detectors: DetectorConfig::builtins(),
            params: MatchParams::default(),
            j: 20,
            out,
            jobs: 1,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        if self.j == 0 {
            return Err(Error::param("ranking length j must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::param("worker count must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(Error::param("no detectors selected"));
        }
        let ids: BTreeSet<&str> = self.detectors.iter().map(|d| d.id.as_str()).collect();
        if ids.len() != self.detectors.len() {
            return Err(Error::param("detector ids must be unique"));
        }
        Ok(())
    }

    pub fn records_path(&self) -> PathBuf {
        self.out.join(RECORDS_FILE)
    }
}

/// One unit of evaluation work: a detector on one scene.
struct Unit<'a> {
    detector: &'a DetectorConfig,
    scene: SceneId,
    /// Non-reference images still missing a record.
    pending: Vec<&'a ImageEntry>,
}

fn image_dims(root: &Path, rel: &str) -> Result<Dims> {
    let path = resolve(root, rel);
    let (w, h) = image::image_dimensions(&path).map_err(|source| Error::Image { path, source })?;
    Ok(Dims::new(w, h))
}

fn evaluate_unit(
    unit: &Unit<'_>,
    index: &BTreeMap<(SceneId, TransformKind, StepIndex), &ImageEntry>,
    root: &Path,
    cfg: &RunConfig,
) -> Result<Vec<RepeatabilityRecord>> {
    let d = unit.detector;
    let mut cache: BTreeMap<TransformKind, (Vec<Keypoint>, Dims)> = BTreeMap::new();
    let mut out = Vec::with_capacity(unit.pending.len());
    for img in &unit.pending {
        let (ref_kps, ref_dims) = match cache.entry(img.kind) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let reference = index
                    .get(&(unit.scene, img.kind, StepIndex::REFERENCE))
                    .ok_or_else(|| Error::data(format!("scene {}: no reference image for {}", unit.scene, img.kind)))?;
                let kps = keypoints_for(d, root, &reference.path, &cfg.out)?;
                e.insert((kps, image_dims(root, &reference.path)?))
            }
        };
        let test_kps = keypoints_for(d, root, &img.path, &cfg.out)?;
        let rep = compute_repeatability(
            ref_kps,
            &test_kps,
            &img.homography,
            *ref_dims,
            image_dims(root, &img.path)?,
            &cfg.params,
        )?;
        out.push(RepeatabilityRecord {
            scene: unit.scene,
            detector: d.id.clone(),
            kind: img.kind,
            step: img.step,
            amount: img.amount,
            n_ref: rep.n_ref,
            n_rep: rep.n_rep,
        });
    }
    Ok(out)
}

/// Records already on disk: the final file plus any partial progress.
fn existing_records(out: &Path) -> Result<Vec<RepeatabilityRecord>> {
    let mut all = Vec::new();
    let done = out.join(RECORDS_FILE);
    if done.exists() {
        all.extend(read_records(&done)?);
    }
    let partial = out.join(PARTIAL_RECORDS_FILE);
    if partial.exists() {
        let text = crate::io::read_to_string(&partial)?;
        all.extend(parse_records(&text, &partial.display().to_string(), true)?);
    }
    Ok(all)
}

/// Computes a record for every (detector, scene, kind, non-reference step)
/// and writes them to `records.csv` in canonical order. Keys already
/// present in `records.csv` or `records.partial.csv` are skipped, so an
/// interrupted run resumes where it stopped.
pub fn cmd_evaluate(cfg: &RunConfig, force: bool) -> Result<Vec<RepeatabilityRecord>> {
    cfg.check()?;
    let (manifest, root) = load_valid_manifest(&cfg.manifest)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;

    let params_path = cfg.out.join(EVALUATE_PARAMS_FILE);
    let partial_path = cfg.out.join(PARTIAL_RECORDS_FILE);
    let mut run_params = EvaluateParams::new(&cfg.detectors, &cfg.params);
    if force {
        for p in [&partial_path, &cfg.records_path(), &params_path] {
            if p.exists() {
                std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
            }
        }
    } else if params_path.exists() {
        let text = crate::io::read_to_string(&params_path)?;
        let previous: EvaluateParams = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: params_path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if !run_params.compatible(&previous) {
            return Err(Error::param(format!(
                "records in {} were computed with different parameters; rerun with --force",
                cfg.out.display()
            )));
        }
        run_params.merge(&previous);
    }
    let params_json = serde_json::to_string_pretty(&run_params).expect("serializable params") + "\n";
    crate::io::write_atomic(&params_path, params_json.as_bytes())?;

    let index = manifest.image_index();
    let mut records: BTreeMap<RecordKey, RepeatabilityRecord> = BTreeMap::new();
    for r in existing_records(&cfg.out)? {
        if index.contains_key(&(r.scene, r.kind, r.step)) && !r.step.is_reference() {
            records.insert(r.key(), r);
        } else {
            warn!("dropping record for unknown image: {}", format_record(&r).trim_end());
        }
    }

    let mut units = Vec::new();
    for d in &cfg.detectors {
        for scene in &manifest.scenes {
            let pending: Vec<&ImageEntry> = manifest
                .images
                .iter()
                .filter(|img| img.scene == scene.id && !img.step.is_reference())
                .filter(|img| {
                    let key = RecordKey {
                        detector: d.id.clone(),
                        kind: img.kind,
                        scene: scene.id,
                        step: img.step,
                    };
                    !records.contains_key(&key)
                })
                .collect();
            if !pending.is_empty() {
                units.push(Unit {
                    detector: d,
                    scene: scene.id,
                    pending,
                });
            }
        }
    }
    let todo: usize = units.iter().map(|u| u.pending.len()).sum();
    info!("evaluate: {} records on disk, {todo} to compute", records.len());

    if todo > 0 {
        let fresh = !partial_path.exists();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&partial_path)
            .map_err(|e| Error::io(&partial_path, e))?;
        if fresh {
            file.write_all(header_line().as_bytes()).map_err(|e| Error::io(&partial_path, e))?;
        }
        let (tx, rx) = mpsc::channel::<Vec<RepeatabilityRecord>>();
        let writer_path = partial_path.clone();
        let writer = std::thread::spawn(move || -> Result<Vec<RepeatabilityRecord>> {
            let mut got = Vec::new();
            for batch in rx {
                let text: String = batch.iter().map(format_record).collect();
                file.write_all(text.as_bytes()).map_err(|e| Error::io(&writer_path, e))?;
                file.flush().map_err(|e| Error::io(&writer_path, e))?;
                got.extend(batch);
            }
            Ok(got)
        });
        let computed = with_pool(cfg.jobs, || {
            units.par_iter().try_for_each_with(tx, |tx, unit| {
                let batch = evaluate_unit(unit, &index, &root, cfg)?;
                tx.send(batch).map_err(|_| Error::data("record writer stopped"))
            })
        })?;
        let written = writer.join().map_err(|_| Error::data("record writer panicked"))??;
        computed?;
        for r in written {
            records.insert(r.key(), r);
        }
    }

    let lengths = manifest.schedule_lengths();
    let expected = expected_record_count(manifest.scene_count(), &lengths);
    for d in &cfg.detectors {
        let got = records.keys().filter(|k| k.detector == d.id).count();
        if got != expected {
            return Err(Error::data(format!(
                "detector {}: {got} records, expected {expected}",
                d.id
            )));
        }
    }
    let all: Vec<RepeatabilityRecord> = records.into_values().collect();
    write_records(&cfg.records_path(), &all)?;
    if partial_path.exists() {
        std::fs::remove_file(&partial_path).map_err(|e| Error::io(&partial_path, e))?;
    }
    Ok(all)
}

/// Trait indices for every (detector, kind, step, polarity) in the records.
pub fn cmd_rank(cfg: &RunConfig) -> Result<Vec<TraitIndexVector>> {
    if cfg.j == 0 {
        return Err(Error::param("ranking length j must be at least 1"));
    }
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let records = read_records(&cfg.records_path())?;
    if records.is_empty() {
        return Err(Error::data(format!("{} holds no records", cfg.records_path().display())));
    }
    let sets = group_rate_sets(&records)?;
    for s in sets.iter().filter(|s| s.excluded > 0) {
        info!(
            "{} {} step {}: {} scene(s) with undefined rate excluded",
            s.detector, s.kind, s.step, s.excluded
        );
    }
    let vectors = rank_all(&sets, &manifest.labels(), cfg.j)?;
    crate::report::emit_trait_tables(&vectors, &cfg.out.join(TRAIT_TABLE_FILE))?;
    Ok(vectors)
}

/// Trait table plus one radar chart per (detector, kind, polarity).
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let vectors = cmd_rank(cfg)?;
    crate::report::write_report(&vectors, &cfg.out)
}
