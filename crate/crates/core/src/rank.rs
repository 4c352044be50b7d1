//! Rate sets, top/lowest scene rankings and trait indices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RepeatabilityRecord, SceneId, SceneLabels, StepIndex, TransformKind};

/// Rates of one detector at one transformation step across all scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSet {
    pub detector: String,
    pub kind: TransformKind,
    pub step: StepIndex,
    pub amount: f64,
    pub rates: BTreeMap<SceneId, f64>,
    /// Scenes whose rate is undefined (no reference keypoint).
    pub excluded: usize,
}

impl RateSet {
    pub fn new(detector: &str, kind: TransformKind, step: StepIndex, amount: f64) -> Self {
        RateSet {
            detector: detector.to_string(),
            kind,
            step,
            amount,
            rates: BTreeMap::new(),
            excluded: 0,
        }
    }
}

fn insert_record(set: &mut RateSet, seen: &mut BTreeSet<SceneId>, r: &RepeatabilityRecord) -> Result<()> {
    if !seen.insert(r.scene) {
        return Err(Error::data(format!(
            "duplicate record for detector {}, {} step {}, scene {}",
            r.detector, r.kind, r.step, r.scene
        )));
    }
    match r.rate() {
        Some(rate) => {
            set.rates.insert(r.scene, rate);
        }
        None => set.excluded += 1,
    }
    Ok(())
}

pub fn collect_rate_set(
    records: &[RepeatabilityRecord],
    detector: &str,
    kind: TransformKind,
    step: StepIndex,
) -> Result<RateSet> {
    let mut seen = BTreeSet::new();
    let mut set: Option<RateSet> = None;
    for r in records
        .iter()
        .filter(|r| r.detector == detector && r.kind == kind && r.step == step)
    {
        let set = set.get_or_insert_with(|| RateSet::new(detector, kind, step, r.amount));
        insert_record(set, &mut seen, r)?;
    }
    set.ok_or_else(|| {
        Error::data(format!("no records for detector {detector}, {kind} step {step}"))
    })
}

/// Every rate set present in `records`, ordered by (detector, kind, step).
pub fn group_rate_sets(records: &[RepeatabilityRecord]) -> Result<Vec<RateSet>> {
    let mut groups: BTreeMap<(String, TransformKind, StepIndex), (RateSet, BTreeSet<SceneId>)> =
        BTreeMap::new();
    for r in records {
        let (set, seen) = groups
            .entry((r.detector.clone(), r.kind, r.step))
            .or_insert_with(|| (RateSet::new(&r.detector, r.kind, r.step, r.amount), BTreeSet::new()));
        insert_record(set, seen, r)?;
    }
    Ok(groups.into_values().map(|(s, _)| s).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Top,
    Lowest,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Top, Polarity::Lowest];

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Top => "top",
            Polarity::Lowest => "lowest",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The `j` scenes at one end of a rate set.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub detector: String,
    pub kind: TransformKind,
    pub step: StepIndex,
    pub amount: f64,
    pub polarity: Polarity,
    pub j: usize,
    pub entries: Vec<SceneId>,
    pub available: bool,
}

/// Why a ranking was flagged unavailable, if it was.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Unavailable {
    /// Fewer than `2j` defined rates: the two ends would overlap.
    TooFewScenes { rates: usize, j: usize },
    /// More than `j` scenes score 0, so the lowest ranking is arbitrary.
    ZeroSaturated { zeros: usize, j: usize },
}

impl fmt::Display for Unavailable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unavailable::TooFewScenes { rates, j } => {
                write!(f, "{rates} defined rates, fewer than 2j = {}", 2 * j)
            }
            Unavailable::ZeroSaturated { zeros, j } => {
                write!(f, "{zeros} scenes at rate 0 exceed j = {j}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rankings {
    pub top: Ranking,
    pub lowest: Ranking,
    pub unavailable: Vec<Unavailable>,
}

/// Top and lowest rankings of length `j`. Ties are broken by ascending
/// scene id at both ends.
pub fn build_rankings(set: &RateSet, j: usize) -> Result<Rankings> {
    if j == 0 {
        return Err(Error::param("ranking length j must be at least 1"));
    }
    let n = set.rates.len();
    if j > n {
        return Err(Error::param(format!(
            "ranking length j = {j} exceeds the {n} scenes with a defined rate \
             (detector {}, {} step {})",
            set.detector, set.kind, set.step
        )));
    }
    // BTreeMap iteration is already in ascending scene id; stable sorts keep it.
    let mut desc: Vec<(SceneId, f64)> = set.rates.iter().map(|(&s, &r)| (s, r)).collect();
    let mut asc = desc.clone();
    desc.sort_by(|a, b| b.1.total_cmp(&a.1));
    asc.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut unavailable = Vec::new();
    if n < 2 * j {
        unavailable.push(Unavailable::TooFewScenes { rates: n, j });
    }
    let zeros = set.rates.values().filter(|&&r| r == 0.0).count();
    if zeros > j {
        unavailable.push(Unavailable::ZeroSaturated { zeros, j });
    }
    let top_ok = n >= 2 * j;
    let lowest_ok = top_ok && zeros <= j;

    let make = |polarity, sorted: &[(SceneId, f64)], available| Ranking {
        detector: set.detector.clone(),
        kind: set.kind,
        step: set.step,
        amount: set.amount,
        polarity,
        j,
        entries: sorted[..j].iter().map(|e| e.0).collect(),
        available,
    };
    Ok(Rankings {
        top: make(Polarity::Top, &desc, top_ok),
        lowest: make(Polarity::Lowest, &asc, lowest_ok),
        unavailable,
    })
}

/// Share of outdoor (F), human-made (G) and simple (H) scenes in a ranking.
#[derive(Clone, Debug, PartialEq)]
pub struct TraitIndexVector {
    pub detector: String,
    pub kind: TransformKind,
    pub step: StepIndex,
    pub amount: f64,
    pub polarity: Polarity,
    pub j: usize,
    /// Label-1 counts among the ranking's scenes; `None` when unavailable.
    pub counts: Option<[usize; 3]>,
    pub scenes: Vec<SceneId>,
}

impl TraitIndexVector {
    pub fn available(&self) -> bool {
        self.counts.is_some()
    }

    /// `[F, G, H]`, each an exact multiple of `1/j`.
    pub fn values(&self) -> Option<[f64; 3]> {
        self.counts.map(|c| c.map(|v| v as f64 / self.j as f64))
    }
}

pub fn compute_trait_indices(
    ranking: &Ranking,
    labels: &BTreeMap<SceneId, SceneLabels>,
) -> Result<TraitIndexVector> {
    let mut counts = [0usize; 3];
    for s in &ranking.entries {
        let l = labels
            .get(s)
            .ok_or_else(|| Error::data(format!("no labels for scene {s}")))?;
        for (c, b) in counts.iter_mut().zip(l.bits()) {
            *c += b as usize;
        }
    }
    Ok(TraitIndexVector {
        detector: ranking.detector.clone(),
        kind: ranking.kind,
        step: ranking.step,
        amount: ranking.amount,
        polarity: ranking.polarity,
        j: ranking.j,
        counts: ranking.available.then_some(counts),
        scenes: ranking.entries.clone(),
    })
}

/// Trait indices for both polarities of every rate set, in
/// (detector, kind, step, polarity) order.
pub fn rank_all(
    sets: &[RateSet],
    labels: &BTreeMap<SceneId, SceneLabels>,
    j: usize,
) -> Result<Vec<TraitIndexVector>> {
    let mut out = Vec::with_capacity(2 * sets.len());
    for set in sets {
        let r = build_rankings(set, j)?;
        out.push(compute_trait_indices(&r.top, labels)?);
        out.push(compute_trait_indices(&r.lowest, labels)?);
    }
    Ok(out)
}

/// Share of outdoor, human-made and simple scenes. An empty set yields zeros.
pub fn label_balance<'a>(labels: impl IntoIterator<Item = &'a SceneLabels>) -> [f64; 3] {
    let mut counts = [0usize; 3];
    let mut n = 0usize;
    for l in labels {
        n += 1;
        for (c, b) in counts.iter_mut().zip(l.bits()) {
            *c += b as usize;
        }
    }
    if n == 0 {
        return [0.0; 3];
    }
    counts.map(|c| c as f64 / n as f64)
}

/// Records per detector: every scene at every non-reference step.
pub fn expected_record_count(n: usize, schedule_lengths: &[usize]) -> usize {
    n * schedule_lengths.iter().map(|m| m.saturating_sub(1)).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rates: &[(u32, f64)]) -> RateSet {
        let mut s = RateSet::new("d", TransformKind::GaussianBlur, StepIndex(2), 0.5);
        for &(id, r) in rates {
            s.rates.insert(SceneId(id), r);
        }
        s
    }

    fn ids(v: &[u32]) -> Vec<SceneId> {
        v.iter().map(|&i| SceneId(i)).collect()
    }

    fn record(scene: u32, step: u32, n_ref: usize, n_rep: usize) -> RepeatabilityRecord {
        RepeatabilityRecord {
            scene: SceneId(scene),
            detector: "d".into(),
            kind: TransformKind::LightReduction,
            step: StepIndex(step),
            amount: 10.0,
            n_ref,
            n_rep,
        }
    }

    /// Sort oracle: full argsort by the documented comparator.
    fn oracle(rates: &BTreeMap<SceneId, f64>, j: usize, descending: bool) -> Vec<SceneId> {
        let mut v: Vec<_> = rates.iter().collect();
        v.sort_by(|a, b| {
            let o = if descending { b.1.total_cmp(a.1) } else { a.1.total_cmp(b.1) };
            o.then(a.0.cmp(b.0))
        });
        v.into_iter().take(j).map(|(s, _)| *s).collect()
    }

    #[test]
    fn four_scene_example() {
        let r = build_rankings(&set(&[(1, 0.9), (2, 0.5), (3, 0.1), (4, 0.8)]), 2).unwrap();
        assert_eq!(r.top.entries, ids(&[1, 4]));
        assert_eq!(r.lowest.entries, ids(&[3, 2]));
        assert!(r.top.available && r.lowest.available);
    }

    #[test]
    fn ties_break_by_scene_id() {
        let r = build_rankings(&set(&[(3, 0.5), (1, 0.5), (4, 0.5), (2, 0.5)]), 2).unwrap();
        assert_eq!(r.top.entries, ids(&[1, 2]));
        assert_eq!(r.lowest.entries, ids(&[1, 2]));
    }

    #[test]
    fn zero_saturated_lowest_ranking() {
        let rates: Vec<(u32, f64)> = (1..=48).map(|i| (i, if i <= 25 { 0.0 } else { 0.5 })).collect();
        let r = build_rankings(&set(&rates), 20).unwrap();
        assert!(r.top.available);
        assert!(!r.lowest.available);
        assert_eq!(r.unavailable, vec![Unavailable::ZeroSaturated { zeros: 25, j: 20 }]);
        // exactly j zeros is still a well-defined ranking
        let rates: Vec<(u32, f64)> = (1..=48).map(|i| (i, if i <= 20 { 0.0 } else { 0.5 })).collect();
        assert!(build_rankings(&set(&rates), 20).unwrap().lowest.available);
    }

    #[test]
    fn too_few_scenes() {
        let r = build_rankings(&set(&[(1, 0.1), (2, 0.2), (3, 0.3)]), 2).unwrap();
        assert!(!r.top.available && !r.lowest.available);
        assert!(build_rankings(&set(&[(1, 0.1)]), 2).is_err());
        assert!(build_rankings(&set(&[(1, 0.1)]), 0).is_err());
    }

    #[test]
    fn rate_set_collection() {
        let mut recs: Vec<_> = (1..=12).map(|s| record(s, 2, 10, 5)).collect();
        recs.push(record(1, 3, 10, 1));
        let s = collect_rate_set(&recs, "d", TransformKind::LightReduction, StepIndex(2)).unwrap();
        assert_eq!((s.rates.len(), s.excluded), (12, 0));

        recs[4].n_ref = 0;
        recs[4].n_rep = 0;
        let s = collect_rate_set(&recs, "d", TransformKind::LightReduction, StepIndex(2)).unwrap();
        assert_eq!((s.rates.len(), s.excluded), (11, 1));
        assert!(!s.rates.contains_key(&SceneId(5)));

        recs.push(record(3, 2, 4, 4));
        assert!(collect_rate_set(&recs, "d", TransformKind::LightReduction, StepIndex(2)).is_err());
        assert!(group_rate_sets(&recs).is_err());
    }

    #[test]
    fn grouping_orders_sets() {
        let recs = vec![record(2, 3, 1, 1), record(1, 2, 1, 0), record(1, 3, 1, 1)];
        let sets = group_rate_sets(&recs).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].step, StepIndex(2));
        assert_eq!(sets[1].rates.len(), 2);
    }

    fn ranking(entries: Vec<SceneId>, available: bool) -> Ranking {
        Ranking {
            detector: "d".into(),
            kind: TransformKind::GaussianBlur,
            step: StepIndex(2),
            amount: 0.5,
            polarity: Polarity::Top,
            j: entries.len(),
            entries,
            available,
        }
    }

    #[test]
    fn trait_indices_by_direct_count() {
        let labels: BTreeMap<_, _> = [
            (1, SceneLabels::new(true, false, true)),
            (2, SceneLabels::new(false, false, true)),
            (3, SceneLabels::new(false, false, true)),
            (4, SceneLabels::new(false, false, true)),
        ]
        .into_iter()
        .map(|(i, l)| (SceneId(i), l))
        .collect();
        let v = compute_trait_indices(&ranking(ids(&[1, 2, 3, 4]), true), &labels).unwrap();
        assert_eq!(v.values(), Some([0.25, 0.0, 1.0]));

        let v = compute_trait_indices(&ranking(ids(&[1, 2, 3, 4]), false), &labels).unwrap();
        assert!(!v.available());
        assert_eq!(v.values(), None);

        let err = compute_trait_indices(&ranking(ids(&[1, 9]), true), &labels).unwrap_err();
        assert!(err.to_string().contains("scene 9"), "{err}");
    }

    #[test]
    fn all_ones() {
        let labels: BTreeMap<_, _> = (1..=5).map(|i| (SceneId(i), SceneLabels::new(true, true, true))).collect();
        let v = compute_trait_indices(&ranking(ids(&[1, 2, 3, 4, 5]), true), &labels).unwrap();
        assert_eq!(v.values(), Some([1.0; 3]));
    }

    #[test]
    fn balance() {
        let labels: Vec<_> = (0..12).map(crate::synth::corpus_labels).collect();
        assert_eq!(label_balance(&labels), [0.5; 3]);
        let indoor = vec![SceneLabels::new(false, true, true); 3];
        assert_eq!(label_balance(&indoor)[0], 0.0);
        assert_eq!(label_balance(&[]), [0.0; 3]);
    }

    #[test]
    fn balance_at_full_scale() {
        // 275, 350 and 275 of 539 round to the published 51%, 65%, 51%
        let labels: Vec<_> = (0..539).map(|i| SceneLabels::new(i < 275, i < 350, i >= 264)).collect();
        let b = label_balance(&labels).map(|v| (v * 100.0).round() / 100.0);
        assert_eq!(b, [0.51, 0.65, 0.51]);
    }

    #[test]
    fn record_counts() {
        assert_eq!(expected_record_count(539, &[14, 14, 10]), 18865);
        assert_eq!(expected_record_count(12, &[14, 14, 10]), 420);
        assert_eq!(expected_record_count(1, &[2]), 1);
    }

    proptest! {
        #[test]
        fn rankings_match_sort_oracle_and_scale_invariant(
            rates in proptest::collection::vec(0u32..20, 2..60),
            j in 1usize..30,
            scale in 0.01f64..100.0,
        ) {
            // coarse values force many ties
            let s = set(&rates.iter().enumerate().map(|(i, &r)| (i as u32 + 1, r as f64 / 20.0)).collect::<Vec<_>>());
            prop_assume!(j <= s.rates.len());
            let r = build_rankings(&s, j).unwrap();
            prop_assert_eq!(&r.top.entries, &oracle(&s.rates, j, true));
            prop_assert_eq!(&r.lowest.entries, &oracle(&s.rates, j, false));

            let mut scaled = s.clone();
            scaled.rates.values_mut().for_each(|v| *v *= scale);
            let r2 = build_rankings(&scaled, j).unwrap();
            prop_assert_eq!(r.top.entries, r2.top.entries);
            prop_assert_eq!(r.lowest.entries, r2.lowest.entries);
        }

        #[test]
        fn indices_are_multiples_of_one_over_j_and_complement(
            bits in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..40),
        ) {
            let labels: BTreeMap<_, _> = bits.iter().enumerate()
                .map(|(i, &(f, g, h))| (SceneId(i as u32 + 1), SceneLabels::new(f, g, h))).collect();
            let flipped: BTreeMap<_, _> = labels.iter()
                .map(|(&s, l)| (s, SceneLabels::new(!l.outdoor, !l.human_made, !l.simple))).collect();
            let r = ranking(labels.keys().copied().collect(), true);
            let v = compute_trait_indices(&r, &labels).unwrap().values().unwrap();
            let c = compute_trait_indices(&r, &flipped).unwrap().values().unwrap();
            let j = r.j as f64;
            for i in 0..3 {
                prop_assert_eq!((v[i] * j).round() / j, v[i]);
                prop_assert!((c[i] - (1.0 - v[i])).abs() < 1e-12);
            }
        }
    }
}
