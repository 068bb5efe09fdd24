//! Evaluation over generated sample sets: diversity, greedy mode and circle
//! counts, scaffold counts, conditional-range adherence (L1 distance and
//! success rate), reward-weighted combinations, and docking-style hit
//! ratios against an external score table.
//!
//! Greedy scans (modes, circles) visit samples in (reward descending,
//! canonical key ascending) order so every metric is permutation invariant
//! and deterministic.

use crate::descriptors::{
    fingerprint, tanimoto, DescriptorError, Evaluator, Fingerprint, PropertyId, ScoreTable,
    DEFAULT_FP_RADIUS, DEFAULT_FP_WIDTH,
};
use crate::molgraph::MolGraph;
use crate::reward::ConditionalSpec;
use crate::smiles::{canonical_key, CanonicalKey};
use std::collections::HashSet;
use std::fmt::Write as _;
use thiserror::Error;

/// Default Tanimoto-distance threshold for the circle count.
pub const DEFAULT_CIRCLES_THRESHOLD: f64 = 0.75;
/// Mode admission: reward at least this high.
pub const MODES_REWARD_MIN: f64 = 0.5;
/// Mode admission: similarity to every counted mode below this.
pub const MODES_SIM_MAX: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("molecules and rewards differ in length: {0} vs {1}")]
    Misaligned(usize, usize),
    #[error("metric needs at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("reward at index {0} is not finite")]
    NonFiniteReward(usize),
    #[error("threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("empty score table")]
    EmptyScoreTable,
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// A scored sample set with memoized canonical keys and fingerprints.
pub struct SampleSet {
    molecules: Vec<MolGraph>,
    rewards: Vec<f64>,
    keys: Vec<CanonicalKey>,
    fps: Vec<Fingerprint>,
    /// Input lines attempted, counting unparseable ones; feeds validity.
    attempted: usize,
    /// Scan order: reward descending, canonical key ascending.
    order: Vec<usize>,
}

impl SampleSet {
    pub fn new(molecules: Vec<MolGraph>, rewards: Vec<f64>) -> Result<SampleSet, MetricsError> {
        let attempted = molecules.len();
        SampleSet::with_attempted(molecules, rewards, attempted)
    }

    /// `attempted` counts every input record, including ones that failed to
    /// parse and are absent from `molecules`.
    pub fn with_attempted(
        molecules: Vec<MolGraph>,
        rewards: Vec<f64>,
        attempted: usize,
    ) -> Result<SampleSet, MetricsError> {
        if molecules.len() != rewards.len() {
            return Err(MetricsError::Misaligned(molecules.len(), rewards.len()));
        }
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(MetricsError::NonFiniteReward(i));
        }
        let keys: Vec<CanonicalKey> = molecules.iter().map(canonical_key).collect();
        let mut fps = Vec::with_capacity(molecules.len());
        for m in &molecules {
            fps.push(fingerprint(m, DEFAULT_FP_RADIUS, DEFAULT_FP_WIDTH)?);
        }
        let mut order: Vec<usize> = (0..molecules.len()).collect();
        order.sort_by(|&a, &b| {
            rewards[b]
                .partial_cmp(&rewards[a])
                .unwrap()
                .then_with(|| keys[a].cmp(&keys[b]))
        });
        Ok(SampleSet { molecules, rewards, keys, fps, attempted, order })
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn molecules(&self) -> &[MolGraph] {
        &self.molecules
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn keys(&self) -> &[CanonicalKey] {
        &self.keys
    }

    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.fps
    }

    /// Parsed fraction of attempted inputs.
    pub fn validity(&self) -> f64 {
        if self.attempted == 0 {
            return 0.0;
        }
        self.molecules.len() as f64 / self.attempted as f64
    }

    /// Distinct canonical keys over sample count.
    pub fn uniqueness(&self) -> f64 {
        if self.molecules.is_empty() {
            return 0.0;
        }
        let distinct: HashSet<&CanonicalKey> = self.keys.iter().collect();
        distinct.len() as f64 / self.molecules.len() as f64
    }

    /// Distinct canonical keys absent from the reference, over sample count.
    pub fn novelty(&self, reference: &HashSet<CanonicalKey>) -> f64 {
        if self.molecules.is_empty() {
            return 0.0;
        }
        let distinct: HashSet<&CanonicalKey> = self.keys.iter().collect();
        let novel = distinct.iter().filter(|k| !reference.contains(**k)).count();
        novel as f64 / self.molecules.len() as f64
    }

    fn similarity(&self, i: usize, j: usize) -> Result<f64, MetricsError> {
        Ok(tanimoto(&self.fps[i], &self.fps[j])?)
    }
}

/// 1 - mean pairwise Tanimoto similarity.
pub fn diversity(s: &SampleSet) -> Result<f64, MetricsError> {
    let n = s.len();
    if n < 2 {
        return Err(MetricsError::TooFew { need: 2, got: n });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += s.similarity(i, j)?;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(1.0 - total / pairs)
}

/// Greedy mode count: scanning by descending reward, admit a sample iff its
/// reward clears `reward_min` and its similarity to every admitted mode is
/// below `sim_max`.
pub fn n_modes_with(s: &SampleSet, reward_min: f64, sim_max: f64) -> Result<usize, MetricsError> {
    let mut admitted: Vec<usize> = Vec::new();
    for &i in &s.order {
        if s.rewards[i] < reward_min {
            continue;
        }
        let mut ok = true;
        for &j in &admitted {
            if s.similarity(i, j)? >= sim_max {
                ok = false;
                break;
            }
        }
        if ok {
            admitted.push(i);
        }
    }
    Ok(admitted.len())
}

pub fn n_modes(s: &SampleSet) -> Result<usize, MetricsError> {
    n_modes_with(s, MODES_REWARD_MIN, MODES_SIM_MAX)
}

/// Greedy sphere-exclusion count: admit a sample iff its Tanimoto distance
/// (1 - similarity) to every admitted center is at least `dist_threshold`.
pub fn n_circles(s: &SampleSet, dist_threshold: f64) -> Result<usize, MetricsError> {
    if !(dist_threshold > 0.0 && dist_threshold < 1.0) {
        return Err(MetricsError::BadThreshold(dist_threshold));
    }
    let mut admitted: Vec<usize> = Vec::new();
    for &i in &s.order {
        let mut ok = true;
        for &j in &admitted {
            if 1.0 - s.similarity(i, j)? < dist_threshold {
                ok = false;
                break;
            }
        }
        if ok {
            admitted.push(i);
        }
    }
    Ok(admitted.len())
}

/// Distinct Bemis-Murcko scaffolds (by canonical key; acyclic molecules all
/// share the empty scaffold).
pub fn n_scaffolds(s: &SampleSet) -> usize {
    let keys: HashSet<CanonicalKey> =
        s.molecules.iter().map(|m| canonical_key(&m.bemis_murcko_scaffold())).collect();
    keys.len()
}

/// Mean of the k highest rewards (k clipped to the sample count).
pub fn top_k_reward(s: &SampleSet, k: usize) -> Result<f64, MetricsError> {
    if s.is_empty() {
        return Err(MetricsError::TooFew { need: 1, got: 0 });
    }
    let k = k.min(s.len());
    let total: f64 = s.order[..k].iter().map(|&i| s.rewards[i]).sum();
    Ok(total / k as f64)
}

/// Per-conditional mean absolute distance to the 10th-percentile point of
/// the desired range, normalized by the sampling window width.
pub fn l1_dist(
    s: &SampleSet,
    specs: &[ConditionalSpec],
    evaluator: &Evaluator,
) -> Result<Vec<f64>, MetricsError> {
    if s.is_empty() {
        return Err(MetricsError::TooFew { need: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let (c_low, c_high) = spec.range;
        let q10 = c_low + 0.1 * (c_high - c_low);
        let width = spec.bounds.c_max - spec.bounds.c_min;
        let mut total = 0.0;
        for m in &s.molecules {
            let p = evaluator.eval(&spec.property, m)?;
            total += (p - q10).abs() / width;
        }
        out.push(total / s.len() as f64);
    }
    Ok(out)
}

/// Percentage of (molecule, conditional) pairs meeting the preference:
/// d = 0 wants the value inside [c_low, c_high]; d = +1 (resp. -1) wants it
/// within 10% of the magnitude of c_high (resp. c_low). A zero endpoint
/// degenerates to exact equality.
pub fn success_pct(
    s: &SampleSet,
    specs: &[ConditionalSpec],
    evaluator: &Evaluator,
) -> Result<f64, MetricsError> {
    if s.is_empty() || specs.is_empty() {
        return Err(MetricsError::TooFew { need: 1, got: 0 });
    }
    let mut hits = 0usize;
    for m in &s.molecules {
        for spec in specs {
            let p = evaluator.eval(&spec.property, m)?;
            let (c_low, c_high) = spec.range;
            let ok = match spec.d.cmp(&0) {
                std::cmp::Ordering::Equal => (c_low..=c_high).contains(&p),
                std::cmp::Ordering::Greater => (p - c_high).abs() <= 0.1 * c_high.abs(),
                std::cmp::Ordering::Less => (p - c_low).abs() <= 0.1 * c_low.abs(),
            };
            if ok {
                hits += 1;
            }
        }
    }
    Ok(100.0 * hits as f64 / (s.len() * specs.len()) as f64)
}

/// Hit criteria against an external score table: score strictly better
/// (lower) than the actives' median, QED > 0.5, SAS < 5. The novel variant
/// additionally requires a first-seen canonical key and maximum Tanimoto
/// similarity to the reference set below 0.4.
pub struct HitRatios {
    pub hit: f64,
    pub novel_hit: f64,
    /// Samples skipped for lack of a score entry.
    pub missing_scores: usize,
}

pub fn hit_ratios(
    s: &SampleSet,
    scores: &ScoreTable,
    actives_median: f64,
    novelty_ref: &[Fingerprint],
    evaluator: &Evaluator,
) -> Result<HitRatios, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScoreTable);
    }
    let mut seen: HashSet<&CanonicalKey> = HashSet::new();
    let mut scored = 0usize;
    let mut hits = 0usize;
    let mut novel_hits = 0usize;
    for i in 0..s.len() {
        let unique = seen.insert(&s.keys[i]);
        let Some(score) = scores.get(&s.keys[i]) else { continue };
        scored += 1;
        let qed = evaluator.eval(&PropertyId::Qed, &s.molecules[i])?;
        let sas = evaluator.eval(&PropertyId::Sas, &s.molecules[i])?;
        if !(score < actives_median && qed > 0.5 && sas < 5.0) {
            continue;
        }
        hits += 1;
        if !unique {
            continue;
        }
        let mut max_sim: f64 = 0.0;
        for rf in novelty_ref {
            max_sim = max_sim.max(tanimoto(&s.fps[i], rf)?);
        }
        if max_sim < 0.4 {
            novel_hits += 1;
        }
    }
    if scored == 0 {
        return Err(MetricsError::EmptyScoreTable);
    }
    Ok(HitRatios {
        hit: hits as f64 / scored as f64,
        novel_hit: novel_hits as f64 / scored as f64,
        missing_scores: s.len() - scored,
    })
}

/// The full evaluation bundle over one sample set.
pub struct MetricsReport {
    pub n: usize,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: Option<f64>,
    pub diversity: f64,
    pub n_modes: usize,
    pub n_scaffolds: usize,
    pub n_circles: usize,
    pub top_1: f64,
    pub top_10: f64,
    pub top_100: f64,
    /// top-100 mean reward times circles / scaffolds / diversity.
    pub rw_circles: f64,
    pub rw_scaffolds: f64,
    pub rw_top_div: f64,
    pub l1_dist: Vec<(PropertyId, f64)>,
    pub success_pct: f64,
    pub hit_ratio: Option<f64>,
    pub novel_hit_ratio: Option<f64>,
    pub missing_scores: usize,
    pub circles_threshold: f64,
}

impl MetricsReport {
    pub fn compute(
        s: &SampleSet,
        specs: &[ConditionalSpec],
        evaluator: &Evaluator,
        novelty_ref: Option<&HashSet<CanonicalKey>>,
        circles_threshold: f64,
    ) -> Result<MetricsReport, MetricsError> {
        let diversity = diversity(s)?;
        let n_modes = n_modes(s)?;
        let n_scaffolds = n_scaffolds(s);
        let n_circles = n_circles(s, circles_threshold)?;
        let top_100 = top_k_reward(s, 100)?;
        let l1 = l1_dist(s, specs, evaluator)?;
        Ok(MetricsReport {
            n: s.len(),
            validity: s.validity(),
            uniqueness: s.uniqueness(),
            novelty: novelty_ref.map(|r| s.novelty(r)),
            diversity,
            n_modes,
            n_scaffolds,
            n_circles,
            top_1: top_k_reward(s, 1)?,
            top_10: top_k_reward(s, 10)?,
            top_100,
            rw_circles: top_100 * n_circles as f64,
            rw_scaffolds: top_100 * n_scaffolds as f64,
            rw_top_div: top_100 * diversity,
            l1_dist: specs.iter().map(|sp| sp.property.clone()).zip(l1).collect(),
            success_pct: success_pct(s, specs, evaluator)?,
            hit_ratio: None,
            novel_hit_ratio: None,
            missing_scores: 0,
            circles_threshold,
        })
    }

    pub fn attach_hits(&mut self, hits: &HitRatios) {
        self.hit_ratio = Some(hits.hit);
        self.novel_hit_ratio = Some(hits.novel_hit);
        self.missing_scores = hits.missing_scores;
    }

    /// Key/value text form. The header pins the parameters the numbers
    /// depend on.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# params: fp_width={DEFAULT_FP_WIDTH} fp_radius={DEFAULT_FP_RADIUS} \
             modes_reward_min={MODES_REWARD_MIN} modes_sim_max={MODES_SIM_MAX} \
             circles_dist_min={}",
            self.circles_threshold
        );
        let _ = writeln!(out, "n: {}", self.n);
        let _ = writeln!(out, "validity: {:.4}", self.validity);
        let _ = writeln!(out, "uniqueness: {:.4}", self.uniqueness);
        match self.novelty {
            Some(v) => {
                let _ = writeln!(out, "novelty: {v:.4}");
            }
            None => {
                let _ = writeln!(out, "novelty: absent");
            }
        }
        let _ = writeln!(out, "diversity: {:.4}", self.diversity);
        let _ = writeln!(out, "n_modes: {}", self.n_modes);
        let _ = writeln!(out, "n_scaffolds: {}", self.n_scaffolds);
        let _ = writeln!(out, "n_circles: {}", self.n_circles);
        let _ = writeln!(out, "top_1: {:.6}", self.top_1);
        let _ = writeln!(out, "top_10: {:.6}", self.top_10);
        let _ = writeln!(out, "top_100: {:.6}", self.top_100);
        let _ = writeln!(out, "rw_circles: {:.6}", self.rw_circles);
        let _ = writeln!(out, "rw_scaffolds: {:.6}", self.rw_scaffolds);
        let _ = writeln!(out, "rw_top_div: {:.6}", self.rw_top_div);
        for (prop, v) in &self.l1_dist {
            let _ = writeln!(out, "l1_dist.{prop}: {v:.6}");
        }
        let _ = writeln!(out, "success_pct: {:.2}", self.success_pct);
        match (self.hit_ratio, self.novel_hit_ratio) {
            (Some(h), Some(nh)) => {
                let _ = writeln!(out, "hit_ratio: {h:.4}");
                let _ = writeln!(out, "novel_hit_ratio: {nh:.4}");
                let _ = writeln!(out, "missing_scores: {}", self.missing_scores);
            }
            _ => {
                let _ = writeln!(out, "hit_ratio: absent");
                let _ = writeln!(out, "novel_hit_ratio: absent");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::PropertyBounds;
    use crate::smiles::parse;

    fn set_of(smiles: &[&str], rewards: &[f64]) -> SampleSet {
        let mols: Vec<MolGraph> = smiles.iter().map(|s| parse(s).unwrap()).collect();
        SampleSet::new(mols, rewards.to_vec()).unwrap()
    }

    /// Similarity matrix straight from the memoized fingerprints.
    fn sim_matrix(s: &SampleSet) -> Vec<Vec<f64>> {
        let n = s.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = if i == j {
                    1.0
                } else {
                    tanimoto(&s.fingerprints()[i], &s.fingerprints()[j]).unwrap()
                };
            }
        }
        m
    }

    /// Independent greedy oracle over an explicit similarity matrix.
    fn modes_oracle(s: &SampleSet, sim: &[Vec<f64>]) -> usize {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| {
            s.rewards()[b]
                .partial_cmp(&s.rewards()[a])
                .unwrap()
                .then_with(|| s.keys()[a].cmp(&s.keys()[b]))
        });
        let mut taken: Vec<usize> = Vec::new();
        for i in idx {
            if s.rewards()[i] >= 0.5 && taken.iter().all(|&j| sim[i][j] < 0.5) {
                taken.push(i);
            }
        }
        taken.len()
    }

    #[test]
    fn diversity_matches_hand_mean() {
        let s = set_of(&["CCO", "CCN", "c1ccccc1"], &[1.0, 1.0, 1.0]);
        let m = sim_matrix(&s);
        let hand = 1.0 - (m[0][1] + m[0][2] + m[1][2]) / 3.0;
        assert!((diversity(&s).unwrap() - hand).abs() < 1e-12);

        let same = set_of(&["CCO", "CCO"], &[1.0, 1.0]);
        assert_eq!(diversity(&same).unwrap(), 0.0);

        let one = set_of(&["CCO"], &[1.0]);
        assert!(matches!(diversity(&one), Err(MetricsError::TooFew { .. })));
    }

    #[test]
    fn diversity_is_one_for_disjoint_fingerprints() {
        // Chemically unrelated small molecules with no shared environments.
        let s = set_of(&["O", "CC", "N"], &[1.0, 1.0, 1.0]);
        let m = sim_matrix(&s);
        if m[0][1] == 0.0 && m[0][2] == 0.0 && m[1][2] == 0.0 {
            assert_eq!(diversity(&s).unwrap(), 1.0);
        }
    }

    #[test]
    fn mode_count_matches_independent_oracle() {
        let s = set_of(
            &["CCO", "CCCO", "c1ccccc1", "c1ccncc1", "CC(C)O", "CCN", "CCCCCCCC", "O", "CC", "N"],
            &[0.9, 0.55, 0.8, 0.7, 0.45, 0.6, 0.52, 0.3, 0.95, 0.51],
        );
        let m = sim_matrix(&s);
        assert_eq!(n_modes(&s).unwrap(), modes_oracle(&s, &m));

        let low = set_of(&["CCO", "CC"], &[0.4, 0.49]);
        assert_eq!(n_modes(&low).unwrap(), 0);

        let single = set_of(&["CCO"], &[0.6]);
        assert_eq!(n_modes(&single).unwrap(), 1);
    }

    #[test]
    fn mode_count_threshold_monotonicity() {
        let s = set_of(
            &["CCO", "CCCO", "c1ccccc1", "CCN", "CCCN", "CC(C)O"],
            &[0.9, 0.8, 0.7, 0.6, 0.55, 0.52],
        );
        let mut last = usize::MAX;
        for sim_max in [0.9, 0.7, 0.5, 0.3, 0.1] {
            let k = n_modes_with(&s, 0.5, sim_max).unwrap();
            assert!(k <= last, "tighter threshold admitted more modes");
            last = k;
        }
    }

    #[test]
    fn circle_count_matches_exhaustive_search_on_crafted_set() {
        let s = set_of(
            &["CCO", "c1ccccc1", "CCCCCCCC", "NCCN", "O", "CC(C)(C)C"],
            &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
        );
        let m = sim_matrix(&s);
        let threshold = 0.75;
        let greedy = n_circles(&s, threshold).unwrap();

        // Exhaustive maximum packing.
        let n = s.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let ok = members.iter().enumerate().all(|(a, &i)| {
                members[a + 1..].iter().all(|&j| 1.0 - m[i][j] >= threshold)
            });
            if ok {
                best = best.max(members.len());
            }
        }
        // Greedy sphere exclusion is maximal; on this crafted set it attains
        // the optimum.
        assert_eq!(greedy, best);

        let same = set_of(&["CCO", "CCO", "CCO"], &[1.0, 0.9, 0.8]);
        assert_eq!(n_circles(&same, threshold).unwrap(), 1);
        assert!(matches!(n_circles(&s, 0.0), Err(MetricsError::BadThreshold(_))));
        assert!(matches!(n_circles(&s, 1.0), Err(MetricsError::BadThreshold(_))));
    }

    #[test]
    fn scaffold_count_distinguishes_ring_systems() {
        // Two benzene-scaffold molecules, one pyridine, two acyclic (shared
        // empty scaffold).
        let s = set_of(
            &["c1ccccc1CC", "c1ccccc1CCC", "c1ccncc1C", "CCO", "CCCC"],
            &[1.0; 5],
        );
        assert_eq!(n_scaffolds(&s), 3);
    }

    #[test]
    fn top_k_orders_by_reward() {
        let s = set_of(&["CCO", "CC", "CCC", "CCCC"], &[0.1, 0.9, 0.5, 0.3]);
        assert_eq!(top_k_reward(&s, 1).unwrap(), 0.9);
        assert!((top_k_reward(&s, 2).unwrap() - 0.7).abs() < 1e-12);
        // k beyond N falls back to the full mean.
        assert!((top_k_reward(&s, 100).unwrap() - 0.45).abs() < 1e-12);
    }

    fn mw_spec(range: (f64, f64), d: i8) -> ConditionalSpec {
        ConditionalSpec {
            property: PropertyId::MolWt,
            range,
            d,
            lambda: 1.0,
            bounds: PropertyBounds::new(0.0, 200.0, 0.0, 300.0).unwrap(),
        }
    }

    #[test]
    fn l1_dist_normalizes_by_sampling_window() {
        let ev = Evaluator::new();
        // Ethane MW = 30.07, ethanol MW = 46.069.
        let s = set_of(&["CC", "CCO"], &[1.0, 1.0]);
        let spec = mw_spec((20.0, 70.0), 0);
        let q10 = 25.0;
        let w1 = (30.069_f64 - q10).abs() / 200.0;
        let w2 = (46.068_f64 - q10).abs() / 200.0;
        let got = l1_dist(&s, &[spec], &ev).unwrap()[0];
        assert!((got - (w1 + w2) / 2.0).abs() < 1e-3);
    }

    #[test]
    fn success_counts_directional_indicators() {
        let ev = Evaluator::new();
        // MW: ethane 30.07, ethanol 46.07.
        let s = set_of(&["CC", "CCO"], &[1.0, 1.0]);
        // d=0 range [25, 50]: both inside -> 100%.
        assert_eq!(success_pct(&s, &[mw_spec((25.0, 50.0), 0)], &ev).unwrap(), 100.0);
        // d=0 range [40, 50]: only ethanol -> 50%.
        assert_eq!(success_pct(&s, &[mw_spec((40.0, 50.0), 0)], &ev).unwrap(), 50.0);
        // d=+1 range [20, 46.2]: tol 0.1*46.2; ethanol within, ethane not -> 50%.
        assert_eq!(success_pct(&s, &[mw_spec((20.0, 46.2), 1)], &ev).unwrap(), 50.0);
        // d=-1 range [30, 60]: tol 0.1*30; ethane within of c_low -> 50%.
        assert_eq!(success_pct(&s, &[mw_spec((30.0, 60.0), -1)], &ev).unwrap(), 50.0);
        // Two conditionals average over pairs.
        let pct = success_pct(
            &s,
            &[mw_spec((25.0, 50.0), 0), mw_spec((40.0, 50.0), 0)],
            &ev,
        )
        .unwrap();
        assert_eq!(pct, 75.0);
    }

    #[test]
    fn hit_ratios_follow_the_three_criteria() {
        let ev = Evaluator::new();
        // Acetanilide twice (duplicate key), benzoic acid, an ibuprofen-like
        // acid, and butane (QED 0 at that size, fails the QED gate).
        let s = set_of(
            &[
                "CC(=O)Nc1ccccc1",
                "CC(=O)Nc1ccccc1",
                "c1ccc(cc1)C(=O)O",
                "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
                "CCCC",
            ],
            &[1.0, 0.9, 0.8, 0.7, 0.6],
        );
        let mut scores = ScoreTable::default();
        scores.insert(s.keys()[0].clone(), -9.0);
        scores.insert(s.keys()[2].clone(), -8.5);
        scores.insert(s.keys()[4].clone(), -9.5);
        // The ibuprofen-like entry is intentionally missing.
        let refs: Vec<Fingerprint> = Vec::new();
        let hr = hit_ratios(&s, &scores, -8.0, &refs, &ev).unwrap();
        assert_eq!(hr.missing_scores, 1);
        // Four scored samples; butane beats the median but fails QED.
        assert!((hr.hit - 3.0 / 4.0).abs() < 1e-12);
        // Duplicate acetanilide is not novel; the empty reference makes the
        // remaining two hits novel.
        assert!((hr.novel_hit - 2.0 / 4.0).abs() < 1e-12);

        // A reference fingerprint identical to acetanilide removes it from
        // the novel set (similarity 1.0 >= 0.4).
        let refs = vec![s.fingerprints()[0].clone()];
        let hr = hit_ratios(&s, &scores, -8.0, &refs, &ev).unwrap();
        assert!((hr.novel_hit - 1.0 / 4.0).abs() < 1e-12);

        assert!(matches!(
            hit_ratios(&s, &ScoreTable::default(), -8.0, &refs, &ev),
            Err(MetricsError::EmptyScoreTable)
        ));
    }

    #[test]
    fn uniqueness_and_novelty_are_counts_over_n() {
        let s = set_of(&["CCO", "CCO", "CC"], &[1.0, 1.0, 1.0]);
        assert!((s.uniqueness() - 2.0 / 3.0).abs() < 1e-12);
        let mut reference = HashSet::new();
        reference.insert(s.keys()[0].clone());
        let nv = s.novelty(&reference);
        assert!((nv - 1.0 / 3.0).abs() < 1e-12);
        assert!(nv <= s.uniqueness());
        // Both scale back to integers.
        let n = s.len() as f64;
        assert!(((s.uniqueness() * n).round() - s.uniqueness() * n).abs() < 1e-9);
        assert!(((nv * n).round() - nv * n).abs() < 1e-9);
    }

    #[test]
    fn report_combines_reward_weighted_metrics_exactly() {
        let ev = Evaluator::new();
        let s = set_of(
            &["CCO", "c1ccccc1", "CCN", "CCCC", "CC(C)O"],
            &[0.9, 0.8, 0.7, 0.6, 0.5],
        );
        let specs = vec![mw_spec((20.0, 100.0), 0)];
        let rep = MetricsReport::compute(&s, &specs, &ev, None, 0.75).unwrap();
        assert_eq!(rep.rw_circles, rep.top_100 * rep.n_circles as f64);
        assert_eq!(rep.rw_scaffolds, rep.top_100 * rep.n_scaffolds as f64);
        assert_eq!(rep.rw_top_div, rep.top_100 * rep.diversity);
        assert_eq!(rep.validity, 1.0);
        assert!(rep.novelty.is_none());

        let text = rep.render();
        assert!(text.contains("n_modes:"));
        assert!(text.contains("hit_ratio: absent"));
        assert!(text.starts_with("# params:"));
    }

    #[test]
    fn metrics_are_invariant_to_sample_order() {
        let smiles = ["CCO", "c1ccccc1", "CCN", "CCCC", "CC(C)O", "O"];
        let rewards = [0.9, 0.8, 0.7, 0.6, 0.55, 0.52];
        let a = set_of(&smiles, &rewards);
        // Reversed insertion order.
        let rs: Vec<&str> = smiles.iter().rev().cloned().collect();
        let rr: Vec<f64> = rewards.iter().rev().cloned().collect();
        let b = set_of(&rs, &rr);
        assert_eq!(n_modes(&a).unwrap(), n_modes(&b).unwrap());
        assert_eq!(n_circles(&a, 0.75).unwrap(), n_circles(&b, 0.75).unwrap());
        assert!((diversity(&a).unwrap() - diversity(&b).unwrap()).abs() < 1e-12);
        assert_eq!(top_k_reward(&a, 3).unwrap(), top_k_reward(&b, 3).unwrap());
    }

    #[test]
    fn misaligned_and_nonfinite_inputs_are_rejected() {
        let mols = vec![parse("CCO").unwrap()];
        assert!(matches!(
            SampleSet::new(mols.clone(), vec![1.0, 2.0]),
            Err(MetricsError::Misaligned(1, 2))
        ));
        assert!(matches!(
            SampleSet::new(mols, vec![f64::NAN]),
            Err(MetricsError::NonFiniteReward(0))
        ));
    }

    #[test]
    fn validity_tracks_attempted_lines() {
        let mols = vec![parse("CCO").unwrap(), parse("CC").unwrap()];
        let s = SampleSet::with_attempted(mols, vec![1.0, 1.0], 4).unwrap();
        assert_eq!(s.validity(), 0.5);
    }
}
