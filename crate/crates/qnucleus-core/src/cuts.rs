//! Spherical cuts, cut sequences and the greedy fixed-point approximation
//! of the q-nucleus.
//!
//! A cut removes the conservative interior voxels of a hat pair from a
//! compact voxel set, and is valid only when the dilated cap surface
//! misses every occupied cell and the hat is ambient-valid. Validity is
//! antitone in the set (shrinking the set never invalidates a cut), which
//! makes the greedy sweep confluent: the fixed point does not depend on
//! the sweep order. Because validity and removal are both conservative,
//! no voxel containing a point of a q-pseudoconcave subset is ever
//! removed, so the residual over-approximates the true nucleus at grid
//! resolution.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{AmbientDomain, CPoint, ChartBox, VoxelSet, VoxelizeMode};
use crate::hats::{
    generate_family, valid_in_ambient, voxelize_hat, Family, HatFamily, HatPair, HatVoxelization,
};

/// One applied (or skipped) spherical cut.
#[derive(Clone, Debug)]
pub struct CutRecord {
    pub pair: HatPair,
    pub before: VoxelSet,
    pub after: VoxelSet,
    pub removed_count: usize,
    pub skipped: bool,
}

/// A chain K_1 ⊃ K_2 ⊃ ... of voxel sets with the hats that produced it.
#[derive(Clone, Debug)]
pub struct CutSequence {
    pub initial: VoxelSet,
    pub q: usize,
    pub records: Vec<CutRecord>,
}

impl CutSequence {
    pub fn new(initial: VoxelSet, q: usize) -> Self {
        Self { initial, q, records: Vec::new() }
    }

    pub fn residual(&self) -> &VoxelSet {
        self.records.last().map(|r| &r.after).unwrap_or(&self.initial)
    }

    pub fn pairs(&self) -> Vec<HatPair> {
        self.records.iter().filter(|r| !r.skipped).map(|r| r.pair.clone()).collect()
    }

    pub fn removed_total(&self) -> usize {
        self.records.iter().map(|r| r.removed_count).sum()
    }

    fn push(&mut self, record: CutRecord) {
        debug_assert_eq!(record.before, *self.residual());
        self.records.push(record);
    }
}

/// Outcome of the greedy nucleus approximation.
#[derive(Clone, Debug)]
pub struct NucleusResult {
    pub residual: VoxelSet,
    pub sequence: CutSequence,
    pub iterations: usize,
    pub converged: bool,
    pub family_seed: u64,
}

fn required_order(n: usize, q: usize) -> Result<usize> {
    if q == 0 || q >= n.max(2) {
        return Err(Error::Config(format!("q = {q} outside [1, {}]", n - 1)));
    }
    Ok(n + 1 - q)
}

fn check_order(pair: &HatPair, n: usize, q: usize) -> Result<()> {
    let required = required_order(n, q)?;
    if pair.order() != required {
        return Err(Error::OrderMismatch { found: pair.order(), required });
    }
    Ok(())
}

/// A cut by `pair` is valid on `k` iff the hat is ambient-valid and the
/// dilated cap surface misses every occupied cell.
pub fn is_valid_cut(k: &VoxelSet, pair: &HatPair, ambient: &AmbientDomain) -> Result<bool> {
    ambient.check_chart(k)?;
    if !valid_in_ambient(pair, ambient) {
        return Ok(false);
    }
    let s = voxelize_hat(pair, k.chart(), HatVoxelization::SDilated);
    Ok(!s.intersects(k)?)
}

/// Apply one valid cut: after = k minus the conservative interior voxels.
pub fn apply_cut(k: &VoxelSet, pair: &HatPair, ambient: &AmbientDomain) -> Result<CutRecord> {
    if !is_valid_cut(k, pair, ambient)? {
        return Err(Error::InvalidCut);
    }
    let interior = voxelize_hat(pair, k.chart(), HatVoxelization::InteriorConservative);
    let after = k.difference(&interior)?;
    let removed_count = k.count() - after.count();
    Ok(CutRecord { pair: pair.clone(), before: k.clone(), after, removed_count, skipped: false })
}

/// Apply pairs in order, skipping (and flagging) invalid ones.
pub fn apply_sequence(
    k: &VoxelSet,
    pairs: &[HatPair],
    q: usize,
    ambient: &AmbientDomain,
) -> Result<CutSequence> {
    ambient.check_chart(k)?;
    let n = k.chart().n();
    let mut seq = CutSequence::new(k.clone(), q);
    for pair in pairs {
        check_order(pair, n, q)?;
        let current = seq.residual().clone();
        match apply_cut(&current, pair, ambient) {
            Ok(record) => seq.push(record),
            Err(Error::InvalidCut) => seq.push(CutRecord {
                pair: pair.clone(),
                before: current.clone(),
                after: current,
                removed_count: 0,
                skipped: true,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(seq)
}

/// Concatenate two sequences from the same initial set. Every cut of the
/// second remains valid (validity is antitone in the set), and the
/// residual is exactly the intersection of the two residuals.
pub fn intersect_in_family(
    s1: &CutSequence,
    s2: &CutSequence,
    ambient: &AmbientDomain,
) -> Result<CutSequence> {
    if s1.initial != s2.initial {
        return Err(Error::SequenceMismatch("different initial sets".into()));
    }
    if s1.q != s2.q {
        return Err(Error::SequenceMismatch("different q".into()));
    }
    let mut pairs = s1.pairs();
    pairs.extend(s2.pairs());
    let combined = apply_sequence(&s1.initial, &pairs, s1.q, ambient)?;
    let expect = s1.residual().intersection(s2.residual())?;
    debug_assert_eq!(*combined.residual(), expect);
    Ok(combined)
}

/// Any occupied cell inside the exact ambient bounding box of the filled
/// hat region? Cheap pre-test for productivity.
fn occupied_in_hat_bounds(pair: &HatPair, k: &VoxelSet) -> bool {
    let chart = k.chart();
    let (lo, hi) = pair.ambient_bounds(1.0);
    let mut windows = Vec::with_capacity(chart.dim());
    for d in 0..chart.dim() {
        match chart.axis_window(d, lo[d], hi[d]) {
            Some(w) => windows.push(w),
            None => return false,
        }
    }
    k.iter_ones().any(|idx| {
        let multi = chart.multi_index(idx);
        multi
            .iter()
            .zip(&windows)
            .all(|(&m, &(a, b))| m >= a && m <= b)
    })
}

/// Greedy fixed point: sweep the family, applying every valid productive
/// cut, until a full sweep removes nothing or `max_iter` sweeps elapse.
///
/// Validity of a pair is tested against the occupied cells inside the
/// dilated cap band; the band hits are cached per pair (the set only
/// shrinks, so stale entries can be re-filtered instead of rescanned).
/// Once a pair is valid it retires: its cut stays valid forever and can
/// only be productive the first time.
pub fn approximate_nucleus(
    k: &VoxelSet,
    q: usize,
    family: &Family,
    ambient: &AmbientDomain,
    max_iter: usize,
) -> Result<NucleusResult> {
    ambient.check_chart(k)?;
    let chart = k.chart().clone();
    let n = chart.n();
    for pair in &family.pairs {
        check_order(pair, n, q)?;
    }
    let centers = chart.all_centers_flat();
    let ambient_ok: Vec<bool> = family
        .pairs
        .par_iter()
        .map(|pair| valid_in_ambient(pair, ambient))
        .collect();
    let mut pending: Vec<(usize, Option<Vec<u32>>)> = family
        .pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| ambient_ok[*i])
        .map(|(i, _)| (i, None))
        .collect();
    let mut seq = CutSequence::new(k.clone(), q);
    let mut current = k.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut removed_this_sweep = 0usize;
        let mut still_pending = Vec::with_capacity(pending.len());
        for (i, cached) in pending {
            let pair = &family.pairs[i];
            let hits: Vec<u32> = match cached {
                Some(list) => list
                    .into_iter()
                    .filter(|&c| current.contains(c as usize))
                    .collect(),
                None => crate::hats::s_band_occupied(pair, &chart, &centers, &current),
            };
            if !hits.is_empty() {
                still_pending.push((i, Some(hits)));
                continue;
            }
            // the cut is valid; apply it if it can remove anything
            if occupied_in_hat_bounds(pair, &current) {
                let interior = voxelize_hat(pair, &chart, HatVoxelization::InteriorConservative);
                let after = current.difference(&interior)?;
                let removed = current.count() - after.count();
                if removed > 0 {
                    seq.push(CutRecord {
                        pair: pair.clone(),
                        before: current.clone(),
                        after: after.clone(),
                        removed_count: removed,
                        skipped: false,
                    });
                    current = after;
                    removed_this_sweep += removed;
                }
            }
            // valid pairs retire whether or not they were productive
        }
        pending = still_pending;
        if removed_this_sweep == 0 {
            converged = true;
            break;
        }
    }
    if max_iter == 0 {
        iterations = 0;
    }
    Ok(NucleusResult {
        residual: current,
        sequence: seq,
        iterations,
        converged,
        family_seed: family.seed,
    })
}

/// Verdict of a monotonicity comparison between nested sets.
#[derive(Clone, Debug)]
pub struct MonotonicityVerdict {
    pub holds: bool,
    pub residual_small: VoxelSet,
    pub residual_large: VoxelSet,
}

/// Run the same family on K ⊆ L and check residual(K) ⊆ residual(L).
pub fn monotonicity_check(
    k: &VoxelSet,
    l: &VoxelSet,
    q: usize,
    family: &Family,
    ambient: &AmbientDomain,
    max_iter: usize,
) -> Result<MonotonicityVerdict> {
    if !k.is_subset(l)? {
        return Err(Error::Config("monotonicity check requires K contained in L".into()));
    }
    let rk = approximate_nucleus(k, q, family, ambient, max_iter)?;
    let rl = approximate_nucleus(l, q, family, ambient, max_iter)?;
    Ok(MonotonicityVerdict {
        holds: rk.residual.is_subset(&rl.residual)?,
        residual_small: rk.residual,
        residual_large: rl.residual,
    })
}

/// Result of the closed-set nucleus truncation.
#[derive(Debug)]
pub struct ClosedNucleus {
    pub residual: VoxelSet,
    pub stages: Vec<NucleusResult>,
}

/// Default nested exhaustion: `stages` concentric boxes growing
/// geometrically by 1.5 up to the chart box.
pub fn default_exhaustion(chart: &ChartBox, stages: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = chart.dim();
    let mut out = Vec::with_capacity(stages);
    for s in 0..stages {
        let shrink = 1.5_f64.powi((stages - 1 - s) as i32);
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for d in 0..dim {
            let mid = 0.5 * (chart.lower()[d] + chart.upper()[d]);
            let half = 0.5 * (chart.upper()[d] - chart.lower()[d]) / shrink;
            lo.push(mid - half);
            hi.push(mid + half);
        }
        out.push((lo, hi));
    }
    out
}

/// Truncated nucleus of a closed set: the union over a finite nested box
/// exhaustion of the nuclei of A ∩ K_k, all rendered on the shared grid.
pub fn nucleus_closed<F>(
    a: F,
    exhaustion: &[(Vec<f64>, Vec<f64>)],
    q: usize,
    family_cfg: &HatFamily,
    ambient: &AmbientDomain,
    max_iter: usize,
) -> Result<ClosedNucleus>
where
    F: Fn(&CPoint) -> bool + Sync,
{
    if exhaustion.is_empty() {
        return Err(Error::Config("empty exhaustion".into()));
    }
    let chart = ambient.chart();
    let dim = chart.dim();
    for window in exhaustion.windows(2) {
        let (ref lo0, ref hi0) = window[0];
        let (ref lo1, ref hi1) = window[1];
        for d in 0..dim {
            if lo1[d] > lo0[d] || hi1[d] < hi0[d] {
                return Err(Error::Config("exhaustion boxes are not nested".into()));
            }
        }
    }
    let family = generate_family(family_cfg, ambient);
    let a_vox = crate::geom::voxelize(&a, chart.clone(), VoxelizeMode::Centers);
    let mut residual = VoxelSet::empty(chart.clone());
    let mut stages = Vec::new();
    for (lo, hi) in exhaustion {
        let lo = lo.clone();
        let hi = hi.clone();
        let stage_box = crate::geom::voxelize(
            move |p: &CPoint| {
                p.coords()
                    .iter()
                    .enumerate()
                    .all(|(d, &c)| c >= lo[d] && c <= hi[d])
            },
            chart.clone(),
            VoxelizeMode::Centers,
        );
        let stage_k = a_vox.intersection(&stage_box)?;
        let result = approximate_nucleus(&stage_k, q, &family, ambient, max_iter)?;
        residual = residual.union(&result.residual)?;
        stages.push(result);
    }
    Ok(ClosedNucleus { residual, stages })
}

/// Serialized nucleus run: residual as a voxel-set file reference plus the
/// replayable cut sequence.
#[derive(Serialize, Deserialize)]
pub struct NucleusResultFile {
    pub residual: String,
    pub iterations: usize,
    pub converged: bool,
    pub family_seed: u64,
    pub removed_total: usize,
    pub sequence: Vec<SequenceEntry>,
}

#[derive(Serialize, Deserialize)]
pub struct SequenceEntry {
    pub hat: HatPair,
    pub removed_count: usize,
    pub skipped: bool,
}

impl NucleusResult {
    /// Write `<stem>.json` plus the residual voxel file `<stem>.residual.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)?;
        let residual_name = format!("{stem}.residual.json");
        self.residual.save(&dir.join(&residual_name))?;
        let file = NucleusResultFile {
            residual: residual_name,
            iterations: self.iterations,
            converged: self.converged,
            family_seed: self.family_seed,
            removed_total: self.sequence.removed_total(),
            sequence: self
                .sequence
                .records
                .iter()
                .map(|r| SequenceEntry {
                    hat: r.pair.clone(),
                    removed_count: r.removed_count,
                    skipped: r.skipped,
                })
                .collect(),
        };
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;
        Ok(path)
    }
}

/// Load a recorded run and replay it on its initial set.
pub fn load_sequence(path: &Path) -> Result<NucleusResultFile> {
    let data = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{voxelize, AffineMap, ChartBox};
    use crate::hats::DEFAULT_MU;

    fn chart16() -> Arc<ChartBox> {
        Arc::new(ChartBox::cube(2, 2.0, 16).unwrap())
    }

    fn small_family(ambient: &AmbientDomain) -> Family {
        let mut cfg = HatFamily::new(2);
        cfg.stride = 5;
        cfg.radii = vec![0.3, 0.6];
        cfg.scales = vec![0.5, 1.0, 1.6];
        generate_family(&cfg, ambient)
    }

    fn ball(chart: &Arc<ChartBox>, radius: f64) -> VoxelSet {
        voxelize(move |p: &CPoint| p.norm() <= radius, chart.clone(), VoxelizeMode::Centers)
    }

    #[test]
    fn empty_set_cuts_trivially() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        assert!(!family.pairs.is_empty());
        let empty = VoxelSet::empty(chart);
        assert!(is_valid_cut(&empty, &family.pairs[0], &ambient).unwrap());
        let res = approximate_nucleus(&empty, 1, &family, &ambient, 10).unwrap();
        assert!(res.residual.is_empty());
        assert!(res.converged);
        assert_eq!(res.sequence.removed_total(), 0);
    }

    #[test]
    fn cut_through_set_is_invalid() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let k = ball(&chart, 1.0);
        // hat centered at origin, cap sphere passes through the ball
        let pair = HatPair::new(
            2,
            0.3,
            DEFAULT_MU,
            AffineMap::scale_translate(2, 1.0, &CPoint::zero(2)).unwrap(),
        )
        .unwrap();
        assert!(!is_valid_cut(&k, &pair, &ambient).unwrap());
        assert!(matches!(apply_cut(&k, &pair, &ambient), Err(Error::InvalidCut)));
    }

    #[test]
    fn disjoint_cut_removes_nothing_and_is_idempotent() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let k = ball(&chart, 0.4);
        let pair = HatPair::new(
            2,
            0.5,
            DEFAULT_MU,
            AffineMap::scale_translate(2, 0.4, &CPoint::new(vec![1.3, 0.0, 0.0, 0.0]).unwrap())
                .unwrap(),
        )
        .unwrap();
        let rec = apply_cut(&k, &pair, &ambient).unwrap();
        assert_eq!(rec.removed_count, 0);
        let rec2 = apply_cut(&rec.after, &pair, &ambient).unwrap();
        assert_eq!(rec2.removed_count, 0);
    }

    #[test]
    fn sequence_skips_invalid() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let k = ball(&chart, 1.0);
        let invalid = HatPair::new(
            2,
            0.3,
            DEFAULT_MU,
            AffineMap::scale_translate(2, 1.0, &CPoint::zero(2)).unwrap(),
        )
        .unwrap();
        let seq = apply_sequence(&k, &[invalid.clone(), invalid], 1, &ambient).unwrap();
        assert_eq!(*seq.residual(), k);
        assert!(seq.records.iter().all(|r| r.skipped));
        let empty_seq = apply_sequence(&k, &[], 1, &ambient).unwrap();
        assert_eq!(*empty_seq.residual(), k);
    }

    #[test]
    fn greedy_empties_ball_on_coarse_grid() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let k = ball(&chart, 1.0);
        let res = approximate_nucleus(&k, 1, &family, &ambient, 50).unwrap();
        assert!(res.converged, "did not converge");
        assert!(
            res.residual.is_empty(),
            "residual has {} voxels of {}",
            res.residual.count(),
            k.count()
        );
        // occupancy decreases monotonically along the chain
        let mut prev = k.count();
        for r in &res.sequence.records {
            assert!(r.after.count() <= prev);
            assert!(r.after.is_subset(&r.before).unwrap());
            prev = r.after.count();
        }
    }

    #[test]
    fn recorded_sequence_replays_bit_exactly() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let k = ball(&chart, 1.0);
        let res = approximate_nucleus(&k, 1, &family, &ambient, 50).unwrap();
        let replay = apply_sequence(&k, &res.sequence.pairs(), 1, &ambient).unwrap();
        assert_eq!(replay.residual(), &res.residual);
        assert!(replay.records.iter().all(|r| !r.skipped));
    }

    #[test]
    fn save_load_replay() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let k = ball(&chart, 0.8);
        let res = approximate_nucleus(&k, 1, &family, &ambient, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = res.save(dir.path(), "run").unwrap();
        let file = load_sequence(&path).unwrap();
        assert_eq!(file.converged, res.converged);
        let residual = VoxelSet::load(&dir.path().join(&file.residual)).unwrap();
        assert_eq!(residual, res.residual);
        let pairs: Vec<HatPair> = file.sequence.iter().map(|e| e.hat.clone()).collect();
        let replay = apply_sequence(&k, &pairs, 1, &ambient).unwrap();
        assert_eq!(*replay.residual(), res.residual);
    }

    #[test]
    fn confluence_under_permuted_sweep_order() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let k = ball(&chart, 1.0);
        let reference = approximate_nucleus(&k, 1, &family, &ambient, 50).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..3 {
            let mut shuffled = family.clone();
            shuffled.pairs.shuffle(&mut rng);
            let res = approximate_nucleus(&k, 1, &shuffled, &ambient, 50).unwrap();
            assert_eq!(res.residual, reference.residual);
        }
    }

    #[test]
    fn antitone_validity() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let large = ball(&chart, 1.0);
        let small = ball(&chart, 0.6);
        for pair in family.pairs.iter().take(40) {
            if is_valid_cut(&large, pair, &ambient).unwrap() {
                assert!(is_valid_cut(&small, pair, &ambient).unwrap());
            }
        }
    }

    #[test]
    fn monotone_nested_residuals() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let small = ball(&chart, 0.7);
        let large = ball(&chart, 1.0);
        let v = monotonicity_check(&small, &large, 1, &family, &ambient, 50).unwrap();
        assert!(v.holds);
    }

    #[test]
    fn intersect_in_family_is_bitwise_intersection() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let k = ball(&chart, 1.0);
        let half1: Vec<HatPair> = family.pairs.iter().step_by(2).cloned().collect();
        let half2: Vec<HatPair> = family.pairs.iter().skip(1).step_by(2).cloned().collect();
        let s1 = apply_sequence(&k, &half1, 1, &ambient).unwrap();
        let s2 = apply_sequence(&k, &half2, 1, &ambient).unwrap();
        let combined = intersect_in_family(&s1, &s2, &ambient).unwrap();
        let expect = s1.residual().intersection(s2.residual()).unwrap();
        assert_eq!(*combined.residual(), expect);
        // s2 empty: concatenation returns s1's residual
        let empty = CutSequence::new(k.clone(), 1);
        let same = intersect_in_family(&s1, &empty, &ambient).unwrap();
        assert_eq!(same.residual(), s1.residual());
    }

    #[test]
    fn closed_nucleus_stabilizes_for_compact_sets() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let mut cfg = HatFamily::new(2);
        cfg.stride = 5;
        cfg.radii = vec![0.3, 0.6];
        cfg.scales = vec![0.5, 1.0, 1.6];
        let exhaustion = default_exhaustion(&chart, 3);
        let closed = nucleus_closed(
            |p: &CPoint| p.norm() <= 0.8,
            &exhaustion,
            1,
            &cfg,
            &ambient,
            50,
        )
        .unwrap();
        // the outermost stage contains the whole ball, and every stage of a
        // chart-contained compact empties
        assert!(closed.residual.is_empty());
        assert_eq!(closed.stages.len(), 3);
        // non-nested rejected
        let mut bad = exhaustion.clone();
        bad.reverse();
        assert!(nucleus_closed(|p: &CPoint| p.norm() <= 0.8, &bad, 1, &cfg, &ambient, 50).is_err());
    }

    #[test]
    fn max_iter_zero_reports_nonconvergence() {
        let chart = chart16();
        let ambient = AmbientDomain::full_box(chart.clone());
        let family = small_family(&ambient);
        let k = ball(&chart, 1.0);
        let res = approximate_nucleus(&k, 1, &family, &ambient, 0).unwrap();
        assert!(!res.converged);
        assert_eq!(res.residual, k);
        assert_eq!(res.iterations, 0);
    }
}
