//! Max-gluing of q-convex-with-corners functions along an emptying cut
//! sequence.
//!
//! Glue step: given psi positive on V1 and a bump phi positive on V2 with
//! K ⊆ V1 ∪ V2, pick c so large that c phi dominates psi on the inflow
//! seam ∂V1 ∩ V2 ∩ K (phi is bounded below there) while psi dominates
//! c phi on the outflow seam ∂V2 ∩ V1 ∩ K (phi nearly vanishes there).
//! The glued function is psi on V1 \ V2, c phi on V2 \ V1 and their max on
//! the overlap; its domain W covers K. Recursing backwards through an
//! emptying sequence yields a positive function, q-convex with corners, on
//! a neighborhood of the original compact set.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::bump::{hat_bump, BumpParams};
use crate::cuts::CutSequence;
use crate::error::{Error, Result};
use crate::geom::{AmbientDomain, CPoint, MaxField, ScalarField, VoxelSet};
use crate::hats::{voxelize_hat, HatPair, HatVoxelization};
use crate::levi::{classify_max_point, signature, ConvexityClass};

/// Default multiplicative margin in the scaling constant.
pub const DEFAULT_MARGIN: f64 = 0.5;
/// Default absolute seam tolerance for stand-alone glue checks.
pub const DEFAULT_SEAM_TOLERANCE: f64 = 1e-6;
/// Activity gap for corner classification.
pub const DEFAULT_EPS_ACT: f64 = 1e-6;

/// Seam voxel sets of a glue step.
#[derive(Clone, Debug)]
pub struct GlueRegion {
    pub v1: VoxelSet,
    pub v2: VoxelSet,
    /// ∂V1 ∩ V2 ∩ K: where the new branch must dominate.
    pub seam_in: VoxelSet,
    /// ∂V2 ∩ V1 ∩ K: where the existing function must dominate.
    pub seam_out: VoxelSet,
}

impl GlueRegion {
    pub fn new(v1: &VoxelSet, v2: &VoxelSet, k: &VoxelSet) -> Result<Self> {
        if !k.is_subset(&v1.union(v2)?)? {
            return Err(Error::Coverage);
        }
        let seam_in = v1.boundary().intersection(v2)?.intersection(k)?;
        let seam_out = v2.boundary().intersection(v1)?.intersection(k)?;
        Ok(Self { v1: v1.clone(), v2: v2.clone(), seam_in, seam_out })
    }
}

/// A recursively max-glued function with voxel-set region bookkeeping.
#[derive(Clone, Debug)]
pub enum ConstructedFunction {
    Leaf {
        field: ScalarField,
        scale: f64,
        support: VoxelSet,
        hat: Option<HatPair>,
        step: usize,
    },
    Glue {
        first: Box<ConstructedFunction>,
        second: Box<ConstructedFunction>,
        v1: VoxelSet,
        v2: VoxelSet,
        w1: VoxelSet,
        w2: VoxelSet,
        domain: VoxelSet,
        eroded: bool,
    },
}

impl ConstructedFunction {
    pub fn leaf(field: ScalarField, scale: f64, support: VoxelSet) -> Self {
        ConstructedFunction::Leaf { field, scale, support, hat: None, step: 0 }
    }

    /// Voxel set on which evaluation is defined.
    pub fn domain(&self) -> &VoxelSet {
        match self {
            ConstructedFunction::Leaf { support, .. } => support,
            ConstructedFunction::Glue { domain, .. } => domain,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ConstructedFunction::Leaf { .. } => 1,
            ConstructedFunction::Glue { first, second, .. } => {
                first.leaf_count() + second.leaf_count()
            }
        }
    }

    fn eval_inner(&self, p: &CPoint, cell: usize) -> Result<f64> {
        match self {
            ConstructedFunction::Leaf { field, scale, .. } => Ok(scale * field.value(p)?),
            ConstructedFunction::Glue { first, second, v1, v2, w1, w2, .. } => {
                let in1 = v1.contains(cell) || w1.contains(cell);
                let in2 = v2.contains(cell) || w2.contains(cell);
                match (in1, in2) {
                    (true, false) => first.eval_inner(p, cell),
                    (false, true) => second.eval_inner(p, cell),
                    (true, true) => {
                        let a = first.eval_inner(p, cell)?;
                        let b = second.eval_inner(p, cell)?;
                        Ok(a.max(b))
                    }
                    (false, false) => Err(Error::Domain),
                }
            }
        }
    }

    /// Collect the scaled branch fields contributing at a cell (all leaves
    /// reachable through the clause logic).
    fn collect_branches(&self, cell: usize, out: &mut Vec<ScalarField>) {
        match self {
            ConstructedFunction::Leaf { field, scale, .. } => out.push(field.scaled(*scale)),
            ConstructedFunction::Glue { first, second, v1, v2, w1, w2, .. } => {
                let in1 = v1.contains(cell) || w1.contains(cell);
                let in2 = v2.contains(cell) || w2.contains(cell);
                if in1 {
                    first.collect_branches(cell, out);
                }
                if in2 {
                    second.collect_branches(cell, out);
                }
            }
        }
    }

    /// The active-branch max field at a point, for corner classification.
    pub fn branches_at(&self, p: &CPoint) -> Result<MaxField> {
        let cell = self
            .domain()
            .chart()
            .cell_of(p)
            .filter(|&c| self.domain().contains(c))
            .ok_or(Error::Domain)?;
        let mut fields = Vec::new();
        self.collect_branches(cell, &mut fields);
        MaxField::new(fields)
    }
}

/// Evaluate a constructed function; the point's voxel must lie in W.
pub fn evaluate_constructed(f: &ConstructedFunction, p: &CPoint) -> Result<f64> {
    let cell = f
        .domain()
        .chart()
        .cell_of(p)
        .filter(|&c| f.domain().contains(c))
        .ok_or(Error::Domain)?;
    f.eval_inner(p, cell)
}

/// Seam ratio window of psi / phi: the supremum over the inflow seam (c
/// must exceed it) and the infimum over the outflow seam (c must stay
/// below it).
fn seam_ratio_window(
    psi: &ConstructedFunction,
    phi: &ScalarField,
    seam_in: &VoxelSet,
    seam_out: &VoxelSet,
) -> Result<(Option<f64>, Option<f64>)> {
    let chart = seam_in.chart().clone();
    let mut ratio_max: Option<f64> = None;
    for idx in seam_in.iter_ones() {
        let p = chart.cell_center(idx);
        let phi_v = phi.value(&p)?;
        if phi_v <= 1e-12 {
            return Err(Error::CannotDominate { voxel: idx });
        }
        let psi_v = evaluate_constructed(psi, &p)?;
        let r = psi_v / phi_v;
        ratio_max = Some(ratio_max.map_or(r, |m: f64| m.max(r)));
    }
    let mut ratio_min: Option<(f64, usize)> = None;
    for idx in seam_out.iter_ones() {
        let p = chart.cell_center(idx);
        let psi_v = evaluate_constructed(psi, &p)?;
        let phi_v = phi.value(&p)?;
        if phi_v <= 0.0 {
            continue; // outflow voxel where phi vanishes constrains nothing
        }
        let r = psi_v / phi_v;
        if ratio_min.map_or(true, |(m, _)| r < m) {
            ratio_min = Some((r, idx));
        }
    }
    Ok((ratio_max, ratio_min.map(|(r, _)| r)))
}

/// Pick the scaling constant c = (1 + margin) max over the inflow seam of
/// psi / phi, then verify psi > c phi on the outflow seam (phi nearly
/// vanishes there). Empty inflow seam yields c = 1. When the default
/// formula lands outside a non-empty feasible window the geometric mean of
/// the window is used instead; an empty window is a seam violation.
pub fn choose_scaling(
    psi: &ConstructedFunction,
    phi: &ScalarField,
    seam_in: &VoxelSet,
    seam_out: &VoxelSet,
    margin: f64,
) -> Result<f64> {
    let (ratio_max, ratio_min) = seam_ratio_window(psi, phi, seam_in, seam_out)?;
    let c = match ratio_max {
        Some(m) => (1.0 + margin) * m,
        None => 1.0,
    };
    let c = match (ratio_max, ratio_min) {
        (_, None) => c,
        (None, Some(hi)) => {
            if c < hi {
                c
            } else {
                hi * 0.5
            }
        }
        (Some(lo), Some(hi)) => {
            if c < hi {
                c
            } else if lo < hi {
                (lo * hi).sqrt()
            } else {
                // infeasible window
                let chart = seam_out.chart().clone();
                let witness = seam_out.iter_ones().next().unwrap_or(0);
                let _ = chart;
                return Err(Error::SeamViolation { voxel: witness });
            }
        }
    };
    // final verification of both sides
    let chart = seam_in.chart().clone();
    for idx in seam_in.iter_ones() {
        let p = chart.cell_center(idx);
        if evaluate_constructed(psi, &p)? >= c * phi.value(&p)? {
            return Err(Error::CannotDominate { voxel: idx });
        }
    }
    for idx in seam_out.iter_ones() {
        let p = chart.cell_center(idx);
        if evaluate_constructed(psi, &p)? <= c * phi.value(&p)? {
            return Err(Error::SeamViolation { voxel: idx });
        }
    }
    Ok(c)
}

fn seam_margins(
    f1: &ConstructedFunction,
    f2: &ConstructedFunction,
    region: &GlueRegion,
    tolerance: f64,
) -> Result<std::result::Result<(), (usize, f64)>> {
    let chart = region.v1.chart().clone();
    // on the outflow seam the first branch must dominate
    for idx in region.seam_out.iter_ones() {
        let p = chart.cell_center(idx);
        let a = evaluate_constructed(f1, &p)?;
        let b = evaluate_constructed(f2, &p)?;
        if !(a - b > tolerance) {
            return Ok(Err((idx, a - b)));
        }
    }
    // on the inflow seam the second branch must dominate
    for idx in region.seam_in.iter_ones() {
        let p = chart.cell_center(idx);
        let a = evaluate_constructed(f1, &p)?;
        let b = evaluate_constructed(f2, &p)?;
        if !(b - a > tolerance) {
            return Ok(Err((idx, b - a)));
        }
    }
    Ok(Ok(()))
}

/// Glue two constructed functions over V1, V2 covering K. Seam inequalities
/// are checked at voxel centers with the given absolute margin; on failure
/// both regions are eroded once and the check retried before erroring.
///
/// W = W1 ∪ W2 ∪ (V1 ∩ V2), with W1 = dilate(K \ V2) ∩ (V1 \ V2) and
/// W2 = dilate(K \ V1) ∩ (V2 \ V1); then K ⊆ W.
pub fn glue_pair(
    f1: ConstructedFunction,
    v1: &VoxelSet,
    f2: ConstructedFunction,
    v2: &VoxelSet,
    k: &VoxelSet,
    tolerance: f64,
) -> Result<ConstructedFunction> {
    let mut v1 = v1.clone();
    let mut v2 = v2.clone();
    let mut eroded = false;
    loop {
        let region = GlueRegion::new(&v1, &v2, k)?;
        match seam_margins(&f1, &f2, &region, tolerance)? {
            Ok(()) => {
                let overlap = v1.intersection(&v2)?;
                let not_v2 = k.difference(&v2)?;
                let not_v1 = k.difference(&v1)?;
                let w1 = not_v2.dilate(1).intersection(&v1.difference(&v2)?)?;
                let w2 = not_v1.dilate(1).intersection(&v2.difference(&v1)?)?;
                let domain = w1.union(&w2)?.union(&overlap)?;
                debug_assert!(k.is_subset(&domain)?);
                return Ok(ConstructedFunction::Glue {
                    first: Box::new(f1),
                    second: Box::new(f2),
                    v1,
                    v2,
                    w1,
                    w2,
                    domain,
                    eroded,
                });
            }
            Err((voxel, margin)) => {
                if eroded {
                    return Err(Error::GlueSeam { voxel, margin });
                }
                // shrink both open-set surrogates once and retry
                v1 = v1.erode();
                v2 = v2.erode();
                eroded = true;
            }
        }
    }
}

/// An emptying cut sequence: the recorded chain must end at the empty set.
#[derive(Clone, Debug)]
pub struct EmptyingSequence {
    sequence: CutSequence,
}

impl EmptyingSequence {
    pub fn new(sequence: CutSequence) -> Result<Self> {
        let residual = sequence.residual();
        if !residual.is_empty() {
            return Err(Error::NotEmptying { residual: residual.count() });
        }
        if sequence.pairs().is_empty() {
            return Err(Error::SequenceMismatch("emptying sequence has no cuts".into()));
        }
        Ok(Self { sequence })
    }

    pub fn sequence(&self) -> &CutSequence {
        &self.sequence
    }

    /// The chain sets K_1 ⊃ ... ⊃ K_m (productive steps only).
    fn chain(&self) -> Vec<(VoxelSet, HatPair)> {
        self.sequence
            .records
            .iter()
            .filter(|r| !r.skipped)
            .map(|r| (r.before.clone(), r.pair.clone()))
            .collect()
    }
}

/// Parameters of the inductive construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BuildParams {
    pub bump: BumpParams,
    pub margin: f64,
    /// Absolute seam tolerance; the multiplicative margin in the scaling
    /// constant provides the real slack, so this defaults to zero (strict
    /// inequality) for the inductive build.
    pub seam_tolerance: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self { bump: BumpParams::default(), margin: DEFAULT_MARGIN, seam_tolerance: 0.0 }
    }
}

/// Inductive construction along an emptying sequence: the last cut's bump
/// seeds the function on its filling; each earlier cut contributes a
/// scaled bump glued in with `choose_scaling` and `glue_pair`. The result
/// is positive and q-convex with corners on a voxel neighborhood of K.
pub fn build_q_convex(
    k: &VoxelSet,
    seq: &EmptyingSequence,
    q: usize,
    params: &BuildParams,
    ambient: &AmbientDomain,
) -> Result<ConstructedFunction> {
    ambient.check_chart(k)?;
    if seq.sequence().initial != *k {
        return Err(Error::SequenceMismatch("sequence does not start at K".into()));
    }
    let chain = seq.chain();
    let m = chain.len();
    let chart = k.chart().clone();
    let step_err = |step: usize, source: Error| Error::Construction { step, source: Box::new(source) };

    // base: the last cut's bump restricted to its filling
    let (_, last_pair) = &chain[m - 1];
    let base_field = hat_bump(last_pair, q, &params.bump).map_err(|e| step_err(m - 1, e))?;
    let base_support = voxelize_hat(last_pair, &chart, HatVoxelization::InteriorConservative);
    let mut current = ConstructedFunction::Leaf {
        field: base_field,
        scale: 1.0,
        support: base_support,
        hat: Some(last_pair.clone()),
        step: m - 1,
    };

    // induction: step j adds the bump of cut j over K_j
    for j in (0..m - 1).rev() {
        let (k_j, pair_j) = &chain[j];
        let v1 = current.domain().clone();
        let v2 = voxelize_hat(pair_j, &chart, HatVoxelization::InteriorConservative);
        let region = GlueRegion::new(&v1, &v2, k_j).map_err(|e| step_err(j, e))?;
        let phi = hat_bump(pair_j, q, &params.bump).map_err(|e| step_err(j, e))?;
        let c = choose_scaling(&current, &phi, &region.seam_in, &region.seam_out, params.margin)
            .map_err(|e| step_err(j, e))?;
        let leaf = ConstructedFunction::Leaf {
            field: phi,
            scale: c,
            support: v2.clone(),
            hat: Some(pair_j.clone()),
            step: j,
        };
        current = glue_pair(current, &v1, leaf, &v2, k_j, params.seam_tolerance)
            .map_err(|e| step_err(j, e))?;
    }
    debug_assert!(k.is_subset(current.domain())?);
    Ok(current)
}

/// Certification outcome for a constructed function.
#[derive(Clone, Debug, Serialize)]
pub struct CertifyReport {
    pub samples: usize,
    pub positive_failures: usize,
    pub weak_failures: usize,
    pub marginal: usize,
    pub skipped: usize,
    pub min_value: f64,
    pub worst_point: Option<Vec<f64>>,
    pub passed: bool,
}

/// Certify positivity and the q-convexity budget of a constructed function
/// on voxel centers of dilate(K, 1) ∩ W. Active branches are classified
/// through their analytic Levi forms; eigenvalues inside [-tau, tau] at a
/// sample are flagged as marginal (the bump walls force eigenvalues toward
/// zero), hard failures are strictly negative eigenvalues beyond budget or
/// non-positive values.
pub fn certify_constructed(
    f: &ConstructedFunction,
    k: &VoxelSet,
    q: usize,
    tau: f64,
    h: f64,
    eps_act: f64,
) -> Result<CertifyReport> {
    let chart = k.chart().clone();
    let zone = k.dilate(1).intersection(f.domain())?;
    let mut samples = 0usize;
    let mut positive_failures = 0usize;
    let mut weak_failures = 0usize;
    let mut marginal = 0usize;
    let mut skipped = 0usize;
    let mut min_value = f64::INFINITY;
    let mut worst_point: Option<Vec<f64>> = None;
    for idx in zone.iter_ones() {
        let p = chart.cell_center(idx);
        let value = match evaluate_constructed(f, &p) {
            Ok(v) => v,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        samples += 1;
        if value < min_value {
            min_value = value;
        }
        if value <= 0.0 {
            positive_failures += 1;
            worst_point = worst_point.or_else(|| Some(p.coords().to_vec()));
            continue;
        }
        let mf = match f.branches_at(&p) {
            Ok(mf) => mf,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        // classify every active branch through its analytic Hessian
        let active = match mf.active_branches(&p, eps_act) {
            Ok(a) => a,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let mut hard = false;
        let mut soft = false;
        for i in active {
            let Ok(Some(form)) = mf.branches()[i].analytic_hessian(&p) else {
                skipped += 1;
                continue;
            };
            let sig = signature(&form, tau);
            if sig.n_neg > q - 1 {
                hard = true;
            } else if sig.n_neg + sig.n_zero > q - 1 {
                soft = true;
            }
        }
        if hard {
            weak_failures += 1;
            worst_point = worst_point.or_else(|| Some(p.coords().to_vec()));
        } else if soft {
            marginal += 1;
        }
    }
    Ok(CertifyReport {
        samples,
        positive_failures,
        weak_failures,
        marginal,
        skipped,
        min_value: if min_value.is_finite() { min_value } else { 0.0 },
        worst_point,
        passed: positive_failures == 0 && weak_failures == 0,
    })
}

/// Classify the constructed function at one point through the sufficient
/// active-branch criterion.
pub fn classify_constructed(
    f: &ConstructedFunction,
    p: &CPoint,
    tau: f64,
    h: f64,
    eps_act: f64,
) -> Result<ConvexityClass> {
    let mf = f.branches_at(p)?;
    classify_max_point(&mf, p, tau, h, eps_act)
}

// ---- serialization -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum NodeRepr {
    Leaf {
        scale: f64,
        hat: Option<HatPair>,
        step: usize,
        support: String,
    },
    Max {
        children: Vec<NodeRepr>,
        v1: String,
        v2: String,
        w1: String,
        w2: String,
        domain: String,
        eroded: bool,
    },
}

/// Serialize a constructed function into `dir`: a recursive JSON tree plus
/// voxel-set files for every region. Only hat-backed leaves round-trip
/// (ad-hoc leaf fields carry closures).
pub fn save_constructed(
    f: &ConstructedFunction,
    q: usize,
    params: &BumpParams,
    dir: &Path,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut counter = 0usize;
    let mut write_voxels = |set: &VoxelSet| -> Result<String> {
        let name = format!("voxels_{counter:04}.json");
        counter += 1;
        set.save(&dir.join(&name))?;
        Ok(name)
    };
    fn encode(
        f: &ConstructedFunction,
        write: &mut dyn FnMut(&VoxelSet) -> Result<String>,
    ) -> Result<NodeRepr> {
        match f {
            ConstructedFunction::Leaf { scale, support, hat, step, .. } => Ok(NodeRepr::Leaf {
                scale: *scale,
                hat: hat.clone(),
                step: *step,
                support: write(support)?,
            }),
            ConstructedFunction::Glue { first, second, v1, v2, w1, w2, domain, eroded } => {
                Ok(NodeRepr::Max {
                    children: vec![encode(first, write)?, encode(second, write)?],
                    v1: write(v1)?,
                    v2: write(v2)?,
                    w1: write(w1)?,
                    w2: write(w2)?,
                    domain: write(domain)?,
                    eroded: *eroded,
                })
            }
        }
    }
    let root = encode(f, &mut write_voxels)?;
    #[derive(Serialize)]
    struct FileRepr<'a> {
        q: usize,
        bump: &'a BumpParams,
        root: NodeRepr,
    }
    let path = dir.join("constructed.json");
    std::fs::write(&path, serde_json::to_string_pretty(&FileRepr { q, bump: params, root })?)?;
    Ok(path)
}

/// Load a constructed function saved by `save_constructed`.
pub fn load_constructed(dir: &Path) -> Result<(ConstructedFunction, usize, BumpParams)> {
    #[derive(Deserialize)]
    struct FileRepr {
        q: usize,
        bump: BumpParams,
        root: NodeRepr,
    }
    let data = std::fs::read_to_string(dir.join("constructed.json"))?;
    let file: FileRepr = serde_json::from_str(&data)?;
    fn decode(repr: &NodeRepr, dir: &Path, q: usize, bump: &BumpParams) -> Result<ConstructedFunction> {
        match repr {
            NodeRepr::Leaf { scale, hat, step, support } => {
                let support = VoxelSet::load(&dir.join(support))?;
                let hat = hat
                    .clone()
                    .ok_or_else(|| Error::Config("leaf without hat reference".into()))?;
                let field = hat_bump(&hat, q, bump)?;
                Ok(ConstructedFunction::Leaf {
                    field,
                    scale: *scale,
                    support,
                    hat: Some(hat),
                    step: *step,
                })
            }
            NodeRepr::Max { children, v1, v2, w1, w2, domain, eroded } => {
                if children.len() != 2 {
                    return Err(Error::Config("max node needs two children".into()));
                }
                Ok(ConstructedFunction::Glue {
                    first: Box::new(decode(&children[0], dir, q, bump)?),
                    second: Box::new(decode(&children[1], dir, q, bump)?),
                    v1: VoxelSet::load(&dir.join(v1))?,
                    v2: VoxelSet::load(&dir.join(v2))?,
                    w1: VoxelSet::load(&dir.join(w1))?,
                    w2: VoxelSet::load(&dir.join(w2))?,
                    domain: VoxelSet::load(&dir.join(domain))?,
                    eroded: *eroded,
                })
            }
        }
    }
    let f = decode(&file.root, dir, file.q, &file.bump)?;
    Ok((f, file.q, file.bump))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{voxelize, ChartBox, VoxelizeMode};
    use crate::hats::{generate_family, HatFamily};
    use crate::levi::HermitianForm;
    use std::sync::Arc;

    fn chart() -> Arc<ChartBox> {
        Arc::new(ChartBox::cube(2, 2.0, 16).unwrap())
    }

    fn psh_field(label: &str, shift: Vec<f64>, offset: f64) -> ScalarField {
        let shift_pt = CPoint::new(shift).unwrap();
        ScalarField::new(label, move |p: &CPoint| p.dist(&shift_pt).powi(2) + offset)
            .with_hessian(|p: &CPoint| HermitianForm::from_diagonal(&vec![1.0; p.n()]))
    }

    #[test]
    fn choose_scaling_forced_value() {
        let c = chart();
        let psi = ConstructedFunction::leaf(
            ScalarField::new("two", |_: &CPoint| 2.0),
            1.0,
            VoxelSet::full(c.clone()),
        );
        let phi = ScalarField::new("half", |_: &CPoint| 0.5);
        let mut seam_in = VoxelSet::empty(c.clone());
        seam_in.set(0, true);
        let seam_out = VoxelSet::empty(c.clone());
        let scale = choose_scaling(&psi, &phi, &seam_in, &seam_out, 0.5).unwrap();
        assert!((scale - 6.0).abs() < 1e-12);
        // empty inflow seam: c = 1
        let scale = choose_scaling(&psi, &phi, &seam_out, &seam_out, 0.5).unwrap();
        assert_eq!(scale, 1.0);
    }

    #[test]
    fn choose_scaling_rejects_vanishing_phi() {
        let c = chart();
        let psi = ConstructedFunction::leaf(
            ScalarField::new("one", |_: &CPoint| 1.0),
            1.0,
            VoxelSet::full(c.clone()),
        );
        let phi = ScalarField::new("zero", |_: &CPoint| 0.0);
        let mut seam_in = VoxelSet::empty(c.clone());
        seam_in.set(3, true);
        let err = choose_scaling(&psi, &phi, &seam_in, &VoxelSet::empty(c), 0.5);
        assert!(matches!(err, Err(Error::CannotDominate { voxel: 3 })));
    }

    #[test]
    fn glue_pair_realizes_three_clauses() {
        let c = chart();
        // two overlapping balls with fields chosen so the seams hold
        let v1 = voxelize(|p: &CPoint| p.dist(&CPoint::new(vec![-0.4, 0.0, 0.0, 0.0]).unwrap()) < 0.9, c.clone(), VoxelizeMode::Centers);
        let v2 = voxelize(|p: &CPoint| p.dist(&CPoint::new(vec![0.4, 0.0, 0.0, 0.0]).unwrap()) < 0.9, c.clone(), VoxelizeMode::Centers);
        let k = voxelize(|p: &CPoint| p.norm() < 0.6, c.clone(), VoxelizeMode::Centers);
        // phi1 grows away from V1's center: dominates on the far seam
        let phi1 = psh_field("phi1", vec![0.4, 0.0, 0.0, 0.0], 0.0);
        let phi2 = psh_field("phi2", vec![-0.4, 0.0, 0.0, 0.0], 0.0);
        let f1 = ConstructedFunction::leaf(phi1.clone(), 1.0, v1.clone());
        let f2 = ConstructedFunction::leaf(phi2.clone(), 1.0, v2.clone());
        let glued = glue_pair(f1, &v1, f2, &v2, &k, 1e-9).unwrap();
        assert!(k.is_subset(glued.domain()).unwrap());
        // overlap values equal the max of the branch values
        let overlap = v1.intersection(&v2).unwrap().intersection(glued.domain()).unwrap();
        for idx in overlap.iter_ones().take(50) {
            let p = c.cell_center(idx);
            let got = evaluate_constructed(&glued, &p).unwrap();
            let expect = phi1.value(&p).unwrap().max(phi2.value(&p).unwrap());
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn glue_pair_seam_violation_has_witness() {
        let c = chart();
        let v1 = voxelize(|p: &CPoint| p.coords()[0] < 0.5, c.clone(), VoxelizeMode::Centers);
        let v2 = voxelize(|p: &CPoint| p.coords()[0] > -0.5, c.clone(), VoxelizeMode::Centers);
        let k = voxelize(|p: &CPoint| p.norm() < 1.0, c.clone(), VoxelizeMode::Centers);
        // both constant: no strict seam inequality can hold
        let f1 = ConstructedFunction::leaf(ScalarField::new("a", |_: &CPoint| 1.0), 1.0, v1.clone());
        let f2 = ConstructedFunction::leaf(ScalarField::new("b", |_: &CPoint| 1.0), 1.0, v2.clone());
        let err = glue_pair(f1, &v1, f2, &v2, &k, 1e-6);
        assert!(matches!(err, Err(Error::GlueSeam { .. })));
    }

    #[test]
    fn glue_pair_coverage_failure() {
        let c = chart();
        let v1 = voxelize(|p: &CPoint| p.coords()[0] < -1.0, c.clone(), VoxelizeMode::Centers);
        let v2 = voxelize(|p: &CPoint| p.coords()[0] > 1.0, c.clone(), VoxelizeMode::Centers);
        let k = voxelize(|p: &CPoint| p.norm() < 1.0, c.clone(), VoxelizeMode::Centers);
        let f1 = ConstructedFunction::leaf(ScalarField::new("a", |_: &CPoint| 1.0), 1.0, v1.clone());
        let f2 = ConstructedFunction::leaf(ScalarField::new("b", |_: &CPoint| 2.0), 1.0, v2.clone());
        assert!(matches!(glue_pair(f1, &v1, f2, &v2, &k, 1e-6), Err(Error::Coverage)));
    }

    #[test]
    fn glue_with_empty_v2_keeps_first_branch() {
        let c = chart();
        let v1 = VoxelSet::full(c.clone());
        let v2 = VoxelSet::empty(c.clone());
        let k = voxelize(|p: &CPoint| p.norm() < 0.8, c.clone(), VoxelizeMode::Centers);
        let phi1 = psh_field("phi1", vec![0.0; 4], 1.0);
        let f1 = ConstructedFunction::leaf(phi1.clone(), 1.0, v1.clone());
        let f2 = ConstructedFunction::leaf(ScalarField::new("b", |_: &CPoint| 0.0), 1.0, v2.clone());
        let glued = glue_pair(f1, &v1, f2, &v2, &k, 1e-9).unwrap();
        let p = CPoint::new(vec![0.3, 0.0, 0.0, 0.0]).unwrap();
        assert!((evaluate_constructed(&glued, &p).unwrap() - phi1.value(&p).unwrap()).abs() < 1e-12);
    }

    fn ball_pipeline() -> (Arc<ChartBox>, AmbientDomain, VoxelSet, EmptyingSequence) {
        let c = Arc::new(ChartBox::cube(2, 2.0, 16).unwrap());
        let ambient = AmbientDomain::full_box(c.clone());
        let k = voxelize(|p: &CPoint| p.norm() <= 0.8, c.clone(), VoxelizeMode::Centers);
        let mut cfg = HatFamily::new(2);
        cfg.stride = 4;
        cfg.radii = vec![0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75];
        cfg.scales = vec![0.7, 1.0, 1.3, 1.6, 1.9];
        let family = generate_family(&cfg, &ambient);
        let run = crate::cuts::approximate_nucleus(&k, 1, &family, &ambient, 50).unwrap();
        assert!(run.residual.is_empty(), "ball residual {} voxels", run.residual.count());
        (c, ambient, k, EmptyingSequence::new(run.sequence).unwrap())
    }

    #[test]
    fn build_and_certify_ball() {
        let (_c, ambient, k, seq) = ball_pipeline();
        let f = build_q_convex(&k, &seq, 1, &BuildParams::default(), &ambient).unwrap();
        assert!(k.is_subset(f.domain()).unwrap());
        let report = certify_constructed(&f, &k, 1, 1e-7, 1e-3, DEFAULT_EPS_ACT).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.samples > 0);
        assert!(report.min_value > 0.0);
    }

    #[test]
    fn negated_construction_fails_positivity() {
        let (_c, ambient, k, seq) = ball_pipeline();
        let f = build_q_convex(&k, &seq, 1, &BuildParams::default(), &ambient).unwrap();
        // wrap in a negated leaf chain: flip by evaluating -f through a leaf
        // is impossible without a field, so flip the check instead: certify
        // against the negated evaluation by scaling a leaf copy
        let flipped = match f {
            ConstructedFunction::Glue { first, second, v1, v2, w1, w2, domain, eroded } => {
                ConstructedFunction::Glue {
                    first: Box::new(negate(*first)),
                    second: Box::new(negate(*second)),
                    v1,
                    v2,
                    w1,
                    w2,
                    domain,
                    eroded,
                }
            }
            leaf => negate(leaf),
        };
        let report = certify_constructed(&flipped, &k, 1, 1e-7, 1e-3, DEFAULT_EPS_ACT).unwrap();
        assert!(report.positive_failures > 0);
        assert!(!report.passed);
    }

    fn negate(f: ConstructedFunction) -> ConstructedFunction {
        match f {
            ConstructedFunction::Leaf { field, scale, support, hat, step } => {
                ConstructedFunction::Leaf { field, scale: -scale, support, hat, step }
            }
            ConstructedFunction::Glue { first, second, v1, v2, w1, w2, domain, eroded } => {
                ConstructedFunction::Glue {
                    first: Box::new(negate(*first)),
                    second: Box::new(negate(*second)),
                    v1,
                    v2,
                    w1,
                    w2,
                    domain,
                    eroded,
                }
            }
        }
    }

    #[test]
    fn evaluation_matches_independent_tree_walk() {
        use rand::{Rng, SeedableRng};
        let (c, ambient, k, seq) = ball_pipeline();
        let f = build_q_convex(&k, &seq, 1, &BuildParams::default(), &ambient).unwrap();
        // independent recursive oracle with explicit clause logic
        fn oracle(f: &ConstructedFunction, p: &CPoint, cell: usize) -> Option<f64> {
            match f {
                ConstructedFunction::Leaf { field, scale, .. } => {
                    field.value(p).ok().map(|v| scale * v)
                }
                ConstructedFunction::Glue { first, second, v1, v2, w1, w2, .. } => {
                    let a = (v1.contains(cell) || w1.contains(cell))
                        .then(|| oracle(first, p, cell))
                        .flatten();
                    let b = (v2.contains(cell) || w2.contains(cell))
                        .then(|| oracle(second, p, cell))
                        .flatten();
                    match (a, b) {
                        (Some(x), Some(y)) => Some(x.max(y)),
                        (Some(x), None) => Some(x),
                        (None, Some(y)) => Some(y),
                        (None, None) => None,
                    }
                }
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        while checked < 1000 {
            let p = CPoint::new((0..4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()).unwrap();
            let Some(cell) = c.cell_of(&p) else { continue };
            if !f.domain().contains(cell) {
                continue;
            }
            let Ok(v) = evaluate_constructed(&f, &p) else { continue };
            checked += 1;
            assert!(v >= 0.0);
            let o = oracle(&f, &p, cell).unwrap();
            assert_eq!(v, o);
        }
    }

    #[test]
    fn monotone_scaling_preserves_inflow_seams() {
        let (c, ambient, k, seq) = ball_pipeline();
        // rebuild the final glue step with a doubled constant and re-check
        let chain: Vec<_> = seq
            .sequence()
            .records
            .iter()
            .filter(|r| !r.skipped)
            .collect();
        if chain.len() < 2 {
            return;
        }
        let f = build_q_convex(&k, &seq, 1, &BuildParams::default(), &ambient).unwrap();
        let ConstructedFunction::Glue { first, v1, .. } = &f else {
            return;
        };
        let j = 0;
        let pair_j = &chain[j].pair;
        let k_j = &chain[j].before;
        let v2 = voxelize_hat(pair_j, &c, HatVoxelization::InteriorConservative);
        let region = GlueRegion::new(v1, &v2, k_j).unwrap();
        let phi = hat_bump(pair_j, 1, &BumpParams::default()).unwrap();
        let c0 = choose_scaling(first, &phi, &region.seam_in, &region.seam_out, DEFAULT_MARGIN)
            .unwrap();
        // any c' > c0 keeps the inflow inequality
        for idx in region.seam_in.iter_ones() {
            let p = c.cell_center(idx);
            let psi_v = evaluate_constructed(first, &p).unwrap();
            let phi_v = phi.value(&p).unwrap();
            assert!(2.0 * c0 * phi_v > psi_v);
        }
    }

    #[test]
    fn save_load_roundtrip_evaluation() {
        let (c, ambient, k, seq) = ball_pipeline();
        let params = BuildParams::default();
        let f = build_q_convex(&k, &seq, 1, &params, &ambient).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_constructed(&f, 1, &params.bump, dir.path()).unwrap();
        let (g, q, _) = load_constructed(dir.path()).unwrap();
        assert_eq!(q, 1);
        assert_eq!(f.leaf_count(), g.leaf_count());
        for idx in k.iter_ones().step_by(17) {
            let p = c.cell_center(idx);
            let a = evaluate_constructed(&f, &p).unwrap();
            let b = evaluate_constructed(&g, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn non_emptying_sequence_rejected() {
        let c = chart();
        let k = voxelize(|p: &CPoint| p.norm() <= 0.8, c.clone(), VoxelizeMode::Centers);
        let seq = CutSequence::new(k, 1);
        assert!(matches!(
            EmptyingSequence::new(seq),
            Err(Error::NotEmptying { .. }) | Err(Error::SequenceMismatch(_))
        ));
    }
}
