//! Levi forms, eigenvalue signatures and q-convexity classification.
//!
//! The Levi form of a C^2 function at p is the Hermitian matrix
//! L_jk = d^2 psi / dz_j dz̄_k. A function is weakly q-convex at p when L
//! has at most q-1 negative eigenvalues and q-convex when it has at most
//! q-1 non-positive eigenvalues; zero-ness is decided against an absolute
//! tolerance tau.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{CPoint, MaxField, ScalarField, VoxelSet};
use crate::linalg::{hermitian_eigenvalues, C64};

/// Default zero-eigenvalue tolerance.
pub const DEFAULT_TAU: f64 = 1e-7;
/// Default central-difference step.
pub const DEFAULT_H: f64 = 1e-3;
/// Default activity gap for max-field classification.
pub const DEFAULT_EPS_ACT: f64 = 1e-6;

/// Hermitian matrix wrapper; symmetrized at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianForm {
    m: DMatrix<C64>,
}

impl HermitianForm {
    pub fn new(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Self { m: sym }
    }

    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::<C64>::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self { m }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    /// Eigenvalues ascending; deterministic for a given matrix.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.m)
    }

    pub fn scaled(&self, c: f64) -> HermitianForm {
        Self { m: &self.m * C64::new(c, 0.0) }
    }

    pub fn max_abs_diff(&self, other: &HermitianForm) -> f64 {
        (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Eigenvalue counts of a Hermitian form under tolerance tau.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Signature {
    pub n_neg: usize,
    pub n_zero: usize,
    pub n_pos: usize,
    pub tau: f64,
}

impl Signature {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.n_neg, self.n_zero, self.n_pos)
    }

    pub fn n(&self) -> usize {
        self.n_neg + self.n_zero + self.n_pos
    }
}

/// Eigenvalue signature of a Hermitian form: lambda counts as zero iff
/// |lambda| <= tau.
pub fn signature(form: &HermitianForm, tau: f64) -> Signature {
    debug_assert!(tau > 0.0);
    let mut n_neg = 0;
    let mut n_zero = 0;
    let mut n_pos = 0;
    for lambda in form.eigenvalues() {
        if lambda.abs() <= tau {
            n_zero += 1;
        } else if lambda < 0.0 {
            n_neg += 1;
        } else {
            n_pos += 1;
        }
    }
    Signature { n_neg, n_zero, n_pos, tau }
}

/// Smallest q for which a point classifies (weakly) q-convex.
///
/// q_min_strict = #nonpositive + 1, q_min_weak = #negative + 1; both lie in
/// [1, n+1], where n+1 encodes failure of even q = n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConvexityClass {
    pub q_min_strict: usize,
    pub q_min_weak: usize,
}

impl ConvexityClass {
    pub fn from_signature(sig: &Signature) -> Self {
        Self {
            q_min_strict: sig.n_neg + sig.n_zero + 1,
            q_min_weak: sig.n_neg + 1,
        }
    }

    /// Componentwise maximum: the worse of two classifications.
    pub fn worst(self, other: ConvexityClass) -> ConvexityClass {
        ConvexityClass {
            q_min_strict: self.q_min_strict.max(other.q_min_strict),
            q_min_weak: self.q_min_weak.max(other.q_min_weak),
        }
    }

    pub fn is_q_convex(&self, q: usize, strict: bool) -> bool {
        if strict {
            self.q_min_strict <= q
        } else {
            self.q_min_weak <= q
        }
    }
}

fn stencil_value(field: &ScalarField, p: &CPoint) -> Result<f64> {
    field.value(p)
}

/// Finite-difference complex Hessian:
/// L_jk = 1/4 [ (psi_{x_j x_k} + psi_{y_j y_k}) + i (psi_{x_j y_k} - psi_{y_j x_k}) ]
/// with 3-point stencils for pure and 4-point stencils for mixed second
/// partials.
pub fn complex_hessian_fd(field: &ScalarField, p: &CPoint, h: f64) -> Result<HermitianForm> {
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let n = p.n();
    let center = stencil_value(field, p)?;
    let second_pure = |axis: usize| -> Result<f64> {
        let up = stencil_value(field, &p.offset(axis, h))?;
        let dn = stencil_value(field, &p.offset(axis, -h))?;
        Ok((up - 2.0 * center + dn) / (h * h))
    };
    let second_mixed = |a: usize, b: usize| -> Result<f64> {
        let pp = stencil_value(field, &p.offset(a, h).offset(b, h))?;
        let pm = stencil_value(field, &p.offset(a, h).offset(b, -h))?;
        let mp = stencil_value(field, &p.offset(a, -h).offset(b, h))?;
        let mm = stencil_value(field, &p.offset(a, -h).offset(b, -h))?;
        Ok((pp - pm - mp + mm) / (4.0 * h * h))
    };
    let mut m = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let (xj, yj) = (2 * j, 2 * j + 1);
        // diagonal: (psi_xx + psi_yy)/4, imaginary part vanishes identically
        let lxx = second_pure(xj)?;
        let lyy = second_pure(yj)?;
        m[(j, j)] = C64::new(0.25 * (lxx + lyy), 0.0);
        for k in (j + 1)..n {
            let (xk, yk) = (2 * k, 2 * k + 1);
            let xx = second_mixed(xj, xk)?;
            let yy = second_mixed(yj, yk)?;
            let xy = second_mixed(xj, yk)?;
            let yx = second_mixed(yj, xk)?;
            let val = C64::new(0.25 * (xx + yy), 0.25 * (xy - yx));
            m[(j, k)] = val;
            m[(k, j)] = val.conj();
        }
    }
    Ok(HermitianForm::new(m))
}

/// Complex Hessian, preferring the field's analytic evaluator when present.
pub fn complex_hessian(field: &ScalarField, p: &CPoint, h: f64) -> Result<HermitianForm> {
    if let Some(analytic) = field.analytic_hessian(p)? {
        return Ok(analytic);
    }
    complex_hessian_fd(field, p, h)
}

pub fn classify_point(field: &ScalarField, p: &CPoint, tau: f64, h: f64) -> Result<ConvexityClass> {
    let form = complex_hessian(field, p, h)?;
    Ok(ConvexityClass::from_signature(&signature(&form, tau)))
}

/// Classification of a max of branches: the worst class over branches that
/// are defined at p and within `eps_act` of the max value. This is the
/// sufficient "every active branch" criterion for q-convexity with corners.
pub fn classify_max_point(
    mf: &MaxField,
    p: &CPoint,
    tau: f64,
    h: f64,
    eps_act: f64,
) -> Result<ConvexityClass> {
    let active = mf.active_branches(p, eps_act)?;
    let mut class: Option<ConvexityClass> = None;
    for i in active {
        let c = classify_point(&mf.branches()[i], p, tau, h)?;
        class = Some(match class {
            Some(prev) => prev.worst(c),
            None => c,
        });
    }
    class.ok_or(Error::Domain)
}

/// Options for a regional classification scan.
#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub q: usize,
    pub strict: bool,
    pub tau: f64,
    pub h: f64,
    /// Samples per voxel: 1 = centers only, extra samples are seeded
    /// uniform jitter within the cell.
    pub samples_per_voxel: usize,
    pub seed: u64,
    pub eps_act: f64,
}

impl ScanOptions {
    pub fn new(q: usize, strict: bool) -> Self {
        Self {
            q,
            strict,
            tau: DEFAULT_TAU,
            h: DEFAULT_H,
            samples_per_voxel: 1,
            seed: 0,
            eps_act: DEFAULT_EPS_ACT,
        }
    }
}

/// Worst offending sample of a scan.
#[derive(Clone, Debug, Serialize)]
pub struct WorstPoint {
    pub point: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub signature: Signature,
}

/// Scan report; serializes to the report JSON.
#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub points_scanned: usize,
    pub pass: usize,
    pub fail: usize,
    pub errors: usize,
    pub worst: Option<WorstPoint>,
}

struct SampleOutcome {
    index: usize,
    passed: bool,
    error: bool,
    q_min: usize,
    point: Vec<f64>,
    eigenvalues: Vec<f64>,
    sig: Signature,
}

fn jitter(p: &CPoint, widths: &[f64], seed: u64, idx: usize, k: usize) -> CPoint {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
        seed ^ ((idx as u64).wrapping_mul(0x9e3779b97f4a7c15)) ^ (k as u64),
    );
    let coords = p
        .coords()
        .iter()
        .enumerate()
        .map(|(d, &c)| c + (rng.gen::<f64>() - 0.5) * widths[d])
        .collect();
    CPoint::from_raw(coords)
}

/// Classify a (max-)field over the centers of a voxel region; per-point
/// failures are counted, per-point domain errors are recorded, not fatal.
pub fn scan_region(mf: &MaxField, region: &VoxelSet, opts: &ScanOptions) -> Result<ScanReport> {
    if region.is_empty() {
        return Err(Error::Geometry("scan region is empty".into()));
    }
    let chart = region.chart().clone();
    let widths = chart.widths();
    let indices: Vec<usize> = region.iter_ones().collect();
    let outcomes: Vec<SampleOutcome> = indices
        .par_iter()
        .flat_map_iter(|&idx| {
            let center = chart.cell_center(idx);
            let widths = widths.clone();
            (0..opts.samples_per_voxel.max(1)).map(move |k| {
                let p = if k == 0 {
                    center.clone()
                } else {
                    jitter(&center, &widths, opts.seed, idx, k)
                };
                match (|| -> Result<(ConvexityClass, Vec<f64>, Signature)> {
                    // classify through the max-field machinery; a single
                    // branch reduces to classify_point
                    let active = mf.active_branches(&p, opts.eps_act)?;
                    let mut class: Option<ConvexityClass> = None;
                    let mut eigs = Vec::new();
                    let mut sig = None;
                    for i in active {
                        let form = complex_hessian(&mf.branches()[i], &p, opts.h)?;
                        let s = signature(&form, opts.tau);
                        let c = ConvexityClass::from_signature(&s);
                        let worse = class.map_or(true, |prev| {
                            c.worst(prev) != prev
                        });
                        if worse || sig.is_none() {
                            eigs = form.eigenvalues();
                            sig = Some(s);
                        }
                        class = Some(class.map_or(c, |prev| prev.worst(c)));
                    }
                    let class = class.ok_or(Error::Domain)?;
                    Ok((class, eigs, sig.unwrap()))
                })() {
                    Ok((class, eigenvalues, sig)) => {
                        let passed = class.is_q_convex(opts.q, opts.strict);
                        let q_min = if opts.strict { class.q_min_strict } else { class.q_min_weak };
                        SampleOutcome {
                            index: idx,
                            passed,
                            error: false,
                            q_min,
                            point: p.coords().to_vec(),
                            eigenvalues,
                            sig,
                        }
                    }
                    Err(_) => SampleOutcome {
                        index: idx,
                        passed: false,
                        error: true,
                        q_min: 0,
                        point: p.coords().to_vec(),
                        eigenvalues: Vec::new(),
                        sig: Signature { n_neg: 0, n_zero: 0, n_pos: 0, tau: opts.tau },
                    },
                }
            })
        })
        .collect();

    let mut pass = 0;
    let mut fail = 0;
    let mut errors = 0;
    let mut worst: Option<&SampleOutcome> = None;
    for o in &outcomes {
        if o.error {
            errors += 1;
        } else if o.passed {
            pass += 1;
        } else {
            fail += 1;
            // worst offender: largest q_min, earliest scan position on ties
            let better = match worst {
                None => true,
                Some(w) => o.q_min > w.q_min || (o.q_min == w.q_min && o.index < w.index),
            };
            if better {
                worst = Some(o);
            }
        }
    }
    Ok(ScanReport {
        points_scanned: outcomes.len(),
        pass,
        fail,
        errors,
        worst: worst.map(|o| WorstPoint {
            point: o.point.clone(),
            eigenvalues: o.eigenvalues.clone(),
            signature: o.sig,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{voxelize, ChartBox, VoxelizeMode};
    use std::sync::Arc;

    fn norm_sq_field(n: usize) -> ScalarField {
        ScalarField::new("norm_sq", |p: &CPoint| p.norm_sq()).with_hessian(move |_p: &CPoint| {
            HermitianForm::from_diagonal(&vec![1.0; n])
        })
    }

    fn re_z1_sq(n: usize) -> ScalarField {
        ScalarField::new("re_z1_sq", |p: &CPoint| {
            let z = p.z(0);
            (z * z).re
        })
        .with_hessian(move |_p: &CPoint| HermitianForm::zeros(n))
    }

    fn saddle() -> ScalarField {
        // |z1|^2 - 2 |z2|^2
        ScalarField::new("saddle", |p: &CPoint| p.z(0).norm_sqr() - 2.0 * p.z(1).norm_sqr())
            .with_hessian(|_p: &CPoint| HermitianForm::from_diagonal(&[1.0, -2.0]))
    }

    #[test]
    fn hessian_of_norm_sq_is_identity() {
        let f = ScalarField::new("norm_sq_fd", |p: &CPoint| p.norm_sq());
        let p = CPoint::new(vec![0.3, -0.2, 0.7, 0.1]).unwrap();
        let h = complex_hessian_fd(&f, &p, 1e-3).unwrap();
        let id = HermitianForm::from_diagonal(&[1.0, 1.0]);
        assert!(h.max_abs_diff(&id) < 1e-8);
    }

    #[test]
    fn hessian_of_pluriharmonic_is_zero() {
        let f = ScalarField::new("re_z1_sq_fd", |p: &CPoint| {
            let z = p.z(0);
            (z * z).re
        });
        let p = CPoint::new(vec![0.4, 0.9, -0.3, 0.2]).unwrap();
        let h = complex_hessian_fd(&f, &p, 1e-3).unwrap();
        assert!(h.max_abs_diff(&HermitianForm::zeros(2)) < 1e-8);
    }

    #[test]
    fn saddle_hessian_diag() {
        let f = ScalarField::new("saddle_fd", |p: &CPoint| {
            p.z(0).norm_sqr() - 2.0 * p.z(1).norm_sqr()
        });
        let p = CPoint::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let h = complex_hessian_fd(&f, &p, 1e-3).unwrap();
        assert!(h.max_abs_diff(&HermitianForm::from_diagonal(&[1.0, -2.0])) < 1e-7);
    }

    #[test]
    fn signature_counts() {
        let s = signature(&HermitianForm::zeros(3), 1e-9);
        assert_eq!(s.counts(), (0, 3, 0));
        let s = signature(&HermitianForm::from_diagonal(&[1.0, -2.0]), 1e-9);
        assert_eq!(s.counts(), (1, 0, 1));
    }

    #[test]
    fn classes() {
        let p = CPoint::new(vec![0.3, 0.1, -0.2, 0.4]).unwrap();
        let c = classify_point(&norm_sq_field(2), &p, DEFAULT_TAU, DEFAULT_H).unwrap();
        assert_eq!(c, ConvexityClass { q_min_strict: 1, q_min_weak: 1 });
        let c = classify_point(&re_z1_sq(2), &p, DEFAULT_TAU, DEFAULT_H).unwrap();
        assert_eq!(c, ConvexityClass { q_min_strict: 3, q_min_weak: 1 });
        let c = classify_point(&saddle(), &p, DEFAULT_TAU, DEFAULT_H).unwrap();
        assert_eq!(c, ConvexityClass { q_min_strict: 2, q_min_weak: 2 });
        assert!(c.q_min_weak <= c.q_min_strict);
    }

    #[test]
    fn max_classification_uses_active_branches_only() {
        let p = CPoint::new(vec![0.3, 0.1, -0.2, 0.4]).unwrap();
        let shifted = ScalarField::new("shifted", |p: &CPoint| p.norm_sq() - 5.0)
            .with_hessian(|_p: &CPoint| HermitianForm::from_diagonal(&[1.0, 1.0]));
        let mf = MaxField::new(vec![norm_sq_field(2), shifted]).unwrap();
        let c = classify_max_point(&mf, &p, DEFAULT_TAU, DEFAULT_H, 1e-6).unwrap();
        assert_eq!(c.q_min_strict, 1);
    }

    #[test]
    fn max_classification_worst_of_two_active() {
        // |z1|^2 and |z2|^2 at a point where both are active
        let a = ScalarField::new("a", |p: &CPoint| p.z(0).norm_sqr())
            .with_hessian(|_p: &CPoint| HermitianForm::from_diagonal(&[1.0, 0.0]));
        let b = ScalarField::new("b", |p: &CPoint| p.z(1).norm_sqr())
            .with_hessian(|_p: &CPoint| HermitianForm::from_diagonal(&[0.0, 1.0]));
        let s = 1.0 / 2.0_f64.sqrt();
        let p = CPoint::new(vec![s, 0.0, s, 0.0]).unwrap();
        let mf = MaxField::new(vec![a, b]).unwrap();
        let c = classify_max_point(&mf, &p, DEFAULT_TAU, DEFAULT_H, 1e-6).unwrap();
        assert_eq!(c.q_min_strict, 2);
    }

    #[test]
    fn scan_passes_and_fails() {
        let chart = Arc::new(ChartBox::cube(2, 1.0, 6).unwrap());
        let region = voxelize(|_| true, chart, VoxelizeMode::Centers);
        let good = scan_region(
            &MaxField::single(norm_sq_field(2)),
            &region,
            &ScanOptions::new(1, true),
        )
        .unwrap();
        assert_eq!(good.fail, 0);
        assert!(good.worst.is_none());
        let bad = scan_region(
            &MaxField::single(re_z1_sq(2)),
            &region,
            &ScanOptions::new(1, true),
        )
        .unwrap();
        assert_eq!(bad.pass, 0);
        assert!(bad.worst.is_some());
    }

    #[test]
    fn monotone_q_and_weak_vs_strict() {
        let p = CPoint::new(vec![0.2, -0.1, 0.5, 0.3]).unwrap();
        for f in [norm_sq_field(2), re_z1_sq(2), saddle()] {
            let c = classify_point(&f, &p, DEFAULT_TAU, DEFAULT_H).unwrap();
            assert!(c.q_min_weak <= c.q_min_strict);
            // if q-convex then q'-convex for q' >= q, by construction of q_min
            for q in c.q_min_strict..=3 {
                assert!(c.is_q_convex(q, true));
            }
        }
    }

    #[test]
    fn scaling_invariance_with_scaled_tau() {
        let p = CPoint::new(vec![0.2, -0.1, 0.5, 0.3]).unwrap();
        let form = complex_hessian(&saddle(), &p, DEFAULT_H).unwrap();
        let tau = 1e-9;
        let s1 = signature(&form, tau);
        let s2 = signature(&form.scaled(2.0), 2.0 * tau);
        assert_eq!(s1.counts(), s2.counts());
    }
}
