//! The explicit weakly q-convex bump attached to a hat pair.
//!
//! Building blocks:
//!   theta(t)   = exp(K_g t - 1/t) for t > 0, 0 for t <= 0 (C^inf flat at 0)
//!   phi~(z')   = theta(Re z'_1) (M_b + ||z'||^2)
//!   psi_r(z)   = (1 - ||z''||^2) phi~(z' - r 1') inside the filled model
//!                hat, 0 outside it
//! with z = (z', z''), z' in C^{n-q+1}, z'' in C^{q-1}. phi~ vanishes
//! identically on {Re z'_1 <= 0} and is strictly plurisubharmonic on
//! {Re z'_1 > 0} within the certified radius; psi_r therefore vanishes
//! outside the hat, is positive on the filling, and its Levi form has at
//! least n-q+1 nonnegative eigenvalues wherever it is defined.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CPoint, ChartBox, ScalarField, VoxelSet};
use crate::hats::{voxelize_hat, HatPair, HatRegion, HatVoxelization, MEMBERSHIP_TOL};
use crate::levi::{signature, HermitianForm};
use crate::linalg::C64;

/// Evaluation requests closer than this (model distance) to the cap
/// surface S return a domain error: the bump is discontinuous across S.
pub const S_TUBE_RADIUS: f64 = 1e-6;

/// Parameters of the bump construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BumpParams {
    /// Exponent slope in theta.
    pub k_g: f64,
    /// Additive constant in the quadratic factor of phi~.
    pub m_b: f64,
    /// Radius within which strict plurisubharmonicity is certified.
    pub r_v: f64,
}

impl Default for BumpParams {
    fn default() -> Self {
        Self { k_g: 4.0, m_b: 4.0, r_v: 2.0 }
    }
}

impl BumpParams {
    pub fn new(k_g: f64, m_b: f64, r_v: f64) -> Result<Self> {
        if !(k_g > 0.0 && m_b > 0.0 && r_v > 0.0) {
            return Err(Error::Config("bump parameters must be positive".into()));
        }
        Ok(Self { k_g, m_b, r_v })
    }

    /// Numerical certificate on a grid of (0, r_v]:
    /// theta convexity needs (1/t^2 + K_g)^2 > 2/t^3 and strict
    /// plurisubharmonicity of phi~ reduces to
    /// (K_g + 1/t^2)^2 M_b t^3 > 2 (M_b + s^2) for all 0 < t <= s <= r_v.
    pub fn certify(&self, grid: usize) -> bool {
        for i in 1..=grid {
            let t = self.r_v * i as f64 / grid as f64;
            let gp = self.k_g + 1.0 / (t * t);
            if gp * gp <= 2.0 / (t * t * t) {
                return false;
            }
            // worst case of the norm bound is s = r_v
            let lhs = gp * gp * self.m_b * t * t * t;
            let rhs = 2.0 * (self.m_b + self.r_v * self.r_v);
            if lhs <= rhs {
                return false;
            }
        }
        true
    }

    /// Escalation per the documented rule: double M_b, then double K_g,
    /// then halve R_v; abort after 6 escalations.
    pub fn certified(mut self, grid: usize) -> Result<Self> {
        for attempt in 0..=6 {
            if self.certify(grid) {
                return Ok(self);
            }
            match attempt % 3 {
                0 => self.m_b *= 2.0,
                1 => self.k_g *= 2.0,
                _ => self.r_v *= 0.5,
            }
        }
        Err(Error::Config("bump parameters failed certification after escalation".into()))
    }
}

/// Flat cutoff: exp(K_g t - 1/t) for t > 0, 0 otherwise.
pub fn theta(t: f64, k_g: f64) -> f64 {
    if t > 0.0 {
        (k_g * t - 1.0 / t).exp()
    } else {
        0.0
    }
}

fn theta_d1(t: f64, k_g: f64) -> f64 {
    if t > 0.0 {
        theta(t, k_g) * (k_g + 1.0 / (t * t))
    } else {
        0.0
    }
}

fn theta_d2(t: f64, k_g: f64) -> f64 {
    if t > 0.0 {
        let gp = k_g + 1.0 / (t * t);
        theta(t, k_g) * (gp * gp - 2.0 / (t * t * t))
    } else {
        0.0
    }
}

/// phi~(z') = theta(Re z'_1) (M_b + ||z'||^2); vanishes identically for
/// Re z'_1 <= 0.
pub fn phi_tilde(zp: &[C64], params: &BumpParams) -> f64 {
    let t = zp[0].re;
    if t <= 0.0 {
        return 0.0;
    }
    let norm_sq: f64 = zp.iter().map(|z| z.norm_sqr()).sum();
    theta(t, params.k_g) * (params.m_b + norm_sq)
}

/// Wirtinger gradient d phi~ / dz_j = theta' delta_{j1} g / 2 + theta z̄_j.
fn phi_tilde_grad(zp: &[C64], params: &BumpParams) -> Vec<C64> {
    let t = zp[0].re;
    let th = theta(t, params.k_g);
    let th1 = theta_d1(t, params.k_g);
    let g: f64 = params.m_b + zp.iter().map(|z| z.norm_sqr()).sum::<f64>();
    zp.iter()
        .enumerate()
        .map(|(j, z)| {
            let mut v = z.conj() * th;
            if j == 0 {
                v += C64::new(0.5 * th1 * g, 0.0);
            }
            v
        })
        .collect()
}

/// Levi form of phi~ at z':
/// L_jk = theta''/4 g delta_{j1} delta_{k1}
///        + theta'/2 (z̄_j delta_{k1} + z_k delta_{j1}) + theta delta_{jk}.
fn phi_tilde_levi(zp: &[C64], params: &BumpParams) -> DMatrix<C64> {
    let k = zp.len();
    let t = zp[0].re;
    let th = theta(t, params.k_g);
    let th1 = theta_d1(t, params.k_g);
    let th2 = theta_d2(t, params.k_g);
    let g: f64 = params.m_b + zp.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut m = DMatrix::<C64>::zeros(k, k);
    for j in 0..k {
        for l in 0..k {
            let mut v = C64::new(0.0, 0.0);
            if j == 0 && l == 0 {
                v += C64::new(0.25 * th2 * g, 0.0);
            }
            if l == 0 {
                v += zp[j].conj() * (0.5 * th1);
            }
            if j == 0 {
                v += zp[l] * (0.5 * th1);
            }
            if j == l {
                v += C64::new(th, 0.0);
            }
            m[(j, l)] = v;
        }
    }
    m
}

/// psi_r in model coordinates of C^n for order k = n-q+1: the value of
/// (1 - ||z''||^2) phi~(z' - r 1') on the open filling, 0 off the closed
/// filled hat. The clauses agree (both vanish) where their closures meet.
pub fn psi_r(z: &CPoint, r: f64, q: usize, params: &BumpParams) -> f64 {
    let n = z.n();
    let k = n + 1 - q;
    let pair_like_interior = {
        let zp_norm: f64 = (0..k).map(|j| z.z(j).norm_sqr()).sum::<f64>();
        let sup: f64 = (k..n).map(|j| z.z(j).norm()).fold(0.0_f64, f64::max);
        zp_norm < 1.0 && z.z(0).re > r && sup < 1.0
    };
    if !pair_like_interior {
        return 0.0;
    }
    let shifted: Vec<C64> = (0..k)
        .map(|j| {
            let mut v = z.z(j);
            if j == 0 {
                v -= C64::new(r, 0.0);
            }
            v
        })
        .collect();
    let zpp_norm_sq: f64 = (k..n).map(|j| z.z(j).norm_sqr()).sum();
    (1.0 - zpp_norm_sq) * phi_tilde(&shifted, params)
}

/// Levi form of psi_r in model coordinates (defined away from S).
fn psi_r_levi_model(z: &CPoint, r: f64, k: usize, params: &BumpParams) -> DMatrix<C64> {
    let n = z.n();
    let zp_norm_sq: f64 = (0..k).map(|j| z.z(j).norm_sqr()).sum();
    let sup: f64 = (k..n).map(|j| z.z(j).norm()).fold(0.0_f64, f64::max);
    let inside = zp_norm_sq < 1.0 && z.z(0).re > r && sup < 1.0;
    if !inside {
        return DMatrix::zeros(n, n);
    }
    let shifted: Vec<C64> = (0..k)
        .map(|j| {
            let mut v = z.z(j);
            if j == 0 {
                v -= C64::new(r, 0.0);
            }
            v
        })
        .collect();
    let zpp: Vec<C64> = (k..n).map(|j| z.z(j)).collect();
    let h = 1.0 - zpp.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let f = phi_tilde(&shifted, params);
    let grad = phi_tilde_grad(&shifted, params);
    let levi_p = phi_tilde_levi(&shifted, params);
    let mut m = DMatrix::<C64>::zeros(n, n);
    // z'z' block: h * Levi(phi~)
    for j in 0..k {
        for l in 0..k {
            m[(j, l)] = levi_p[(j, l)] * h;
        }
    }
    // mixed blocks: d2/dz'_j dz̄''_b = -grad_j z''_b ; conjugate transpose
    for j in 0..k {
        for (bi, zb) in zpp.iter().enumerate() {
            let b = k + bi;
            m[(j, b)] = -grad[j] * zb;
            m[(b, j)] = (-grad[j] * zb).conj();
        }
    }
    // z''z'' block: -f I
    for (ai, _) in zpp.iter().enumerate() {
        let a = k + ai;
        m[(a, a)] = C64::new(-f, 0.0);
    }
    m
}

/// The bump field of a hat pair: psi_r composed with the inverse embedding,
/// with an exclusion tube of model radius 1e-6 around S and the analytic
/// Levi form transported through the affine chain rule.
pub fn hat_bump(pair: &HatPair, q: usize, params: &BumpParams) -> Result<ScalarField> {
    let n = pair.n();
    let required = n + 1 - q;
    if pair.order() != required {
        return Err(Error::OrderMismatch { found: pair.order(), required });
    }
    let r = pair.r();
    let k = pair.order();
    let params = *params;
    let pair_eval = pair.clone();
    let pair_dom = pair.clone();
    let pair_hess = pair.clone();
    // Levi form transforms as J^T L (F(p)) J̄ with J the inverse linear part
    let j_t = {
        let inv = pair
            .embedding()
            .linear()
            .clone()
            .try_inverse()
            .expect("embedding invertible");
        inv.transpose()
    };
    let j_conj = j_t.transpose().map(|z: C64| z.conj());
    Ok(ScalarField::new(format!("hat_bump(k={k}, r={r})"), move |p: &CPoint| {
        let w = pair_eval.model(p);
        psi_r(&w, r, q, &params)
    })
    .with_domain(move |p: &CPoint| {
        let w = pair_dom.model(p);
        pair_dom.model_dist_to_s(&w) > S_TUBE_RADIUS
    })
    .with_hessian(move |p: &CPoint| {
        let w = pair_hess.model(p);
        let model = psi_r_levi_model(&w, r, k, &params);
        HermitianForm::new(&j_t * model * &j_conj)
    }))
}

/// Per-check outcome of a bump validation.
#[derive(Clone, Debug, Serialize)]
pub struct BumpCheck {
    pub name: String,
    pub samples: usize,
    pub hard_failures: usize,
    pub marginal: usize,
    pub worst_point: Option<Vec<f64>>,
    pub margin: f64,
}

/// Validation report for one bump field.
#[derive(Clone, Debug, Serialize)]
pub struct BumpReport {
    pub params: BumpParams,
    pub q: usize,
    pub checks: Vec<BumpCheck>,
    pub passed: bool,
}

impl BumpReport {
    pub fn check(&self, name: &str) -> Option<&BumpCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Validate a bump field against its hat on voxel-center samples:
/// (a) vanishes outside the closed hat, (b) positive on conservative
/// interior voxels, (c) at most q-1 negative eigenvalues off S,
/// (d) strict positivity of the Levi form at interior samples. Eigenvalues
/// inside [-tau, tau] at interior samples are counted as marginal, not as
/// hard failures: the flat wall forces eigenvalues to approach zero, so
/// marginal points are flagged for the report and adjudicated by sign.
pub fn validate_bump(
    field: &ScalarField,
    pair: &HatPair,
    q: usize,
    grid: &std::sync::Arc<ChartBox>,
    tau: f64,
) -> Result<BumpReport> {
    let interior = voxelize_hat(pair, grid, HatVoxelization::InteriorConservative);
    let params_report = BumpParams::default();

    struct Sample {
        region: HatRegion,
        in_interior_voxels: bool,
        value: Option<f64>,
        eigs: Option<Vec<f64>>,
        point: Vec<f64>,
    }

    let samples: Vec<Sample> = (0..grid.cell_count())
        .into_par_iter()
        .map(|idx| {
            let p = grid.cell_center(idx);
            let region = pair.membership(&p);
            let value = field.value(&p).ok();
            let eigs = field
                .analytic_hessian(&p)
                .ok()
                .flatten()
                .map(|h| h.eigenvalues());
            Sample {
                region,
                in_interior_voxels: interior.contains(idx),
                value,
                eigs,
                point: p.coords().to_vec(),
            }
        })
        .collect();

    let mut checks = Vec::new();

    // (a) |phi| <= 1e-12 outside the closed hat
    {
        let mut hard = 0;
        let mut worst: Option<(f64, Vec<f64>)> = None;
        let mut count = 0;
        for s in samples.iter().filter(|s| s.region == HatRegion::Outside) {
            count += 1;
            if let Some(v) = s.value {
                if v.abs() > 1e-12 {
                    hard += 1;
                    if worst.as_ref().map_or(true, |(m, _)| v.abs() > *m) {
                        worst = Some((v.abs(), s.point.clone()));
                    }
                }
            }
        }
        checks.push(BumpCheck {
            name: "vanishes_outside".into(),
            samples: count,
            hard_failures: hard,
            marginal: 0,
            worst_point: worst.as_ref().map(|w| w.1.clone()),
            margin: worst.map_or(0.0, |w| w.0),
        });
    }

    // (b) positive on conservative interior voxels
    {
        let mut hard = 0;
        let mut min_val = f64::INFINITY;
        let mut worst: Option<Vec<f64>> = None;
        let mut count = 0;
        for s in samples.iter().filter(|s| s.in_interior_voxels) {
            count += 1;
            match s.value {
                Some(v) if v > 0.0 => {
                    if v < min_val {
                        min_val = v;
                    }
                }
                Some(_) | None => {
                    hard += 1;
                    worst = worst.or_else(|| Some(s.point.clone()));
                }
            }
        }
        checks.push(BumpCheck {
            name: "positive_on_filling".into(),
            samples: count,
            hard_failures: hard,
            marginal: 0,
            worst_point: worst,
            margin: if min_val.is_finite() { min_val } else { 0.0 },
        });
    }

    // (c) weak budget off S: at most q-1 eigenvalues below -tau
    {
        let mut hard = 0;
        let mut count = 0;
        let mut min_eig = f64::INFINITY;
        let mut worst: Option<Vec<f64>> = None;
        for s in &samples {
            if let Some(eigs) = &s.eigs {
                count += 1;
                let neg = eigs.iter().filter(|&&l| l < -tau).count();
                if let Some(&lo) = eigs.first() {
                    if lo < min_eig {
                        min_eig = lo;
                    }
                }
                if neg > q - 1 {
                    hard += 1;
                    worst = worst.or_else(|| Some(s.point.clone()));
                }
            }
        }
        checks.push(BumpCheck {
            name: "weakly_q_convex_off_s".into(),
            samples: count,
            hard_failures: hard,
            marginal: 0,
            worst_point: worst,
            margin: if min_eig.is_finite() { min_eig } else { 0.0 },
        });
    }

    // (d) strict budget at interior samples
    {
        let mut hard = 0;
        let mut marginal = 0;
        let mut count = 0;
        let mut worst: Option<Vec<f64>> = None;
        let mut min_eig = f64::INFINITY;
        for s in samples.iter().filter(|s| s.region == HatRegion::InInterior) {
            if let Some(eigs) = &s.eigs {
                count += 1;
                let sig = signature(&HermitianForm::from_diagonal(eigs), tau);
                if let Some(&lo) = eigs.first() {
                    if lo < min_eig {
                        min_eig = lo;
                    }
                }
                if sig.n_neg > q - 1 {
                    hard += 1;
                    worst = worst.or_else(|| Some(s.point.clone()));
                } else if sig.n_neg + sig.n_zero > q - 1 {
                    marginal += 1;
                }
            }
        }
        checks.push(BumpCheck {
            name: "strictly_q_convex_on_filling".into(),
            samples: count,
            hard_failures: hard,
            marginal,
            worst_point: worst,
            margin: if min_eig.is_finite() { min_eig } else { 0.0 },
        });
    }

    let passed = checks.iter().all(|c| c.hard_failures == 0);
    Ok(BumpReport { params: params_report, q, checks, passed })
}
