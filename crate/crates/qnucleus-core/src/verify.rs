//! Independent pseudoconvexity probes.
//!
//! These suites give evidence, not proofs: a "violation" verdict carries a
//! concrete witness point that re-verifies exactly, while "consistent"
//! only means no counterexample was found at the configured sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{AffineMap, CPoint, ChartBox, ScalarField, VoxelSet, VoxelizeMode};
use crate::hats::{sample_filled, sample_s, HartogsFigure, HatPair};
use crate::levi::{scan_region, ScanOptions};
use crate::linalg::C64;

/// Default number of samples per hat surface or filled hat.
pub const DEFAULT_SURFACE_SAMPLES: usize = 4096;
/// Default number of t-steps in a disc-family sweep.
pub const DEFAULT_T_STEPS: usize = 64;

type PredFn = dyn Fn(&CPoint) -> bool + Send + Sync;

/// An open set Omega given by an exact membership predicate together with
/// its voxelization on the experiment box.
#[derive(Clone)]
pub struct DomainSpec {
    predicate: Arc<PredFn>,
    voxels: VoxelSet,
}

impl std::fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainSpec").field("voxels", &self.voxels.count()).finish()
    }
}

impl DomainSpec {
    pub fn new<P>(predicate: P, chart: Arc<ChartBox>) -> Self
    where
        P: Fn(&CPoint) -> bool + Send + Sync + 'static,
    {
        let predicate = Arc::new(predicate);
        let p = predicate.clone();
        let voxels = crate::geom::voxelize(move |q| p(q), chart, VoxelizeMode::Centers);
        Self { predicate, voxels }
    }

    pub fn contains(&self, p: &CPoint) -> bool {
        (self.predicate)(p)
    }

    pub fn voxels(&self) -> &VoxelSet {
        &self.voxels
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        self.voxels.chart()
    }
}

/// Probe verdicts, serialized into the verdict JSON.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Verdict {
    Consistent,
    Violation { witness: Vec<f64> },
    Pass,
    Fail { witness: Vec<f64> },
    Skipped { reason: String },
    NoContact,
    FirstContact { t: f64, witness: Vec<f64> },
}

/// Serializable probe outcome.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeOutcome {
    pub probe: String,
    pub params: serde_json::Value,
    pub verdict: Verdict,
    pub margins: serde_json::Value,
}

/// Hat-fill probe: if every sample of S lies in Omega, every sample of the
/// filled hat must too; an escaping filled-hat sample witnesses against
/// q-pseudoconvexity of Omega.
pub fn hat_fill_probe(
    omega: &DomainSpec,
    pair: &HatPair,
    surface_samples: usize,
    filled_samples: usize,
    seed: u64,
) -> ProbeOutcome {
    let params = json!({
        "surface_samples": surface_samples,
        "filled_samples": filled_samples,
        "seed": seed,
        "hat": pair,
    });
    let surface = sample_s(pair, surface_samples, seed);
    let s_inside = surface.iter().all(|p| omega.contains(p));
    let mut verdict = Verdict::Consistent;
    let mut escaped = 0usize;
    if s_inside {
        for p in sample_filled(pair, filled_samples, seed.wrapping_add(1)) {
            if !omega.contains(&p) {
                escaped += 1;
                if matches!(verdict, Verdict::Consistent) {
                    verdict = Verdict::Violation { witness: p.coords().to_vec() };
                }
            }
        }
    }
    ProbeOutcome {
        probe: "hat_fill".into(),
        params,
        verdict,
        margins: json!({ "surface_inside": s_inside, "escaped_filled_samples": escaped }),
    }
}

/// A family of analytic discs through a base point p = (p1, p', p''):
/// A_t = {(t + i Im p1, z') : t^2 + (Im p1)^2 + ||z'||^2 < 1} x {p''},
/// swept over t in [t0, t1] with t0 = Re p1, t1 = sqrt(1 - (Im p1)^2).
#[derive(Clone, Debug)]
pub struct DiscFamily {
    base: CPoint,
    /// complex dimension of the disc factor z'
    disc_dim: usize,
    pub t_steps: usize,
    pub disc_samples: usize,
    pub seed: u64,
}

impl DiscFamily {
    pub fn new(base: CPoint, disc_dim: usize, t_steps: usize, disc_samples: usize, seed: u64) -> Result<Self> {
        let n = base.n();
        if disc_dim == 0 || disc_dim >= n.max(1) + 1 {
            return Err(Error::ProbeInput(format!("disc dimension {disc_dim} out of range")));
        }
        let im1 = base.z(0).im;
        if im1 * im1 >= 1.0 {
            return Err(Error::ProbeInput("base point first coordinate outside the unit disc".into()));
        }
        Ok(Self { base, disc_dim, t_steps, disc_samples, seed })
    }

    pub fn t0(&self) -> f64 {
        self.base.z(0).re
    }

    pub fn t1(&self) -> f64 {
        let im1 = self.base.z(0).im;
        (1.0 - im1 * im1).sqrt()
    }

    fn disc_radius(&self, t: f64) -> f64 {
        let im1 = self.base.z(0).im;
        (1.0 - t * t - im1 * im1).max(0.0).sqrt()
    }

    fn assemble(&self, t: f64, zp: &[C64]) -> CPoint {
        let n = self.base.n();
        let mut zs = Vec::with_capacity(n);
        zs.push(C64::new(t, self.base.z(0).im));
        zs.extend_from_slice(zp);
        for j in (1 + self.disc_dim)..n {
            zs.push(self.base.z(j));
        }
        CPoint::from_complex(&zs)
    }

    /// Deterministic interior samples of A_t (center first).
    fn disc_points(&self, t: f64, rng: &mut ChaCha8Rng) -> Vec<CPoint> {
        let radius = self.disc_radius(t);
        let m = self.disc_dim;
        let mut out = Vec::with_capacity(self.disc_samples + 1);
        out.push(self.assemble(t, &vec![C64::new(0.0, 0.0); m]));
        for _ in 0..self.disc_samples {
            let dir: Vec<f64> = (0..2 * m).map(|_| gaussian(rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let rad = radius * rng.gen::<f64>().powf(1.0 / (2.0 * m as f64));
            let zp: Vec<C64> = (0..m)
                .map(|j| C64::new(rad * dir[2 * j] / norm, rad * dir[2 * j + 1] / norm))
                .collect();
            out.push(self.assemble(t, &zp));
        }
        out
    }

    /// Boundary samples of A_t.
    fn boundary_points(&self, t: f64, rng: &mut ChaCha8Rng) -> Vec<CPoint> {
        let radius = self.disc_radius(t);
        let m = self.disc_dim;
        let mut out = Vec::with_capacity(self.disc_samples);
        for _ in 0..self.disc_samples {
            let dir: Vec<f64> = (0..2 * m).map(|_| gaussian(rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let zp: Vec<C64> = (0..m)
                .map(|j| C64::new(radius * dir[2 * j] / norm, radius * dir[2 * j + 1] / norm))
                .collect();
            out.push(self.assemble(t, &zp));
        }
        out
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Descending scan over sampled t from t1 to t0: the first (largest) t
/// whose disc contains a sample outside Omega is reported with a witness.
/// The sweep requires all sampled disc boundaries to lie inside Omega.
pub fn disc_family_sweep(omega: &DomainSpec, fam: &DiscFamily) -> Result<ProbeOutcome> {
    let params = json!({
        "base": fam.base.coords(),
        "t_steps": fam.t_steps,
        "disc_samples": fam.disc_samples,
        "seed": fam.seed,
    });
    let (t0, t1) = (fam.t0(), fam.t1());
    if !(t0 < t1) {
        return Ok(ProbeOutcome {
            probe: "disc_sweep".into(),
            params,
            verdict: Verdict::NoContact,
            margins: json!({ "degenerate_range": true }),
        });
    }
    let steps = fam.t_steps.max(2);
    let ts: Vec<f64> = (0..steps)
        .map(|i| t1 - (t1 - t0) * i as f64 / (steps - 1) as f64)
        .collect();
    // hypothesis: every sampled disc boundary stays in Omega
    let mut rng = ChaCha8Rng::seed_from_u64(fam.seed);
    for &t in &ts {
        for p in fam.boundary_points(t, &mut rng) {
            if !omega.contains(&p) {
                return Err(Error::ProbeInput(format!(
                    "disc boundary leaves the domain at t = {t}"
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fam.seed.wrapping_add(1));
    for &t in &ts {
        for p in fam.disc_points(t, &mut rng) {
            if !omega.contains(&p) {
                return Ok(ProbeOutcome {
                    probe: "disc_sweep".into(),
                    params,
                    verdict: Verdict::FirstContact { t, witness: p.coords().to_vec() },
                    margins: json!({ "t_grid_step": (t1 - t0) / (steps - 1) as f64 }),
                });
            }
        }
    }
    Ok(ProbeOutcome {
        probe: "disc_sweep".into(),
        params,
        verdict: Verdict::NoContact,
        margins: json!({ "t_grid_step": (t1 - t0) / (steps - 1) as f64 }),
    })
}

fn polydisc_sample(n: usize, rng: &mut ChaCha8Rng) -> CPoint {
    let zs: Vec<C64> = (0..n)
        .map(|_| {
            let r = rng.gen::<f64>().sqrt();
            let a = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            C64::new(r * a.cos(), r * a.sin())
        })
        .collect();
    CPoint::from_complex(&zs)
}

/// Hartogs-figure probe: if all samples of Phi(H) lie in Omega, samples of
/// Phi(Delta^n) must too. Requires k = q (Kontinuitaetssatz with respect
/// to (n-q)-polydiscs).
pub fn hartogs_probe(
    omega: &DomainSpec,
    fig: &HartogsFigure,
    embed: &AffineMap,
    q: usize,
    samples: usize,
    seed: u64,
) -> Result<ProbeOutcome> {
    if fig.k != q {
        return Err(Error::ProbeInput(format!(
            "figure has k = {} but the probe needs k = q = {q}",
            fig.k
        )));
    }
    if fig.n() != embed.n() {
        return Err(Error::ProbeInput("figure and embedding dimensions disagree".into()));
    }
    let params = json!({ "figure": fig, "samples": samples, "seed": seed });
    let n = fig.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // rejection-sample the figure inside the unit polydisc
    let mut figure_inside = true;
    let mut collected = 0usize;
    while collected < samples {
        let p = polydisc_sample(n, &mut rng);
        if !fig.contains(&p) {
            continue;
        }
        collected += 1;
        if !omega.contains(&embed.apply(&p)) {
            figure_inside = false;
            break;
        }
    }
    let mut verdict = Verdict::Consistent;
    if figure_inside {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..samples {
            let p = polydisc_sample(n, &mut rng);
            let q_pt = embed.apply(&p);
            if !omega.contains(&q_pt) {
                verdict = Verdict::Violation { witness: q_pt.coords().to_vec() };
                break;
            }
        }
    }
    Ok(ProbeOutcome {
        probe: "hartogs".into(),
        params,
        verdict,
        margins: json!({ "figure_inside": figure_inside }),
    })
}

/// Local maximum principle check on a q-pseudoconcave candidate A: for a
/// ball L, max over A ∩ L of a weakly q-convex field must not exceed the
/// max over A ∩ ∂L beyond the discretization gap. Returns Skipped when the
/// field fails the weak q-convexity scan (the hypothesis fails, so the
/// test is not applicable).
#[allow(clippy::too_many_arguments)]
pub fn local_max_check(
    a: &VoxelSet,
    psi: &ScalarField,
    ball_center: &CPoint,
    ball_radius: f64,
    q: usize,
    tau: f64,
    h: f64,
) -> Result<ProbeOutcome> {
    let chart = a.chart().clone();
    let params = json!({
        "ball_center": ball_center.coords(),
        "ball_radius": ball_radius,
        "q": q,
    });
    let center = ball_center.clone();
    let l_vox = crate::geom::voxelize(
        move |p: &CPoint| p.dist(&center) <= ball_radius,
        chart.clone(),
        VoxelizeMode::Centers,
    );
    // precondition: psi weakly q-convex on a neighborhood of A ∩ L
    let scan_zone = a.dilate(1).intersection(&l_vox)?;
    if !scan_zone.is_empty() {
        let mut opts = ScanOptions::new(q, false);
        opts.tau = tau;
        opts.h = h;
        let scan = scan_region(&psi.clone().into(), &scan_zone, &opts)?;
        if scan.fail > 0 {
            return Ok(ProbeOutcome {
                probe: "local_max".into(),
                params,
                verdict: Verdict::Skipped {
                    reason: format!(
                        "field is not weakly {q}-convex on the test zone ({} failures)",
                        scan.fail
                    ),
                },
                margins: json!({}),
            });
        }
    }
    let boundary_l = l_vox.boundary();
    let inner = a.intersection(&l_vox)?;
    let rim = a.intersection(&boundary_l)?;
    let max_over = |set: &VoxelSet| -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for idx in set.iter_ones() {
            let v = psi.value(&chart.cell_center(idx))?;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    };
    let interior_max = max_over(&inner)?;
    let boundary_max = max_over(&rim)?;
    // gap tolerance: local Lipschitz estimate times the cell diagonal
    let mut lip: f64 = 0.0;
    let hh = 0.5 * chart.width(0);
    for idx in l_vox.iter_ones() {
        let p = chart.cell_center(idx);
        let mut grad_sq = 0.0;
        for axis in 0..chart.dim() {
            let up = psi.value(&p.offset(axis, hh))?;
            let dn = psi.value(&p.offset(axis, -hh))?;
            let g = (up - dn) / (2.0 * hh);
            grad_sq += g * g;
        }
        lip = lip.max(grad_sq.sqrt());
    }
    let tau_gap = lip * chart.cell_diagonal();
    let pass = interior_max <= boundary_max + tau_gap
        || (interior_max == f64::NEG_INFINITY && boundary_max == f64::NEG_INFINITY);
    let margins = json!({
        "interior_max": finite_or_null(interior_max),
        "boundary_max": finite_or_null(boundary_max),
        "tau_gap": tau_gap,
    });
    Ok(ProbeOutcome {
        probe: "local_max".into(),
        params,
        verdict: if pass {
            Verdict::Pass
        } else {
            Verdict::Fail { witness: vec![interior_max, boundary_max, tau_gap] }
        },
        margins,
    })
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Exhaustion fill check: an (n-q)-convex exhaustion of Omega forces the
/// Kontinuitaetssatz conclusion rho ∘ Phi < c on the whole polydisc once
/// it holds on the Hartogs figure. Preconditions (the convexity scan and
/// an in-box exhaustion test) failing yield Skipped.
#[allow(clippy::too_many_arguments)]
pub fn exhaustion_fill_check(
    omega: &DomainSpec,
    rho: &ScalarField,
    fig: &HartogsFigure,
    embed: &AffineMap,
    q: usize,
    samples: usize,
    seed: u64,
    margin: f64,
) -> Result<ProbeOutcome> {
    let chart = omega.chart().clone();
    let n = chart.n();
    let params = json!({ "figure": fig, "q": q, "samples": samples, "seed": seed });
    // precondition 1: rho is (n-q)-convex on the sampled domain voxels
    let region = omega.voxels().clone();
    if region.is_empty() {
        return Err(Error::ProbeInput("domain voxelization is empty".into()));
    }
    let scan = scan_region(
        &rho.clone().into(),
        &region,
        &ScanOptions::new(n - q, true),
    )?;
    if scan.fail > 0 {
        return Ok(ProbeOutcome {
            probe: "exhaustion_fill".into(),
            params,
            verdict: Verdict::Skipped {
                reason: format!("field is not ({})-convex on the domain", n - q),
            },
            margins: json!({}),
        });
    }
    // figure samples and threshold c; alternate uniform draws with
    // boundary-biased draws (the sup of a plurisubharmonic composition over
    // the polydisc lives on the distinguished boundary, which meets the
    // figure's outer clause)
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = f64::NEG_INFINITY;
    let mut collected = 0usize;
    while collected < samples {
        let mut p = polydisc_sample(n, &mut rng);
        if collected % 2 == 1 {
            let zs: Vec<C64> = (0..n)
                .map(|j| {
                    let z = p.z(j);
                    let norm = z.norm().max(1e-12);
                    z / norm * (1.0 - 0.02 * rng.gen::<f64>())
                })
                .collect();
            p = CPoint::from_complex(&zs);
        }
        if !fig.contains(&p) {
            continue;
        }
        collected += 1;
        let img = embed.apply(&p);
        if !omega.contains(&img) {
            return Ok(ProbeOutcome {
                probe: "exhaustion_fill".into(),
                params,
                verdict: Verdict::Skipped { reason: "figure image leaves the domain".into() },
                margins: json!({}),
            });
        }
        c = c.max(rho.value(&img)?);
    }
    let c = c + margin;
    // precondition 2 (in-box exhaustion surrogate): the sublevel set
    // {rho <= c} must stay away from the domain's voxel boundary
    let boundary = omega.voxels().boundary();
    let mut boundary_min = f64::INFINITY;
    for idx in boundary.iter_ones() {
        let p = chart.cell_center(idx);
        if let Ok(v) = rho.value(&p) {
            boundary_min = boundary_min.min(v);
        }
    }
    let exhausts = boundary.is_empty() || boundary_min > c;
    if !exhausts {
        return Ok(ProbeOutcome {
            probe: "exhaustion_fill".into(),
            params,
            verdict: Verdict::Skipped {
                reason: "field does not exhaust the domain within the box".into(),
            },
            margins: json!({ "boundary_min": finite_or_null(boundary_min), "c": c }),
        });
    }
    // conclusion: rho ∘ Phi < c on polydisc samples
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut max_val = f64::NEG_INFINITY;
    for _ in 0..samples {
        let p = polydisc_sample(n, &mut rng);
        let img = embed.apply(&p);
        if !omega.contains(&img) {
            return Ok(ProbeOutcome {
                probe: "exhaustion_fill".into(),
                params,
                verdict: Verdict::Fail { witness: img.coords().to_vec() },
                margins: json!({ "c": c, "note": "polydisc image leaves the domain" }),
            });
        }
        let v = rho.value(&img)?;
        max_val = max_val.max(v);
        if v >= c {
            return Ok(ProbeOutcome {
                probe: "exhaustion_fill".into(),
                params,
                verdict: Verdict::Fail { witness: img.coords().to_vec() },
                margins: json!({ "c": c, "value": v }),
            });
        }
    }
    Ok(ProbeOutcome {
        probe: "exhaustion_fill".into(),
        params,
        verdict: Verdict::Pass,
        margins: json!({ "c": c, "max_polydisc_value": finite_or_null(max_val), "caveat": "exhaustion checked on the box only" }),
    })
}

/// Re-verify a violation witness exactly: it must lie outside the domain.
pub fn reverify_witness(omega: &DomainSpec, witness: &[f64]) -> Result<bool> {
    let p = CPoint::new(witness.to_vec())?;
    Ok(!omega.contains(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::AmbientDomain;

    fn chart() -> Arc<ChartBox> {
        Arc::new(ChartBox::cube(2, 2.0, 12).unwrap())
    }

    #[test]
    fn hat_fill_everything_is_consistent() {
        let omega = DomainSpec::new(|_: &CPoint| true, chart());
        let pair = HatPair::identity(2, 0.5).unwrap();
        let out = hat_fill_probe(&omega, &pair, 256, 256, 7);
        assert_eq!(out.verdict, Verdict::Consistent);
    }

    #[test]
    fn hat_fill_detects_ball_complement_violation() {
        // Omega = C^2 minus the closed unit ball is not 1-pseudoconvex: a
        // cap sphere of radius 1.4 avoids the ball while its filling meets it
        let omega = DomainSpec::new(|p: &CPoint| p.norm() > 1.0, chart());
        let pair = HatPair::new(
            2,
            0.5,
            0.05,
            AffineMap::scale_translate(2, 1.4, &CPoint::zero(2)).unwrap(),
        )
        .unwrap();
        let out = hat_fill_probe(&omega, &pair, 2048, 2048, 7);
        match &out.verdict {
            Verdict::Violation { witness } => {
                assert!(reverify_witness(&omega, witness).unwrap());
            }
            v => panic!("expected violation, got {v:?}"),
        }
    }

    #[test]
    fn hat_fill_ball_domain_consistent() {
        let omega = DomainSpec::new(|p: &CPoint| p.norm() < 1.0, chart());
        let pair = HatPair::new(
            2,
            0.5,
            0.05,
            AffineMap::scale_translate(2, 0.4, &CPoint::new(vec![0.2, 0.0, 0.1, 0.0]).unwrap())
                .unwrap(),
        )
        .unwrap();
        let out = hat_fill_probe(&omega, &pair, 1024, 1024, 9);
        assert_eq!(out.verdict, Verdict::Consistent);
    }

    #[test]
    fn disc_sweep_finds_puncture() {
        // Omega = C^2 minus the origin; family through p = (-0.5, 0)
        let omega = DomainSpec::new(|p: &CPoint| p.norm() > 1e-12, chart());
        let base = CPoint::new(vec![-0.5, 0.0, 0.0, 0.0]).unwrap();
        let fam = DiscFamily::new(base, 1, 64, 64, 3).unwrap();
        let out = disc_family_sweep(&omega, &fam).unwrap();
        match out.verdict {
            Verdict::FirstContact { t, .. } => {
                // the 64-step grid over [-0.5, 1] hits 0 exactly
                assert!(t.abs() < 1e-12, "t = {t}");
            }
            v => panic!("expected first contact, got {v:?}"),
        }
    }

    #[test]
    fn disc_sweep_no_contact_on_everything() {
        let omega = DomainSpec::new(|_: &CPoint| true, chart());
        let base = CPoint::new(vec![-0.5, 0.0, 0.0, 0.0]).unwrap();
        let fam = DiscFamily::new(base, 1, 32, 32, 3).unwrap();
        let out = disc_family_sweep(&omega, &fam).unwrap();
        assert_eq!(out.verdict, Verdict::NoContact);
    }

    #[test]
    fn disc_sweep_monotone_refinement() {
        let omega = DomainSpec::new(|p: &CPoint| p.norm() > 1e-12, chart());
        let base = CPoint::new(vec![-0.5, 0.0, 0.0, 0.0]).unwrap();
        let coarse = DiscFamily::new(base.clone(), 1, 64, 64, 3).unwrap();
        let fine = DiscFamily::new(base, 1, 127, 64, 3).unwrap();
        let t_coarse = match disc_family_sweep(&omega, &coarse).unwrap().verdict {
            Verdict::FirstContact { t, .. } => t,
            v => panic!("{v:?}"),
        };
        let t_fine = match disc_family_sweep(&omega, &fine).unwrap().verdict {
            Verdict::FirstContact { t, .. } => t,
            v => panic!("{v:?}"),
        };
        let step = 1.5 / 63.0;
        assert!(t_coarse - t_fine <= step + 1e-12);
    }

    #[test]
    fn hartogs_probe_with_translated_embedding() {
        // Omega = C^2 minus the closed ball of radius 0.5. The map
        // z -> (4 z1 - 3.5, 4 z2) sends the figure complement over the ball:
        // the figure misses the ball while the full polydisc hits it.
        let omega = DomainSpec::new(|p: &CPoint| p.norm() > 0.5, chart());
        let fig = HartogsFigure::new(1, 1, 0.7, 0.7).unwrap();
        let a = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(4.0, 0.0),
            C64::new(4.0, 0.0),
        ]));
        let b = nalgebra::DVector::from_vec(vec![C64::new(-3.5, 0.0), C64::new(0.0, 0.0)]);
        let embed = AffineMap::new(a, b).unwrap();
        let out = hartogs_probe(&omega, &fig, &embed, 1, 200_000, 11).unwrap();
        match &out.verdict {
            Verdict::Violation { witness } => {
                assert!(reverify_witness(&omega, witness).unwrap());
            }
            v => panic!("expected violation, got {v:?}"),
        }
        // wrong order rejected
        let bad = HartogsFigure::new(2, 1, 0.5, 0.5).unwrap();
        let embed3 = AffineMap::identity(3);
        assert!(hartogs_probe(&omega, &bad, &embed3, 1, 10, 1).is_err());
    }

    #[test]
    fn hartogs_probe_everything_consistent() {
        let omega = DomainSpec::new(|_: &CPoint| true, chart());
        let fig = HartogsFigure::new(1, 1, 0.5, 0.5).unwrap();
        let out = hartogs_probe(&omega, &fig, &AffineMap::identity(2), 1, 512, 5).unwrap();
        assert_eq!(out.verdict, Verdict::Consistent);
    }

    #[test]
    fn local_max_empty_intersection_passes() {
        let a = VoxelSet::empty(chart());
        let psi = ScalarField::new("re_z2", |p: &CPoint| p.coords()[2]);
        let out = local_max_check(
            &a,
            &psi,
            &CPoint::zero(2),
            0.4,
            1,
            1e-7,
            1e-3,
        )
        .unwrap();
        assert_eq!(out.verdict, Verdict::Pass);
    }

    #[test]
    fn local_max_negative_control_skipped() {
        let c = chart();
        let a = crate::geom::voxelize(|p: &CPoint| p.norm() <= 0.8, c.clone(), VoxelizeMode::Centers);
        // 1 - ||z||^2 has two negative Levi eigenvalues: not weakly 1-convex
        let psi = ScalarField::new("peak", |p: &CPoint| 1.0 - p.norm_sq());
        let out = local_max_check(&a, &psi, &CPoint::zero(2), 0.5, 1, 1e-7, 1e-3).unwrap();
        assert!(matches!(out.verdict, Verdict::Skipped { .. }));
    }

    #[test]
    fn exhaustion_fill_ball() {
        let c = Arc::new(ChartBox::cube(2, 1.05, 12).unwrap());
        let omega = DomainSpec::new(|p: &CPoint| p.norm() < 1.0, c);
        let rho = ScalarField::new("ball_exhaustion", |p: &CPoint| {
            let s = p.norm_sq();
            s / (1.0 - s)
        })
        .with_domain(|p: &CPoint| p.norm_sq() < 1.0)
        .with_hessian(|p: &CPoint| {
            let n = p.n();
            let s = p.norm_sq();
            let f1 = 1.0 / ((1.0 - s) * (1.0 - s));
            let f2 = 2.0 / ((1.0 - s) * (1.0 - s) * (1.0 - s));
            let mut m = nalgebra::DMatrix::<C64>::zeros(n, n);
            for j in 0..n {
                for l in 0..n {
                    let mut v = p.z(j).conj() * p.z(l) * f2;
                    if j == l {
                        v += C64::new(f1, 0.0);
                    }
                    m[(j, l)] = v;
                }
            }
            crate::levi::HermitianForm::new(m)
        });
        let fig = HartogsFigure::new(1, 1, 0.5, 0.5).unwrap();
        let embed = AffineMap::scale_translate(2, 0.45, &CPoint::zero(2)).unwrap();
        let out = exhaustion_fill_check(&omega, &rho, &fig, &embed, 1, 2048, 17, 0.05).unwrap();
        assert_eq!(out.verdict, Verdict::Pass, "{:?}", out.margins);
    }

    #[test]
    fn exhaustion_fill_constant_rho_skipped() {
        let c = Arc::new(ChartBox::cube(2, 1.05, 10).unwrap());
        let omega = DomainSpec::new(|p: &CPoint| p.norm() < 1.0, c);
        let rho = ScalarField::new("constant", |_: &CPoint| 1.0)
            .with_hessian(|_: &CPoint| crate::levi::HermitianForm::zeros(2));
        let fig = HartogsFigure::new(1, 1, 0.5, 0.5).unwrap();
        let embed = AffineMap::scale_translate(2, 0.45, &CPoint::zero(2)).unwrap();
        let out = exhaustion_fill_check(&omega, &rho, &fig, &embed, 1, 256, 17, 0.05).unwrap();
        assert!(matches!(out.verdict, Verdict::Skipped { .. }));
    }

    #[test]
    fn exhaustion_fill_everything_vacuous_pass() {
        let c = Arc::new(ChartBox::cube(2, 1.05, 10).unwrap());
        let omega = DomainSpec::new(|_: &CPoint| true, c);
        let rho = ScalarField::new("norm_sq", |p: &CPoint| p.norm_sq()).with_hessian(|p: &CPoint| {
            crate::levi::HermitianForm::from_diagonal(&vec![1.0; p.n()])
        });
        let fig = HartogsFigure::new(1, 1, 0.5, 0.5).unwrap();
        let embed = AffineMap::scale_translate(2, 0.45, &CPoint::zero(2)).unwrap();
        let out = exhaustion_fill_check(&omega, &rho, &fig, &embed, 1, 256, 17, 0.05).unwrap();
        assert_eq!(out.verdict, Verdict::Pass);
    }

    #[test]
    fn probe_consistency_hat_fill_vs_hartogs_on_pseudoconvex_domains() {
        // ball and polydisc domains: all probes consistent
        for domain in [
            DomainSpec::new(|p: &CPoint| p.norm() < 1.0, chart()),
            DomainSpec::new(|p: &CPoint| p.sup_norm() < 1.0, chart()),
        ] {
            let ambient = AmbientDomain::full_box(domain.chart().clone());
            let mut cfg = crate::hats::HatFamily::new(2);
            cfg.stride = 6;
            cfg.radii = vec![0.4, 0.7];
            cfg.scales = vec![0.3, 0.6];
            let family = crate::hats::generate_family(&cfg, &ambient);
            for pair in family.pairs.iter().take(60) {
                let out = hat_fill_probe(&domain, pair, 512, 512, 23);
                assert_eq!(out.verdict, Verdict::Consistent);
            }
            for (scale, shift) in [(0.4, 0.0), (0.3, 0.2)] {
                let embed = AffineMap::scale_translate(
                    2,
                    scale,
                    &CPoint::new(vec![shift, 0.0, 0.0, 0.0]).unwrap(),
                )
                .unwrap();
                let fig = HartogsFigure::new(1, 1, 0.6, 0.6).unwrap();
                let out = hartogs_probe(&domain, &fig, &embed, 1, 2048, 29).unwrap();
                assert_eq!(out.verdict, Verdict::Consistent);
            }
        }
    }
}
