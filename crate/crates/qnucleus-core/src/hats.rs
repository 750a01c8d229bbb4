//! Hartogs figures and spherical hat pairs.
//!
//! The model sets live in C^n: the spherical hat S_r^k = {z in C^k :
//! ||z|| = 1, Re z_1 >= r}, its filled counterpart {||z|| <= 1,
//! Re z_1 >= r}, both crossed with the polydisc Delta^{n-k} and pushed
//! forward by an invertible complex-affine embedding. The cap direction is
//! always realized through the unitary part of the embedding, keeping the
//! model sets canonical.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{AffineMap, AmbientDomain, CPoint, ChartBox, VoxelSet};
use crate::linalg::C64;

/// Equality tolerance for sphere/plane membership. Exact boundary cases are
/// measure zero; they resolve toward "outside" for validity and toward
/// "not interior" for cutting.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Default neighborhood margin standing in for the open set around the
/// closed model hat.
pub const DEFAULT_MU: f64 = 0.05;

/// Euclidean (k,m)-Hartogs figure in model coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HartogsFigure {
    pub k: usize,
    pub m: usize,
    pub r: f64,
    pub s: f64,
}

impl HartogsFigure {
    pub fn new(k: usize, m: usize, r: f64, s: f64) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::Geometry("Hartogs figure needs k, m >= 1".into()));
        }
        if !(0.0 < r && r < 1.0 && 0.0 < s && s < 1.0) {
            return Err(Error::Geometry("Hartogs parameters must lie in (0,1)".into()));
        }
        Ok(Self { k, m, r, s })
    }

    pub fn n(&self) -> usize {
        self.k + self.m
    }

    /// Membership in model coordinates: inside the unit polydisc and
    /// (||(z_1..z_k)||_inf < r or ||(z_{k+1}..z_n)||_inf > s).
    pub fn contains(&self, p: &CPoint) -> bool {
        debug_assert_eq!(p.n(), self.n());
        let head = (0..self.k).map(|j| p.z(j).norm()).fold(0.0_f64, f64::max);
        let tail = (self.k..self.n()).map(|j| p.z(j).norm()).fold(0.0_f64, f64::max);
        head < 1.0 && tail < 1.0 && (head < self.r || tail > self.s)
    }
}

/// Classification of a point against a hat pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HatRegion {
    /// On the spherical cap surface S.
    InS,
    /// In the open filling Int(S-hat).
    InInterior,
    /// On the flat wall Re z'_1 = r, rest inside.
    InFilledBoundaryFlat,
    Outside,
}

/// Spherical hat pair of order k: model cap parameter r, neighborhood
/// margin mu and the affine embedding of C^n.
#[derive(Clone, Debug)]
pub struct HatPair {
    k: usize,
    r: f64,
    mu: f64,
    phi: AffineMap,
}

impl HatPair {
    pub fn new(k: usize, r: f64, mu: f64, phi: AffineMap) -> Result<Self> {
        let n = phi.n();
        if k == 0 || k > n {
            return Err(Error::Geometry(format!("hat order {k} outside [1, {n}]")));
        }
        if !(0.0 < r && r < 1.0) {
            return Err(Error::Geometry("cap parameter r must lie in (0,1)".into()));
        }
        if !(mu > 0.0) {
            return Err(Error::Geometry("margin mu must be positive".into()));
        }
        Ok(Self { k, r, mu, phi })
    }

    /// Identity-embedded hat of full order in C^n.
    pub fn identity(n: usize, r: f64) -> Result<Self> {
        Self::new(n, r, DEFAULT_MU, AffineMap::identity(n))
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn embedding(&self) -> &AffineMap {
        &self.phi
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    /// Pull a chart point back to model coordinates.
    pub fn model(&self, p: &CPoint) -> CPoint {
        self.phi.apply_inverse(p)
    }

    /// Compose with an outer ambient transform (for equivariance tests).
    pub fn transformed(&self, outer: &AffineMap) -> Result<HatPair> {
        Ok(HatPair {
            k: self.k,
            r: self.r,
            mu: self.mu,
            phi: self.phi.compose_outer(outer)?,
        })
    }

    fn split(&self, w: &CPoint) -> (Vec<C64>, Vec<C64>) {
        let zp: Vec<C64> = (0..self.k).map(|j| w.z(j)).collect();
        let zpp: Vec<C64> = (self.k..self.n()).map(|j| w.z(j)).collect();
        (zp, zpp)
    }

    fn zp_norm(zp: &[C64]) -> f64 {
        zp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn zpp_sup(zpp: &[C64]) -> f64 {
        zpp.iter().map(|z| z.norm()).fold(0.0_f64, f64::max)
    }

    /// Region classification of a chart point.
    pub fn membership(&self, p: &CPoint) -> HatRegion {
        let w = self.model(p);
        let (zp, zpp) = self.split(&w);
        let nzp = Self::zp_norm(&zp);
        let x1 = zp[0].re;
        let sup = Self::zpp_sup(&zpp);
        if (nzp - 1.0).abs() <= MEMBERSHIP_TOL && x1 >= self.r && sup < 1.0 {
            return HatRegion::InS;
        }
        if nzp < 1.0 && x1 > self.r && sup < 1.0 {
            return HatRegion::InInterior;
        }
        if (x1 - self.r).abs() <= MEMBERSHIP_TOL && nzp <= 1.0 && sup < 1.0 {
            return HatRegion::InFilledBoundaryFlat;
        }
        HatRegion::Outside
    }

    /// Strict interior with a conservative shave on every inequality.
    pub fn model_in_interior(&self, w: &CPoint, shave: f64) -> bool {
        let (zp, zpp) = self.split(w);
        Self::zp_norm(&zp) < 1.0 - shave
            && zp[0].re > self.r + shave
            && (zpp.is_empty() || Self::zpp_sup(&zpp) < 1.0 - shave)
    }

    /// Center membership in the closed filled model hat.
    pub fn model_in_filled(&self, w: &CPoint) -> bool {
        let (zp, zpp) = self.split(w);
        Self::zp_norm(&zp) <= 1.0 && zp[0].re >= self.r && (zpp.is_empty() || Self::zpp_sup(&zpp) < 1.0)
    }

    fn cap_split(zp: &[C64]) -> (f64, f64) {
        // (x1, norm of the remaining 2k-1 real coordinates)
        let x1 = zp[0].re;
        let mut rest = zp[0].im * zp[0].im;
        for z in &zp[1..] {
            rest += z.norm_sqr();
        }
        (x1, rest.sqrt())
    }

    /// Exact model distance to the cap sphere {||z'|| = 1, Re z'_1 >= r}.
    fn dist_cap_sphere(&self, zp: &[C64]) -> f64 {
        let (x1, nv) = Self::cap_split(zp);
        let nw = (x1 * x1 + nv * nv).sqrt();
        if nw == 0.0 {
            return 1.0;
        }
        if x1 >= self.r * nw {
            (nw - 1.0).abs()
        } else {
            let rim = (1.0 - self.r * self.r).sqrt();
            ((x1 - self.r).powi(2) + (nv - rim).powi(2)).sqrt()
        }
    }

    /// Exact model distance to the closed filled cap {||z'|| <= 1, Re z'_1 >= r}.
    fn dist_filled_cap(&self, zp: &[C64]) -> f64 {
        let (x1, nv) = Self::cap_split(zp);
        let nw = (x1 * x1 + nv * nv).sqrt();
        let rim = (1.0 - self.r * self.r).sqrt();
        if x1 >= self.r {
            if nw <= 1.0 {
                0.0
            } else if x1 >= self.r * nw {
                nw - 1.0
            } else {
                ((x1 - self.r).powi(2) + (nv - rim).powi(2)).sqrt()
            }
        } else if nv <= rim {
            self.r - x1
        } else {
            ((self.r - x1).powi(2) + (nv - rim).powi(2)).sqrt()
        }
    }

    fn dist_polydisc(zpp: &[C64]) -> f64 {
        zpp.iter()
            .map(|z| (z.norm() - 1.0).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Model distance to S = cap sphere x closed polydisc.
    pub fn model_dist_to_s(&self, w: &CPoint) -> f64 {
        let (zp, zpp) = self.split(w);
        let a = self.dist_cap_sphere(&zp);
        let b = Self::dist_polydisc(&zpp);
        (a * a + b * b).sqrt()
    }

    /// Model distance to the closed filled hat x closed polydisc, scaled
    /// about the model origin by `scale`.
    pub fn model_dist_to_filled_scaled(&self, w: &CPoint, scale: f64) -> f64 {
        let shrunk: Vec<C64> = (0..w.n()).map(|j| w.z(j) / scale).collect();
        let wp = CPoint::from_complex(&shrunk);
        let (zp, zpp) = self.split(&wp);
        let a = self.dist_filled_cap(&zp);
        let b = Self::dist_polydisc(&zpp);
        scale * (a * a + b * b).sqrt()
    }

    /// Support function of the filled model hat x closed polydisc in a real
    /// direction g of R^{2n} (model coordinates):
    /// h(g) = h_cap(g') + sum over polydisc factors of ||g''_j||, with
    /// h_cap(g') = ||g'|| when the maximizer stays on the cap and
    /// r g'_1 + sqrt(1-r^2) ||g'_rest|| otherwise.
    fn support_model(&self, g: &[f64]) -> f64 {
        let two_k = 2 * self.k;
        let g1 = g[0];
        let rest_sq: f64 = g[1..two_k].iter().map(|v| v * v).sum();
        let ng = (g1 * g1 + rest_sq).sqrt();
        let cap = if ng == 0.0 {
            0.0
        } else if g1 >= self.r * ng {
            ng
        } else {
            self.r * g1 + (1.0 - self.r * self.r).sqrt() * rest_sq.sqrt()
        };
        let mut poly = 0.0;
        let n = self.n();
        for j in self.k..n {
            poly += (g[2 * j] * g[2 * j] + g[2 * j + 1] * g[2 * j + 1]).sqrt();
        }
        cap + poly
    }

    /// Exact ambient bounding interval of the scaled hat region on one real
    /// chart axis.
    fn ambient_interval(&self, axis: usize, scale: f64) -> (f64, f64) {
        let n = self.n();
        let j = axis / 2;
        let imag = axis % 2 == 1;
        let a = self.phi.linear();
        let b = self.phi.offset();
        let mut g = vec![0.0; 2 * n];
        for m in 0..n {
            let c = a[(j, m)];
            if imag {
                g[2 * m] = c.im;
                g[2 * m + 1] = c.re;
            } else {
                g[2 * m] = c.re;
                g[2 * m + 1] = -c.im;
            }
        }
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let center = if imag { b[j].im } else { b[j].re };
        (
            center - scale * self.support_model(&neg),
            center + scale * self.support_model(&g),
        )
    }

    /// Exact ambient bounding box of the scaled hat region.
    pub fn ambient_bounds(&self, scale: f64) -> (Vec<f64>, Vec<f64>) {
        let dim = 2 * self.n();
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for d in 0..dim {
            let (a, b) = self.ambient_interval(d, scale);
            lo.push(a);
            hi.push(b);
        }
        (lo, hi)
    }
}

/// Which hat voxelization to produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HatVoxelization {
    /// Conservative superset: cells whose center lies within 1.5 cell
    /// diagonals (ambient) of the cap surface S; covers every cell meeting
    /// the one-diagonal dilation of S.
    SDilated,
    /// Cell-center membership in the closed filled hat.
    Filled,
    /// Conservative subset of the open filling: center and all corners
    /// strictly inside.
    InteriorConservative,
}

fn window_of_bounds(
    chart: &ChartBox,
    lo: &[f64],
    hi: &[f64],
    pad: f64,
) -> Option<Vec<(usize, usize)>> {
    let mut windows = Vec::with_capacity(chart.dim());
    for d in 0..chart.dim() {
        windows.push(chart.axis_window(d, lo[d] - pad, hi[d] + pad)?);
    }
    Some(windows)
}

/// Voxelize one aspect of a hat pair on a chart grid.
pub fn voxelize_hat(pair: &HatPair, chart: &std::sync::Arc<ChartBox>, which: HatVoxelization) -> VoxelSet {
    use rayon::prelude::*;
    let mut out = VoxelSet::empty(chart.clone());
    let delta = chart.cell_diagonal();
    let sigma = pair.embedding().sigma_min();
    let sigma_max = pair.embedding().sigma_max();
    let (lo, hi) = pair.ambient_bounds(1.0);
    let pad = match which {
        HatVoxelization::SDilated => 1.5 * delta,
        _ => 0.0,
    };
    let Some(windows) = window_of_bounds(chart, &lo, &hi, pad) else {
        return out;
    };
    let threshold = 1.5 * delta / sigma;
    // radial prefilter: when the hat has full order the cap surface lies on
    // the unit model sphere, so cells whose model norm range misses the
    // shell band cannot be near S
    let full_order = pair.order() == pair.n();
    let origin = pair.embedding().offset_point();
    let indices = chart.window_indices(&windows);
    let hits: Vec<usize> = indices
        .into_par_iter()
        .filter(|&idx| {
            let center = chart.cell_center(idx);
            match which {
                HatVoxelization::SDilated => {
                    if full_order {
                        let d = center.dist(&origin);
                        if d / sigma_max > 1.0 + threshold || d / sigma < 1.0 - threshold {
                            return false;
                        }
                    }
                    let w = pair.model(&center);
                    pair.model_dist_to_s(&w) <= threshold
                }
                HatVoxelization::Filled => pair.model_in_filled(&pair.model(&center)),
                HatVoxelization::InteriorConservative => {
                    pair.model_in_interior(&pair.model(&center), MEMBERSHIP_TOL)
                        && chart
                            .cell_corners(idx)
                            .iter()
                            .all(|c| pair.model_in_interior(&pair.model(c), MEMBERSHIP_TOL))
                }
            }
        })
        .collect();
    for idx in hits {
        out.set(idx, true);
    }
    out
}

/// Occupied cells whose centers lie within the conservative dilation
/// threshold of the cap surface S: exactly the cells of
/// `HatVoxelization::SDilated` intersected with `occupied`. Uses the flat
/// center cache for bulk scans.
pub fn s_band_occupied(
    pair: &HatPair,
    chart: &ChartBox,
    centers: &[f64],
    occupied: &VoxelSet,
) -> Vec<u32> {
    use rayon::prelude::*;
    let delta = chart.cell_diagonal();
    let sigma = pair.embedding().sigma_min();
    let sigma_max = pair.embedding().sigma_max();
    let threshold = 1.5 * delta / sigma;
    let (lo, hi) = pair.ambient_bounds(1.0);
    let Some(windows) = window_of_bounds(chart, &lo, &hi, 1.5 * delta) else {
        return Vec::new();
    };
    let full_order = pair.order() == pair.n();
    let origin = pair.embedding().offset_point();
    let origin_coords = origin.coords();
    let dim = chart.dim();
    chart
        .window_indices(&windows)
        .par_iter()
        .filter_map(|&idx| {
            if !occupied.contains(idx) {
                return None;
            }
            let c = &centers[idx * dim..(idx + 1) * dim];
            if full_order {
                let mut d2 = 0.0;
                for (a, b) in c.iter().zip(origin_coords) {
                    let diff = a - b;
                    d2 += diff * diff;
                }
                let d = d2.sqrt();
                if d / sigma_max > 1.0 + threshold || d / sigma < 1.0 - threshold {
                    return None;
                }
            }
            let w = pair.model(&CPoint::from_raw(c.to_vec()));
            (pair.model_dist_to_s(&w) <= threshold).then_some(idx as u32)
        })
        .collect()
}

/// True iff the (1+mu)-scaled model region, pushed through the embedding,
/// stays inside the ambient's allowed region. Checked with the exact
/// support-function bounding box, a conservative voxel scan, and (when the
/// ambient carries one) the analytic predicate on surface samples.
pub fn valid_in_ambient(pair: &HatPair, ambient: &AmbientDomain) -> bool {
    let chart = ambient.chart();
    let scale = 1.0 + pair.mu();
    let (lo, hi) = pair.ambient_bounds(scale);
    for d in 0..chart.dim() {
        if lo[d] < chart.lower()[d] || hi[d] > chart.upper()[d] {
            return false;
        }
    }
    if !ambient.allowed_is_full() {
        let delta = chart.cell_diagonal();
        let sigma = pair.embedding().sigma_min();
        let threshold = 0.5 * delta / sigma;
        let Some(windows) = window_of_bounds(chart, &lo, &hi, 0.0) else {
            return false;
        };
        for idx in chart.window_indices(&windows) {
            let w = pair.model(&chart.cell_center(idx));
            if pair.model_dist_to_filled_scaled(&w, scale) <= threshold && !ambient.contains_cell(idx)
            {
                return false;
            }
        }
    }
    if ambient.has_predicate() {
        for p in scaled_region_samples(pair, 256, 0x5ca1ab1e) {
            if !ambient.contains_point(&p) {
                return false;
            }
        }
    }
    true
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; deterministic given the stream position
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn unit_disc_sample(rng: &mut ChaCha8Rng) -> C64 {
    let radius = rng.gen::<f64>().sqrt();
    let angle = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    C64::new(radius * angle.cos(), radius * angle.sin())
}

fn cap_sphere_sample(rng: &mut ChaCha8Rng, k: usize, r: f64) -> Vec<C64> {
    loop {
        let reals: Vec<f64> = (0..2 * k).map(|_| gaussian(rng)).collect();
        let norm = reals.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        if reals[0] / norm >= r {
            return (0..k)
                .map(|j| C64::new(reals[2 * j] / norm, reals[2 * j + 1] / norm))
                .collect();
        }
    }
}

fn cap_ball_sample(rng: &mut ChaCha8Rng, k: usize, r: f64) -> Vec<C64> {
    loop {
        let dir = {
            let reals: Vec<f64> = (0..2 * k).map(|_| gaussian(rng)).collect();
            let norm = reals.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let radius = rng.gen::<f64>().powf(1.0 / (2.0 * k as f64));
            (0..k)
                .map(|j| C64::new(radius * reals[2 * j] / norm, radius * reals[2 * j + 1] / norm))
                .collect::<Vec<_>>()
        };
        if dir[0].re >= r {
            return dir;
        }
    }
}

/// Deterministic seeded samples of the cap surface S, pushed through the
/// embedding. The first sample is always the cap apex.
pub fn sample_s(pair: &HatPair, count: usize, seed: u64) -> Vec<CPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pair.n();
    let k = pair.order();
    let mut out = Vec::with_capacity(count);
    let mut apex = vec![C64::new(0.0, 0.0); n];
    apex[0] = C64::new(1.0, 0.0);
    out.push(pair.embedding().apply(&CPoint::from_complex(&apex)));
    while out.len() < count {
        let mut zs = cap_sphere_sample(&mut rng, k, pair.r());
        for _ in k..n {
            zs.push(unit_disc_sample(&mut rng));
        }
        out.push(pair.embedding().apply(&CPoint::from_complex(&zs)));
    }
    out
}

/// Deterministic seeded samples of the closed filled hat.
pub fn sample_filled(pair: &HatPair, count: usize, seed: u64) -> Vec<CPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pair.n();
    let k = pair.order();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut zs = cap_ball_sample(&mut rng, k, pair.r());
        for _ in k..n {
            zs.push(unit_disc_sample(&mut rng));
        }
        out.push(pair.embedding().apply(&CPoint::from_complex(&zs)));
    }
    out
}

/// Samples of the (1+mu)-scaled region surface for predicate checks.
fn scaled_region_samples(pair: &HatPair, count: usize, seed: u64) -> Vec<CPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pair.n();
    let k = pair.order();
    let scale = 1.0 + pair.mu();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut zs = if i % 2 == 0 {
            cap_sphere_sample(&mut rng, k, pair.r())
        } else {
            cap_ball_sample(&mut rng, k, pair.r())
        };
        for _ in k..n {
            // polydisc boundary and interior alternate
            let z = unit_disc_sample(&mut rng);
            let z = if i % 4 < 2 && z.norm() > 1e-9 { z / z.norm() } else { z };
            zs.push(z);
        }
        let scaled: Vec<C64> = zs.iter().map(|z| z * scale).collect();
        out.push(pair.embedding().apply(&CPoint::from_complex(&scaled)));
    }
    out
}

/// Generation parameters for a finite hat family: a center sub-grid, cap
/// radii, cap directions (the coordinate half-axes plus optional seeded
/// unitaries) and uniform scales. Order k is fixed per experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HatFamily {
    pub k: usize,
    pub stride: usize,
    pub radii: Vec<f64>,
    pub scales: Vec<f64>,
    pub axis_directions: bool,
    pub random_unitaries: usize,
    pub mu: f64,
    pub seed: u64,
}

impl HatFamily {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            stride: 8,
            radii: vec![0.3, 0.55, 0.8],
            scales: vec![0.25, 0.5, 0.75, 0.95],
            axis_directions: true,
            random_unitaries: 0,
            mu: DEFAULT_MU,
            seed: 1,
        }
    }
}

/// A generated, ambient-valid family with its provenance seed.
#[derive(Clone, Debug)]
pub struct Family {
    pub pairs: Vec<HatPair>,
    pub seed: u64,
}

fn axis_unitary(n: usize, target: usize, phase: C64) -> DMatrix<C64> {
    let mut u = DMatrix::<C64>::identity(n, n);
    if target != 0 {
        u[(0, 0)] = C64::new(0.0, 0.0);
        u[(target, target)] = C64::new(0.0, 0.0);
        u[(target, 0)] = phase;
        u[(0, target)] = C64::new(1.0, 0.0);
    } else {
        u[(0, 0)] = phase;
    }
    u
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase.conj();
            }
        }
    }
    q
}

/// Grid-node indices (0..=res) stepping by `stride` outward from the
/// middle node, so the exact box center is always a candidate.
fn center_indices(res: usize, stride: usize) -> Vec<usize> {
    let mid = res / 2;
    let stride = stride.max(1);
    let mut picked = vec![mid];
    let mut k = 1;
    loop {
        let mut any = false;
        if k * stride <= mid {
            picked.push(mid - k * stride);
            any = true;
        }
        if mid + k * stride <= res {
            picked.push(mid + k * stride);
            any = true;
        }
        if !any {
            break;
        }
        k += 1;
    }
    picked.sort_unstable();
    picked
}

/// Deterministic enumeration of candidate hat pairs filtered by ambient
/// validity. Scales are interpreted in chart units. An empty result is a
/// legitimate outcome, not an error.
pub fn generate_family(cfg: &HatFamily, ambient: &AmbientDomain) -> Family {
    let chart = ambient.chart();
    let n = chart.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut directions: Vec<DMatrix<C64>> = Vec::new();
    if cfg.axis_directions {
        for j in 0..n {
            for phase in [
                C64::new(1.0, 0.0),
                C64::new(-1.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
            ] {
                directions.push(axis_unitary(n, j, phase));
            }
        }
    }
    for _ in 0..cfg.random_unitaries {
        directions.push(random_unitary(n, &mut rng));
    }

    // center sub-grid: every `stride`-th grid node per axis
    let res = chart.resolution();
    let per_axis: Vec<Vec<usize>> = (0..chart.dim())
        .map(|d| center_indices(res[d], cfg.stride))
        .collect();
    let node = |d: usize, i: usize| chart.lower()[d] + i as f64 * chart.width(d);
    let mut centers = Vec::new();
    let mut multi: Vec<usize> = per_axis.iter().map(|v| v[0]).collect();
    let mut cursor = vec![0usize; chart.dim()];
    loop {
        centers.push(CPoint::from_raw(
            (0..chart.dim()).map(|d| node(d, multi[d])).collect(),
        ));
        let mut d = 0;
        loop {
            if d == chart.dim() {
                let mut pairs = Vec::new();
                for center in &centers {
                    for dir in &directions {
                        for &scale in &cfg.scales {
                            for &radius in &cfg.radii {
                                let a = dir * C64::new(scale, 0.0);
                                let Ok(map) = AffineMap::new(a, center.to_cvector()) else {
                                    continue;
                                };
                                let Ok(pair) = HatPair::new(cfg.k, radius, cfg.mu, map) else {
                                    continue;
                                };
                                if valid_in_ambient(&pair, ambient) {
                                    pairs.push(pair);
                                }
                            }
                        }
                    }
                }
                return Family { pairs, seed: cfg.seed };
            }
            if cursor[d] + 1 < per_axis[d].len() {
                cursor[d] += 1;
                multi[d] = per_axis[d][cursor[d]];
                break;
            }
            cursor[d] = 0;
            multi[d] = per_axis[d][0];
            d += 1;
        }
    }
}

/// Serialized hat pair: {k, r, mu, A row-major as [re, im] pairs, b flat}.
#[derive(Serialize, Deserialize)]
struct HatPairRepr {
    k: usize,
    r: f64,
    mu: f64,
    #[serde(rename = "A")]
    a: Vec<[f64; 2]>,
    b: Vec<f64>,
}

impl Serialize for HatPair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n();
        let lin = self.phi.linear();
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push([lin[(i, j)].re, lin[(i, j)].im]);
            }
        }
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            b.push(self.phi.offset()[i].re);
            b.push(self.phi.offset()[i].im);
        }
        HatPairRepr { k: self.k, r: self.r, mu: self.mu, a, b }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HatPair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let repr = HatPairRepr::deserialize(deserializer)?;
        if repr.b.len() % 2 != 0 {
            return Err(D::Error::custom("offset length must be even"));
        }
        let n = repr.b.len() / 2;
        if repr.a.len() != n * n {
            return Err(D::Error::custom("matrix length must be n^2"));
        }
        let a = DMatrix::from_fn(n, n, |i, j| {
            let [re, im] = repr.a[i * n + j];
            C64::new(re, im)
        });
        let b = DVector::from_fn(n, |i, _| C64::new(repr.b[2 * i], repr.b[2 * i + 1]));
        let map = AffineMap::new(a, b).map_err(D::Error::custom)?;
        HatPair::new(repr.k, repr.r, repr.mu, map).map_err(D::Error::custom)
    }
}
