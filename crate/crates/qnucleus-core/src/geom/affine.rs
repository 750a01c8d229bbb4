use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::CPoint;
use crate::linalg::{self, C64};

const SIGMA_MIN_FLOOR: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-9;

/// Invertible complex-affine map z -> A z + b on C^n.
///
/// These are the only embeddings used for hat pairs: they are injective,
/// holomorphic, preserve q-convexity, and keep membership tests exact.
#[derive(Clone, Debug)]
pub struct AffineMap {
    a: DMatrix<C64>,
    b: DVector<C64>,
    a_inv: DMatrix<C64>,
    sigma_min: f64,
    sigma_max: f64,
}

impl AffineMap {
    pub fn new(a: DMatrix<C64>, b: DVector<C64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.len() != n {
            return Err(Error::Geometry("affine map shape mismatch".into()));
        }
        let (sigma_min, sigma_max) = linalg::singular_value_range(&a);
        if !(sigma_min > SIGMA_MIN_FLOOR) {
            return Err(Error::SingularMap(sigma_min));
        }
        let a_inv = linalg::invert(&a).ok_or(Error::SingularMap(sigma_min))?;
        let map = Self { a, b, a_inv, sigma_min, sigma_max };
        // round-trip probe on basis points and the ones vector
        for probe in map.probe_points() {
            let err = map.apply_inverse(&map.apply(&probe)).dist(&probe);
            if err > ROUND_TRIP_TOL {
                return Err(Error::SingularMap(sigma_min));
            }
        }
        Ok(map)
    }

    fn probe_points(&self) -> Vec<CPoint> {
        let n = self.n();
        let mut pts = vec![CPoint::zero(n)];
        for j in 0..n {
            let mut v = vec![C64::default(); n];
            v[j] = C64::new(1.0, 0.0);
            pts.push(CPoint::from_complex(&v));
        }
        pts.push(CPoint::from_complex(&vec![C64::new(1.0, 1.0); n]));
        pts
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
            b: DVector::zeros(n),
            a_inv: DMatrix::identity(n, n),
            sigma_min: 1.0,
            sigma_max: 1.0,
        }
    }

    /// Uniform complex scaling followed by translation.
    pub fn scale_translate(n: usize, scale: f64, offset: &CPoint) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n) * C64::new(scale, 0.0),
            offset.to_cvector(),
        )
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn linear(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<C64> {
        &self.b
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Ambient offset as a point (the image of the model origin).
    pub fn offset_point(&self) -> CPoint {
        CPoint::from_cvector(&self.b)
    }

    pub fn apply(&self, p: &CPoint) -> CPoint {
        let v = self.a.clone() * p.to_cvector() + &self.b;
        CPoint::from_cvector(&v)
    }

    pub fn apply_inverse(&self, p: &CPoint) -> CPoint {
        let v = self.a_inv.clone() * (p.to_cvector() - &self.b);
        CPoint::from_cvector(&v)
    }

    /// Composition outer ∘ self: z -> A_o (A z + b) + b_o.
    pub fn compose_outer(&self, outer: &AffineMap) -> Result<AffineMap> {
        let a = &outer.a * &self.a;
        let b = &outer.a * &self.b + &outer.b;
        AffineMap::new(a, b)
    }
}

/// Forward transform of a point (the embedding direction).
pub fn transform_point(map: &AffineMap, p: &CPoint) -> CPoint {
    map.apply(p)
}

/// Inverse transform of a point.
pub fn transform_point_inverse(map: &AffineMap, p: &CPoint) -> CPoint {
    map.apply_inverse(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fixes_points() {
        let m = AffineMap::identity(2);
        let p = CPoint::new(vec![0.3, -0.2, 1.0, 2.0]).unwrap();
        assert_eq!(m.apply(&p), p);
    }

    #[test]
    fn translation_shifts() {
        let b = CPoint::new(vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let m = AffineMap::scale_translate(2, 1.0, &b).unwrap();
        let p = CPoint::zero(2);
        assert_eq!(m.apply(&p), b);
    }

    #[test]
    fn singular_rejected() {
        let a = DMatrix::<C64>::zeros(2, 2);
        let b = DVector::<C64>::zeros(2);
        assert!(matches!(AffineMap::new(a, b), Err(Error::SingularMap(_))));
    }

    #[test]
    fn near_singular_rejected() {
        let mut a = DMatrix::<C64>::identity(2, 2);
        a[(1, 1)] = C64::new(1e-12, 0.0);
        assert!(AffineMap::new(a, DVector::zeros(2)).is_err());
    }

    #[test]
    fn round_trip_within_tolerance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // random rotation-ish matrix plus shift
        let a = DMatrix::from_fn(2, 2, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            + DMatrix::identity(2, 2) * C64::new(2.0, 0.0);
        let b = DVector::from_fn(2, |_, _| C64::new(rng.gen::<f64>(), rng.gen::<f64>()));
        let m = AffineMap::new(a, b).unwrap();
        for _ in 0..100 {
            let p = CPoint::new((0..4).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect()).unwrap();
            assert!(m.apply_inverse(&m.apply(&p)).dist(&p) <= 1e-9);
        }
    }
}
