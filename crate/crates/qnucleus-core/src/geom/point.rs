use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// A point of C^n stored as 2n reals in the order (x1, y1, ..., xn, yn),
/// with z_j = x_j + i y_j.
#[derive(Clone, Debug, PartialEq)]
pub struct CPoint {
    coords: Vec<f64>,
}

impl CPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::Geometry(format!(
                "coordinate vector length {} is not a positive even number",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    /// Construct without validation; used by kernels on already-checked data.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn zero(n: usize) -> Self {
        Self { coords: vec![0.0; 2 * n] }
    }

    pub fn from_complex(zs: &[C64]) -> Self {
        let mut coords = Vec::with_capacity(2 * zs.len());
        for z in zs {
            coords.push(z.re);
            coords.push(z.im);
        }
        Self { coords }
    }

    /// Complex dimension n.
    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    /// Real dimension 2n.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The j-th complex coordinate (0-based).
    pub fn z(&self, j: usize) -> C64 {
        C64::new(self.coords[2 * j], self.coords[2 * j + 1])
    }

    pub fn to_cvector(&self) -> DVector<C64> {
        DVector::from_iterator(self.n(), (0..self.n()).map(|j| self.z(j)))
    }

    pub fn from_cvector(v: &DVector<C64>) -> Self {
        let mut coords = Vec::with_capacity(2 * v.len());
        for z in v.iter() {
            coords.push(z.re);
            coords.push(z.im);
        }
        Self { coords }
    }

    /// Squared Euclidean norm, accumulated per complex coordinate so that
    /// axis permutations and quarter rotations of C^2 points are bit-exact.
    pub fn norm_sq(&self) -> f64 {
        let mut total = 0.0;
        for j in 0..self.n() {
            let x = self.coords[2 * j];
            let y = self.coords[2 * j + 1];
            total += x * x + y * y;
        }
        total
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Max complex-coordinate modulus (polydisc norm).
    pub fn sup_norm(&self) -> f64 {
        (0..self.n())
            .map(|j| self.z(j).norm())
            .fold(0.0_f64, f64::max)
    }

    pub fn dist(&self, other: &CPoint) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        let mut total = 0.0;
        for j in 0..self.n() {
            let dx = self.coords[2 * j] - other.coords[2 * j];
            let dy = self.coords[2 * j + 1] - other.coords[2 * j + 1];
            total += dx * dx + dy * dy;
        }
        total.sqrt()
    }

    /// Copy with one real coordinate shifted by `delta`; used by finite
    /// difference stencils.
    pub fn offset(&self, axis: usize, delta: f64) -> CPoint {
        let mut coords = self.coords.clone();
        coords[axis] += delta;
        Self { coords }
    }
}
