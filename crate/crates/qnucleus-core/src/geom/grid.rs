use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::CPoint;

/// A rectangular box in R^{2n} carrying a regular grid.
///
/// Linear voxel indices are row-major with axis 0 fastest: index =
/// sum_d multi[d] * stride[d], stride[0] = 1, stride[d] = stride[d-1] *
/// resolution[d-1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl ChartBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || d % 2 != 0 {
            return Err(Error::Geometry(format!(
                "box dimension {d} is not a positive even number"
            )));
        }
        if upper.len() != d || resolution.len() != d {
            return Err(Error::Geometry("box field lengths disagree".into()));
        }
        for i in 0..d {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::Geometry("non-finite box bound".into()));
            }
            if lower[i] >= upper[i] {
                return Err(Error::Geometry(format!(
                    "degenerate box: lower[{i}] = {} >= upper[{i}] = {}",
                    lower[i], upper[i]
                )));
            }
            if resolution[i] == 0 {
                return Err(Error::Geometry(format!("zero resolution on axis {i}")));
            }
        }
        Ok(Self { lower, upper, resolution })
    }

    /// Cube helper: same bound and resolution on every axis of C^n.
    pub fn cube(n: usize, half_width: f64, cells_per_axis: usize) -> Result<Self> {
        Self::new(
            vec![-half_width; 2 * n],
            vec![half_width; 2 * n],
            vec![cells_per_axis; 2 * n],
        )
    }

    pub fn n(&self) -> usize {
        self.lower.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.resolution[axis] as f64
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|d| self.width(d)).collect()
    }

    /// Full cell diagonal length.
    pub fn cell_diagonal(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &CPoint) -> bool {
        p.coords()
            .iter()
            .enumerate()
            .all(|(d, &c)| c >= self.lower[d] && c <= self.upper[d])
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for d in 0..self.dim() {
            debug_assert!(multi[d] < self.resolution[d]);
            idx += multi[d] * stride;
            stride *= self.resolution[d];
        }
        idx
    }

    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for d in 0..self.dim() {
            multi[d] = linear % self.resolution[d];
            linear /= self.resolution[d];
        }
        multi
    }

    pub fn cell_center(&self, linear: usize) -> CPoint {
        let multi = self.multi_index(linear);
        let coords = (0..self.dim())
            .map(|d| self.lower[d] + (multi[d] as f64 + 0.5) * self.width(d))
            .collect();
        CPoint::from_raw(coords)
    }

    /// The 2^{2n} corners of a cell.
    pub fn cell_corners(&self, linear: usize) -> Vec<CPoint> {
        let multi = self.multi_index(linear);
        let dim = self.dim();
        let mut out = Vec::with_capacity(1 << dim);
        for mask in 0..(1usize << dim) {
            let coords = (0..dim)
                .map(|d| {
                    let lo = self.lower[d] + multi[d] as f64 * self.width(d);
                    if mask >> d & 1 == 1 {
                        lo + self.width(d)
                    } else {
                        lo
                    }
                })
                .collect();
            out.push(CPoint::from_raw(coords));
        }
        out
    }

    /// Cell containing a point, or None outside the box. Points exactly on
    /// the upper face are assigned to the last cell.
    pub fn cell_of(&self, p: &CPoint) -> Option<usize> {
        let mut multi = vec![0usize; self.dim()];
        for d in 0..self.dim() {
            let c = p.coords()[d];
            if c < self.lower[d] || c > self.upper[d] {
                return None;
            }
            let i = ((c - self.lower[d]) / self.width(d)).floor() as isize;
            multi[d] = i.clamp(0, self.resolution[d] as isize - 1) as usize;
        }
        Some(self.linear_index(&multi))
    }

    /// Inclusive index window of cells whose extent intersects [lo, hi] on
    /// one axis; None if the interval misses the box.
    pub fn axis_window(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        if hi < self.lower[axis] || lo > self.upper[axis] {
            return None;
        }
        let w = self.width(axis);
        let i0 = (((lo - self.lower[axis]) / w).floor() as isize).clamp(0, self.resolution[axis] as isize - 1);
        let i1 = (((hi - self.lower[axis]) / w).floor() as isize).clamp(0, self.resolution[axis] as isize - 1);
        Some((i0 as usize, i1 as usize))
    }

    /// All cell centers as one flat row-major array (index * dim + axis);
    /// shared cache for bulk scans.
    pub fn all_centers_flat(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut data = vec![0.0; self.cell_count() * dim];
        for idx in 0..self.cell_count() {
            let c = self.cell_center(idx);
            data[idx * dim..(idx + 1) * dim].copy_from_slice(c.coords());
        }
        data
    }

    /// Iterate linear indices of the sub-grid given by per-axis inclusive
    /// windows.
    pub fn window_indices(&self, windows: &[(usize, usize)]) -> Vec<usize> {
        debug_assert_eq!(windows.len(), self.dim());
        let mut out = Vec::new();
        let mut multi: Vec<usize> = windows.iter().map(|w| w.0).collect();
        loop {
            out.push(self.linear_index(&multi));
            let mut d = 0;
            loop {
                if d == self.dim() {
                    return out;
                }
                if multi[d] < windows[d].1 {
                    multi[d] += 1;
                    break;
                }
                multi[d] = windows[d].0;
                d += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_indices() {
        let b = ChartBox::new(
            vec![-1.0, -1.0, -2.0, -2.0],
            vec![1.0, 1.0, 2.0, 2.0],
            vec![4, 5, 6, 7],
        )
        .unwrap();
        for linear in [0, 1, 99, b.cell_count() - 1] {
            assert_eq!(b.linear_index(&b.multi_index(linear)), linear);
        }
        assert_eq!(b.cell_count(), 4 * 5 * 6 * 7);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(ChartBox::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![2, 2]).is_err());
        assert!(ChartBox::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![2, 0]).is_err());
        assert!(ChartBox::new(vec![0.0], vec![1.0], vec![2]).is_err());
    }

    #[test]
    fn centers_and_cells_agree() {
        let b = ChartBox::cube(1, 1.0, 8).unwrap();
        for i in 0..b.cell_count() {
            let c = b.cell_center(i);
            assert_eq!(b.cell_of(&c), Some(i));
        }
    }

    #[test]
    fn corners_count() {
        let b = ChartBox::cube(2, 1.0, 3).unwrap();
        assert_eq!(b.cell_corners(0).len(), 16);
    }
}
