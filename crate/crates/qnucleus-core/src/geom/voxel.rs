use std::path::Path;
use std::sync::Arc;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CPoint, ChartBox};

/// How `voxelize` decides cell membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelizeMode {
    /// Mark a cell iff its center satisfies the predicate.
    Centers,
    /// Mark a cell iff all 2^{2n} corners and the center satisfy it.
    Conservative,
}

/// Boolean occupancy over the grid of one chart box.
///
/// All binary operations require bit-identical boxes; there is no
/// resampling between grids.
#[derive(Clone, Debug)]
pub struct VoxelSet {
    chart: Arc<ChartBox>,
    bits: BitVec<u64, Lsb0>,
}

impl PartialEq for VoxelSet {
    fn eq(&self, other: &Self) -> bool {
        self.chart == other.chart && self.bits == other.bits
    }
}

impl VoxelSet {
    pub fn empty(chart: Arc<ChartBox>) -> Self {
        let len = chart.cell_count();
        Self { chart, bits: bitvec![u64, Lsb0; 0; len] }
    }

    pub fn full(chart: Arc<ChartBox>) -> Self {
        let len = chart.cell_count();
        Self { chart, bits: bitvec![u64, Lsb0; 1; len] }
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        &self.chart
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.bits.set(idx, value);
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    fn check_same_chart(&self, other: &VoxelSet) -> Result<()> {
        if self.chart == other.chart {
            Ok(())
        } else {
            Err(Error::BoxMismatch)
        }
    }

    pub fn union(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.check_same_chart(other)?;
        let mut bits = self.bits.clone();
        bits |= &other.bits;
        Ok(VoxelSet { chart: self.chart.clone(), bits })
    }

    pub fn intersection(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.check_same_chart(other)?;
        let mut bits = self.bits.clone();
        bits &= &other.bits;
        Ok(VoxelSet { chart: self.chart.clone(), bits })
    }

    pub fn difference(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.check_same_chart(other)?;
        let mut bits = self.bits.clone();
        for i in other.bits.iter_ones() {
            bits.set(i, false);
        }
        Ok(VoxelSet { chart: self.chart.clone(), bits })
    }

    pub fn is_subset(&self, other: &VoxelSet) -> Result<bool> {
        self.check_same_chart(other)?;
        Ok(self.bits.iter_ones().all(|i| other.bits[i]))
    }

    pub fn intersects(&self, other: &VoxelSet) -> Result<bool> {
        self.check_same_chart(other)?;
        Ok(self.bits.iter_ones().any(|i| other.bits[i]))
    }

    /// Occupied cells with at least one face-adjacent unoccupied or
    /// out-of-box neighbor (morphological boundary).
    pub fn boundary(&self) -> VoxelSet {
        let chart = &self.chart;
        let mut out = VoxelSet::empty(chart.clone());
        let res = chart.resolution();
        for idx in self.bits.iter_ones() {
            let multi = chart.multi_index(idx);
            let mut on_edge = false;
            'axes: for d in 0..chart.dim() {
                for delta in [-1isize, 1] {
                    let v = multi[d] as isize + delta;
                    if v < 0 || v >= res[d] as isize {
                        on_edge = true;
                        break 'axes;
                    }
                    let mut m = multi.clone();
                    m[d] = v as usize;
                    if !self.bits[chart.linear_index(&m)] {
                        on_edge = true;
                        break 'axes;
                    }
                }
            }
            if on_edge {
                out.bits.set(idx, true);
            }
        }
        out
    }

    /// One face-adjacent dilation step, applied `steps` times.
    pub fn dilate(&self, steps: usize) -> VoxelSet {
        let chart = &self.chart;
        let res = chart.resolution();
        let mut current = self.bits.clone();
        for _ in 0..steps {
            let mut next = current.clone();
            for idx in current.iter_ones() {
                let multi = chart.multi_index(idx);
                for d in 0..chart.dim() {
                    for delta in [-1isize, 1] {
                        let v = multi[d] as isize + delta;
                        if v < 0 || v >= res[d] as isize {
                            continue;
                        }
                        let mut m = multi.clone();
                        m[d] = v as usize;
                        next.set(chart.linear_index(&m), true);
                    }
                }
            }
            current = next;
        }
        VoxelSet { chart: chart.clone(), bits: current }
    }

    /// Remove the morphological boundary.
    pub fn erode(&self) -> VoxelSet {
        let b = self.boundary();
        self.difference(&b).expect("same chart")
    }

    /// Run-length encode: alternating run lengths starting with the 0-run,
    /// in linear index order.
    pub fn to_runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for bit in self.bits.iter().by_vals() {
            if bit == current {
                len += 1;
            } else {
                runs.push(len);
                current = bit;
                len = 1;
            }
        }
        runs.push(len);
        if runs.len() == 1 && !current {
            // all zeros: canonical form is a single 0-run
        }
        runs
    }

    pub fn from_runs(chart: Arc<ChartBox>, runs: &[usize]) -> Result<VoxelSet> {
        let total: usize = runs.iter().sum();
        if total != chart.cell_count() {
            return Err(Error::Geometry(format!(
                "run lengths sum to {total}, expected {}",
                chart.cell_count()
            )));
        }
        let mut set = VoxelSet::empty(chart);
        let mut pos = 0usize;
        for (i, &run) in runs.iter().enumerate() {
            if i % 2 == 1 {
                for j in pos..pos + run {
                    set.bits.set(j, true);
                }
            }
            pos += run;
        }
        Ok(set)
    }

    pub fn to_file_format(&self) -> VoxelFile {
        VoxelFile {
            dimension: self.chart.n(),
            lower: self.chart.lower().to_vec(),
            upper: self.chart.upper().to_vec(),
            resolution: self.chart.resolution().to_vec(),
            encoding: "rle".into(),
            runs: self.to_runs(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_file_format())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VoxelSet> {
        let data = std::fs::read_to_string(path)?;
        let file: VoxelFile = serde_json::from_str(&data)?;
        file.into_voxel_set()
    }
}

/// Serialized form: JSON header plus run-length encoded occupancy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoxelFile {
    pub dimension: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
    pub encoding: String,
    pub runs: Vec<usize>,
}

impl VoxelFile {
    pub fn into_voxel_set(self) -> Result<VoxelSet> {
        if self.encoding != "rle" {
            return Err(Error::Geometry(format!("unknown encoding '{}'", self.encoding)));
        }
        let chart = ChartBox::new(self.lower, self.upper, self.resolution)?;
        if chart.n() != self.dimension {
            return Err(Error::Geometry("declared dimension disagrees with box".into()));
        }
        VoxelSet::from_runs(Arc::new(chart), &self.runs)
    }
}

/// Mark cells of `chart` satisfying `predicate` under the given mode.
pub fn voxelize<F>(predicate: F, chart: Arc<ChartBox>, mode: VoxelizeMode) -> VoxelSet
where
    F: Fn(&CPoint) -> bool + Sync,
{
    let mut set = VoxelSet::empty(chart.clone());
    use rayon::prelude::*;
    let hits: Vec<usize> = (0..chart.cell_count())
        .into_par_iter()
        .filter(|&idx| {
            let center_ok = predicate(&chart.cell_center(idx));
            match mode {
                VoxelizeMode::Centers => center_ok,
                VoxelizeMode::Conservative => {
                    center_ok && chart.cell_corners(idx).iter().all(|c| predicate(c))
                }
            }
        })
        .collect();
    for idx in hits {
        set.set(idx, true);
    }
    set
}
