use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{CPoint, ChartBox, VoxelSet};

type PredFn = dyn Fn(&CPoint) -> bool + Send + Sync;

/// The ambient manifold restricted to one chart: a chart box, the voxels
/// that belong to the manifold, and optionally an exact membership
/// predicate for analytic ambients (balls, complements, ...).
#[derive(Clone)]
pub struct AmbientDomain {
    chart: Arc<ChartBox>,
    allowed: VoxelSet,
    predicate: Option<Arc<PredFn>>,
    allowed_is_full: bool,
}

impl std::fmt::Debug for AmbientDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AmbientDomain")
            .field("allowed", &self.allowed.count())
            .field("analytic", &self.predicate.is_some())
            .finish()
    }
}

impl AmbientDomain {
    pub fn new(allowed: VoxelSet) -> Self {
        let chart = allowed.chart().clone();
        let allowed_is_full = allowed.count() == chart.cell_count();
        Self { chart, allowed, predicate: None, allowed_is_full }
    }

    /// The whole chart box.
    pub fn full_box(chart: Arc<ChartBox>) -> Self {
        Self::new(VoxelSet::full(chart))
    }

    pub fn with_predicate<P>(mut self, predicate: P) -> Self
    where
        P: Fn(&CPoint) -> bool + Send + Sync + 'static,
    {
        self.predicate = Some(Arc::new(predicate));
        self
    }

    pub fn chart(&self) -> &Arc<ChartBox> {
        &self.chart
    }

    pub fn allowed(&self) -> &VoxelSet {
        &self.allowed
    }

    pub fn allowed_is_full(&self) -> bool {
        self.allowed_is_full
    }

    pub fn has_predicate(&self) -> bool {
        self.predicate.is_some()
    }

    /// Exact membership when a predicate is present, voxel membership
    /// otherwise. Points outside the chart box are never members.
    pub fn contains_point(&self, p: &CPoint) -> bool {
        if !self.chart.contains(p) {
            return false;
        }
        match &self.predicate {
            Some(pred) => pred(p),
            None => self.chart.cell_of(p).map_or(false, |i| self.allowed.contains(i)),
        }
    }

    pub fn contains_cell(&self, idx: usize) -> bool {
        self.allowed.contains(idx)
    }

    pub fn check_chart(&self, other: &VoxelSet) -> Result<()> {
        if self.chart == *other.chart() {
            Ok(())
        } else {
            Err(Error::BoxMismatch)
        }
    }
}
