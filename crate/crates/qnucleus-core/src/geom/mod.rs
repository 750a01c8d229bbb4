//! Chart geometry over C^n ≅ R^{2n}.
//!
//! Every value lives on one real coordinate chart with the fixed coordinate
//! order (x1, y1, ..., xn, yn), z_j = x_j + i y_j. Compact sets are
//! represented as boolean occupancy grids over a chart box; all set
//! operations require an identical box so indices never alias.

mod affine;
mod ambient;
mod field;
mod grid;
mod point;
mod voxel;

pub use affine::{transform_point, transform_point_inverse, AffineMap};
pub use ambient::AmbientDomain;
pub use field::{MaxField, ScalarField};
pub use grid::ChartBox;
pub use point::CPoint;
pub use voxel::{voxelize, VoxelSet, VoxelizeMode};
