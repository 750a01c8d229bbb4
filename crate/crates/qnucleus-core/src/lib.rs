//! Numerical laboratory for q-convexity on voxelized charts of C^n.
//!
//! The crate classifies Levi forms of q-convex functions, approximates the
//! q-nucleus of compact voxel sets by greedy spherical-hat cutting, builds
//! q-convex-with-corners functions from emptying cut sequences by
//! max-gluing scaled hat bumps, and cross-checks everything with
//! independent pseudoconvexity probes (hat fills, analytic disc sweeps,
//! Hartogs figures, the local maximum principle and exhaustion tests).

pub mod error;
pub mod geom;
pub mod bump;
pub mod cuts;
pub mod glue;
pub mod hats;
pub mod levi;
pub mod verify;
mod linalg;

pub use cuts::{
    apply_cut, apply_sequence, approximate_nucleus, intersect_in_family, is_valid_cut,
    monotonicity_check, nucleus_closed, CutRecord, CutSequence, NucleusResult,
};
pub use error::{Error, Result};
pub use geom::{
    voxelize, AffineMap, AmbientDomain, CPoint, ChartBox, MaxField, ScalarField, VoxelSet,
    VoxelizeMode,
};
pub use bump::{hat_bump, phi_tilde, psi_r, theta, validate_bump, BumpParams, BumpReport};
pub use glue::{
    build_q_convex, certify_constructed, choose_scaling, evaluate_constructed, glue_pair,
    BuildParams, CertifyReport, ConstructedFunction, EmptyingSequence, GlueRegion,
};
pub use hats::{Family, HartogsFigure, HatFamily, HatPair, HatRegion, HatVoxelization};
pub use verify::{DiscFamily, DomainSpec, ProbeOutcome, Verdict};
pub use levi::{ConvexityClass, HermitianForm, ScanOptions, ScanReport, Signature};
pub use linalg::C64;
