//! Neural signed-distance-field fitting for unoriented point clouds.
//!
//! The pipeline optimizes a coordinate MLP so that its zero-level set
//! reconstructs the surface sampled by an input point cloud, without
//! requiring consistently oriented normals:
//!
//! - [`pointcloud`]: ingestion (`.xyz`/`.ply`), cube normalization,
//!   k-nearest-neighbor queries, and PCA fallback normals.
//! - [`partition`]: voxelization of `[-1, 1]^d` and a boundary-seeded flood
//!   fill that splits space into sign-known (provably outside) and
//!   sign-uncertain regions.
//! - [`field`]: the MLP with progressive positional encoding, geometric
//!   sphere initialization, and exact input/parameter gradients.
//! - [`losses`]: unsigned distance/derivative terms, Eikonal regularization,
//!   and the signed hinge applied in the sign-known region.
//! - [`sampler`]: per-voxel running-mean loss tracking and importance
//!   sampling of training batches.
//! - [`trainer`]: the Adam loop with learning-rate schedule, CSV logging,
//!   and binary checkpoints.
//! - [`extract`]: marching cubes (3D) / marching squares (2D) plus mesh,
//!   contour, and raster writers.
//! - [`metrics`]: L1 Chamfer distance, normal consistency, and F-score
//!   between a reconstruction and ground truth.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `ssp` binary exposes the same flow as `fit`, `extract`, `eval`, and
//! `demo2d` subcommands.

pub mod config;
pub mod demo2d;
pub mod extract;
pub mod field;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod partition;
pub mod pointcloud;
pub mod sampler;
pub mod trainer;

mod ply;

pub use partition::VoxelGrid;
pub use pointcloud::{KnnIndex, NormalizationTransform, PointCloud};
