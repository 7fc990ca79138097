//! Point cloud ingestion, normalization, and neighborhood queries.
//!
//! A [`PointCloud`] is a non-empty set of `d`-dimensional points (`d` in
//! {2, 3}) with optional *unoriented* unit normals: the sign of each normal
//! is arbitrary and every consumer in this crate compares normals up to
//! sign. Clouds are normalized so that the longest bounding-box axis spans
//! exactly `[-0.9, +0.9]` before any downstream stage runs.

mod knn;

pub mod io;

pub use knn::{KnnIndex, Neighbor};

use crate::math;

/// How many nearest neighbors the sampling-density estimate looks at.
pub const DENSITY_NEIGHBOR: usize = 50;

/// Default neighborhood size for the PCA normal fallback.
pub const DEFAULT_NORMAL_K: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum PointCloudError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("dimension mismatch: expected {expected} values per record, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate extent: all points coincide")]
    DegenerateExtent,
    #[error("normal estimation needs more than {needed} points, cloud has {available}")]
    InsufficientNeighbors { needed: usize, available: usize },
    #[error("degenerate neighborhood around point {index}: normal direction is ill-defined")]
    DegenerateNeighborhood { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An unoriented point cloud in `D` dimensions.
#[derive(Debug, Clone)]
pub struct PointCloud<const D: usize> {
    points: Vec<[f64; D]>,
    normals: Option<Vec<[f64; D]>>,
}

impl<const D: usize> PointCloud<D> {
    /// Builds a cloud, unit-normalizing any provided normals.
    ///
    /// Fails on an empty point list, a normal list of mismatched length, or
    /// a zero-length normal.
    pub fn new(
        points: Vec<[f64; D]>,
        normals: Option<Vec<[f64; D]>>,
    ) -> Result<Self, PointCloudError> {
        if points.is_empty() {
            return Err(PointCloudError::EmptyCloud);
        }
        let normals = match normals {
            None => None,
            Some(raw) => {
                if raw.len() != points.len() {
                    return Err(PointCloudError::DimensionMismatch {
                        expected: points.len(),
                        found: raw.len(),
                    });
                }
                let mut unit = Vec::with_capacity(raw.len());
                for (i, n) in raw.iter().enumerate() {
                    match math::normalized(n) {
                        Some(u) => unit.push(u),
                        None => {
                            return Err(PointCloudError::Parse {
                                path: String::new(),
                                line: i,
                                msg: "zero-length normal".into(),
                            })
                        }
                    }
                }
                Some(unit)
            }
        };
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[[f64; D]]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Drops the normal channel (used by the ablation paths).
    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bounds(&self) -> ([f64; D], [f64; D]) {
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for p in &self.points {
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Builds a k-nearest-neighbor index over the current points.
    pub fn index(&self) -> KnnIndex<D> {
        KnnIndex::build(&self.points)
    }

    /// Nearest cloud point to `q`: returns the Euclidean distance, the
    /// point, and its unoriented normal when the cloud carries normals.
    /// Ties are broken towards the lowest point index.
    pub fn nearest_with_normal(
        &self,
        index: &KnnIndex<D>,
        q: &[f64; D],
    ) -> (f64, [f64; D], Option<[f64; D]>) {
        let hit = index.nearest(q);
        let normal = self.normals.as_ref().map(|ns| ns[hit.index]);
        (hit.distance, self.points[hit.index], normal)
    }
}

/// Uniform scale plus translation mapping raw coordinates into the
/// normalized cube and back: `normalized = (raw - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform<const D: usize> {
    pub scale: f64,
    pub offset: [f64; D],
}

impl<const D: usize> NormalizationTransform<D> {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: [0.0; D],
        }
    }

    #[inline]
    pub fn to_normalized(&self, p: &[f64; D]) -> [f64; D] {
        math::scale(&math::sub(p, &self.offset), self.scale)
    }

    #[inline]
    pub fn to_raw(&self, p: &[f64; D]) -> [f64; D] {
        math::add(&math::scale(p, 1.0 / self.scale), &self.offset)
    }
}

/// Half-extent of the normalized cube: the longest bounding-box axis of a
/// normalized cloud spans `[-CUBE_HALF_EXTENT, +CUBE_HALF_EXTENT]`.
pub const CUBE_HALF_EXTENT: f64 = 0.9;

/// Centers the cloud and uniformly scales it so the longest axis spans
/// exactly `[-0.9, +0.9]`. Aspect ratio is preserved and normals are left
/// untouched (a uniform scale does not rotate them).
pub fn normalize_to_cube<const D: usize>(
    pc: &PointCloud<D>,
) -> Result<(PointCloud<D>, NormalizationTransform<D>), PointCloudError> {
    let (lo, hi) = pc.bounds();
    let mut center = [0.0; D];
    let mut extent: f64 = 0.0;
    for a in 0..D {
        center[a] = 0.5 * (lo[a] + hi[a]);
        extent = extent.max(hi[a] - lo[a]);
    }
    if extent <= 0.0 {
        return Err(PointCloudError::DegenerateExtent);
    }
    let transform = NormalizationTransform {
        scale: 2.0 * CUBE_HALF_EXTENT / extent,
        offset: center,
    };
    let points = pc
        .points
        .iter()
        .map(|p| transform.to_normalized(p))
        .collect();
    Ok((
        PointCloud {
            points,
            normals: pc.normals.clone(),
        },
        transform,
    ))
}

/// Mean distance from each point to its 50th nearest neighbor, excluding
/// the point itself. Clouds with at most 50 points fall back to the
/// `(n - 1)`-th neighbor so small fixtures stay usable.
pub fn density_indicator<const D: usize>(
    pc: &PointCloud<D>,
    index: &KnnIndex<D>,
) -> Result<f64, PointCloudError> {
    let n = pc.len();
    if n < 2 {
        return Err(PointCloudError::EmptyCloud);
    }
    let k = DENSITY_NEIGHBOR.min(n - 1);
    let mut total = 0.0;
    for (i, p) in pc.points.iter().enumerate() {
        // Query one extra so the point itself can be dropped.
        let hits = index.knn(p, k + 1);
        let dist = hits
            .iter()
            .filter(|h| h.index != i)
            .nth(k - 1)
            .map(|h| h.distance)
            // More than k coincident copies: the k-th other point is at 0.
            .unwrap_or(0.0);
        total += dist;
    }
    Ok(total / n as f64)
}

/// Estimates unoriented normals as the smallest-eigenvalue eigenvector of
/// each point's local covariance over its `k` nearest neighbors.
///
/// The sign of each normal is arbitrary. Fails with
/// [`PointCloudError::DegenerateNeighborhood`] when the two smallest
/// eigenvalues coincide (e.g. collinear points) and the direction is
/// ill-defined.
pub fn estimate_unoriented_normals<const D: usize>(
    pc: &PointCloud<D>,
    index: &KnnIndex<D>,
    k: usize,
) -> Result<PointCloud<D>, PointCloudError> {
    let min_k = D; // need at least d neighbors to span a (d-1)-plane plus its normal
    if k < min_k || pc.len() <= k {
        return Err(PointCloudError::InsufficientNeighbors {
            needed: k.max(min_k),
            available: pc.len(),
        });
    }
    let mut normals = Vec::with_capacity(pc.len());
    for (i, p) in pc.points.iter().enumerate() {
        let hits = index.knn(p, k + 1);
        let neighbors: Vec<usize> = hits
            .iter()
            .filter(|h| h.index != i)
            .take(k)
            .map(|h| h.index)
            .collect();
        let mut mean = [0.0; D];
        for &j in &neighbors {
            mean = math::add(&mean, &pc.points[j]);
        }
        mean = math::scale(&mean, 1.0 / neighbors.len() as f64);
        let mut cov = [[0.0; D]; D];
        for &j in &neighbors {
            let d = math::sub(&pc.points[j], &mean);
            for r in 0..D {
                for c in 0..D {
                    cov[r][c] += d[r] * d[c];
                }
            }
        }
        let inv = 1.0 / neighbors.len() as f64;
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let (vals, vecs) = math::symmetric_eigen(cov);
        if vals[1] - vals[0] <= 1e-9 * vals[D - 1].max(1.0) {
            return Err(PointCloudError::DegenerateNeighborhood { index: i });
        }
        normals.push(vecs[0]);
    }
    Ok(PointCloud {
        points: pc.points.clone(),
        normals: Some(normals),
    })
}
