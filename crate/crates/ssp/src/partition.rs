//! Voxelization of `[-1, 1]^d` and sign-known / sign-uncertain labeling.
//!
//! The grid is cubic with a per-axis resolution `N` derived from the cloud's
//! sampling density. A breadth-first flood fill seeded at empty boundary
//! voxels grows the *sign-known* region: a voxel joins it only if neither
//! the voxel nor any face neighbor contains a cloud point, so the fill
//! always halts one voxel short of occupied space. Everything else,
//! including any enclosed cavity, stays *sign-uncertain*.

use std::collections::VecDeque;

use bitvec::vec::BitVec;

use crate::pointcloud::PointCloud;

/// Resolution bounds: the density formula is unbounded, so the result is
/// clamped to keep memory finite and the margin `epsilon = 1/N` meaningful.
pub const MIN_RESOLUTION: usize = 10;
pub const MAX_RESOLUTION: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error("density indicator must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("voxel id {0:?} out of range for resolution {1}")]
    OutOfRange(String, usize),
}

/// Region label of a voxel after partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// Provably outside the shape (reachable from the boundary).
    Known,
    /// Sign not determined; includes every occupied voxel.
    Uncertain,
}

/// Lattice coordinates of one voxel, each in `0..N`.
pub type VoxelId<const D: usize> = [usize; D];

/// Cubic occupancy grid over `[-1, 1]^D` with optional region labels.
#[derive(Debug, Clone)]
pub struct VoxelGrid<const D: usize> {
    resolution: usize,
    occupancy: BitVec,
    /// Bit set when the voxel is sign-known; only meaningful after
    /// [`partition_space`] ran.
    known: BitVec,
    partitioned: bool,
    /// Set when no empty boundary voxel existed and the whole grid
    /// degraded to sign-uncertain.
    degenerate: bool,
}

/// Grid resolution from the density indicator:
/// `N = 10 * round(1 / (1.5 * density * 10))`, clamped to
/// `[MIN_RESOLUTION, MAX_RESOLUTION]` and kept divisible by 10.
pub fn grid_resolution(density: f64) -> Result<usize, PartitionError> {
    if !(density > 0.0) {
        return Err(PartitionError::NonPositiveDensity(density));
    }
    let raw = 10.0 * (1.0 / (1.5 * density * 10.0)).round();
    let n = if raw.is_finite() { raw as i64 } else { i64::MAX };
    let n = n.max(MIN_RESOLUTION as i64) as usize;
    // 512 itself is not divisible by 10; the largest admissible value is 510.
    Ok(n.min(MAX_RESOLUTION / 10 * 10))
}

/// Marks every voxel whose half-open cell contains at least one point.
/// Points exactly on the `+1.0` face map into the last cell.
pub fn build_voxel_grid<const D: usize>(pc: &PointCloud<D>, resolution: usize) -> VoxelGrid<D> {
    assert!(resolution >= 2, "resolution must be at least 2");
    let mut grid = VoxelGrid::empty(resolution);
    for p in pc.points() {
        let id = grid.voxel_of(p);
        let lin = grid.linear(&id);
        grid.occupancy.set(lin, true);
    }
    grid
}

/// Boundary-seeded flood fill assigning [`Label::Known`] to empty voxels
/// reachable from the grid boundary without touching occupied space.
///
/// If every boundary voxel is occupied the grid degrades to all-uncertain
/// and the returned grid reports [`VoxelGrid::is_degenerate`].
pub fn partition_space<const D: usize>(grid: &VoxelGrid<D>) -> VoxelGrid<D> {
    let seeds: Vec<usize> = grid
        .boundary_voxels()
        .filter(|&lin| !grid.occupancy[lin])
        .collect();
    let mut out = grid.clone();
    out.partitioned = true;
    if seeds.is_empty() {
        out.degenerate = true;
        log::warn!("no unoccupied boundary voxel; whole grid labeled sign-uncertain");
        return out;
    }
    out.known = flood_fill(grid, seeds);
    out
}

/// BFS core, separated so tests can shuffle the seed order.
pub(crate) fn flood_fill<const D: usize>(grid: &VoxelGrid<D>, seeds: Vec<usize>) -> BitVec {
    let total = grid.voxel_count();
    let mut known: BitVec = BitVec::repeat(false, total);
    let mut visited: BitVec = BitVec::repeat(false, total);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for s in seeds {
        if !visited[s] {
            visited.set(s, true);
            queue.push_back(s);
        }
    }
    while let Some(lin) = queue.pop_front() {
        // Stop rule: the voxel itself or any face neighbor holds a point.
        if grid.occupancy[lin] {
            continue;
        }
        let id = grid.unlinear(lin);
        let mut blocked = false;
        grid.for_each_face_neighbor(&id, |nlin| {
            blocked |= grid.occupancy[nlin];
        });
        if blocked {
            continue;
        }
        known.set(lin, true);
        grid.for_each_face_neighbor(&id, |nlin| {
            if !visited[nlin] {
                visited.set(nlin, true);
                queue.push_back(nlin);
            }
        });
    }
    known
}

impl<const D: usize> VoxelGrid<D> {
    fn empty(resolution: usize) -> Self {
        let total = resolution.pow(D as u32);
        Self {
            resolution,
            occupancy: BitVec::repeat(false, total),
            known: BitVec::repeat(false, total),
            partitioned: false,
            degenerate: false,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Cell edge length, `2 / N`.
    pub fn edge(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    /// Signed-loss margin `epsilon = 1/N`.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn voxel_count(&self) -> usize {
        self.resolution.pow(D as u32)
    }

    pub fn is_partitioned(&self) -> bool {
        self.partitioned
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Linear index with x fastest: `i + N*(j + N*k)`.
    #[inline]
    pub fn linear(&self, id: &VoxelId<D>) -> usize {
        let mut lin = 0usize;
        for a in (0..D).rev() {
            debug_assert!(id[a] < self.resolution);
            lin = lin * self.resolution + id[a];
        }
        lin
    }

    #[inline]
    pub fn unlinear(&self, mut lin: usize) -> VoxelId<D> {
        let mut id = [0usize; D];
        for slot in id.iter_mut() {
            *slot = lin % self.resolution;
            lin /= self.resolution;
        }
        id
    }

    /// Voxel containing `p`; cells are half-open, the `+1.0` face belongs
    /// to the last cell.
    #[inline]
    pub fn voxel_of(&self, p: &[f64; D]) -> VoxelId<D> {
        let mut id = [0usize; D];
        for a in 0..D {
            let cell = ((p[a] + 1.0) / self.edge()).floor();
            id[a] = (cell.max(0.0) as usize).min(self.resolution - 1);
        }
        id
    }

    pub fn is_occupied(&self, id: &VoxelId<D>) -> bool {
        self.occupancy[self.linear(id)]
    }

    pub fn label(&self, id: &VoxelId<D>) -> Label {
        if self.known[self.linear(id)] {
            Label::Known
        } else {
            Label::Uncertain
        }
    }

    pub fn label_linear(&self, lin: usize) -> Label {
        if self.known[lin] {
            Label::Known
        } else {
            Label::Uncertain
        }
    }

    /// Center of the voxel's cell.
    pub fn voxel_center(&self, id: &VoxelId<D>) -> Result<[f64; D], PartitionError> {
        let mut c = [0.0; D];
        for a in 0..D {
            if id[a] >= self.resolution {
                return Err(PartitionError::OutOfRange(
                    format!("{:?}", id.as_slice()),
                    self.resolution,
                ));
            }
            c[a] = -1.0 + (id[a] as f64 + 0.5) * self.edge();
        }
        Ok(c)
    }

    /// Low corner of the voxel's cell.
    pub fn voxel_lo(&self, id: &VoxelId<D>) -> [f64; D] {
        std::array::from_fn(|a| -1.0 + id[a] as f64 * self.edge())
    }

    /// Linear indices of occupied voxels, ascending.
    pub fn occupied_voxels(&self) -> Vec<usize> {
        self.occupancy.iter_ones().collect()
    }

    /// Linear indices of sign-known voxels, ascending.
    pub fn known_voxels(&self) -> Vec<usize> {
        self.known.iter_ones().collect()
    }

    /// Linear indices of sign-uncertain voxels, ascending.
    pub fn uncertain_voxels(&self) -> Vec<usize> {
        self.known.iter_zeros().collect()
    }

    fn boundary_voxels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.voxel_count()).filter(move |&lin| {
            let id = self.unlinear(lin);
            id.iter().any(|&c| c == 0 || c == self.resolution - 1)
        })
    }

    #[inline]
    fn for_each_face_neighbor(&self, id: &VoxelId<D>, mut f: impl FnMut(usize)) {
        for a in 0..D {
            if id[a] > 0 {
                let mut n = *id;
                n[a] -= 1;
                f(self.linear(&n));
            }
            if id[a] + 1 < self.resolution {
                let mut n = *id;
                n[a] += 1;
                f(self.linear(&n));
            }
        }
    }

    /// Test-support constructor from an explicit occupancy set.
    pub fn from_occupied(resolution: usize, occupied: &[VoxelId<D>]) -> Self {
        let mut grid = Self::empty(resolution);
        for id in occupied {
            let lin = grid.linear(id);
            grid.occupancy.set(lin, true);
        }
        grid
    }

    /// Debug export: one byte per voxel in x-fastest order (0 = known,
    /// 1 = uncertain) prefixed by a one-line ASCII header `ssp-mask d N`.
    pub fn write_label_mask(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "ssp-mask {} {}", D, self.resolution)?;
        let bytes: Vec<u8> = (0..self.voxel_count())
            .map(|lin| if self.known[lin] { 0u8 } else { 1u8 })
            .collect();
        out.write_all(&bytes)?;
        out.flush()
    }
}
