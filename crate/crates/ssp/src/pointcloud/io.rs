//! Point cloud file I/O.
//!
//! `.xyz` files are whitespace-separated ASCII with one point per row:
//! `x y z` or `x y z nx ny nz` (two coordinates in 2D mode). `.ply` files
//! may be ascii or binary-little-endian and must carry `x`/`y` (and `z` in
//! 3D) vertex properties, with optional `nx`/`ny`(/`nz`) normals.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::{PointCloud, PointCloudError};
use crate::ply;

/// Supported point-cloud container formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Xyz,
    Ply,
}

impl PointFormat {
    /// Picks a format from the file extension (case-insensitive).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("xyz") | Some("txt") => Some(PointFormat::Xyz),
            Some("ply") => Some(PointFormat::Ply),
            _ => None,
        }
    }
}

/// Loads a raw (unnormalized) point cloud with `D` coordinates per point.
pub fn load_point_cloud<const D: usize>(
    path: &Path,
    format: PointFormat,
) -> Result<PointCloud<D>, PointCloudError> {
    match format {
        PointFormat::Xyz => load_xyz(path),
        PointFormat::Ply => load_ply(path),
    }
}

fn load_xyz<const D: usize>(path: &Path) -> Result<PointCloud<D>, PointCloudError> {
    let text = std::fs::read_to_string(path)?;
    let label = path.display().to_string();
    let mut points = Vec::new();
    let mut normals: Option<Vec<[f64; D]>> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut values = [0.0f64; 6];
        let mut count = 0usize;
        for token in line.split_whitespace() {
            if count >= 2 * D {
                count += 1; // overflow detected below
                break;
            }
            values[count] = token.parse().map_err(|_| PointCloudError::Parse {
                path: label.clone(),
                line: lineno + 1,
                msg: format!("not a number: {token:?}"),
            })?;
            count += 1;
        }
        let has_normals = match count {
            c if c == D => false,
            c if c == 2 * D => true,
            found => {
                return Err(PointCloudError::DimensionMismatch {
                    expected: D,
                    found,
                })
            }
        };
        if points.is_empty() {
            normals = has_normals.then(Vec::new);
        } else if has_normals != normals.is_some() {
            return Err(PointCloudError::Parse {
                path: label.clone(),
                line: lineno + 1,
                msg: "inconsistent column count".into(),
            });
        }
        points.push(std::array::from_fn(|a| values[a]));
        if let Some(ns) = normals.as_mut() {
            ns.push(std::array::from_fn(|a| values[D + a]));
        }
    }
    PointCloud::new(points, normals)
}

fn load_ply<const D: usize>(path: &Path) -> Result<PointCloud<D>, PointCloudError> {
    let label = path.display().to_string();
    let ply = ply::read_ply(path).map_err(|e| match e {
        ply::PlyError::Io(io) => PointCloudError::Io(io),
        ply::PlyError::Malformed(p, msg) => PointCloudError::Parse {
            path: p,
            line: 0,
            msg,
        },
    })?;
    const COORDS: [&str; 3] = ["x", "y", "z"];
    const NORMALS: [&str; 3] = ["nx", "ny", "nz"];
    let mut coord_cols = Vec::with_capacity(D);
    for &name in COORDS.iter().take(D) {
        coord_cols.push(ply.column(name).ok_or_else(|| PointCloudError::Parse {
            path: label.clone(),
            line: 0,
            msg: format!("missing vertex property {name:?}"),
        })?);
    }
    let normal_cols: Vec<&[f64]> = NORMALS
        .iter()
        .take(D)
        .filter_map(|&name| ply.column(name))
        .collect();
    let n = ply.vertex_count();
    if n == 0 {
        return Err(PointCloudError::EmptyCloud);
    }
    let points = (0..n)
        .map(|i| std::array::from_fn(|a| coord_cols[a][i]))
        .collect();
    let normals = if normal_cols.len() == D {
        Some(
            (0..n)
                .map(|i| std::array::from_fn(|a| normal_cols[a][i]))
                .collect(),
        )
    } else {
        None
    };
    PointCloud::new(points, normals)
}

/// Writes the cloud as `.xyz`. Coordinates round-trip exactly through
/// [`load_point_cloud`] (shortest-representation float formatting).
pub fn save_xyz<const D: usize>(pc: &PointCloud<D>, path: &Path) -> Result<(), PointCloudError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for (i, p) in pc.points().iter().enumerate() {
        for (a, c) in p.iter().enumerate() {
            if a > 0 {
                write!(out, " ")?;
            }
            write!(out, "{c}")?;
        }
        if let Some(ns) = pc.normals() {
            for c in ns[i].iter() {
                write!(out, " {c}")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
