//! Small fixed-dimension vector helpers shared across the crate.
//!
//! Points and directions are plain `[f64; D]` with `D` in {2, 3}; everything
//! here is branch-free and inlines into the hot loops.

#[inline]
pub fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn sub<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = a[i] - b[i];
    }
    out
}

#[inline]
pub fn add<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = a[i] + b[i];
    }
    out
}

#[inline]
pub fn scale<const D: usize>(a: &[f64; D], s: f64) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = a[i] * s;
    }
    out
}

#[inline]
pub fn norm_sq<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

#[inline]
pub fn dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Normalize to unit length. Returns `None` for (near-)zero vectors.
#[inline]
pub fn normalized<const D: usize>(a: &[f64; D]) -> Option<[f64; D]> {
    let n = norm(a);
    if n <= f64::EPSILON {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// Eigendecomposition of a symmetric `D x D` matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in ascending order and the matching unit
/// eigenvectors as rows. Only intended for the tiny covariance matrices
/// used by normal estimation (`D` is 2 or 3).
pub fn symmetric_eigen<const D: usize>(mut a: [[f64; D]; D]) -> ([f64; D], [[f64; D]; D]) {
    let mut v = [[0.0; D]; D];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _ in 0..64 {
        let off: f64 = (0..D)
            .flat_map(|p| ((p + 1)..D).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off.sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..D {
            for q in (p + 1)..D {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J with the Givens rotation J in the (p, q) plane.
                let app = a[p][p];
                let aqq = a[q][q];
                let apq = a[p][q];
                a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for r in 0..D {
                    if r != p && r != q {
                        let arp = a[r][p];
                        let arq = a[r][q];
                        a[r][p] = c * arp - s * arq;
                        a[p][r] = a[r][p];
                        a[r][q] = s * arp + c * arq;
                        a[q][r] = a[r][q];
                    }
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    // Sort eigenpairs ascending; eigenvectors come back as rows.
    let mut order: [usize; D] = [0; D];
    for (i, slot) in order.iter_mut().enumerate() {
        *slot = i;
    }
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let mut values = [0.0; D];
    let mut vectors = [[0.0; D]; D];
    for (rank, &i) in order.iter().enumerate() {
        values[rank] = a[i][i];
        for r in 0..D {
            vectors[rank][r] = v[r][i];
        }
    }
    (values, vectors)
}

/// Relative discrepancy between two vectors of equal length,
/// `|a - b| / max(|a|, |b|, floor)`. Used by the finite-difference checks.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    diff.sqrt() / na.sqrt().max(nb.sqrt()).max(1e-12)
}
