//! Progressive positional encoding.
//!
//! Each coordinate axis contributes `sin(2^i pi p)` and `cos(2^i pi p)` per
//! frequency band `i`, gated by a binary mask that unlocks one additional
//! band every `k` iterations starting from `initial_bands`. Masked bands
//! are exactly zero, as are their derivatives, so a masked network is
//! bit-identical to one that never saw those features.

use ndarray::Array2;

/// Frequency-band schedule constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeConfig {
    /// Bands active at iteration zero (the rule below also admits band
    /// `initial_bands` itself, so `initial_bands = 3` starts with 4 live
    /// bands).
    pub initial_bands: usize,
    /// Total number of bands.
    pub total_bands: usize,
    /// Iterations per additional band.
    pub growth: f64,
}

impl PeConfig {
    pub const DEFAULT: PeConfig = PeConfig {
        initial_bands: 3,
        total_bands: 6,
        growth: 1000.0,
    };

    /// Encoded feature width for `dim` coordinates.
    pub fn encoded_len(&self, dim: usize) -> usize {
        2 * dim * self.total_bands
    }
}

/// Band mask at iteration `n`: band `i` is live unless `i > L0 + n/k`
/// (real-valued division). Monotone in `n`.
pub fn pe_mask(n: u64, initial_bands: usize, total_bands: usize, growth: f64) -> Vec<bool> {
    assert!(initial_bands < total_bands);
    assert!(growth > 0.0);
    let threshold = initial_bands as f64 + n as f64 / growth;
    (0..total_bands).map(|i| i as f64 <= threshold).collect()
}

/// Mask state carried through training and stored with checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PeState {
    config: PeConfig,
    iteration: u64,
    mask: Vec<bool>,
}

impl PeState {
    pub fn at_iteration(config: PeConfig, iteration: u64) -> Self {
        let mask = pe_mask(
            iteration,
            config.initial_bands,
            config.total_bands,
            config.growth,
        );
        Self {
            config,
            iteration,
            mask,
        }
    }

    /// All bands live regardless of iteration.
    pub fn full(config: PeConfig) -> Self {
        Self {
            iteration: u64::MAX,
            mask: vec![true; config.total_bands],
            config,
        }
    }

    /// No bands live; the field sees raw coordinates only. Used by the
    /// encoding ablation.
    pub fn disabled(config: PeConfig) -> Self {
        Self {
            iteration: 0,
            mask: vec![false; config.total_bands],
            config,
        }
    }

    pub fn advance_to(&mut self, iteration: u64) {
        self.iteration = iteration;
        self.mask = pe_mask(
            iteration,
            self.config.initial_bands,
            self.config.total_bands,
            self.config.growth,
        );
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn config(&self) -> PeConfig {
        self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }
}

/// Encoded features for one point: `2 * D * mask.len()` values laid out
/// band-major as `[sin(w_i p_0..p_{D-1}), cos(w_i p_0..p_{D-1})]` with
/// `w_i = 2^i pi`. Masked bands are exactly zero.
pub fn positional_encoding<const D: usize>(p: &[f64; D], mask: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * D * mask.len()];
    for (band, &live) in mask.iter().enumerate() {
        if !live {
            continue;
        }
        let w = (1u64 << band) as f64 * std::f64::consts::PI;
        for axis in 0..D {
            let (s, c) = (w * p[axis]).sin_cos();
            out[2 * D * band + axis] = s;
            out[2 * D * band + D + axis] = c;
        }
    }
    out
}

/// Network input width: raw coordinates concatenated with the encoding.
pub fn input_dim(dim: usize, pe: &PeConfig) -> usize {
    dim + pe.encoded_len(dim)
}

/// Assembles the batched network input `X` (`input_dim x B`, one column
/// per point) together with its per-axis derivative stacks `T_a = dX/dp_a`.
pub(crate) fn assemble_inputs<const D: usize>(
    points: &[[f64; D]],
    pe: &PeState,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let bands = pe.config.total_bands;
    let n0 = D + 2 * D * bands;
    let b = points.len();
    let mut x = Array2::<f64>::zeros((n0, b));
    let mut tangents = vec![Array2::<f64>::zeros((n0, b)); D];
    for (col, p) in points.iter().enumerate() {
        for axis in 0..D {
            x[(axis, col)] = p[axis];
            tangents[axis][(axis, col)] = 1.0;
        }
        for (band, &live) in pe.mask.iter().enumerate() {
            if !live {
                continue;
            }
            let w = (1u64 << band) as f64 * std::f64::consts::PI;
            for axis in 0..D {
                let (s, c) = (w * p[axis]).sin_cos();
                let row = D + 2 * D * band + axis;
                x[(row, col)] = s;
                x[(row + D, col)] = c;
                tangents[axis][(row, col)] = w * c;
                tangents[axis][(row + D, col)] = -w * s;
            }
        }
    }
    (x, tangents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_at_start_has_four_live_bands() {
        assert_eq!(
            pe_mask(0, 3, 6, 1000.0),
            vec![true, true, true, true, false, false]
        );
    }

    #[test]
    fn mask_band_boundary() {
        assert_eq!(
            pe_mask(999, 3, 6, 1000.0),
            vec![true, true, true, true, false, false]
        );
        assert_eq!(
            pe_mask(1000, 3, 6, 1000.0),
            vec![true, true, true, true, true, false]
        );
        assert_eq!(pe_mask(2000, 3, 6, 1000.0), vec![true; 6]);
        assert_eq!(pe_mask(3000, 3, 6, 1000.0), vec![true; 6]);
    }

    #[test]
    fn mask_is_monotone_in_iteration() {
        let mut live = 0usize;
        for n in 0..5000 {
            let mask = pe_mask(n, 3, 6, 1000.0);
            let count = mask.iter().filter(|&&m| m).count();
            assert!(count >= live, "band dropped at n={n}");
            // Prefix-of-ones shape.
            assert!(mask.windows(2).all(|w| w[0] || !w[1]));
            live = count;
        }
    }

    #[test]
    fn encoding_at_origin() {
        let mask = [true, false, true];
        let enc = positional_encoding(&[0.0, 0.0], &mask);
        assert_eq!(enc.len(), 12);
        // sin terms all zero, cos terms equal the mask per band.
        for (band, &live) in mask.iter().enumerate() {
            for axis in 0..2 {
                assert_eq!(enc[4 * band + axis], 0.0);
                assert_eq!(enc[4 * band + 2 + axis], if live { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn encoding_periodicity_at_one() {
        let enc = positional_encoding(&[1.0], &[true, true]);
        // band 1: sin(2 pi) ~ 0, cos(2 pi) ~ 1.
        assert!(enc[2].abs() < 1e-12);
        assert!((enc[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_masked_is_zero_vector() {
        let enc = positional_encoding(&[0.3, -0.7, 0.9], &[false; 6]);
        assert!(enc.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assembled_inputs_match_single_point_encoding() {
        let pe = PeState::at_iteration(PeConfig::DEFAULT, 500);
        let points = [[0.11, -0.42, 0.73], [0.9, 0.0, -0.9]];
        let (x, tangents) = assemble_inputs(&points, &pe);
        assert_eq!(x.nrows(), 3 + 36);
        for (col, p) in points.iter().enumerate() {
            let enc = positional_encoding(p, pe.mask());
            for axis in 0..3 {
                assert_eq!(x[(axis, col)], p[axis]);
            }
            for (i, &v) in enc.iter().enumerate() {
                assert_eq!(x[(3 + i, col)], v);
            }
        }
        // Tangents against central differences of the assembled input.
        let h = 1e-6;
        for axis in 0..3 {
            let mut plus = points;
            let mut minus = points;
            for p in plus.iter_mut() {
                p[axis] += h;
            }
            for p in minus.iter_mut() {
                p[axis] -= h;
            }
            let (xp, _) = assemble_inputs(&plus, &pe);
            let (xm, _) = assemble_inputs(&minus, &pe);
            let fd = (&xp - &xm) / (2.0 * h);
            for ((r, c), &t) in tangents[axis].indexed_iter() {
                assert!((t - fd[(r, c)]).abs() < 1e-5, "row {r} col {c}");
            }
        }
    }
}
