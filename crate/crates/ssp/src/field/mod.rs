//! The neural distance field: an MLP over raw coordinates concatenated
//! with a progressively masked positional encoding.
//!
//! Initialization follows the geometric recipe that makes the untrained
//! network approximate the signed distance to a sphere: hidden weights are
//! zero-mean Gaussians scaled by `sqrt(2 / fan_out)`, the output layer
//! starts at `sqrt(pi / fan_in)` with bias `-radius`, and the first-layer
//! (and skip-layer) columns that read encoded features start at zero so
//! the sphere is expressed through raw coordinates alone.
//!
//! All evaluation is double precision and deterministic. Gradients are
//! analytic: [`NeuralField::input_gradient`] propagates tangents through
//! the encoding and every layer, and the training path differentiates
//! functionals of both the value and the input gradient with respect to
//! parameters (see `mlp`).

mod checkpoint;
mod encoding;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoding::{input_dim, pe_mask, positional_encoding, PeConfig, PeState};
pub use mlp::FieldGradients;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use mlp::DenseLayer;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("non-finite network parameters")]
    NonFiniteParameters,
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and initialization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Coordinate dimension, 2 or 3.
    pub dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Hidden layer whose input re-concatenates the network input.
    pub skip_at: usize,
    /// Softplus sharpness; large values approach ReLU while staying smooth.
    pub softplus_beta: f64,
    pub pe: PeConfig,
    pub seed: u64,
}

impl NetworkConfig {
    /// Full-scale profile: 8 hidden layers of 512 units, skip at layer 4.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            hidden_layers: 8,
            hidden_width: 512,
            skip_at: 4,
            softplus_beta: 100.0,
            pe: PeConfig::DEFAULT,
            seed: 0,
        }
    }

    /// Desk-scale profile (4 x 64) used by tests and quick fits.
    pub fn test_profile(dim: usize) -> Self {
        Self {
            dim,
            hidden_layers: 4,
            hidden_width: 64,
            skip_at: 2,
            softplus_beta: 100.0,
            pe: PeConfig::DEFAULT,
            seed: 0,
        }
    }

    /// Minimal net (2 x 8) for finite-difference checks over parameters.
    pub fn tiny(dim: usize) -> Self {
        Self {
            dim,
            hidden_layers: 2,
            hidden_width: 8,
            skip_at: 1,
            softplus_beta: 100.0,
            pe: PeConfig::DEFAULT,
            seed: 0,
        }
    }

    /// Raw-plus-encoding input width.
    pub fn input_dim(&self) -> usize {
        encoding::input_dim(self.dim, &self.pe)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(FieldError::InvalidConfig(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.hidden_layers < 2 {
            return Err(FieldError::InvalidConfig(
                "need at least 2 hidden layers".into(),
            ));
        }
        if self.skip_at == 0 || self.skip_at >= self.hidden_layers {
            return Err(FieldError::InvalidConfig(format!(
                "skip_at {} outside 1..{}",
                self.skip_at, self.hidden_layers
            )));
        }
        if !(self.softplus_beta > 0.0) {
            return Err(FieldError::InvalidConfig("softplus_beta must be > 0".into()));
        }
        if self.pe.initial_bands >= self.pe.total_bands {
            return Err(FieldError::InvalidConfig(
                "initial PE bands must be below the total".into(),
            ));
        }
        Ok(())
    }

    /// Input width of hidden layer `l` (the skip layer sees the concat).
    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim()
        } else if l == self.skip_at {
            self.hidden_width + self.input_dim()
        } else {
            self.hidden_width
        }
    }
}

/// MLP parameters plus the architecture they instantiate.
#[derive(Debug, Clone)]
pub struct NeuralField {
    config: NetworkConfig,
    layers: Vec<DenseLayer>,
}

impl NeuralField {
    /// Geometric initialization: the fresh network approximates
    /// `f(p) = |p| - radius`.
    pub fn init_geometric(config: NetworkConfig, radius: f64) -> Result<Self, FieldError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let n0 = config.input_dim();
        let d = config.dim;
        let w = config.hidden_width;
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        for l in 0..config.hidden_layers {
            let fan_in = config.layer_input(l);
            let dist = Normal::new(0.0, (2.0 / w as f64).sqrt()).unwrap();
            let mut weights = Array2::zeros((w, fan_in));
            for v in weights.iter_mut() {
                *v = dist.sample(&mut rng);
            }
            // Encoded-feature columns start at zero so the initial sphere
            // rides on raw coordinates only.
            if l == 0 {
                weights.slice_mut(ndarray::s![.., d..n0]).fill(0.0);
            } else if l == config.skip_at {
                weights.slice_mut(ndarray::s![.., w + d..w + n0]).fill(0.0);
            }
            layers.push(DenseLayer {
                w: weights,
                b: Array1::zeros(w),
            });
        }
        let dist = Normal::new((std::f64::consts::PI / w as f64).sqrt(), 1e-5).unwrap();
        let mut out_w = Array2::zeros((1, w));
        for v in out_w.iter_mut() {
            *v = dist.sample(&mut rng);
        }
        layers.push(DenseLayer {
            w: out_w,
            b: Array1::from_elem(1, -radius),
        });
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn check_finite(&self) -> Result<(), FieldError> {
        let ok = self
            .layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(FieldError::NonFiniteParameters)
        }
    }

    /// Flattened parameter copy, layer order, weights row-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0usize;
        for l in &mut self.layers {
            for v in l.w.iter_mut() {
                *v = flat[at];
                at += 1;
            }
            for v in l.b.iter_mut() {
                *v = flat[at];
                at += 1;
            }
        }
    }

    pub(crate) fn flat_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("contiguous"));
            out.push(l.b.as_slice_mut().expect("contiguous"));
        }
        out
    }

    pub fn zero_gradients(&self) -> FieldGradients {
        FieldGradients::zeros_like(&self.layers)
    }

    fn assert_dim<const D: usize>(&self) {
        assert_eq!(
            D, self.config.dim,
            "field has dim {}, called with {D}",
            self.config.dim
        );
    }

    /// `f(q)` at a single point.
    pub fn evaluate<const D: usize>(&self, q: &[f64; D], pe: &PeState) -> f64 {
        self.evaluate_batch(std::slice::from_ref(q), pe)[0]
    }

    /// `f` over a batch of points.
    pub fn evaluate_batch<const D: usize>(&self, points: &[[f64; D]], pe: &PeState) -> Vec<f64> {
        self.assert_dim::<D>();
        if points.is_empty() {
            return Vec::new();
        }
        let (x, _) = encoding::assemble_inputs(points, pe);
        mlp::forward_values(
            &self.layers,
            self.config.softplus_beta,
            self.config.skip_at,
            &x,
        )
        .to_vec()
    }

    /// Exact input gradient at a single point.
    pub fn input_gradient<const D: usize>(&self, q: &[f64; D], pe: &PeState) -> [f64; D] {
        self.evaluate_with_gradient_batch(std::slice::from_ref(q), pe).1[0]
    }

    /// `f` and its input gradient over a batch.
    pub fn evaluate_with_gradient_batch<const D: usize>(
        &self,
        points: &[[f64; D]],
        pe: &PeState,
    ) -> (Vec<f64>, Vec<[f64; D]>) {
        self.assert_dim::<D>();
        if points.is_empty() {
            return (Vec::new(), Vec::new());
        }
        let (x, tx) = encoding::assemble_inputs(points, pe);
        let (f, g) = mlp::forward_with_gradient(
            &self.layers,
            self.config.softplus_beta,
            self.config.skip_at,
            &x,
            &tx,
        );
        let grads = (0..points.len())
            .map(|i| std::array::from_fn(|a| g[(a, i)]))
            .collect();
        (f.to_vec(), grads)
    }

    /// Forward pass retaining the buffers [`Self::backprop`] needs.
    pub(crate) fn forward_training<const D: usize>(
        &self,
        points: &[[f64; D]],
        pe: &PeState,
    ) -> TrainingPass {
        self.assert_dim::<D>();
        let (x, tx) = encoding::assemble_inputs(points, pe);
        TrainingPass {
            pass: mlp::forward_full(
                &self.layers,
                self.config.softplus_beta,
                self.config.skip_at,
                x,
                tx,
            ),
        }
    }

    /// Accumulates `dJ/dtheta` into `grads` for a scalar functional with
    /// per-sample derivatives `u_f = dJ/df` and `u_g = dJ/dg`.
    pub(crate) fn backprop(
        &self,
        pass: &TrainingPass,
        u_f: &Array1<f64>,
        u_g: &Array2<f64>,
        grads: &mut FieldGradients,
    ) {
        mlp::backprop(
            &self.layers,
            self.config.softplus_beta,
            self.config.skip_at,
            &pass.pass,
            u_f,
            u_g,
            grads,
        );
    }

    pub(crate) fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn from_parts(config: NetworkConfig, layers: Vec<DenseLayer>) -> Self {
        Self { config, layers }
    }
}

/// Retained forward state for one training chunk.
pub(crate) struct TrainingPass {
    pass: mlp::FullPass,
}

impl TrainingPass {
    pub fn value(&self, sample: usize) -> f64 {
        self.pass.f[sample]
    }

    pub fn gradient<const D: usize>(&self, sample: usize) -> [f64; D] {
        std::array::from_fn(|a| self.pass.g[(a, sample)])
    }

    pub fn len(&self) -> usize {
        self.pass.f.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::relative_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_probes<const D: usize>(n: usize, seed: u64) -> Vec<[f64; D]> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn sphere_init_quality(config: NetworkConfig, radius: f64) -> (f64, f64) {
        let field = NeuralField::init_geometric(config, radius).unwrap();
        let pe = PeState::at_iteration(config.pe, 0);
        match config.dim {
            3 => quality::<3>(&field, &pe, radius),
            2 => quality::<2>(&field, &pe, radius),
            _ => unreachable!(),
        }
    }

    fn quality<const D: usize>(field: &NeuralField, pe: &PeState, radius: f64) -> (f64, f64) {
        let probes = random_probes::<D>(1000, 17);
        let values = field.evaluate_batch(&probes, pe);
        let mut abs_err = 0.0;
        let mut sign_total = 0usize;
        let mut sign_ok = 0usize;
        for (p, f) in probes.iter().zip(&values) {
            let r = crate::math::norm(p);
            abs_err += (f - (r - radius)).abs();
            if (r - radius).abs() > 0.1 {
                sign_total += 1;
                if f.signum() == (r - radius).signum() {
                    sign_ok += 1;
                }
            }
        }
        (
            abs_err / probes.len() as f64,
            sign_ok as f64 / sign_total as f64,
        )
    }

    #[test]
    fn geometric_init_approximates_sphere() {
        for config in [
            NetworkConfig::test_profile(3),
            NetworkConfig::test_profile(2),
            NetworkConfig::full(3),
        ] {
            let (mean_err, sign_rate) = sphere_init_quality(config, 0.9);
            assert!(
                mean_err < 0.2,
                "mean |f - sphere| = {mean_err} for {config:?}"
            );
            assert!(sign_rate >= 0.9, "sign agreement {sign_rate} for {config:?}");
        }
    }

    #[test]
    fn init_is_negative_inside_positive_outside() {
        let config = NetworkConfig::test_profile(3);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let pe = PeState::at_iteration(config.pe, 0);
        assert!(field.evaluate(&[0.0, 0.0, 0.0], &pe) < 0.0);
        assert!(field.evaluate(&[0.95, 0.95, 0.95], &pe) > 0.0);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let config = NetworkConfig::test_profile(3);
        let a = NeuralField::init_geometric(config, 0.9).unwrap();
        let b = NeuralField::init_geometric(config, 0.9).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        let mut other = config;
        other.seed = 1;
        let c = NeuralField::init_geometric(other, 0.9).unwrap();
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn batch_equals_single_evaluations() {
        let config = NetworkConfig::test_profile(3);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let pe = PeState::at_iteration(config.pe, 1500);
        let probes = random_probes::<3>(37, 5);
        let batch = field.evaluate_batch(&probes, &pe);
        for (p, &fb) in probes.iter().zip(&batch) {
            assert_eq!(field.evaluate(p, &pe), fb);
        }
    }

    #[test]
    fn evaluate_is_locally_continuous() {
        let config = NetworkConfig::test_profile(3);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let pe = PeState::full(config.pe);
        let q = [0.21, -0.34, 0.55];
        let f0 = field.evaluate(&q, &pe);
        let delta = 1e-6;
        for a in 0..3 {
            let mut q2 = q;
            q2[a] += delta;
            let f1 = field.evaluate(&q2, &pe);
            // Slope bounded by a crude Lipschitz estimate from the gradient.
            let g = crate::math::norm(&field.input_gradient(&q, &pe));
            assert!((f1 - f0).abs() <= (g + 1.0) * delta * 10.0);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let h = 1e-5;
        for trial in 0..20 {
            let mut config = NetworkConfig::test_profile(3);
            config.seed = trial;
            let field = NeuralField::init_geometric(config, 0.9).unwrap();
            let pe = PeState::at_iteration(config.pe, (trial * 700) as u64);
            let q: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.95..0.95));
            let grad = field.input_gradient(&q, &pe);
            let mut fd = [0.0; 3];
            for a in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[a] += h;
                qm[a] -= h;
                fd[a] = (field.evaluate(&qp, &pe) - field.evaluate(&qm, &pe)) / (2.0 * h);
            }
            let rel = relative_error(&grad, &fd);
            assert!(rel < 1e-4, "trial {trial}: rel err {rel}");
        }
    }

    #[test]
    fn gradient_is_deterministic() {
        let config = NetworkConfig::test_profile(2);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let pe = PeState::at_iteration(config.pe, 123);
        let q = [0.4, -0.6];
        let g1 = field.input_gradient(&q, &pe);
        let g2 = field.input_gradient(&q, &pe);
        assert_eq!(g1[0].to_bits(), g2[0].to_bits());
        assert_eq!(g1[1].to_bits(), g2[1].to_bits());
    }

    #[test]
    fn zero_output_layer_gives_zero_gradient() {
        let config = NetworkConfig::test_profile(3);
        let mut field = NeuralField::init_geometric(config, 0.9).unwrap();
        let mut flat = field.to_flat();
        let out_params = config.hidden_width + 1;
        let n = flat.len();
        for v in flat[n - out_params..].iter_mut() {
            *v = 0.0;
        }
        field.set_flat(&flat);
        let pe = PeState::full(config.pe);
        let g = field.input_gradient(&[0.3, 0.1, -0.2], &pe);
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn masked_encoding_leaves_only_raw_pathway() {
        // With every band masked the encoded block is exactly zero, so
        // permuting its slots cannot change the input, hence the output
        // depends on q only through the raw coordinates.
        let config = NetworkConfig::test_profile(3);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let pe = PeState::disabled(config.pe);
        let q = [0.37, -0.12, 0.81];
        let enc = positional_encoding(&q, pe.mask());
        assert!(enc.iter().all(|&v| v == 0.0));
        let mut permuted = enc.clone();
        permuted.rotate_left(5);
        assert_eq!(enc, permuted);
        let f = field.evaluate(&q, &pe);
        assert!(f.is_finite());
    }

    /// Finite differences of a linear functional of (f, g) over all
    /// parameters; exercises the full second-order reverse path.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for dim_case in 0..2 {
            let mut config = if dim_case == 0 {
                NetworkConfig::tiny(3)
            } else {
                NetworkConfig::tiny(2)
            };
            config.seed = 42 + dim_case as u64;
            let field = NeuralField::init_geometric(config, 0.9).unwrap();
            let pe = PeState::at_iteration(config.pe, 500);
            let d = config.dim;

            let points3 = random_probes::<3>(6, 9);
            let points2 = random_probes::<2>(6, 9);
            let b = 6usize;
            let cf: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cg: Vec<f64> = (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect();

            let functional = |field: &NeuralField| -> f64 {
                let (f, g): (Vec<f64>, Vec<Vec<f64>>) = if d == 3 {
                    let (f, g) = field.evaluate_with_gradient_batch(&points3, &pe);
                    (f, g.into_iter().map(|v| v.to_vec()).collect())
                } else {
                    let (f, g) = field.evaluate_with_gradient_batch(&points2, &pe);
                    (f, g.into_iter().map(|v| v.to_vec()).collect())
                };
                let mut j = 0.0;
                for i in 0..b {
                    j += cf[i] * f[i];
                    for a in 0..d {
                        j += cg[i * d + a] * g[i][a];
                    }
                }
                j
            };

            // Analytic gradient through the training path.
            let mut grads = field.zero_gradients();
            let u_f = Array1::from_vec(cf.clone());
            let mut u_g = Array2::zeros((d, b));
            for i in 0..b {
                for a in 0..d {
                    u_g[(a, i)] = cg[i * d + a];
                }
            }
            if d == 3 {
                let pass = field.forward_training(&points3, &pe);
                field.backprop(&pass, &u_f, &u_g, &mut grads);
            } else {
                let pass = field.forward_training(&points2, &pe);
                field.backprop(&pass, &u_f, &u_g, &mut grads);
            }
            let analytic = grads.to_flat();

            // Central finite differences over every parameter.
            let h = 1e-5;
            let base = field.to_flat();
            let mut fd = vec![0.0; base.len()];
            let mut probe = field.clone();
            for k in 0..base.len() {
                let mut plus = base.clone();
                plus[k] += h;
                probe.set_flat(&plus);
                let jp = functional(&probe);
                let mut minus = base.clone();
                minus[k] -= h;
                probe.set_flat(&minus);
                let jm = functional(&probe);
                fd[k] = (jp - jm) / (2.0 * h);
            }
            let rel = relative_error(&analytic, &fd);
            assert!(rel < 1e-3, "dim {}: rel err {rel}", config.dim);
        }
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::test_profile(3).validate().is_ok());
        let mut bad = NetworkConfig::test_profile(3);
        bad.skip_at = 4;
        assert!(bad.validate().is_err());
        bad = NetworkConfig::test_profile(3);
        bad.dim = 4;
        assert!(bad.validate().is_err());
        bad = NetworkConfig::test_profile(3);
        bad.hidden_layers = 1;
        bad.skip_at = 0;
        assert!(bad.validate().is_err());
    }
}
