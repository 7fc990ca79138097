//! Batched MLP kernels: forward values, forward input-gradients, and the
//! reverse pass that differentiates scalar functionals of both the network
//! value `f` and its input gradient `g = df/dq` with respect to every
//! parameter.
//!
//! Points are processed one column per sample. The input gradient is
//! carried through the stack as `D` tangent matrices alongside the value
//! path; the reverse pass then walks the combined computation backwards,
//! which yields the exact second-order terms that losses on `g` require.

use ndarray::{concatenate, Array1, Array2, Axis};

/// One affine layer, `z = W a + b` with `W` of shape `out x in`.
#[derive(Debug, Clone)]
pub(crate) struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[inline]
fn softplus(beta: f64, z: f64) -> f64 {
    let t = beta * z;
    if t > 30.0 {
        z
    } else {
        t.exp().ln_1p() / beta
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// softplus'(z) = sigmoid(beta z)
#[inline]
fn softplus_d1(beta: f64, z: f64) -> f64 {
    sigmoid(beta * z)
}

/// softplus''(z) = beta * s * (1 - s)
#[inline]
fn softplus_d2(beta: f64, z: f64) -> f64 {
    let s = sigmoid(beta * z);
    beta * s * (1.0 - s)
}

/// Buffers kept by the full forward pass for the reverse sweep.
pub(crate) struct FullPass {
    /// Input actually fed to each hidden layer (after any skip concat).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations per hidden layer.
    pre: Vec<Array2<f64>>,
    /// Tangent inputs per hidden layer per coordinate axis.
    t_inputs: Vec<Vec<Array2<f64>>>,
    /// Pre-activation tangents per hidden layer per coordinate axis.
    t_pre: Vec<Vec<Array2<f64>>>,
    /// Final hidden activation (input of the linear output layer).
    last_act: Array2<f64>,
    /// Its tangents.
    last_t: Vec<Array2<f64>>,
    pub f: Array1<f64>,
    /// Input gradient, one row per coordinate axis.
    pub g: Array2<f64>,
}

fn affine(layer: &DenseLayer, input: &Array2<f64>) -> Array2<f64> {
    let mut z = layer.w.dot(input);
    z += &layer.b.view().insert_axis(Axis(1));
    z
}

/// Forward with value and tangent tracking, retaining every buffer needed
/// by [`backprop`]. `x` is `n0 x B`, `tx[a] = dX/dq_a`.
pub(crate) fn forward_full(
    layers: &[DenseLayer],
    beta: f64,
    skip_at: usize,
    x: Array2<f64>,
    tx: Vec<Array2<f64>>,
) -> FullPass {
    let hidden = layers.len() - 1;
    let dirs = tx.len();
    let mut inputs = Vec::with_capacity(hidden);
    let mut pre = Vec::with_capacity(hidden);
    let mut t_inputs = Vec::with_capacity(hidden);
    let mut t_pre = Vec::with_capacity(hidden);

    let mut act = x.clone();
    let mut t_act = tx.clone();
    for (l, layer) in layers[..hidden].iter().enumerate() {
        if l == skip_at {
            act = concatenate(Axis(0), &[act.view(), x.view()]).unwrap() * INV_SQRT2;
            for a in 0..dirs {
                t_act[a] =
                    concatenate(Axis(0), &[t_act[a].view(), tx[a].view()]).unwrap() * INV_SQRT2;
            }
        }
        let z = affine(layer, &act);
        let tz: Vec<Array2<f64>> = t_act.iter().map(|t| layer.w.dot(t)).collect();
        let mut a_next = z.clone();
        a_next.mapv_inplace(|v| softplus(beta, v));
        let d1 = z.mapv(|v| softplus_d1(beta, v));
        let t_next: Vec<Array2<f64>> = tz.iter().map(|t| t * &d1).collect();
        inputs.push(act);
        pre.push(z);
        t_inputs.push(t_act);
        t_pre.push(tz);
        act = a_next;
        t_act = t_next;
    }
    let out = layers.last().unwrap();
    let f = affine(out, &act).row(0).to_owned();
    let mut g = Array2::<f64>::zeros((dirs, f.len()));
    for a in 0..dirs {
        g.row_mut(a).assign(&out.w.dot(&t_act[a]).row(0));
    }
    FullPass {
        inputs,
        pre,
        t_inputs,
        t_pre,
        last_act: act,
        last_t: t_act,
        f,
        g,
    }
}

/// Values only (no tangents, no retained buffers).
pub(crate) fn forward_values(
    layers: &[DenseLayer],
    beta: f64,
    skip_at: usize,
    x: &Array2<f64>,
) -> Array1<f64> {
    let hidden = layers.len() - 1;
    let mut act = x.clone();
    for (l, layer) in layers[..hidden].iter().enumerate() {
        if l == skip_at {
            act = concatenate(Axis(0), &[act.view(), x.view()]).unwrap() * INV_SQRT2;
        }
        let mut z = affine(layer, &act);
        z.mapv_inplace(|v| softplus(beta, v));
        act = z;
    }
    affine(layers.last().unwrap(), &act).row(0).to_owned()
}

/// Values plus input gradients, discarding intermediates.
pub(crate) fn forward_with_gradient(
    layers: &[DenseLayer],
    beta: f64,
    skip_at: usize,
    x: &Array2<f64>,
    tx: &[Array2<f64>],
) -> (Array1<f64>, Array2<f64>) {
    let hidden = layers.len() - 1;
    let dirs = tx.len();
    let mut act = x.clone();
    let mut t_act = tx.to_vec();
    for (l, layer) in layers[..hidden].iter().enumerate() {
        if l == skip_at {
            act = concatenate(Axis(0), &[act.view(), x.view()]).unwrap() * INV_SQRT2;
            for a in 0..dirs {
                t_act[a] =
                    concatenate(Axis(0), &[t_act[a].view(), tx[a].view()]).unwrap() * INV_SQRT2;
            }
        }
        let z = affine(layer, &act);
        let d1 = z.mapv(|v| softplus_d1(beta, v));
        for t in t_act.iter_mut() {
            *t = layer.w.dot(t) * &d1;
        }
        act = z.mapv(|v| softplus(beta, v));
    }
    let out = layers.last().unwrap();
    let f = affine(out, &act).row(0).to_owned();
    let mut g = Array2::<f64>::zeros((dirs, f.len()));
    for a in 0..dirs {
        g.row_mut(a).assign(&out.w.dot(&t_act[a]).row(0));
    }
    (f, g)
}

/// Parameter gradients, shaped like the layer stack.
#[derive(Debug, Clone)]
pub struct FieldGradients {
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

impl FieldGradients {
    pub(crate) fn zeros_like(layers: &[DenseLayer]) -> Self {
        Self {
            weights: layers
                .iter()
                .map(|l| Array2::zeros(l.w.raw_dim()))
                .collect(),
            biases: layers
                .iter()
                .map(|l| Array1::zeros(l.b.raw_dim()))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Flattened copy in layer order (weights row-major, then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub(crate) fn flat_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            out.push(w.as_slice_mut().expect("contiguous"));
            out.push(b.as_slice_mut().expect("contiguous"));
        }
        out
    }
}

/// Reverse sweep. `u_f[b] = dJ/df_b` and `u_g[(a, b)] = dJ/dg_{a,b}` for
/// some scalar functional `J` of the batch outputs; parameter gradients
/// are accumulated into `grads`.
pub(crate) fn backprop(
    layers: &[DenseLayer],
    beta: f64,
    skip_at: usize,
    pass: &FullPass,
    u_f: &Array1<f64>,
    u_g: &Array2<f64>,
    grads: &mut FieldGradients,
) {
    let hidden = layers.len() - 1;
    let dirs = pass.g.nrows();
    let out = layers.last().unwrap();

    // Output layer: f = w a + b, g_a = w ta_a.
    let uf_row = u_f.view().insert_axis(Axis(0));
    {
        let gw = &mut grads.weights[hidden];
        *gw += &uf_row.dot(&pass.last_act.t());
        for a in 0..dirs {
            *gw += &u_g
                .row(a)
                .insert_axis(Axis(0))
                .dot(&pass.last_t[a].t());
        }
        grads.biases[hidden][0] += u_f.sum();
    }
    let mut a_bar = out.w.t().dot(&uf_row);
    let mut t_bar: Vec<Array2<f64>> = (0..dirs)
        .map(|a| out.w.t().dot(&u_g.row(a).insert_axis(Axis(0))))
        .collect();

    for l in (0..hidden).rev() {
        let layer = &layers[l];
        let z = &pass.pre[l];
        let d1 = z.mapv(|v| softplus_d1(beta, v));
        let d2 = z.mapv(|v| softplus_d2(beta, v));
        // a_l = softplus(z), ta_a = softplus'(z) * tz_a:
        //   z_bar  = softplus'(z) * a_bar + softplus''(z) * sum_a tz_a * ta_bar_a
        //   tz_bar = softplus'(z) * ta_bar_a
        let mut z_bar = &d1 * &a_bar;
        for a in 0..dirs {
            z_bar += &(&d2 * &pass.t_pre[l][a] * &t_bar[a]);
        }
        let tz_bar: Vec<Array2<f64>> = (0..dirs).map(|a| &d1 * &t_bar[a]).collect();

        {
            let gw = &mut grads.weights[l];
            *gw += &z_bar.dot(&pass.inputs[l].t());
            for a in 0..dirs {
                *gw += &tz_bar[a].dot(&pass.t_inputs[l][a].t());
            }
            grads.biases[l] += &z_bar.sum_axis(Axis(1));
        }

        if l == 0 {
            break;
        }
        let mut in_bar = layer.w.t().dot(&z_bar);
        let mut tin_bar: Vec<Array2<f64>> =
            (0..dirs).map(|a| layer.w.t().dot(&tz_bar[a])).collect();
        if l == skip_at {
            // Concat input was [a; x] / sqrt(2); the x block has no
            // parameter dependence, keep only the activation block.
            let prev_rows = layers[l - 1].w.nrows();
            in_bar = in_bar.slice(ndarray::s![..prev_rows, ..]).to_owned() * INV_SQRT2;
            for t in tin_bar.iter_mut() {
                *t = t.slice(ndarray::s![..prev_rows, ..]).to_owned() * INV_SQRT2;
            }
        }
        a_bar = in_bar;
        t_bar = tin_bar;
    }
}
