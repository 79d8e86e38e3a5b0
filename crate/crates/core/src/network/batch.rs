//! Batched jet propagation and its reverse pass.
//!
//! A batch of `P` points is laid out as an `neurons × (P·C)` matrix where
//! `C` is the jet width (1, 5 or 15) and each point owns `C` consecutive
//! columns `[value, grad, hess]`. Affine layers are then plain matrix
//! products and the bias touches value columns only.
//!
//! Hidden widths are padded to a multiple of eight with zero weights so the
//! matrix kernel never takes its masked edge path. Padded rows stay exactly
//! zero in every buffer.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use crate::autodiff::{Activation, JetOrder, HESS_PAIRS, NUM_INPUTS};
use crate::network::{InputScaling, OutputScaling, ParamSet};
use crate::{Error, Real, Result};

const G0: usize = 1;
const H0: usize = 1 + NUM_INPUTS;
const ROW_BLOCK: usize = 8;

#[inline]
fn padded(n: usize) -> usize {
    n.div_ceil(ROW_BLOCK) * ROW_BLOCK
}

/// Intermediate values of one batched forward pass, kept for the reverse pass.
///
/// A trace can be refilled by [`forward_batch_into`], reusing its buffers.
#[derive(Clone, Debug)]
pub struct BatchTrace<F = f64> {
    order: JetOrder,
    points: usize,
    /// Zero-padded copies of the hidden layer weights.
    weights: Vec<Array2<F>>,
    /// Input to each affine layer (`a_0` is the normalized seed batch).
    layer_inputs: Vec<Array2<F>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<F>>,
    /// `[σ', σ'', σ''']` per hidden neuron and point.
    derivs: Vec<Array2<F>>,
    output: Vec<F>,
}

impl<F: Real> Default for BatchTrace<F> {
    fn default() -> Self {
        Self {
            order: JetOrder::Value,
            points: 0,
            weights: Vec::new(),
            layer_inputs: Vec::new(),
            pre: Vec::new(),
            derivs: Vec::new(),
            output: Vec::new(),
        }
    }
}

impl<F: Real> BatchTrace<F> {
    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn width(&self) -> usize {
        self.order.width()
    }

    /// Physical output jets, `width()` scalars per point.
    pub fn output(&self) -> &[F] {
        &self.output
    }

    pub fn point_output(&self, p: usize) -> &[F] {
        let c = self.width();
        &self.output[p * c..(p + 1) * c]
    }
}

fn ensure_len<F: Real>(v: &mut Vec<Array2<F>>, n: usize) {
    v.truncate(n);
    while v.len() < n {
        v.push(Array2::zeros((0, 0)));
    }
}

/// Resizes `buf` to `dim`, zeroing only when the shape changes.
fn ensure_dim<F: Real>(buf: &mut Array2<F>, dim: (usize, usize)) {
    if buf.dim() != dim {
        *buf = Array2::zeros(dim);
    }
}

/// Resizes `buf` to `dim` reusing its allocation. Contents are unspecified;
/// callers overwrite every entry.
fn reshape_scratch<F: Real>(buf: &mut Array2<F>, dim: (usize, usize)) {
    if buf.dim() == dim {
        return;
    }
    let (mut v, _) = std::mem::replace(buf, Array2::zeros((0, 0))).into_raw_vec_and_offset();
    v.resize(dim.0 * dim.1, F::zero());
    *buf = Array2::from_shape_vec(dim, v).expect("length matches shape");
}

/// Runs `params` on every point, carrying derivatives up to `order`.
pub fn forward_batch<F: Real>(
    params: &ParamSet<F>,
    input: &InputScaling<F>,
    output: &OutputScaling<F>,
    points: &[[F; 4]],
    order: JetOrder,
) -> Result<BatchTrace<F>> {
    let mut trace = BatchTrace::default();
    forward_batch_into(params, input, output, points, order, &mut trace)?;
    Ok(trace)
}

/// [`forward_batch`] writing into an existing trace.
pub fn forward_batch_into<F: Real>(
    params: &ParamSet<F>,
    input: &InputScaling<F>,
    output: &OutputScaling<F>,
    points: &[[F; 4]],
    order: JetOrder,
    trace: &mut BatchTrace<F>,
) -> Result<()> {
    let c = order.width();
    let np = points.len();
    let cols = np * c;
    let hidden = params.layers.len() - 1;
    let last = &params.layers[hidden];
    assert_eq!(last.weights.nrows(), 1, "networks have a scalar output");

    trace.order = order;
    trace.points = np;
    ensure_len(&mut trace.weights, hidden);
    ensure_len(&mut trace.layer_inputs, hidden + 1);
    ensure_len(&mut trace.pre, hidden);
    ensure_len(&mut trace.derivs, hidden);

    let a0 = &mut trace.layer_inputs[0];
    reshape_scratch(a0, (NUM_INPUTS, cols));
    a0.fill(F::zero());
    for (p, x) in points.iter().enumerate() {
        for axis in 0..NUM_INPUTS {
            a0[[axis, p * c]] = input.apply(axis, x[axis]);
            if order >= JetOrder::Gradient {
                a0[[axis, p * c + G0 + axis]] = input.scale[axis];
            }
        }
    }

    for l in 0..hidden {
        let layer = &params.layers[l];
        let (n_out, n_in) = layer.weights.dim();
        let rows_in = trace.layer_inputs[l].nrows();
        let rows_out = padded(n_out);
        let w = &mut trace.weights[l];
        ensure_dim(w, (rows_out, rows_in));
        w.slice_mut(s![..n_out, ..n_in]).assign(&layer.weights);

        let z = &mut trace.pre[l];
        reshape_scratch(z, (rows_out, cols));
        general_mat_mul(F::one(), &*w, &trace.layer_inputs[l], F::zero(), z);
        for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(layer.bias.iter()) {
            let row = row.as_slice_mut().expect("row-major");
            row.iter_mut().step_by(c).for_each(|v| *v += b);
        }

        let d = &mut trace.derivs[l];
        reshape_scratch(d, (rows_out, np * 3));
        let a = &mut trace.layer_inputs[l + 1];
        reshape_scratch(a, (rows_out, cols));
        activate(params.activation, order, n_out, z.view(), a, d);
    }

    let a = &trace.layer_inputs[hidden];
    trace.output.clear();
    trace.output.resize(cols, F::zero());
    for (row, &w) in a.axis_iter(Axis(0)).zip(last.weights.iter()) {
        let row = row.to_slice().expect("row-major");
        for (o, &v) in trace.output.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    let b = last.bias[0];
    for (k, v) in trace.output.iter_mut().enumerate() {
        *v = if k % c == 0 {
            output.shift + output.scale * (*v + b)
        } else {
            output.scale * *v
        };
    }
    if trace.output.iter().any(|v| !v.is_finite()) {
        return Err(locate_non_finite(params, trace));
    }
    Ok(())
}

fn locate_non_finite<F: Real>(params: &ParamSet<F>, trace: &BatchTrace<F>) -> Error {
    for (l, z) in trace.pre.iter().enumerate() {
        if z.iter().any(|v| !v.is_finite()) {
            return Error::numeric(
                format!("network[{}] layer[{l}]", params.id),
                "non-finite pre-activation",
            );
        }
    }
    for (l, a) in trace.layer_inputs.iter().enumerate() {
        if a.iter().any(|v| !v.is_finite()) {
            return Error::numeric(format!("network[{}] layer[{l}]", params.id), "non-finite layer input");
        }
    }
    Error::numeric(
        format!("network[{}] layer[{}]", params.id, params.layers.len() - 1),
        "non-finite output",
    )
}

/// Applies the activation to the first `n` rows of `z`; padded rows of `a`
/// and `d` are zeroed.
fn activate<F: Real>(
    kind: Activation,
    order: JetOrder,
    n: usize,
    z: ArrayView2<F>,
    a: &mut Array2<F>,
    d: &mut Array2<F>,
) {
    macro_rules! dispatch {
        ($c:literal) => {
            match kind {
                Activation::Sigmoid => activate_rows::<F, $c>(|x| Activation::Sigmoid.derivatives(x), n, z, a, d),
                Activation::Tanh => activate_rows::<F, $c>(|x| Activation::Tanh.derivatives(x), n, z, a, d),
                Activation::Gaussian => activate_rows::<F, $c>(|x| Activation::Gaussian.derivatives(x), n, z, a, d),
                Activation::Swish => activate_rows::<F, $c>(|x| Activation::Swish.derivatives(x), n, z, a, d),
                Activation::Arctan => activate_rows::<F, $c>(|x| Activation::Arctan.derivatives(x), n, z, a, d),
                Activation::Mish => activate_rows::<F, $c>(|x| Activation::Mish.derivatives(x), n, z, a, d),
                Activation::Softplus => activate_rows::<F, $c>(|x| Activation::Softplus.derivatives(x), n, z, a, d),
                Activation::Relu => activate_rows::<F, $c>(|x| Activation::Relu.derivatives(x), n, z, a, d),
            }
        };
    }
    match order {
        JetOrder::Value => dispatch!(1),
        JetOrder::Gradient => dispatch!(5),
        JetOrder::Hessian => dispatch!(15),
    }
}

#[inline(always)]
fn activate_rows<F: Real, const C: usize>(
    derivs: impl Fn(F) -> [F; 4],
    n: usize,
    z: ArrayView2<F>,
    a: &mut Array2<F>,
    d: &mut Array2<F>,
) {
    for (r, ((zr, mut ar), mut dr)) in z
        .axis_iter(Axis(0))
        .zip(a.axis_iter_mut(Axis(0)))
        .zip(d.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let ar = ar.as_slice_mut().expect("row-major");
        let dr = dr.as_slice_mut().expect("row-major");
        if r >= n {
            ar.fill(F::zero());
            dr.fill(F::zero());
            continue;
        }
        let zr = zr.to_slice().expect("row-major");
        for ((zp, ap), dp) in zr
            .chunks_exact(C)
            .zip(ar.chunks_exact_mut(C))
            .zip(dr.chunks_exact_mut(3))
        {
            let [s0, s1, s2, s3] = derivs(zp[0]);
            dp[0] = s1;
            dp[1] = s2;
            dp[2] = s3;
            ap[0] = s0;
            if C > 1 {
                for k in 0..NUM_INPUTS {
                    ap[G0 + k] = s1 * zp[G0 + k];
                }
            }
            if C > H0 {
                for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
                    ap[H0 + k] = s1 * zp[H0 + k] + s2 * zp[G0 + i] * zp[G0 + j];
                }
            }
        }
    }
}

/// Reverse of [`activate`]: maps adjoints of the activation output to
/// adjoints of the pre-activation.
fn activate_backward<F: Real>(
    order: JetOrder,
    n: usize,
    z: &Array2<F>,
    d: &Array2<F>,
    da: &Array2<F>,
    dz: &mut Array2<F>,
) {
    match order {
        JetOrder::Value => activate_rows_backward::<F, 1>(n, z, d, da, dz),
        JetOrder::Gradient => activate_rows_backward::<F, 5>(n, z, d, da, dz),
        JetOrder::Hessian => activate_rows_backward::<F, 15>(n, z, d, da, dz),
    }
}

fn activate_rows_backward<F: Real, const C: usize>(
    n: usize,
    z: &Array2<F>,
    d: &Array2<F>,
    da: &Array2<F>,
    dz: &mut Array2<F>,
) {
    for (r, (((zr, dr), dar), mut dzr)) in z
        .axis_iter(Axis(0))
        .zip(d.axis_iter(Axis(0)))
        .zip(da.axis_iter(Axis(0)))
        .zip(dz.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let dzr = dzr.as_slice_mut().expect("row-major");
        if r >= n {
            dzr.fill(F::zero());
            continue;
        }
        let zr = zr.to_slice().expect("row-major");
        let dr = dr.to_slice().expect("row-major");
        let dar = dar.to_slice().expect("row-major");
        for (((zp, dp), dap), dzp) in zr
            .chunks_exact(C)
            .zip(dr.chunks_exact(3))
            .zip(dar.chunks_exact(C))
            .zip(dzr.chunks_exact_mut(C))
        {
            let (s1, s2, s3) = (dp[0], dp[1], dp[2]);
            let mut dv = dap[0] * s1;
            if C > 1 {
                for k in 0..NUM_INPUTS {
                    dv += dap[G0 + k] * s2 * zp[G0 + k];
                    dzp[G0 + k] = dap[G0 + k] * s1;
                }
            }
            if C > H0 {
                for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
                    let dh = dap[H0 + k];
                    let gi = zp[G0 + i];
                    let gj = zp[G0 + j];
                    dv += dh * (s2 * zp[H0 + k] + s3 * gi * gj);
                    dzp[G0 + i] += dh * s2 * gj;
                    dzp[G0 + j] += dh * s2 * gi;
                    dzp[H0 + k] = dh * s1;
                }
            }
            dzp[0] = dv;
        }
    }
}

/// Reusable buffers for [`backward_batch_with`].
#[derive(Clone, Debug)]
pub struct BackwardScratch<F = f64> {
    dz: Array2<F>,
    da: Array2<F>,
    gw: Array2<F>,
}

impl<F: Real> Default for BackwardScratch<F> {
    fn default() -> Self {
        Self {
            dz: Array2::zeros((0, 0)),
            da: Array2::zeros((0, 0)),
            gw: Array2::zeros((0, 0)),
        }
    }
}

/// Accumulates into `grad` (flat [`ParamSet`] layout) the gradient of
/// `Σ d_out · output` with respect to the parameters.
pub fn backward_batch<F: Real>(
    params: &ParamSet<F>,
    output: &OutputScaling<F>,
    trace: &BatchTrace<F>,
    d_out: &[F],
    grad: &mut [F],
) {
    backward_batch_with(params, output, trace, d_out, grad, &mut BackwardScratch::default());
}

/// [`backward_batch`] reusing caller-owned buffers.
pub fn backward_batch_with<F: Real>(
    params: &ParamSet<F>,
    output: &OutputScaling<F>,
    trace: &BatchTrace<F>,
    d_out: &[F],
    grad: &mut [F],
    scratch: &mut BackwardScratch<F>,
) {
    let c = trace.width();
    let cols = trace.points * c;
    assert_eq!(d_out.len(), cols, "adjoint length");
    assert_eq!(grad.len(), params.num_params(), "gradient length");

    let offsets: Vec<usize> = params
        .layers
        .iter()
        .scan(0, |acc, l| {
            let start = *acc;
            *acc += l.num_params();
            Some(start)
        })
        .collect();
    let hidden = params.layers.len() - 1;

    // scalar output layer
    let last = &params.layers[hidden];
    let a_last = &trace.layer_inputs[hidden];
    {
        let off = offsets[hidden];
        let n_in = last.weights.ncols();
        let (gw, gb) = grad[off..off + n_in + 1].split_at_mut(n_in);
        for (g, row) in gw.iter_mut().zip(a_last.axis_iter(Axis(0))) {
            let row = row.to_slice().expect("row-major");
            *g += output.scale * row.iter().zip(d_out).fold(F::zero(), |acc, (&a, &d)| acc + a * d);
        }
        gb[0] += output.scale * d_out.iter().step_by(c).fold(F::zero(), |acc, &v| acc + v);
    }
    if hidden == 0 {
        return;
    }
    let BackwardScratch { dz, da, gw } = scratch;
    reshape_scratch(da, (a_last.nrows(), cols));
    for (r, mut row) in da.axis_iter_mut(Axis(0)).enumerate() {
        let row = row.as_slice_mut().expect("row-major");
        match last.weights.get((0, r)) {
            Some(&w) => {
                let w = w * output.scale;
                row.iter_mut().zip(d_out).for_each(|(o, &d)| *o = w * d);
            }
            None => row.fill(F::zero()),
        }
    }

    for l in (0..hidden).rev() {
        let layer = &params.layers[l];
        let (n_out, n_in) = layer.weights.dim();
        let z = &trace.pre[l];
        reshape_scratch(dz, z.dim());
        activate_backward(trace.order, n_out, z, &trace.derivs[l], da, dz);

        let a_in = &trace.layer_inputs[l];
        reshape_scratch(gw, (z.nrows(), a_in.nrows()));
        general_mat_mul(F::one(), &*dz, &a_in.t(), F::zero(), gw);
        let off = offsets[l];
        let block = &mut grad[off..off + n_out * n_in + n_out];
        for i in 0..n_out {
            for j in 0..n_in {
                block[i * n_in + j] += gw[[i, j]];
            }
            let row = dz.row(i);
            let row = row.to_slice().expect("row-major");
            block[n_out * n_in + i] += row.iter().step_by(c).fold(F::zero(), |acc, &v| acc + v);
        }
        if l == 0 {
            break;
        }
        reshape_scratch(da, (a_in.nrows(), cols));
        general_mat_mul(F::one(), &trace.weights[l].t(), &*dz, F::zero(), da);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Jet4;
    use crate::network::init_params;

    fn points() -> Vec<[f64; 4]> {
        vec![[0.1, 0.2, 0.3, 0.4], [0.9, -0.3, 0.5, 0.0], [0.5, 0.5, 0.05, 1.0]]
    }

    #[test]
    fn batch_matches_single_point_jets() {
        for act in Activation::ALL {
            let mut net = init_params::<f64>(3, 6, act, 5).unwrap();
            for layer in &mut net.layers {
                layer
                    .bias
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, b)| *b = 0.1 * k as f64 - 0.2);
            }
            let input = InputScaling::from_bounds([0.0; 4], [1.0, 2.0, 0.1, 1.0]).unwrap();
            let out = OutputScaling {
                scale: 3.0,
                shift: -1.0,
            };
            let trace = forward_batch(&net, &input, &out, &points(), JetOrder::Hessian).unwrap();
            for (p, x) in points().iter().enumerate() {
                let single = out.apply(&net.forward_jet(&input, x).unwrap());
                let batched = Jet4::from_slice(trace.point_output(p));
                let sf = single.to_flat();
                let bf = batched.to_flat();
                for k in 0..sf.len() {
                    assert!(
                        (sf[k] - bf[k]).abs() <= 1e-12 * sf[k].abs().max(1.0),
                        "{act} point {p} comp {k}: {} vs {}",
                        sf[k],
                        bf[k]
                    );
                }
            }
        }
    }

    #[test]
    fn lower_orders_are_prefixes() {
        let net = init_params::<f64>(2, 5, Activation::Mish, 9).unwrap();
        let input = InputScaling::identity();
        let out = OutputScaling::identity();
        let full = forward_batch(&net, &input, &out, &points(), JetOrder::Hessian).unwrap();
        for order in [JetOrder::Value, JetOrder::Gradient] {
            let t = forward_batch(&net, &input, &out, &points(), order).unwrap();
            for p in 0..3 {
                let w = order.width();
                assert_eq!(t.point_output(p), &full.point_output(p)[..w]);
            }
        }
    }

    #[test]
    fn non_finite_output_names_a_layer() {
        let mut net = init_params::<f64>(2, 3, Activation::Tanh, 1).unwrap();
        net.layers[2].weights[[0, 0]] = f64::INFINITY;
        let err = forward_batch(
            &net,
            &InputScaling::identity(),
            &OutputScaling::identity(),
            &points(),
            JetOrder::Value,
        )
        .unwrap_err();
        match err {
            Error::Numeric { location, .. } => assert!(location.contains("layer")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
