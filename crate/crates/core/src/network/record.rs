//! Records a jet forward pass on a scalar [`Tape`], one node per scalar
//! operation. Slow, but independent of the batched reverse pass, which makes
//! it a reference for the parameter gradients.

use crate::autodiff::{JetOrder, Tape, Var, HESS_PAIRS, NUM_INPUTS};
use crate::network::{InputScaling, OutputScaling, ParamSet};
use crate::{Error, Real, Result};

/// Returns the output jet components (`order.width()` of them) as tape nodes.
///
/// `leaves` holds the network parameters in flat [`ParamSet`] order.
pub fn record_forward_jet<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    leaves: &[Var],
    input: &InputScaling<F>,
    output: &OutputScaling<F>,
    point: &[F; 4],
    order: JetOrder,
) -> Result<Vec<Var>> {
    if leaves.len() != params.num_params() {
        return Err(Error::config(
            "leaves",
            format!(
                "expected {} parameter leaves, got {}",
                params.num_params(),
                leaves.len()
            ),
        ));
    }
    let c = order.width();
    let zero = tape.constant(F::zero());
    let mut jets: Vec<Vec<Var>> = (0..NUM_INPUTS)
        .map(|a| {
            let mut jet = vec![zero; c];
            jet[0] = tape.constant(input.apply(a, point[a]));
            if order >= JetOrder::Gradient {
                jet[1 + a] = tape.constant(input.scale[a]);
            }
            jet
        })
        .collect();

    let mut offset = 0;
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let (n_out, n_in) = layer.weights.dim();
        let w = &leaves[offset..offset + n_out * n_in];
        let b = &leaves[offset + n_out * n_in..offset + n_out * n_in + n_out];
        offset += n_out * n_in + n_out;

        let mut next = Vec::with_capacity(n_out);
        for r in 0..n_out {
            let mut z = Vec::with_capacity(c);
            for k in 0..c {
                let products: Vec<Var> = (0..n_in).map(|i| tape.mul(w[r * n_in + i], jets[i][k])).collect();
                let mut acc = tape.sum(&products);
                if k == 0 {
                    acc = tape.add(acc, b[r]);
                }
                z.push(acc);
            }
            next.push(if l < last { activate(tape, params, order, &z) } else { z });
        }
        jets = next;
    }

    let raw = &jets[0];
    let shift = tape.constant(output.shift);
    Ok(raw
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let scaled = tape.scale(v, output.scale);
            if k == 0 {
                tape.add(scaled, shift)
            } else {
                scaled
            }
        })
        .collect())
}

fn activate<F: Real>(tape: &mut Tape<F>, params: &ParamSet<F>, order: JetOrder, z: &[Var]) -> Vec<Var> {
    let kind = params.activation;
    let mut out = Vec::with_capacity(z.len());
    out.push(tape.activation(kind, 0, z[0]));
    if order == JetOrder::Value {
        return out;
    }
    let s1 = tape.activation(kind, 1, z[0]);
    for a in 0..NUM_INPUTS {
        out.push(tape.mul(s1, z[1 + a]));
    }
    if order == JetOrder::Hessian {
        let s2 = tape.activation(kind, 2, z[0]);
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            let first = tape.mul(s1, z[1 + NUM_INPUTS + k]);
            let gg = tape.mul(z[1 + i], z[1 + j]);
            let second = tape.mul(s2, gg);
            out.push(tape.add(first, second));
        }
    }
    out
}
