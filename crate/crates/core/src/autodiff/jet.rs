//! Second-order jets over the four network inputs `(x1, x2, x3, t)`.

use ndarray::Array2;

use crate::autodiff::Activation;
use crate::{Error, Real, Result};

/// Number of network inputs: three spatial coordinates and time.
pub const NUM_INPUTS: usize = 4;
/// Input slot holding time.
pub const TIME: usize = 3;
/// Stored Hessian entries (upper triangle of a 4×4 symmetric matrix).
pub const HESS_LEN: usize = 10;
/// Scalars in a full jet: value, gradient and Hessian triangle.
pub const JET_LEN: usize = 1 + NUM_INPUTS + HESS_LEN;

/// Upper-triangle pairs in storage order.
pub const HESS_PAIRS: [(usize, usize); HESS_LEN] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Storage slot of Hessian entry `(a, b)`; symmetric in its arguments.
#[inline]
pub const fn hess_index(a: usize, b: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    i * (7 - i) / 2 + j
}

/// How many derivative orders a jet carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JetOrder {
    Value = 0,
    Gradient = 1,
    Hessian = 2,
}

impl JetOrder {
    /// Number of stored scalars for this order (1, 5 or 15).
    #[inline]
    pub const fn width(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 1 + NUM_INPUTS,
            JetOrder::Hessian => JET_LEN,
        }
    }
}

/// Position of one jet component in the flat `[value, grad, hess]` layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Value,
    Grad(usize),
    Hess(usize, usize),
}

impl Component {
    #[inline]
    pub const fn index(self) -> usize {
        match self {
            Component::Value => 0,
            Component::Grad(a) => 1 + a,
            Component::Hess(a, b) => 1 + NUM_INPUTS + hess_index(a, b),
        }
    }

    /// Lowest jet order that carries this component.
    #[inline]
    pub const fn order(self) -> JetOrder {
        match self {
            Component::Value => JetOrder::Value,
            Component::Grad(_) => JetOrder::Gradient,
            Component::Hess(..) => JetOrder::Hessian,
        }
    }
}

/// Value, gradient and Hessian of a scalar function of `(x1, x2, x3, t)`.
///
/// The Hessian is stored as its upper triangle, so it is symmetric by
/// construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet4<F = f64> {
    pub value: F,
    pub grad: [F; NUM_INPUTS],
    hess: [F; HESS_LEN],
}

impl<F: Real> Default for Jet4<F> {
    fn default() -> Self {
        Self::constant(F::zero())
    }
}

impl<F: Real> Jet4<F> {
    pub fn constant(value: F) -> Self {
        Self {
            value,
            grad: [F::zero(); NUM_INPUTS],
            hess: [F::zero(); HESS_LEN],
        }
    }

    /// The jet of the input coordinate `axis` evaluated at `value`.
    pub fn seed(axis: usize, value: F) -> Self {
        let mut jet = Self::constant(value);
        jet.grad[axis] = F::one();
        jet
    }

    pub fn new(value: F, grad: [F; NUM_INPUTS], hess: [F; HESS_LEN]) -> Self {
        Self { value, grad, hess }
    }

    /// Builds a jet from a full 4×4 Hessian, keeping its upper triangle.
    pub fn from_full_hessian(value: F, grad: [F; NUM_INPUTS], full: [[F; 4]; 4]) -> Self {
        let mut hess = [F::zero(); HESS_LEN];
        for (k, &(a, b)) in HESS_PAIRS.iter().enumerate() {
            hess[k] = full[a][b];
        }
        Self { value, grad, hess }
    }

    /// Reads a prefix of the flat layout; missing higher orders are zero.
    pub fn from_slice(comps: &[F]) -> Self {
        let mut flat = [F::zero(); JET_LEN];
        flat[..comps.len()].copy_from_slice(comps);
        Self::from_flat(flat)
    }

    pub fn from_flat(flat: [F; JET_LEN]) -> Self {
        let mut grad = [F::zero(); NUM_INPUTS];
        let mut hess = [F::zero(); HESS_LEN];
        grad.copy_from_slice(&flat[1..1 + NUM_INPUTS]);
        hess.copy_from_slice(&flat[1 + NUM_INPUTS..]);
        Self {
            value: flat[0],
            grad,
            hess,
        }
    }

    pub fn to_flat(&self) -> [F; JET_LEN] {
        let mut flat = [F::zero(); JET_LEN];
        flat[0] = self.value;
        flat[1..1 + NUM_INPUTS].copy_from_slice(&self.grad);
        flat[1 + NUM_INPUTS..].copy_from_slice(&self.hess);
        flat
    }

    #[inline]
    pub fn hess(&self, a: usize, b: usize) -> F {
        self.hess[hess_index(a, b)]
    }

    #[inline]
    pub fn set_hess(&mut self, a: usize, b: usize, v: F) {
        self.hess[hess_index(a, b)] = v;
    }

    pub fn hess_triangle(&self) -> &[F; HESS_LEN] {
        &self.hess
    }

    pub fn hess_matrix(&self) -> [[F; 4]; 4] {
        let mut m = [[F::zero(); 4]; 4];
        for (a, row) in m.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                *entry = self.hess(a, b);
            }
        }
        m
    }

    #[inline]
    pub fn component(&self, c: Component) -> F {
        match c {
            Component::Value => self.value,
            Component::Grad(a) => self.grad[a],
            Component::Hess(a, b) => self.hess(a, b),
        }
    }

    /// Spatial Laplacian `Σ_j ∂²/∂x_j²`.
    pub fn laplacian(&self) -> F {
        self.hess(0, 0) + self.hess(1, 1) + self.hess(2, 2)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|v| v.is_finite()) && self.hess.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, k: F) -> Self {
        let mut out = *self;
        out.value *= k;
        out.grad.iter_mut().for_each(|g| *g *= k);
        out.hess.iter_mut().for_each(|h| *h *= k);
        out
    }

    /// Multiply-accumulate `self += k * other` over every component.
    pub fn add_scaled(&mut self, k: F, other: &Self) {
        self.value += k * other.value;
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += k * *o;
        }
        for (h, o) in self.hess.iter_mut().zip(&other.hess) {
            *h += k * *o;
        }
    }
}

/// Applies one affine layer to a vector of jets.
///
/// `weights` is `outputs × inputs`; the bias only shifts the value component.
pub fn jet_affine<F: Real>(weights: &Array2<F>, bias: &[F], inputs: &[Jet4<F>], layer: usize) -> Result<Vec<Jet4<F>>> {
    let (n_out, n_in) = weights.dim();
    if n_in != inputs.len() || n_out != bias.len() {
        return Err(Error::config(
            format!("layer[{layer}]"),
            format!(
                "weights are {n_out}x{n_in} but got {} inputs and {} biases",
                inputs.len(),
                bias.len()
            ),
        ));
    }
    if let Some(k) = inputs.iter().position(|j| !j.is_finite()) {
        return Err(Error::numeric(
            format!("layer[{layer}]"),
            format!("input jet {k} is not finite"),
        ));
    }
    let out = weights
        .rows()
        .into_iter()
        .zip(bias)
        .map(|(row, &b)| {
            let mut acc = Jet4::constant(F::zero());
            for (w, jet) in row.iter().zip(inputs) {
                acc.add_scaled(*w, jet);
            }
            acc.value += b;
            acc
        })
        .collect();
    Ok(out)
}

/// Pushes a jet through a pointwise activation via the second-order chain rule.
pub fn jet_activate<F: Real>(kind: Activation, z: &Jet4<F>) -> Jet4<F> {
    let [s0, s1, s2, _] = kind.derivatives(z.value);
    let mut out = Jet4::constant(s0);
    for a in 0..NUM_INPUTS {
        out.grad[a] = s1 * z.grad[a];
    }
    for (k, &(a, b)) in HESS_PAIRS.iter().enumerate() {
        out.hess[k] = s1 * z.hess[k] + s2 * z.grad[a] * z.grad[b];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hess_index_covers_triangle() {
        for (k, &(a, b)) in HESS_PAIRS.iter().enumerate() {
            assert_eq!(hess_index(a, b), k);
            assert_eq!(hess_index(b, a), k);
        }
    }

    #[test]
    fn identity_affine_is_a_no_op() {
        let w = Array2::<f64>::eye(1);
        let jet = Jet4::seed(0, 0.0);
        let out = jet_affine(&w, &[0.0], &[jet], 0).unwrap();
        assert_eq!(out[0], jet);
    }

    #[test]
    fn scalar_affine_by_hand() {
        let w = array![[2.0]];
        let out = jet_affine(&w, &[3.0], &[Jet4::seed(0, 1.0)], 0).unwrap();
        assert_eq!(out[0].value, 5.0);
        assert_eq!(out[0].grad, [2.0, 0.0, 0.0, 0.0]);
        assert_eq!(out[0].hess_matrix(), [[0.0; 4]; 4]);
    }

    #[test]
    fn zero_weights_give_constant_jets() {
        let w = Array2::<f64>::zeros((2, 3));
        let inputs = [Jet4::seed(0, 0.3), Jet4::seed(1, -1.0), Jet4::seed(3, 2.0)];
        let out = jet_affine(&w, &[1.5, -2.0], &inputs, 0).unwrap();
        assert_eq!(out[0], Jet4::constant(1.5));
        assert_eq!(out[1], Jet4::constant(-2.0));
    }

    #[test]
    fn affine_rejects_mismatch_and_nan() {
        let w = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            jet_affine(&w, &[0.0, 0.0], &[Jet4::constant(0.0)], 4),
            Err(Error::Config { .. })
        ));
        let bad = [Jet4::constant(f64::NAN), Jet4::constant(0.0), Jet4::constant(0.0)];
        match jet_affine(&w, &[0.0, 0.0], &bad, 4) {
            Err(Error::Numeric { location, .. }) => assert!(location.contains('4')),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn tanh_at_zero_along_time() {
        let out = jet_activate(Activation::Tanh, &Jet4::seed(TIME, 0.0));
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grad, [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(out.hess_matrix(), [[0.0; 4]; 4]);
    }

    #[test]
    fn component_indices_follow_layout() {
        let flat: [f64; JET_LEN] = std::array::from_fn(|k| k as f64);
        let jet = Jet4::from_flat(flat);
        assert_eq!(jet.component(Component::Value), 0.0);
        assert_eq!(jet.component(Component::Grad(TIME)), 4.0);
        for &(a, b) in &HESS_PAIRS {
            let c = Component::Hess(b, a);
            assert_eq!(jet.component(c), flat[c.index()]);
        }
        assert_eq!(jet.to_flat(), flat);
    }
}
