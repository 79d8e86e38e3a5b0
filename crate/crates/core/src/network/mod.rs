//! Fully-connected networks for `u1, u2, u3, T` and their jet evaluation.

mod batch;
mod record;

use std::ops::Range;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{jet_activate, jet_affine, Activation, Jet4, NUM_INPUTS};
use crate::{Error, Real, Result};

pub use batch::{backward_batch, backward_batch_with, forward_batch, forward_batch_into, BackwardScratch, BatchTrace};
pub use record::record_forward_jet;

/// Number of coupled networks: three displacement components and temperature.
pub const NUM_NETWORKS: usize = 4;

/// Hidden-layer shape shared by the four networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 {
            return Err(Error::config("architecture.hidden_layers", "must be at least 1"));
        }
        if self.neurons == 0 {
            return Err(Error::config("architecture.neurons", "must be at least 1"));
        }
        Ok(())
    }

    /// Layer widths from input to output, e.g. `[4, 15, 15, 1]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![NUM_INPUTS];
        w.extend(std::iter::repeat_n(self.neurons, self.hidden_layers));
        w.push(1);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<F = f64> {
    /// `outputs × inputs`
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> DenseLayer<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Trainable weights and biases of one network.
///
/// Every layer except the last is followed by `activation`; the output layer
/// is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<F = f64> {
    /// 1-based network id: 1..=3 displacements, 4 temperature.
    pub id: u8,
    pub activation: Activation,
    pub layers: Vec<DenseLayer<F>>,
}

/// Glorot-uniform weights and zero biases for a `4 → neurons^hidden → 1` network.
pub fn init_params<F: Real>(
    hidden_layers: usize,
    neurons: usize,
    activation: Activation,
    seed: u64,
) -> Result<ParamSet<F>> {
    let arch = Architecture {
        hidden_layers,
        neurons,
        activation,
    };
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = arch.widths();
    let layers = widths
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let weights = Array2::from_shape_fn((fan_out, fan_in), |_| F::lit(dist.sample(&mut rng)));
            DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(ParamSet {
        id: 1,
        activation,
        layers,
    })
}

impl<F: Real> ParamSet<F> {
    /// Builds a network from explicit layers, checking that widths chain
    /// from 4 inputs to 1 output.
    pub fn from_layers(id: u8, activation: Activation, layers: Vec<DenseLayer<F>>) -> Result<Self> {
        let set = Self { id, activation, layers };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let field = format!("network[{}]", self.id);
        if self.layers.is_empty() {
            return Err(Error::config(field, "no layers"));
        }
        let mut width = NUM_INPUTS;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.inputs() != width || layer.bias.len() != layer.outputs() {
                return Err(Error::config(
                    format!("{field}.layer[{l}]"),
                    format!(
                        "expects {} inputs and has {} biases for {} outputs; previous width {width}",
                        layer.inputs(),
                        layer.bias.len(),
                        layer.outputs()
                    ),
                ));
            }
            width = layer.outputs();
        }
        if width != 1 {
            return Err(Error::config(field, format!("output width {width}, expected 1")));
        }
        if !self.to_flat().iter().all(|p| p.is_finite()) {
            return Err(Error::numeric(field, "non-finite parameter"));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![NUM_INPUTS];
        w.extend(self.layers.iter().map(|l| l.outputs()));
        w
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn num_biases(&self) -> usize {
        self.layers.iter().map(|l| l.bias.len()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_params()).sum()
    }

    /// Flat layout: for each layer, weights in row-major order then biases.
    pub fn to_flat(&self) -> Vec<F> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            flat.extend(layer.weights.iter().copied());
            flat.extend(layer.bias.iter().copied());
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::config(
                format!("network[{}]", self.id),
                format!("expected {} parameters, got {}", self.num_params(), flat.len()),
            ));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Value, input gradient and input Hessian of the raw network output at a
    /// physical point. The input map is folded in through the seed jets.
    pub fn forward_jet(&self, input: &InputScaling<F>, point: &[F; 4]) -> Result<Jet4<F>> {
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                format!("network[{}] input", self.id),
                format!("non-finite point {point:?}"),
            ));
        }
        let mut jets: Vec<Jet4<F>> = (0..NUM_INPUTS).map(|a| input.seed(a, point[a])).collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let bias = layer.bias.as_slice().expect("contiguous bias");
            jets = jet_affine(&layer.weights, bias, &jets, l)?;
            if l < last {
                jets = jets.iter().map(|z| jet_activate(self.activation, z)).collect();
                if let Some(k) = jets.iter().position(|j| !j.is_finite()) {
                    return Err(Error::numeric(
                        format!("network[{}] layer[{l}]", self.id),
                        format!("activation output {k} is not finite"),
                    ));
                }
            }
        }
        let out = jets[0];
        if !out.is_finite() {
            return Err(Error::numeric(
                format!("network[{}] layer[{last}]", self.id),
                "output is not finite",
            ));
        }
        Ok(out)
    }
}

/// How spatial coordinates are mapped onto the network inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// One scale for all three spatial axes, fitting the largest extent
    /// to `[-1, 1]`; thin directions keep their physical proportions.
    #[default]
    SharedSpatial,
    /// Every spatial axis stretched to `[-1, 1]` on its own.
    PerAxis,
}

/// Per-input affine map `ξ = scale·x + shift` applied before the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaling<F = f64> {
    pub scale: [F; NUM_INPUTS],
    pub shift: [F; NUM_INPUTS],
}

impl<F: Real> InputScaling<F> {
    pub fn identity() -> Self {
        Self {
            scale: [F::one(); NUM_INPUTS],
            shift: [F::zero(); NUM_INPUTS],
        }
    }

    /// Maps each coordinate range `[lo, hi]` onto `[-1, 1]`.
    pub fn from_bounds(lo: [F; NUM_INPUTS], hi: [F; NUM_INPUTS]) -> Result<Self> {
        let mut scale = [F::one(); NUM_INPUTS];
        let mut shift = [F::zero(); NUM_INPUTS];
        let two = F::lit(2.0);
        for a in 0..NUM_INPUTS {
            let span = hi[a] - lo[a];
            if !(span > F::zero()) || !span.is_finite() {
                return Err(Error::config(
                    format!("normalization[{a}]"),
                    format!("degenerate input range [{}, {}]", lo[a], hi[a]),
                ));
            }
            scale[a] = two / span;
            shift[a] = -(hi[a] + lo[a]) / span;
        }
        let s = Self { scale, shift };
        s.validate()?;
        Ok(s)
    }

    /// Like [`from_bounds`](Self::from_bounds), but with
    /// [`Normalization::SharedSpatial`] the spatial ranges are widened
    /// about their centres to the largest spatial extent first.
    pub fn from_bounds_with(lo: [F; NUM_INPUTS], hi: [F; NUM_INPUTS], mode: Normalization) -> Result<Self> {
        match mode {
            Normalization::PerAxis => Self::from_bounds(lo, hi),
            Normalization::SharedSpatial => {
                let half = F::lit(0.5);
                let reach = (0..3).fold(F::zero(), |m, a| m.max(half * (hi[a] - lo[a])));
                let (mut lo2, mut hi2) = (lo, hi);
                for a in 0..3 {
                    let centre = half * (hi[a] + lo[a]);
                    lo2[a] = centre - reach;
                    hi2[a] = centre + reach;
                }
                Self::from_bounds(lo2, hi2)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..NUM_INPUTS {
            if self.scale[a] == F::zero() || !self.scale[a].is_finite() || !self.shift[a].is_finite() {
                return Err(Error::config(
                    format!("normalization[{a}]"),
                    "scale must be finite and nonzero",
                ));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, axis: usize, x: F) -> F {
        self.scale[axis] * x + self.shift[axis]
    }

    #[inline]
    pub fn invert(&self, axis: usize, xi: F) -> F {
        (xi - self.shift[axis]) / self.scale[axis]
    }

    /// Jet of the normalized coordinate `axis` as a function of physical inputs.
    pub fn seed(&self, axis: usize, x: F) -> Jet4<F> {
        let mut jet = Jet4::constant(self.apply(axis, x));
        jet.grad[axis] = self.scale[axis];
        jet
    }
}

/// Output map `u = shift + scale·y` from raw network output `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling<F = f64> {
    pub scale: F,
    pub shift: F,
}

impl<F: Real> OutputScaling<F> {
    pub fn identity() -> Self {
        Self {
            scale: F::one(),
            shift: F::zero(),
        }
    }

    /// Centers the output on the midrange of `samples` with unit raw output
    /// spanning half the range. Falls back to the magnitude of the midpoint
    /// (or 1) when every sample is equal.
    pub fn from_samples(samples: impl IntoIterator<Item = F>) -> Self {
        let mut lo = F::infinity();
        let mut hi = F::neg_infinity();
        for s in samples {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Self::identity();
        }
        let half = F::lit(0.5);
        let shift = half * (lo + hi);
        let mut scale = half * (hi - lo);
        if scale <= F::zero() {
            scale = if shift.abs() > F::zero() { shift.abs() } else { F::one() };
        }
        Self { scale, shift }
    }

    pub fn apply(&self, raw: &Jet4<F>) -> Jet4<F> {
        let mut out = raw.scale(self.scale);
        out.value += self.shift;
        out
    }
}

/// The four coupled networks plus their input and output maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<F = f64> {
    pub nets: [ParamSet<F>; NUM_NETWORKS],
    pub input: InputScaling<F>,
    pub outputs: [OutputScaling<F>; NUM_NETWORKS],
    pub seed: u64,
}

impl<F: Real> ModelState<F> {
    /// Initializes four networks with a shared architecture. Each network
    /// draws from its own stream derived from `seed`.
    pub fn init(
        arch: &Architecture,
        input: InputScaling<F>,
        outputs: [OutputScaling<F>; NUM_NETWORKS],
        seed: u64,
    ) -> Result<Self> {
        input.validate()?;
        let mut nets = Vec::with_capacity(NUM_NETWORKS);
        for k in 0..NUM_NETWORKS {
            let sub_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1);
            let mut net = init_params(arch.hidden_layers, arch.neurons, arch.activation, sub_seed)?;
            net.id = k as u8 + 1;
            nets.push(net);
        }
        let nets: [ParamSet<F>; NUM_NETWORKS] = nets.try_into().expect("four networks");
        Ok(Self {
            nets,
            input,
            outputs,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.input.validate()?;
        for (k, net) in self.nets.iter().enumerate() {
            if net.id as usize != k + 1 {
                return Err(Error::config(format!("network[{k}].id"), "ids must be 1..=4 in order"));
            }
            net.validate()?;
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.nets.iter().map(|n| n.num_params()).sum()
    }

    /// Range of each network's parameters inside the flat model vector.
    pub fn param_ranges(&self) -> [Range<usize>; NUM_NETWORKS] {
        let mut start = 0;
        std::array::from_fn(|k| {
            let end = start + self.nets[k].num_params();
            let r = start..end;
            start = end;
            r
        })
    }

    pub fn to_flat(&self) -> Vec<F> {
        self.nets.iter().flat_map(|n| n.to_flat()).collect()
    }

    pub fn set_flat(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::config(
                "model",
                format!("expected {} parameters, got {}", self.num_params(), flat.len()),
            ));
        }
        let ranges = self.param_ranges();
        for (net, r) in self.nets.iter_mut().zip(ranges) {
            net.set_flat(&flat[r])?;
        }
        Ok(())
    }

    /// Jet of physical output `k` (0..=2 displacement, 3 temperature).
    pub fn net_jet(&self, k: usize, point: &[F; 4]) -> Result<Jet4<F>> {
        let raw = self.nets[k].forward_jet(&self.input, point)?;
        Ok(self.outputs[k].apply(&raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cube_architecture_shapes() {
        let p: ParamSet<f64> = init_params(4, 15, Activation::Swish, 7).unwrap();
        assert_eq!(p.widths(), vec![4, 15, 15, 15, 15, 1]);
    }

    #[test]
    fn init_is_deterministic() {
        let a: ParamSet<f64> = init_params(4, 15, Activation::Swish, 7).unwrap();
        let b: ParamSet<f64> = init_params(4, 15, Activation::Swish, 7).unwrap();
        let bits = |p: &ParamSet<f64>| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c: ParamSet<f64> = init_params(4, 15, Activation::Swish, 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn parameter_count_two_by_five() {
        // 4·5 + 5·5 + 5·1 weights, 5 + 5 + 1 biases
        let p: ParamSet<f64> = init_params(2, 5, Activation::Tanh, 1).unwrap();
        assert_eq!(p.num_weights(), 50);
        assert_eq!(p.num_biases(), 11);
        assert_eq!(p.num_params(), 61);
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let p: ParamSet<f64> = init_params(3, 10, Activation::Tanh, 3).unwrap();
        for layer in &p.layers {
            let bound = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn invalid_counts_are_rejected() {
        assert!(init_params::<f64>(0, 5, Activation::Tanh, 1).is_err());
        assert!(init_params::<f64>(2, 0, Activation::Tanh, 1).is_err());
    }

    #[test]
    fn broken_chain_is_rejected() {
        let layers = vec![DenseLayer::<f64>::zeros(4, 3), DenseLayer::zeros(2, 1)];
        assert!(ParamSet::from_layers(1, Activation::Tanh, layers).is_err());
    }

    #[test]
    fn constant_network() {
        let mut layers = vec![DenseLayer::<f64>::zeros(4, 3), DenseLayer::zeros(3, 1)];
        layers[0].bias = array![0.5, -0.2, 1.0];
        layers[1].bias = array![2.5];
        let net = ParamSet::from_layers(1, Activation::Tanh, layers).unwrap();
        let jet = net
            .forward_jet(&InputScaling::identity(), &[0.3, 0.1, -0.7, 0.4])
            .unwrap();
        assert_eq!(jet, Jet4::constant(2.5));
    }

    #[test]
    fn linear_network_folds_normalization() {
        let mut layer = DenseLayer::<f64>::zeros(4, 1);
        layer.weights = array![[1.0, -2.0, 0.5, 3.0]];
        let net = ParamSet::from_layers(1, Activation::Tanh, vec![layer]).unwrap();
        let scaling = InputScaling::from_bounds([0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 1e-3, 1.0]).unwrap();
        let jet = net.forward_jet(&scaling, &[0.2, 0.4, 1e-4, 0.5]).unwrap();
        let expected = [2.0, -2.0, 0.5 * 2000.0, 6.0];
        for a in 0..4 {
            assert!((jet.grad[a] - expected[a]).abs() < 1e-9 * expected[a].abs());
        }
        assert_eq!(jet.hess_matrix(), [[0.0; 4]; 4]);
    }

    #[test]
    fn flat_round_trip() {
        let arch = Architecture {
            hidden_layers: 2,
            neurons: 5,
            activation: Activation::Tanh,
        };
        let mut m =
            ModelState::<f64>::init(&arch, InputScaling::identity(), [OutputScaling::identity(); 4], 11).unwrap();
        let flat = m.to_flat();
        assert_eq!(flat.len(), 4 * 61);
        let ranges = m.param_ranges();
        assert_eq!(ranges[3], 183..244);
        let shifted: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        m.set_flat(&shifted).unwrap();
        assert_eq!(m.to_flat(), shifted);
        assert!(m.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn shared_spatial_normalization_keeps_proportions() {
        let lo = [0.0, 0.0, 0.0, 0.0];
        let hi: [f64; 4] = [1.0, 0.5, 1e-5, 2.0];
        let s = InputScaling::from_bounds_with(lo, hi, Normalization::SharedSpatial).unwrap();
        assert_eq!(s.scale[..3], [2.0, 2.0, 2.0]);
        assert_eq!(s.scale[3], 1.0);
        for a in 0..3 {
            let centre = 0.5 * hi[a];
            assert!(s.apply(a, centre).abs() < 1e-15);
        }
        assert_eq!(s.apply(0, 1.0), 1.0);
        let p = InputScaling::from_bounds_with(lo, hi, Normalization::PerAxis).unwrap();
        assert_eq!(p, InputScaling::from_bounds(lo, hi).unwrap());
    }

    #[test]
    fn output_scaling_from_samples() {
        let s = OutputScaling::from_samples([200.0, 250.0, 210.0]);
        assert_eq!(s.shift, 225.0);
        assert_eq!(s.scale, 25.0);
        let flat = OutputScaling::from_samples([4.0, 4.0]);
        assert_eq!((flat.shift, flat.scale), (4.0, 4.0));
        let zero = OutputScaling::from_samples([0.0]);
        assert_eq!((zero.shift, zero.scale), (0.0, 1.0));
    }
}
