//! Pointwise activation functions with analytic derivatives up to third order.
//!
//! Jet propagation needs `σ'` and `σ''`; back-propagating through the
//! propagated Hessian additionally needs `σ'''`.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::Real;

static RELU_KINK_HITS: AtomicU64 = AtomicU64::new(0);

/// Number of ReLU evaluations that landed exactly on the kink at 0.
pub fn relu_kink_hits() -> u64 {
    RELU_KINK_HITS.load(Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// `exp(-x^2)`
    Gaussian,
    /// `x * sigmoid(x)`
    Swish,
    Arctan,
    /// `x * tanh(softplus(x))`
    Mish,
    /// `ln(1 + e^x)`
    Softplus,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 8] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Gaussian,
        Activation::Swish,
        Activation::Arctan,
        Activation::Mish,
        Activation::Softplus,
        Activation::Relu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Gaussian => "gaussian",
            Activation::Swish => "swish",
            Activation::Arctan => "arctan",
            Activation::Mish => "mish",
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn value<F: Real>(self, x: F) -> F {
        self.derivatives(x)[0]
    }

    /// `[σ(x), σ'(x), σ''(x), σ'''(x)]`.
    ///
    /// ReLU at exactly `x == 0` uses the zero subgradient and bumps
    /// [`relu_kink_hits`].
    pub fn derivatives<F: Real>(self, x: F) -> [F; 4] {
        let one = F::one();
        let two = F::lit(2.0);
        match self {
            Activation::Sigmoid => {
                let [s, s1, s2, s3] = sigmoid_derivs(x);
                [s, s1, s2, s3]
            }
            Activation::Tanh => {
                let t = x.tanh();
                let a = one - t * t;
                [t, a, -two * t * a, a * (F::lit(6.0) * t * t - two)]
            }
            Activation::Gaussian => {
                let g = (-x * x).exp();
                let x2 = x * x;
                [
                    g,
                    -two * x * g,
                    (F::lit(4.0) * x2 - two) * g,
                    (F::lit(12.0) * x - F::lit(8.0) * x2 * x) * g,
                ]
            }
            Activation::Swish => {
                let [s, s1, s2, s3] = sigmoid_derivs(x);
                [x * s, s + x * s1, two * s1 + x * s2, F::lit(3.0) * s2 + x * s3]
            }
            Activation::Arctan => {
                let q = one + x * x;
                [
                    x.atan(),
                    one / q,
                    -two * x / (q * q),
                    (F::lit(6.0) * x * x - two) / (q * q * q),
                ]
            }
            Activation::Softplus => {
                let [s, s1, s2, _] = sigmoid_derivs(x);
                [softplus(x), s, s1, s2]
            }
            Activation::Mish => {
                // w = tanh(softplus(x)), a = 1 - w^2, w' = a s
                let [s, s1, s2, _] = sigmoid_derivs(x);
                let w = softplus(x).tanh();
                let a = one - w * w;
                let w1 = a * s;
                let w2 = -two * w * a * s * s + a * s1;
                let w3 = -two * (a * a * s * s * s - two * w * w * a * s * s * s + two * w * a * s * s1)
                    - two * w * a * s * s1
                    + a * s2;
                [x * w, w + x * w1, two * w1 + x * w2, F::lit(3.0) * w2 + x * w3]
            }
            Activation::Relu => {
                let zero = F::zero();
                if x > zero {
                    [x, one, zero, zero]
                } else {
                    if x == zero {
                        RELU_KINK_HITS.fetch_add(1, Ordering::Relaxed);
                    }
                    [zero, zero, zero, zero]
                }
            }
        }
    }
}

#[inline]
fn sigmoid_derivs<F: Real>(x: F) -> [F; 4] {
    let one = F::one();
    let s = if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    let q = s * (one - s);
    [
        s,
        q,
        q * (one - F::lit(2.0) * s),
        q * (one - F::lit(6.0) * s + F::lit(6.0) * s * s),
    ]
}

#[inline]
fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| format!("unknown activation `{s}`"))
    }
}
