//! Functionally graded property fields and the derived Lamé/thermal moduli.
//!
//! Every field is a product of one factor per axis, optionally squared:
//! `φ(x) = φ0 · Π_i f_i(x_i)^e` with `e ∈ {1, 2}`.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// One axis factor of a product-form property field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AxisFactor<F = f64> {
    /// `p + q·x`
    Linear { p: F, q: F },
    /// `p·e^{αx}`
    Exponential { p: F, alpha: F },
    /// `p·cos(αx) + q·sin(αx)`
    Trigonometric { p: F, q: F, alpha: F },
}

impl<F: Real> AxisFactor<F> {
    /// Factor value and its derivative.
    #[inline]
    pub fn eval(&self, x: F) -> (F, F) {
        match *self {
            AxisFactor::Linear { p, q } => (p + q * x, q),
            AxisFactor::Exponential { p, alpha } => {
                let e = p * (alpha * x).exp();
                (e, alpha * e)
            }
            AxisFactor::Trigonometric { p, q, alpha } => {
                let (s, c) = (alpha * x).sin_cos();
                (p * c + q * s, alpha * (q * c - p * s))
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            AxisFactor::Linear { p, q } => p.is_finite() && q.is_finite(),
            AxisFactor::Exponential { p, alpha } => p.is_finite() && alpha.is_finite(),
            AxisFactor::Trigonometric { p, q, alpha } => p.is_finite() && q.is_finite() && alpha.is_finite(),
        }
    }

    /// Zeros of the factor inside `[lo, hi]`.
    pub fn roots_in(&self, lo: F, hi: F) -> Vec<F> {
        match *self {
            AxisFactor::Linear { p, q } => {
                if q == F::zero() {
                    return Vec::new();
                }
                let r = -p / q;
                if r >= lo && r <= hi {
                    vec![r]
                } else {
                    Vec::new()
                }
            }
            AxisFactor::Exponential { .. } => Vec::new(),
            AxisFactor::Trigonometric { p, q, alpha } => {
                if alpha == F::zero() {
                    return Vec::new();
                }
                // p cos(αx) + q sin(αx) = R cos(αx - φ), zero at αx = φ + π/2 + kπ
                let phi = q.atan2(p);
                let pi = F::PI();
                let half = F::lit(0.5);
                let (a, b) = if alpha > F::zero() {
                    (alpha * lo, alpha * hi)
                } else {
                    (alpha * hi, alpha * lo)
                };
                let k0 = ((a - phi - half * pi) / pi).ceil();
                let mut roots = Vec::new();
                let mut k = k0;
                while phi + half * pi + k * pi <= b {
                    roots.push((phi + half * pi + k * pi) / alpha);
                    k += F::one();
                }
                roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
                roots
            }
        }
    }
}

/// Product-form families, named by the formula they evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `Π (p + q x)^e`
    ProductQuadratic,
    /// `Π (p e^{αx})^e`
    ProductExponential,
    /// `Π (p cos αx + q sin αx)^e`
    ProductTrigonometric,
    /// A different factor kind per axis.
    PerAxisMixed,
}

/// A graded scalar property `φ0 · Π_i f_i(x_i)^(1 or 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertySpec<F = f64> {
    pub base: F,
    pub factors: [AxisFactor<F>; 3],
    pub squared: bool,
    /// Unit label, carried as metadata only.
    pub units: String,
}

/// A property value together with its spatial gradient.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Graded<F = f64> {
    pub value: F,
    pub grad: [F; 3],
}

impl<F: Real> Graded<F> {
    pub fn constant(value: F) -> Self {
        Self {
            value,
            grad: [F::zero(); 3],
        }
    }

    pub fn scaled(&self, k: F) -> Self {
        Self {
            value: self.value * k,
            grad: self.grad.map(|g| g * k),
        }
    }
}

impl<F: Real> PropertySpec<F> {
    pub fn new(base: F, factors: [AxisFactor<F>; 3], squared: bool, units: impl Into<String>) -> Self {
        Self {
            base,
            factors,
            squared,
            units: units.into(),
        }
    }

    /// Spatially uniform field of value `base`.
    pub fn uniform(base: F, units: impl Into<String>) -> Self {
        let one = AxisFactor::Linear {
            p: F::one(),
            q: F::zero(),
        };
        Self::new(base, [one; 3], false, units)
    }

    pub fn family(&self) -> Family {
        use AxisFactor::*;
        match self.factors {
            [Linear { .. }, Linear { .. }, Linear { .. }] => Family::ProductQuadratic,
            [Exponential { .. }, Exponential { .. }, Exponential { .. }] => Family::ProductExponential,
            [Trigonometric { .. }, Trigonometric { .. }, Trigonometric { .. }] => Family::ProductTrigonometric,
            _ => Family::PerAxisMixed,
        }
    }

    pub fn validate_coefficients(&self) -> Result<()> {
        if !self.base.is_finite() || !self.factors.iter().all(|f| f.is_finite()) {
            return Err(Error::config("material", "non-finite property coefficient"));
        }
        Ok(())
    }

    /// Value and analytic gradient without the positivity check.
    pub fn eval_unchecked(&self, x: &[F; 3]) -> Graded<F> {
        let mut vals = [F::zero(); 3];
        let mut ders = [F::zero(); 3];
        for i in 0..3 {
            let (v, d) = self.factors[i].eval(x[i]);
            if self.squared {
                vals[i] = v * v;
                ders[i] = F::lit(2.0) * v * d;
            } else {
                vals[i] = v;
                ders[i] = d;
            }
        }
        let value = self.base * vals[0] * vals[1] * vals[2];
        let grad = [
            self.base * ders[0] * vals[1] * vals[2],
            self.base * vals[0] * ders[1] * vals[2],
            self.base * vals[0] * vals[1] * ders[2],
        ];
        Graded { value, grad }
    }

    /// Axes whose factor changes sign inside the box, with the crossing
    /// coordinate. Squared fields never change sign.
    pub fn sign_changes(&self, lo: &[F; 3], hi: &[F; 3]) -> Vec<(usize, F)> {
        if self.squared {
            return Vec::new();
        }
        (0..3)
            .flat_map(|i| self.factors[i].roots_in(lo[i], hi[i]).into_iter().map(move |r| (i, r)))
            .collect()
    }

    /// Checks positivity on a `samples³` lattice over the box.
    pub fn check_positive_on(&self, name: &str, lo: &[F; 3], hi: &[F; 3], samples: usize) -> Result<()> {
        let n = samples.max(2);
        let denom = F::from_usize_lossy(n - 1);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = [i, j, k].map(|m| F::from_usize_lossy(m) / denom);
                    let x = std::array::from_fn(|a| lo[a] + t[a] * (hi[a] - lo[a]));
                    eval_property_named(self, name, &x)?;
                }
            }
        }
        Ok(())
    }
}

/// Value and analytic gradient of a property field at `x`.
pub fn eval_property<F: Real>(spec: &PropertySpec<F>, x: &[F; 3]) -> Result<Graded<F>> {
    eval_property_named(spec, "property", x)
}

fn eval_property_named<F: Real>(spec: &PropertySpec<F>, name: &str, x: &[F; 3]) -> Result<Graded<F>> {
    let g = spec.eval_unchecked(x);
    if !(g.value > F::zero()) {
        return Err(Error::MaterialValidity {
            property: name.to_string(),
            value: g.value.to_f64_lossy(),
            point: x.map(|v| v.to_f64_lossy()),
        });
    }
    Ok(g)
}

/// Reference constants shared by all cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants<F = f64> {
    /// W/(m·°C)
    pub kappa0: F,
    /// kg/m³
    pub rho0: F,
    /// J/(kg·°C)
    pub c0: F,
    /// Pa
    pub e0: F,
    /// Reference temperature T0, °C
    pub t_ref: F,
    pub poisson: F,
    pub expansion: F,
}

impl<F: Real> Default for PhysicalConstants<F> {
    fn default() -> Self {
        Self {
            kappa0: F::lit(60.0),
            rho0: F::lit(2555.0),
            c0: F::lit(500.0),
            e0: F::lit(1.25e11),
            t_ref: F::lit(100.0),
            poisson: F::lit(0.28),
            expansion: F::lit(0.02),
        }
    }
}

impl<F: Real> PhysicalConstants<F> {
    pub fn validate(&self) -> Result<()> {
        let half = F::lit(0.5);
        if self.poisson == half {
            return Err(Error::SingularMaterial(
                "Poisson ratio 0.5 makes λ and β unbounded".into(),
            ));
        }
        if !(self.poisson > F::zero() && self.poisson < half) {
            return Err(Error::config("constants.poisson", "must lie in (0, 0.5)"));
        }
        let positive = [
            ("constants.kappa0", self.kappa0),
            ("constants.rho0", self.rho0),
            ("constants.c0", self.c0),
            ("constants.e0", self.e0),
            ("constants.t_ref", self.t_ref),
            ("constants.expansion", self.expansion),
        ];
        for (field, v) in positive {
            if !(v > F::zero()) || !v.is_finite() {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// `(λ/E, μ/E, β/E)`.
    pub fn modulus_ratios(&self) -> (F, F, F) {
        let one = F::one();
        let two = F::lit(2.0);
        let nu = self.poisson;
        (
            nu / ((one + nu) * (one - two * nu)),
            one / (two * (one + nu)),
            self.expansion / (one - two * nu),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LameFields<F = f64> {
    pub lambda: Graded<F>,
    pub mu: Graded<F>,
    pub beta: Graded<F>,
}

/// λ, μ, β and their gradients from Young's modulus.
pub fn derive_lame<F: Real>(e: &Graded<F>, constants: &PhysicalConstants<F>) -> Result<LameFields<F>> {
    constants.validate()?;
    let (kl, km, kb) = constants.modulus_ratios();
    Ok(LameFields {
        lambda: e.scaled(kl),
        mu: e.scaled(km),
        beta: e.scaled(kb),
    })
}

/// All material quantities at one spatial point.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MaterialPoint<F = f64> {
    pub kappa: Graded<F>,
    pub rho: Graded<F>,
    pub c: Graded<F>,
    pub e: Graded<F>,
    pub lambda: Graded<F>,
    pub mu: Graded<F>,
    pub beta: Graded<F>,
}

/// Built-in material cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    /// Exponential grading (cube and coating).
    Case1,
    /// Trigonometric grading (comb).
    Case2,
    /// Quadratic × exponential × trigonometric grading.
    Case3,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Case1, CaseId::Case2, CaseId::Case3];
}

/// The four property fields of a material model.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialSpecs<F = f64> {
    pub kappa: PropertySpec<F>,
    pub rho: PropertySpec<F>,
    pub c: PropertySpec<F>,
    pub e: PropertySpec<F>,
}

/// κ, ρ, c, E for a built-in case, with bases taken from `constants`.
pub fn builtin_case_materials<F: Real>(case: CaseId, constants: &PhysicalConstants<F>) -> MaterialSpecs<F> {
    let l = F::lit;
    let exp = |a: f64| AxisFactor::Exponential {
        p: F::one(),
        alpha: l(a),
    };
    let trig = |a: f64| AxisFactor::Trigonometric {
        p: F::one(),
        q: F::one(),
        alpha: l(a),
    };
    let lin = |p: f64, q: f64| AxisFactor::Linear { p: l(p), q: l(q) };
    let c = constants;
    match case {
        CaseId::Case1 => MaterialSpecs {
            kappa: PropertySpec::new(c.kappa0, [exp(0.4), exp(0.3), exp(0.2)], false, "W/(m·°C)"),
            rho: PropertySpec::new(c.rho0, [exp(0.2), exp(0.2), exp(0.1)], false, "kg/m³"),
            c: PropertySpec::new(c.c0, [exp(0.2), exp(0.1), exp(0.1)], false, "J/(kg·°C)"),
            e: PropertySpec::new(c.e0, [exp(0.3), exp(0.2), exp(0.1)], false, "Pa"),
        },
        CaseId::Case2 => MaterialSpecs {
            kappa: PropertySpec::new(c.kappa0, [trig(4.0), trig(3.0), trig(2.0)], true, "W/(m·°C)"),
            rho: PropertySpec::new(c.rho0, [trig(4.0), trig(3.0), trig(2.0)], false, "kg/m³"),
            c: PropertySpec::new(c.c0, [trig(4.0), trig(3.0), trig(2.0)], false, "J/(kg·°C)"),
            e: PropertySpec::new(c.e0, [trig(3.0), trig(2.0), trig(1.0)], false, "Pa"),
        },
        // Squaring applies per factor in κ; ρ, c, E keep unsquared factors.
        CaseId::Case3 => MaterialSpecs {
            kappa: PropertySpec::new(
                c.kappa0,
                [lin(0.5, 0.004), exp(0.003 / 2.0), trig(0.02)],
                true,
                "W/(m·°C)",
            ),
            rho: PropertySpec::new(c.rho0, [lin(0.5, 0.004), exp(0.002), trig(0.02)], false, "kg/m³"),
            c: PropertySpec::new(c.c0, [lin(0.5, 0.004), exp(0.001), trig(0.02)], false, "J/(kg·°C)"),
            e: PropertySpec::new(c.e0, [lin(0.8, 0.005), exp(0.004), trig(0.03)], false, "Pa"),
        },
    }
}

/// Property fields plus constants; evaluates full [`MaterialPoint`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialModel<F = f64> {
    pub specs: MaterialSpecs<F>,
    pub constants: PhysicalConstants<F>,
}

impl<F: Real> MaterialModel<F> {
    pub fn new(specs: MaterialSpecs<F>, constants: PhysicalConstants<F>) -> Result<Self> {
        constants.validate()?;
        for s in [&specs.kappa, &specs.rho, &specs.c, &specs.e] {
            s.validate_coefficients()?;
        }
        Ok(Self { specs, constants })
    }

    pub fn builtin(case: CaseId, constants: PhysicalConstants<F>) -> Result<Self> {
        Self::new(builtin_case_materials(case, &constants), constants)
    }

    /// Samples every field on a lattice over the box and fails on the first
    /// non-positive value.
    pub fn check_domain(&self, lo: &[F; 3], hi: &[F; 3]) -> Result<()> {
        for (name, spec) in self.named_specs() {
            spec.check_positive_on(name, lo, hi, 9)?;
        }
        Ok(())
    }

    pub fn named_specs(&self) -> [(&'static str, &PropertySpec<F>); 4] {
        [
            ("kappa", &self.specs.kappa),
            ("rho", &self.specs.rho),
            ("c", &self.specs.c),
            ("E", &self.specs.e),
        ]
    }

    pub fn eval(&self, x: &[F; 3]) -> Result<MaterialPoint<F>> {
        let kappa = eval_property_named(&self.specs.kappa, "kappa", x)?;
        let rho = eval_property_named(&self.specs.rho, "rho", x)?;
        let c = eval_property_named(&self.specs.c, "c", x)?;
        let e = eval_property_named(&self.specs.e, "E", x)?;
        let lame = derive_lame(&e, &self.constants)?;
        Ok(MaterialPoint {
            kappa,
            rho,
            c,
            e,
            lambda: lame.lambda,
            mu: lame.mu,
            beta: lame.beta,
        })
    }
}

/// Serializable description of a property field (config-file form).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySpecDef {
    pub family: Family,
    pub base: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 3]>,
    /// Per-axis factors for the mixed family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<[AxisFactor<f64>; 3]>,
    #[serde(default)]
    pub squared: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub units: String,
}

impl PropertySpecDef {
    pub fn to_spec<F: Real>(&self, field: &str) -> Result<PropertySpec<F>> {
        let need = |v: Option<[f64; 3]>, name: &str| {
            v.ok_or_else(|| Error::config(format!("{field}.{name}"), "required for this family"))
        };
        let factors: [AxisFactor<f64>; 3] = match self.family {
            Family::ProductQuadratic => {
                let (p, q) = (need(self.p, "p")?, need(self.q, "q")?);
                std::array::from_fn(|i| AxisFactor::Linear { p: p[i], q: q[i] })
            }
            Family::ProductExponential => {
                let p = self.p.unwrap_or([1.0; 3]);
                let alpha = need(self.alpha, "alpha")?;
                std::array::from_fn(|i| AxisFactor::Exponential {
                    p: p[i],
                    alpha: alpha[i],
                })
            }
            Family::ProductTrigonometric => {
                let (p, q, alpha) = (need(self.p, "p")?, need(self.q, "q")?, need(self.alpha, "alpha")?);
                std::array::from_fn(|i| AxisFactor::Trigonometric {
                    p: p[i],
                    q: q[i],
                    alpha: alpha[i],
                })
            }
            Family::PerAxisMixed => self
                .axes
                .ok_or_else(|| Error::config(format!("{field}.axes"), "required for per-axis-mixed"))?,
        };
        let conv = |f: AxisFactor<f64>| match f {
            AxisFactor::Linear { p, q } => AxisFactor::Linear {
                p: F::lit(p),
                q: F::lit(q),
            },
            AxisFactor::Exponential { p, alpha } => AxisFactor::Exponential {
                p: F::lit(p),
                alpha: F::lit(alpha),
            },
            AxisFactor::Trigonometric { p, q, alpha } => AxisFactor::Trigonometric {
                p: F::lit(p),
                q: F::lit(q),
                alpha: F::lit(alpha),
            },
        };
        let spec = PropertySpec::new(F::lit(self.base), factors.map(conv), self.squared, self.units.clone());
        spec.validate_coefficients()?;
        Ok(spec)
    }
}
