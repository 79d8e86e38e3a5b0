//! Manufactured solutions, the sources and boundary data they imply, and
//! the error metrics used to score a trained model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet4, JetOrder, TIME};
use crate::materials::{MaterialModel, MaterialPoint};
use crate::physics::{
    heat_flux, mechanical_residual, stress, thermal_residual, traction, FieldJets, FieldModel, ProblemData,
    SourceSample,
};
use crate::{Error, Real, Result};

/// Closed-form displacement and temperature fields with analytic jets.
///
/// `u_k = 1e-3 [sin(x1+x2+x3) e^{-k t} + (sum of the other two coordinates) + 1e-4]`
/// and `T = cos x1 cos x2 cos x3 cos t + 18 (x1+x2+x3) + 200`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExactSolution;

impl ExactSolution {
    pub fn displacement<F: Real>(&self, i: usize, x: &[F; 4]) -> Jet4<F> {
        let l = F::lit;
        let amp = l(1e-3);
        let m = F::from_usize_lossy(i + 1);
        let (sn, cs) = (x[0] + x[1] + x[2]).sin_cos();
        let e = (-m * x[TIME]).exp();
        let lin = (0..3).filter(|&a| a != i).fold(F::zero(), |acc, a| acc + x[a]);
        let mut grad = [F::zero(); 4];
        for (a, g) in grad.iter_mut().enumerate().take(3) {
            let delta = if a == i { F::zero() } else { F::one() };
            *g = amp * (cs * e + delta);
        }
        grad[TIME] = -amp * m * sn * e;
        let mut full = [[F::zero(); 4]; 4];
        for a in 0..3 {
            for b in 0..3 {
                full[a][b] = -amp * sn * e;
            }
            full[a][TIME] = -amp * m * cs * e;
            full[TIME][a] = full[a][TIME];
        }
        full[TIME][TIME] = amp * m * m * sn * e;
        Jet4::from_full_hessian(amp * (sn * e + lin + l(1e-4)), grad, full)
    }

    pub fn temperature<F: Real>(&self, x: &[F; 4]) -> Jet4<F> {
        let l = F::lit;
        let sc: [(F, F); 4] = std::array::from_fn(|a| x[a].sin_cos());
        let (s, c): ([F; 4], [F; 4]) = (sc.map(|p| p.0), sc.map(|p| p.1));
        let p = c[0] * c[1] * c[2];
        let others = |a: usize| (0..3).filter(|&b| b != a).fold(F::one(), |acc, b| acc * c[b]);
        let mut grad = [F::zero(); 4];
        for a in 0..3 {
            grad[a] = -s[a] * others(a) * c[TIME] + l(18.0);
        }
        grad[TIME] = -p * s[TIME];
        let mut full = [[F::zero(); 4]; 4];
        for a in 0..3 {
            for b in 0..3 {
                full[a][b] = if a == b {
                    -p * c[TIME]
                } else {
                    let k = 3 - a - b;
                    s[a] * s[b] * c[k] * c[TIME]
                };
            }
            full[a][TIME] = s[a] * others(a) * s[TIME];
            full[TIME][a] = full[a][TIME];
        }
        full[TIME][TIME] = -p * c[TIME];
        let value = p * c[TIME] + l(18.0) * (x[0] + x[1] + x[2]) + l(200.0);
        Jet4::from_full_hessian(value, grad, full)
    }

    pub fn exact_jets<F: Real>(&self, x: &[F; 4]) -> FieldJets<F> {
        FieldJets {
            fields: [
                self.displacement(0, x),
                self.displacement(1, x),
                self.displacement(2, x),
                self.temperature(x),
            ],
        }
    }
}

impl<F: Real> FieldModel<F> for ExactSolution {
    fn field_jets(&self, x: &[F; 4]) -> Result<FieldJets<F>> {
        Ok(self.exact_jets(x))
    }
}

/// Body force and heat source that make the exact fields solve the
/// equations: the residual operators applied to the exact jets with zero
/// sources.
pub fn derive_sources<F: Real>(x: &[F; 4], material: &MaterialModel<F>) -> Result<SourceSample<F>> {
    let jets = ExactSolution.exact_jets(x);
    let mat = material.eval(&[x[0], x[1], x[2]])?;
    let zero = SourceSample::default();
    Ok(SourceSample {
        f: std::array::from_fn(|i| mechanical_residual(i, &jets, &mat, &zero)),
        s: thermal_residual(&jets, &mat, &zero, &material.constants),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    DirichletDisplacement,
    DirichletTemperature,
    NeumannTraction,
    NeumannFlux,
}

/// Boundary target: a vector for displacement/traction, a scalar otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryTarget<F = f64> {
    Vector([F; 3]),
    Scalar(F),
}

/// Exact-field data for a boundary condition of the given kind.
pub fn boundary_data<F: Real>(
    x: &[F; 4],
    normal: Option<&[F; 3]>,
    kind: BoundaryKind,
    material: &MaterialModel<F>,
) -> Result<BoundaryTarget<F>> {
    let jets = ExactSolution.exact_jets(x);
    let need_normal = || normal.ok_or_else(|| Error::config("normal", "Neumann data needs a normal"));
    Ok(match kind {
        BoundaryKind::DirichletDisplacement => BoundaryTarget::Vector(std::array::from_fn(|i| jets.u(i).value)),
        BoundaryKind::DirichletTemperature => BoundaryTarget::Scalar(jets.temperature().value),
        BoundaryKind::NeumannTraction => {
            let mat = material.eval(&[x[0], x[1], x[2]])?;
            BoundaryTarget::Vector(traction(&stress(&jets, &mat), need_normal()?)?)
        }
        BoundaryKind::NeumannFlux => {
            let mat = material.eval(&[x[0], x[1], x[2]])?;
            BoundaryTarget::Scalar(heat_flux(&jets, &mat, need_normal()?)?)
        }
    })
}

/// A manufactured problem: a material plus the exact fields' data.
#[derive(Clone, Debug, PartialEq)]
pub struct ManufacturedProblem<F = f64> {
    pub material: MaterialModel<F>,
}

impl<F: Real> ManufacturedProblem<F> {
    pub fn new(material: MaterialModel<F>) -> Self {
        Self { material }
    }
}

impl<F: Real> ProblemData<F> for ManufacturedProblem<F> {
    fn material(&self) -> &MaterialModel<F> {
        &self.material
    }

    fn source(&self, x: &[F; 4]) -> Result<SourceSample<F>> {
        derive_sources(x, &self.material)
    }

    fn initial_displacement(&self, x: &[F; 3], t0: F) -> Result<[F; 3]> {
        let p = [x[0], x[1], x[2], t0];
        Ok(std::array::from_fn(|i| ExactSolution.displacement(i, &p).value))
    }

    fn initial_velocity(&self, x: &[F; 3], t0: F) -> Result<[F; 3]> {
        let p = [x[0], x[1], x[2], t0];
        Ok(std::array::from_fn(|i| ExactSolution.displacement(i, &p).grad[TIME]))
    }

    fn initial_temperature(&self, x: &[F; 3], t0: F) -> Result<F> {
        Ok(ExactSolution.temperature(&[x[0], x[1], x[2], t0]).value)
    }

    fn dirichlet(&self, x: &[F; 4]) -> Result<[F; 4]> {
        let j = ExactSolution.exact_jets(x);
        Ok(j.fields.map(|f| f.value))
    }

    fn neumann(&self, x: &[F; 4], n: &[F; 3]) -> Result<([F; 3], F)> {
        let jets = ExactSolution.exact_jets(x);
        let mat = self.material.eval(&[x[0], x[1], x[2]])?;
        Ok((traction(&stress(&jets, &mat), n)?, heat_flux(&jets, &mat, n)?))
    }
}

/// Relative error, or the absolute error when the exact value is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeError<F = f64> {
    pub value: F,
    /// True when the exact value was zero and `value` is absolute.
    pub absolute: bool,
}

pub fn relative_error<F: Real>(exact: F, numerical: F) -> RelativeError<F> {
    let diff = (exact - numerical).abs();
    if exact == F::zero() {
        RelativeError {
            value: diff,
            absolute: true,
        }
    } else {
        RelativeError {
            value: diff / exact.abs(),
            absolute: false,
        }
    }
}

/// Relative L2 error `‖exact − numerical‖ / ‖exact‖`.
pub fn global_error<F: Real>(exact: &[F], numerical: &[F]) -> Result<F> {
    if exact.len() != numerical.len() {
        return Err(Error::config(
            "numerical",
            format!("length {} does not match exact length {}", numerical.len(), exact.len()),
        ));
    }
    // Scaled sums keep the ratio exact under a common factor and avoid overflow.
    let scale = exact.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    if scale == F::zero() {
        return Err(Error::numeric("global_error", "exact values are all zero"));
    }
    let (mut num, mut den) = (F::zero(), F::zero());
    for (&e, &n) in exact.iter().zip(numerical) {
        let d = (e - n) / scale;
        let es = e / scale;
        num += d * d;
        den += es * es;
    }
    Ok((num / den).sqrt())
}

/// Output quantities that can be scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Quantity {
    Stress(usize, usize),
    TemperatureGradient(usize),
    Displacement(usize),
    Temperature,
}

impl Quantity {
    /// The stress and heat-flux columns of the published tables.
    pub const TABLE: [Quantity; 6] = [
        Quantity::Stress(0, 0),
        Quantity::Stress(1, 1),
        Quantity::Stress(2, 2),
        Quantity::TemperatureGradient(0),
        Quantity::TemperatureGradient(1),
        Quantity::TemperatureGradient(2),
    ];

    pub const ALL: [Quantity; 13] = [
        Quantity::Stress(0, 0),
        Quantity::Stress(1, 1),
        Quantity::Stress(2, 2),
        Quantity::Stress(0, 1),
        Quantity::Stress(0, 2),
        Quantity::Stress(1, 2),
        Quantity::TemperatureGradient(0),
        Quantity::TemperatureGradient(1),
        Quantity::TemperatureGradient(2),
        Quantity::Displacement(0),
        Quantity::Displacement(1),
        Quantity::Displacement(2),
        Quantity::Temperature,
    ];

    pub fn is_stress(self) -> bool {
        matches!(self, Quantity::Stress(..))
    }

    pub fn eval<F: Real>(self, jets: &FieldJets<F>, mat: &MaterialPoint<F>) -> F {
        match self {
            Quantity::Stress(i, j) => stress(jets, mat).stress[i][j],
            Quantity::TemperatureGradient(a) => jets.temperature().grad[a],
            Quantity::Displacement(i) => jets.u(i).value,
            Quantity::Temperature => jets.temperature().value,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Stress(i, j) => write!(f, "σ{}{}", i + 1, j + 1),
            Quantity::TemperatureGradient(a) => write!(f, "T,{}", a + 1),
            Quantity::Displacement(i) => write!(f, "u{}", i + 1),
            Quantity::Temperature => f.write_str("T"),
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digit = |c: char| c.to_digit(10).filter(|d| (1..=3).contains(d)).map(|d| d as usize - 1);
        let unknown = || Error::UnknownQuantity(s.to_string());
        if t == "T" {
            return Ok(Quantity::Temperature);
        }
        for prefix in ["σ", "sigma", "s", "S"] {
            if let Some(rest) = t.strip_prefix(prefix) {
                let mut cs = rest.chars();
                if let (Some(a), Some(b), None) = (cs.next(), cs.next(), cs.next()) {
                    let (i, j) = (digit(a).ok_or_else(unknown)?, digit(b).ok_or_else(unknown)?);
                    return Ok(Quantity::Stress(i.min(j), i.max(j)));
                }
            }
        }
        for prefix in ["T,", "T_", "T"] {
            if let Some(rest) = t.strip_prefix(prefix) {
                let mut cs = rest.chars();
                if let (Some(a), None) = (cs.next(), cs.next()) {
                    return Ok(Quantity::TemperatureGradient(digit(a).ok_or_else(unknown)?));
                }
            }
        }
        if let Some(rest) = t.strip_prefix('u') {
            let mut cs = rest.chars();
            if let (Some(a), None) = (cs.next(), cs.next()) {
                return Ok(Quantity::Displacement(digit(a).ok_or_else(unknown)?));
            }
        }
        Err(unknown())
    }
}

impl TryFrom<String> for Quantity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Quantity> for String {
    fn from(q: Quantity) -> String {
        q.to_string()
    }
}

/// Parses a comma- or whitespace-separated quantity list. `T,1` style
/// names survive comma splitting.
pub fn parse_quantities(list: &str) -> Result<Vec<Quantity>> {
    let pieces: Vec<&str> = list
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < pieces.len() {
        let joined_gradient = pieces[k] == "T"
            && pieces
                .get(k + 1)
                .is_some_and(|n| n.len() == 1 && n.chars().all(|c| c.is_ascii_digit()));
        if joined_gradient {
            out.push(format!("T,{}", pieces[k + 1]).parse()?);
            k += 2;
        } else {
            out.push(pieces[k].parse()?);
            k += 1;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalErrorRow<F = f64> {
    pub quantity: Quantity,
    pub time: F,
    pub global_error: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointErrorRow<F = f64> {
    pub x: [F; 3],
    pub time: F,
    pub quantity: Quantity,
    pub relative_error: F,
    pub absolute: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ErrorReport<F = f64> {
    pub global: Vec<GlobalErrorRow<F>>,
    pub points: Vec<PointErrorRow<F>>,
}

impl<F: Real> ErrorReport<F> {
    pub fn get(&self, quantity: Quantity, time: F) -> Option<F> {
        self.global
            .iter()
            .find(|r| r.quantity == quantity && r.time == time)
            .map(|r| r.global_error)
    }

    /// Largest global error over the stress quantities.
    pub fn max_stress_error(&self) -> Option<F> {
        self.global
            .iter()
            .filter(|r| r.quantity.is_stress())
            .map(|r| r.global_error)
            .reduce(F::max)
    }
}

/// Global errors of `model` against the exact fields at every test node,
/// per quantity and time. With `with_points`, also per-node relative errors.
pub fn error_report<F: Real, M: FieldModel<F> + ?Sized>(
    model: &M,
    material: &MaterialModel<F>,
    nodes: &[[F; 3]],
    times: &[F],
    quantities: &[Quantity],
    with_points: bool,
) -> Result<ErrorReport<F>> {
    if nodes.is_empty() {
        return Err(Error::config("test_grid", "no test nodes"));
    }
    let mats = nodes.iter().map(|x| material.eval(x)).collect::<Result<Vec<_>>>()?;
    let mut report = ErrorReport::default();
    for &t in times {
        let pts: Vec<[F; 4]> = nodes.iter().map(|x| [x[0], x[1], x[2], t]).collect();
        let numerical = model.field_jets_batch(&pts, JetOrder::Gradient)?;
        let exact: Vec<FieldJets<F>> = pts.iter().map(|p| ExactSolution.exact_jets(p)).collect();
        for &q in quantities {
            let e: Vec<F> = exact.iter().zip(&mats).map(|(j, m)| q.eval(j, m)).collect();
            let n: Vec<F> = numerical.iter().zip(&mats).map(|(j, m)| q.eval(j, m)).collect();
            report.global.push(GlobalErrorRow {
                quantity: q,
                time: t,
                global_error: global_error(&e, &n)?,
            });
            if with_points {
                for (k, x) in nodes.iter().enumerate() {
                    let r = relative_error(e[k], n[k]);
                    report.points.push(PointErrorRow {
                        x: *x,
                        time: t,
                        quantity: q,
                        relative_error: r.value,
                        absolute: r.absolute,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{CaseId, MaterialSpecs, PhysicalConstants, PropertySpec};

    fn case1() -> MaterialModel<f64> {
        MaterialModel::builtin(CaseId::Case1, PhysicalConstants::default()).unwrap()
    }

    fn homogeneous() -> MaterialModel<f64> {
        let c = PhysicalConstants::default();
        let specs = MaterialSpecs {
            kappa: PropertySpec::uniform(c.kappa0, ""),
            rho: PropertySpec::uniform(c.rho0, ""),
            c: PropertySpec::uniform(c.c0, ""),
            e: PropertySpec::uniform(c.e0, ""),
        };
        MaterialModel::new(specs, c).unwrap()
    }

    #[test]
    fn exact_values() {
        let o = [0.0f64; 4];
        assert_eq!(ExactSolution.temperature(&o).value, 201.0);
        assert!((ExactSolution.displacement(0, &o).value - 1e-7).abs() < 1e-22);
        let v = ExactSolution.displacement(0, &[1.0f64, 0.0, 0.0, 0.0]).value;
        assert!((v - 8.41571e-4).abs() < 1e-9);
    }

    #[test]
    fn homogeneous_sources_at_origin() {
        // f1 = β T,1 with T,1 = 18; every other term vanishes at the origin.
        let m = homogeneous();
        let beta = 0.02 * 1.25e11 / 0.44;
        let src = derive_sources(&[0.0; 4], &m).unwrap();
        assert!((src.f[0] - 18.0 * beta).abs() < 1e-15 * 18.0 * beta);
        assert!((src.f[0] - 1.0227e11).abs() < 1e7);
        // s = βT0·(−1e-3·(1+2+3)) + 3κ
        let s = beta * 100.0 * (-0.006) + 3.0 * 60.0;
        assert!((src.s - s).abs() < 1e-12 * s.abs());
    }

    #[test]
    fn late_time_sources_reduce_to_thermal_coupling() {
        let m = case1();
        let x = [0.3, 0.6, 0.2, 30.0];
        let src = derive_sources(&x, &m).unwrap();
        let mat = m.eval(&[x[0], x[1], x[2]]).unwrap();
        let tg = ExactSolution.temperature(&x).grad;
        for i in 0..3 {
            let coupling = mat.beta.value * tg[i];
            assert!((src.f[i] - coupling).abs() < 1e-13 * coupling.abs());
        }
    }

    #[test]
    fn flux_and_temperature_data_at_origin() {
        let m = case1();
        let o = [0.0; 4];
        let t = boundary_data(&o, None, BoundaryKind::DirichletTemperature, &m).unwrap();
        assert_eq!(t, BoundaryTarget::Scalar(201.0));
        let q = boundary_data(&o, Some(&[1.0, 0.0, 0.0]), BoundaryKind::NeumannFlux, &m).unwrap();
        assert_eq!(q, BoundaryTarget::Scalar(-1080.0));
        assert!(boundary_data(&o, None, BoundaryKind::NeumannFlux, &m).is_err());
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(2.0, 2.0).value, 0.0);
        assert!((relative_error(100.0f64, 101.0).value - 0.01).abs() < 1e-16);
        let z = relative_error(0.0, 0.1);
        assert!(z.absolute);
        assert_eq!(z.value, 0.1);
    }

    #[test]
    fn global_error_examples() {
        assert_eq!(global_error(&[1.0, -2.0, 3.0], &[1.0, -2.0, 3.0]).unwrap(), 0.0);
        let e = [1.0, -2.0, 3.0, 0.5];
        let n: Vec<f64> = e.iter().map(|v| 1.01 * v).collect();
        assert!((global_error(&e, &n).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(global_error(&[3.0, 4.0], &[3.0, 0.0]).unwrap(), 0.8);
        assert!(global_error(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(global_error(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn quantity_names() {
        let names: Vec<String> = Quantity::TABLE.iter().map(|q| q.to_string()).collect();
        assert_eq!(names, ["σ11", "σ22", "σ33", "T,1", "T,2", "T,3"]);
        for q in Quantity::ALL {
            assert_eq!(q.to_string().parse::<Quantity>().unwrap(), q);
        }
        assert_eq!("s12".parse::<Quantity>().unwrap(), Quantity::Stress(0, 1));
        assert_eq!("T_3".parse::<Quantity>().unwrap(), Quantity::TemperatureGradient(2));
        assert!(matches!("σ44".parse::<Quantity>(), Err(Error::UnknownQuantity(_))));
        assert!(matches!("heat".parse::<Quantity>(), Err(Error::UnknownQuantity(_))));
        assert_eq!(
            parse_quantities("σ11, T,2 u3,T").unwrap(),
            vec![
                Quantity::Stress(0, 0),
                Quantity::TemperatureGradient(1),
                Quantity::Displacement(2),
                Quantity::Temperature
            ]
        );
    }

    #[test]
    fn exact_model_has_zero_error() {
        let m = case1();
        let nodes = vec![[0.1, 0.2, 0.3], [0.9, 0.5, 0.0], [1.0, 1.0, 1.0]];
        let r = error_report(&ExactSolution, &m, &nodes, &[0.95], &Quantity::TABLE, true).unwrap();
        assert_eq!(r.global.len(), 6);
        assert!(r.global.iter().all(|row| row.global_error == 0.0));
        assert_eq!(r.points.len(), 18);
    }
}
