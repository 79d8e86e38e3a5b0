//! Residual operators, constitutive relations and the loss terms.
//!
//! Every residual and boundary mismatch is linear in the jet components of
//! the four outputs. Each one is therefore stored as a [`LinearForm`]: a
//! short list of `(network, component, coefficient)` entries plus an offset
//! that carries the source or target data.

mod assembly;

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Component, Jet4, JetOrder, TIME};
use crate::geometry::is_unit;
use crate::materials::{MaterialModel, MaterialPoint, PhysicalConstants};
use crate::network::{forward_batch, ModelState};
use crate::{Error, Real, Result};

pub use assembly::{loss_terms, PreparedProblem, PreparedSet, SetKind};

/// Jets of `u1, u2, u3, T` at one space-time point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldJets<F = f64> {
    pub fields: [Jet4<F>; 4],
}

impl<F: Real> Default for FieldJets<F> {
    fn default() -> Self {
        Self {
            fields: [Jet4::default(); 4],
        }
    }
}

impl<F: Real> FieldJets<F> {
    pub fn new(u: [Jet4<F>; 3], temperature: Jet4<F>) -> Self {
        Self {
            fields: [u[0], u[1], u[2], temperature],
        }
    }

    pub fn u(&self, i: usize) -> &Jet4<F> {
        &self.fields[i]
    }

    pub fn temperature(&self) -> &Jet4<F> {
        &self.fields[3]
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(|j| j.is_finite())
    }
}

/// Body force and heat source at a space-time point.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SourceSample<F = f64> {
    pub f: [F; 3],
    pub s: F,
}

/// Strain and stress tensors at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressState<F = f64> {
    pub strain: [[F; 3]; 3],
    pub stress: [[F; 3]; 3],
}

impl<F: Real> StressState<F> {
    pub fn strain_trace(&self) -> F {
        self.strain[0][0] + self.strain[1][1] + self.strain[2][2]
    }

    pub fn stress_trace(&self) -> F {
        self.stress[0][0] + self.stress[1][1] + self.stress[2][2]
    }
}

/// Anything that yields the four field jets at a space-time point.
pub trait FieldModel<F: Real> {
    fn field_jets(&self, x: &[F; 4]) -> Result<FieldJets<F>>;

    /// Jets at many points; components above `order` may be left zero.
    fn field_jets_batch(&self, points: &[[F; 4]], order: JetOrder) -> Result<Vec<FieldJets<F>>> {
        let _ = order;
        points.iter().map(|x| self.field_jets(x)).collect()
    }
}

impl<F: Real> FieldModel<F> for ModelState<F> {
    fn field_jets(&self, x: &[F; 4]) -> Result<FieldJets<F>> {
        Ok(FieldJets {
            fields: [
                self.net_jet(0, x)?,
                self.net_jet(1, x)?,
                self.net_jet(2, x)?,
                self.net_jet(3, x)?,
            ],
        })
    }

    fn field_jets_batch(&self, points: &[[F; 4]], order: JetOrder) -> Result<Vec<FieldJets<F>>> {
        let traces = (0..4)
            .map(|k| forward_batch(&self.nets[k], &self.input, &self.outputs[k], points, order))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..points.len())
            .map(|p| FieldJets {
                fields: std::array::from_fn(|k| Jet4::from_slice(traces[k].point_output(p))),
            })
            .collect())
    }
}

/// Known data of a boundary-initial value problem.
pub trait ProblemData<F: Real>: Sync {
    fn material(&self) -> &MaterialModel<F>;
    fn source(&self, x: &[F; 4]) -> Result<SourceSample<F>>;
    /// Initial displacement `û`.
    fn initial_displacement(&self, x: &[F; 3], t0: F) -> Result<[F; 3]>;
    /// Initial velocity `v̂`.
    fn initial_velocity(&self, x: &[F; 3], t0: F) -> Result<[F; 3]>;
    /// Initial temperature `T̂`.
    fn initial_temperature(&self, x: &[F; 3], t0: F) -> Result<F>;
    /// Prescribed `ū1, ū2, ū3, T̄`.
    fn dirichlet(&self, x: &[F; 4]) -> Result<[F; 4]>;
    /// Prescribed traction `p̄` and normal flux `q̄` for outward normal `n`.
    fn neumann(&self, x: &[F; 4], n: &[F; 3]) -> Result<([F; 3], F)>;
}

/// Navier residual of displacement component `i` (0-based).
pub fn mechanical_residual<F: Real>(i: usize, jets: &FieldJets<F>, mat: &MaterialPoint<F>, src: &SourceSample<F>) -> F {
    let ui = jets.u(i);
    let grad_div = (0..3).fold(F::zero(), |acc, j| acc + jets.u(j).hess(i, j));
    let laplacian = (0..3).fold(F::zero(), |acc, j| acc + ui.hess(j, j));
    mat.rho.value * ui.hess(TIME, TIME) + mat.beta.value * jets.temperature().grad[i]
        - (mat.lambda.value + mat.mu.value) * grad_div
        - mat.mu.value * laplacian
        - src.f[i]
}

/// Heat-equation residual with the coupling term.
pub fn thermal_residual<F: Real>(
    jets: &FieldJets<F>,
    mat: &MaterialPoint<F>,
    src: &SourceSample<F>,
    constants: &PhysicalConstants<F>,
) -> F {
    let t = jets.temperature();
    let div_velocity = (0..3).fold(F::zero(), |acc, i| acc + jets.u(i).hess(TIME, i));
    let conduction = (0..3).fold(F::zero(), |acc, i| {
        acc + mat.kappa.grad[i] * t.grad[i] + mat.kappa.value * t.hess(i, i)
    });
    mat.rho.value * mat.c.value * t.grad[TIME] + mat.beta.value * constants.t_ref * div_velocity - conduction - src.s
}

pub fn stress<F: Real>(jets: &FieldJets<F>, mat: &MaterialPoint<F>) -> StressState<F> {
    let half = F::lit(0.5);
    let strain: [[F; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| half * (jets.u(i).grad[j] + jets.u(j).grad[i])));
    let tr = strain[0][0] + strain[1][1] + strain[2][2];
    let two = F::lit(2.0);
    let thermal = mat.beta.value * jets.temperature().value;
    let stress = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let iso = if i == j {
                mat.lambda.value * tr - thermal
            } else {
                F::zero()
            };
            iso + two * mat.mu.value * strain[i][j]
        })
    });
    StressState { strain, stress }
}

fn check_normal<F: Real>(n: &[F; 3]) -> Result<()> {
    if is_unit(n) {
        Ok(())
    } else {
        Err(Error::Geometry(format!(
            "normal {:?} is not unit length",
            n.map(|v| v.to_f64_lossy())
        )))
    }
}

/// `p = σ·n`.
pub fn traction<F: Real>(s: &StressState<F>, n: &[F; 3]) -> Result<[F; 3]> {
    check_normal(n)?;
    Ok(std::array::from_fn(|i| {
        s.stress[i][0] * n[0] + s.stress[i][1] * n[1] + s.stress[i][2] * n[2]
    }))
}

/// `q = -κ ∇T·n`.
pub fn heat_flux<F: Real>(jets: &FieldJets<F>, mat: &MaterialPoint<F>, n: &[F; 3]) -> Result<F> {
    check_normal(n)?;
    let g = &jets.temperature().grad;
    Ok(-mat.kappa.value * (g[0] * n[0] + g[1] * n[1] + g[2] * n[2]))
}

/// Loss families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Pde,
    Ic,
    /// Initial velocity.
    Icv,
    Nbc,
    Dbc,
}

pub const NUM_TERMS: usize = 19;

/// One loss term: a family and a field index (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TermId {
    pub kind: TermKind,
    pub index: u8,
}

/// Parameter scope of a term's gradient statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    AllNetworks,
    Network(usize),
}

impl TermId {
    pub const ALL: [TermId; NUM_TERMS] = {
        const fn t(kind: TermKind, index: u8) -> TermId {
            TermId { kind, index }
        }
        use TermKind::*;
        [
            t(Pde, 0),
            t(Pde, 1),
            t(Pde, 2),
            t(Pde, 3),
            t(Ic, 0),
            t(Ic, 1),
            t(Ic, 2),
            t(Ic, 3),
            t(Icv, 0),
            t(Icv, 1),
            t(Icv, 2),
            t(Nbc, 0),
            t(Nbc, 1),
            t(Nbc, 2),
            t(Nbc, 3),
            t(Dbc, 0),
            t(Dbc, 1),
            t(Dbc, 2),
            t(Dbc, 3),
        ]
    };

    /// Position in [`TermId::ALL`].
    pub const fn slot(self) -> usize {
        let i = self.index as usize;
        match self.kind {
            TermKind::Pde => i,
            TermKind::Ic => 4 + i,
            TermKind::Icv => 8 + i,
            TermKind::Nbc => 11 + i,
            TermKind::Dbc => 15 + i,
        }
    }

    pub fn name(self) -> String {
        let prefix = match self.kind {
            TermKind::Pde => "pde",
            TermKind::Ic => "ic",
            TermKind::Icv => "icv",
            TermKind::Nbc => "nbc",
            TermKind::Dbc => "dbc",
        };
        format!("{prefix}{}", self.index + 1)
    }

    pub fn scope(self) -> Scope {
        match self.kind {
            TermKind::Pde => Scope::AllNetworks,
            TermKind::Nbc if self.index < 3 => Scope::AllNetworks,
            _ => Scope::Network(self.index as usize),
        }
    }
}

impl std::fmt::Display for TermId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Unweighted losses with the weights they were combined with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown<F = f64> {
    pub losses: [F; NUM_TERMS],
    pub weights: [F; NUM_TERMS],
    /// Terms with an empty point set are inactive: loss 0, weight 1.
    pub active: [bool; NUM_TERMS],
}

impl<F: Real> LossBreakdown<F> {
    pub fn unweighted(losses: [F; NUM_TERMS], active: [bool; NUM_TERMS]) -> Self {
        Self {
            losses,
            weights: [F::one(); NUM_TERMS],
            active,
        }
    }

    pub fn loss(&self, term: TermId) -> F {
        self.losses[term.slot()]
    }

    pub fn weight(&self, term: TermId) -> F {
        self.weights[term.slot()]
    }

    pub fn family(&self, kind: TermKind) -> Vec<F> {
        TermId::ALL
            .iter()
            .filter(|t| t.kind == kind)
            .map(|t| self.losses[t.slot()])
            .collect()
    }

    /// `Σ w_k L_k` in term order.
    pub fn total(&self) -> F {
        self.losses
            .iter()
            .zip(&self.weights)
            .fold(F::zero(), |acc, (&l, &w)| acc + w * l)
    }
}

/// Weighted total of `breakdown.losses` under `weights`.
pub fn composite_loss<F: Real>(breakdown: &LossBreakdown<F>, weights: &[F; NUM_TERMS]) -> Result<F> {
    for (t, w) in TermId::ALL.iter().zip(weights) {
        if !(*w > F::zero()) || !w.is_finite() {
            return Err(Error::Balancing(format!("weight of {t} is {w}, must be positive")));
        }
    }
    let b = LossBreakdown {
        weights: *weights,
        ..*breakdown
    };
    Ok(b.total())
}

/// One `(network, component, coefficient)` entry of a [`LinearForm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormEntry<F = f64> {
    pub net: u8,
    /// Index into the flat jet layout (see [`Component::index`]).
    pub comp: u8,
    pub coeff: F,
}

pub const MAX_FORM_ENTRIES: usize = 16;

/// `Σ coeff · jet[net][comp] + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearForm<F = f64> {
    pub entries: ArrayVec<FormEntry<F>, MAX_FORM_ENTRIES>,
    pub offset: F,
}

impl<F: Real> LinearForm<F> {
    pub fn new(offset: F) -> Self {
        Self {
            entries: ArrayVec::new(),
            offset,
        }
    }

    /// Adds `coeff` to the entry for `(net, comp)`, merging duplicates.
    pub fn add(&mut self, net: usize, comp: Component, coeff: F) {
        let (net, comp) = (net as u8, comp.index() as u8);
        if let Some(e) = self.entries.iter_mut().find(|e| e.net == net && e.comp == comp) {
            e.coeff += coeff;
        } else {
            self.entries.push(FormEntry { net, comp, coeff });
        }
    }

    pub fn eval(&self, jets: &FieldJets<F>) -> F {
        self.entries.iter().fold(self.offset, |acc, e| {
            acc + e.coeff * jets.fields[e.net as usize].to_flat()[e.comp as usize]
        })
    }

    /// `Σ |coeff · component| + |offset|`, the scale the residual is
    /// measured against.
    pub fn magnitude(&self, jets: &FieldJets<F>) -> F {
        self.entries.iter().fold(self.offset.abs(), |acc, e| {
            acc + (e.coeff * jets.fields[e.net as usize].to_flat()[e.comp as usize]).abs()
        })
    }
}

/// Residual form of the momentum equation for component `i`.
pub fn mechanical_form<F: Real>(i: usize, mat: &MaterialPoint<F>, f_i: F) -> LinearForm<F> {
    let mut form = LinearForm::new(-f_i);
    form.add(i, Component::Hess(TIME, TIME), mat.rho.value);
    form.add(3, Component::Grad(i), mat.beta.value);
    for j in 0..3 {
        form.add(j, Component::Hess(i, j), -(mat.lambda.value + mat.mu.value));
    }
    for j in 0..3 {
        form.add(i, Component::Hess(j, j), -mat.mu.value);
    }
    form
}

/// Residual form of the heat equation.
pub fn thermal_form<F: Real>(mat: &MaterialPoint<F>, constants: &PhysicalConstants<F>, s: F) -> LinearForm<F> {
    let mut form = LinearForm::new(-s);
    form.add(3, Component::Grad(TIME), mat.rho.value * mat.c.value);
    for i in 0..3 {
        form.add(i, Component::Hess(TIME, i), mat.beta.value * constants.t_ref);
    }
    for i in 0..3 {
        form.add(3, Component::Grad(i), -mat.kappa.grad[i]);
        form.add(3, Component::Hess(i, i), -mat.kappa.value);
    }
    form
}

/// `(σ·n)_i − p̄_i`.
pub fn traction_form<F: Real>(i: usize, mat: &MaterialPoint<F>, n: &[F; 3], p_i: F) -> LinearForm<F> {
    let (lambda, mu) = (mat.lambda.value, mat.mu.value);
    let mut form = LinearForm::new(-p_i);
    for k in 0..3 {
        form.add(k, Component::Grad(k), lambda * n[i]);
    }
    for j in 0..3 {
        form.add(i, Component::Grad(j), mu * n[j]);
        form.add(j, Component::Grad(i), mu * n[j]);
    }
    form.add(3, Component::Value, -mat.beta.value * n[i]);
    form
}

/// `−κ ∇T·n − q̄`.
pub fn flux_form<F: Real>(mat: &MaterialPoint<F>, n: &[F; 3], q: F) -> LinearForm<F> {
    let mut form = LinearForm::new(-q);
    for j in 0..3 {
        form.add(3, Component::Grad(j), -mat.kappa.value * n[j]);
    }
    form
}

/// `field[net] − target`.
pub fn value_form<F: Real>(net: usize, target: F) -> LinearForm<F> {
    let mut form = LinearForm::new(-target);
    form.add(net, Component::Value, F::one());
    form
}

/// `∂_t field[net] − target`.
pub fn velocity_form<F: Real>(net: usize, target: F) -> LinearForm<F> {
    let mut form = LinearForm::new(-target);
    form.add(net, Component::Grad(TIME), F::one());
    form
}
