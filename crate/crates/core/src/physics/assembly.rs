//! Loss evaluation over collocation sets, pointwise or batched with
//! parameter gradients.

use crate::autodiff::JetOrder;
use crate::geometry::CollocationSet;
use crate::network::{backward_batch_with, forward_batch_into, BackwardScratch, BatchTrace, ModelState, NUM_NETWORKS};
use crate::physics::{
    flux_form, mechanical_form, thermal_form, traction_form, value_form, velocity_form, FieldModel, LinearForm,
    LossBreakdown, ProblemData, TermId, NUM_TERMS,
};
use crate::{Error, Real, Result};

/// Points per batched forward/backward pass.
const CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Interior,
    Initial,
    Dirichlet,
    Neumann,
}

const INTERIOR_TERMS: [TermId; 4] = [TermId::ALL[0], TermId::ALL[1], TermId::ALL[2], TermId::ALL[3]];
const INITIAL_TERMS: [TermId; 7] = [
    TermId::ALL[4],
    TermId::ALL[5],
    TermId::ALL[6],
    TermId::ALL[7],
    TermId::ALL[8],
    TermId::ALL[9],
    TermId::ALL[10],
];
const NEUMANN_TERMS: [TermId; 4] = [TermId::ALL[11], TermId::ALL[12], TermId::ALL[13], TermId::ALL[14]];
const DIRICHLET_TERMS: [TermId; 4] = [TermId::ALL[15], TermId::ALL[16], TermId::ALL[17], TermId::ALL[18]];

impl SetKind {
    pub fn terms(self) -> &'static [TermId] {
        match self {
            SetKind::Interior => &INTERIOR_TERMS,
            SetKind::Initial => &INITIAL_TERMS,
            SetKind::Dirichlet => &DIRICHLET_TERMS,
            SetKind::Neumann => &NEUMANN_TERMS,
        }
    }

    /// Jet order each network needs on this set.
    pub fn orders(self) -> [JetOrder; NUM_NETWORKS] {
        use JetOrder::*;
        match self {
            SetKind::Interior => [Hessian; 4],
            SetKind::Initial => [Gradient, Gradient, Gradient, Value],
            SetKind::Dirichlet => [Value; 4],
            SetKind::Neumann => [Gradient; 4],
        }
    }
}

/// Points of one kind with the residual forms of its terms, point-major.
#[derive(Clone, Debug)]
pub struct PreparedSet<F = f64> {
    pub kind: SetKind,
    pub points: Vec<[F; 4]>,
    pub forms: Vec<LinearForm<F>>,
}

impl<F: Real> PreparedSet<F> {
    fn form(&self, p: usize, k: usize) -> &LinearForm<F> {
        &self.forms[p * self.kind.terms().len() + k]
    }
}

/// Collocation points with materials, sources and targets folded into
/// residual forms, ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct PreparedProblem<F = f64> {
    pub sets: Vec<PreparedSet<F>>,
    pub active: [bool; NUM_TERMS],
    pub counts: [usize; NUM_TERMS],
}

/// Gradients requested from a batched evaluation.
enum Mode<'a, F> {
    Losses,
    Weighted(&'a [F; NUM_TERMS]),
    PerTerm,
}

impl<F: Real> PreparedProblem<F> {
    pub fn new<P: ProblemData<F> + ?Sized>(colloc: &CollocationSet<F>, problem: &P) -> Result<Self> {
        if colloc.interior.is_empty() {
            return Err(Error::config("collocation.interior", "pde terms need interior points"));
        }
        if colloc.initial.is_empty() {
            return Err(Error::config("collocation.initial", "ic terms need initial points"));
        }
        if colloc.dirichlet.is_empty() && colloc.neumann.is_empty() {
            return Err(Error::config("bc", "no Dirichlet or Neumann boundary points"));
        }
        let material = problem.material();
        let constants = &material.constants;
        let spatial = |x: &[F; 4]| [x[0], x[1], x[2]];

        let mut interior = Vec::with_capacity(colloc.interior.len() * 4);
        for x in &colloc.interior {
            let mat = material.eval(&spatial(x))?;
            let src = problem.source(x)?;
            for i in 0..3 {
                interior.push(mechanical_form(i, &mat, src.f[i]));
            }
            interior.push(thermal_form(&mat, constants, src.s));
        }

        let mut initial = Vec::with_capacity(colloc.initial.len() * 7);
        for x in &colloc.initial {
            let (xs, t0) = (spatial(x), x[3]);
            let u = problem.initial_displacement(&xs, t0)?;
            let temp = problem.initial_temperature(&xs, t0)?;
            let v = problem.initial_velocity(&xs, t0)?;
            for i in 0..3 {
                initial.push(value_form(i, u[i]));
            }
            initial.push(value_form(3, temp));
            for i in 0..3 {
                initial.push(velocity_form(i, v[i]));
            }
        }

        let mut dirichlet = Vec::with_capacity(colloc.dirichlet.len() * 4);
        for x in &colloc.dirichlet {
            let target = problem.dirichlet(x)?;
            for k in 0..4 {
                dirichlet.push(value_form(k, target[k]));
            }
        }

        let mut neumann = Vec::with_capacity(colloc.neumann.len() * 4);
        for np in &colloc.neumann {
            let mat = material.eval(&spatial(&np.x))?;
            let (p, q) = problem.neumann(&np.x, &np.normal)?;
            for i in 0..3 {
                neumann.push(traction_form(i, &mat, &np.normal, p[i]));
            }
            neumann.push(flux_form(&mat, &np.normal, q));
        }

        let sets = vec![
            PreparedSet {
                kind: SetKind::Interior,
                points: colloc.interior.clone(),
                forms: interior,
            },
            PreparedSet {
                kind: SetKind::Initial,
                points: colloc.initial.clone(),
                forms: initial,
            },
            PreparedSet {
                kind: SetKind::Neumann,
                points: colloc.neumann.iter().map(|n| n.x).collect(),
                forms: neumann,
            },
            PreparedSet {
                kind: SetKind::Dirichlet,
                points: colloc.dirichlet.clone(),
                forms: dirichlet,
            },
        ];
        let mut counts = [0; NUM_TERMS];
        for set in &sets {
            for t in set.kind.terms() {
                counts[t.slot()] = set.points.len();
            }
        }
        Ok(Self {
            sets,
            active: counts.map(|c| c > 0),
            counts,
        })
    }

    /// Losses with every field taken from `model` one point at a time.
    pub fn losses_with<M: FieldModel<F> + ?Sized>(&self, model: &M) -> Result<LossBreakdown<F>> {
        let mut sums = [F::zero(); NUM_TERMS];
        self.for_each_residual(model, |t, r, _| sums[t.slot()] += r * r)?;
        self.finish(sums)
    }

    /// Mean squared magnitude of each term's summands, the scale against
    /// which its loss is judged.
    pub fn term_scales<M: FieldModel<F> + ?Sized>(&self, model: &M) -> Result<[F; NUM_TERMS]> {
        let mut sums = [F::zero(); NUM_TERMS];
        self.for_each_residual(model, |t, _, m| sums[t.slot()] += m * m)?;
        Ok(self.means(sums))
    }

    fn for_each_residual<M: FieldModel<F> + ?Sized>(
        &self,
        model: &M,
        mut visit: impl FnMut(TermId, F, F),
    ) -> Result<()> {
        for set in &self.sets {
            let terms = set.kind.terms();
            for (p, x) in set.points.iter().enumerate() {
                let jets = model.field_jets(x)?;
                for (k, &t) in terms.iter().enumerate() {
                    let form = set.form(p, k);
                    visit(t, form.eval(&jets), form.magnitude(&jets));
                }
            }
        }
        Ok(())
    }

    fn means(&self, sums: [F; NUM_TERMS]) -> [F; NUM_TERMS] {
        std::array::from_fn(|k| {
            if self.counts[k] > 0 {
                sums[k] / F::from_usize_lossy(self.counts[k])
            } else {
                F::zero()
            }
        })
    }

    fn finish(&self, sums: [F; NUM_TERMS]) -> Result<LossBreakdown<F>> {
        let losses = self.means(sums);
        for (t, l) in TermId::ALL.iter().zip(&losses) {
            if !l.is_finite() {
                return Err(Error::numeric(format!("loss term {t}"), "non-finite loss"));
            }
        }
        Ok(LossBreakdown::unweighted(losses, self.active))
    }

    /// Batched losses of a network model.
    pub fn losses(&self, model: &ModelState<F>) -> Result<LossBreakdown<F>> {
        let mut none = Vec::new();
        self.run(model, Mode::Losses, &mut none)
    }

    /// Losses and the gradient of `Σ w_k L_k` over the flat model vector.
    pub fn weighted_gradient(
        &self,
        model: &ModelState<F>,
        weights: &[F; NUM_TERMS],
    ) -> Result<(LossBreakdown<F>, Vec<F>)> {
        let mut grads = vec![vec![F::zero(); model.num_params()]];
        let mut b = self.run(model, Mode::Weighted(weights), &mut grads)?;
        b.weights = *weights;
        Ok((b, grads.pop().expect("one gradient")))
    }

    /// Losses and the gradient of every unweighted term separately.
    pub fn term_gradients(&self, model: &ModelState<F>) -> Result<(LossBreakdown<F>, Vec<Vec<F>>)> {
        let mut grads = vec![vec![F::zero(); model.num_params()]; NUM_TERMS];
        let b = self.run(model, Mode::PerTerm, &mut grads)?;
        Ok((b, grads))
    }

    fn run(&self, model: &ModelState<F>, mode: Mode<'_, F>, grads: &mut [Vec<F>]) -> Result<LossBreakdown<F>> {
        let ranges = model.param_ranges();
        let mut sums = [F::zero(); NUM_TERMS];
        let two = F::lit(2.0);
        let mut traces: Vec<BatchTrace<F>> = (0..NUM_NETWORKS).map(|_| BatchTrace::default()).collect();
        let mut scratch = BackwardScratch::default();
        let mut adjoints: Vec<Vec<F>> = vec![Vec::new(); NUM_NETWORKS];
        let mut residuals = Vec::new();
        for set in &self.sets {
            if set.points.is_empty() {
                continue;
            }
            let terms = set.kind.terms();
            let nt = terms.len();
            let orders = set.kind.orders();
            let n_total = F::from_usize_lossy(set.points.len());
            let scale_of = |k: usize| -> F {
                match &mode {
                    Mode::Weighted(w) => two * w[terms[k].slot()] / n_total,
                    _ => two / n_total,
                }
            };
            for start in (0..set.points.len()).step_by(CHUNK) {
                let end = (start + CHUNK).min(set.points.len());
                let pts = &set.points[start..end];
                for (k, trace) in traces.iter_mut().enumerate() {
                    forward_batch_into(&model.nets[k], &model.input, &model.outputs[k], pts, orders[k], trace)?;
                }
                residuals.clear();
                for p in 0..pts.len() {
                    for (k, &t) in terms.iter().enumerate() {
                        let form = set.form(start + p, k);
                        let r = form.entries.iter().fold(form.offset, |acc, e| {
                            acc + e.coeff * traces[e.net as usize].point_output(p)[e.comp as usize]
                        });
                        residuals.push(r);
                        sums[t.slot()] += r * r;
                    }
                }
                // Seeds output adjoints for the selected terms and returns
                // which networks received any.
                let seed = |select: &dyn Fn(usize) -> bool, adjoints: &mut [Vec<F>]| -> [bool; NUM_NETWORKS] {
                    let mut touched = [false; NUM_NETWORKS];
                    for (net, buf) in adjoints.iter_mut().enumerate() {
                        buf.clear();
                        buf.resize(pts.len() * orders[net].width(), F::zero());
                    }
                    for p in 0..pts.len() {
                        for k in (0..nt).filter(|&k| select(k)) {
                            let r = residuals[p * nt + k] * scale_of(k);
                            for e in &set.form(start + p, k).entries {
                                let net = e.net as usize;
                                let c = orders[net].width();
                                adjoints[net][p * c + e.comp as usize] += r * e.coeff;
                                touched[net] = true;
                            }
                        }
                    }
                    touched
                };
                let mut backward = |slot: usize, touched: [bool; NUM_NETWORKS], adjoints: &[Vec<F>]| {
                    for net in (0..NUM_NETWORKS).filter(|&n| touched[n]) {
                        let g = &mut grads[slot][ranges[net].clone()];
                        backward_batch_with(
                            &model.nets[net],
                            &model.outputs[net],
                            &traces[net],
                            &adjoints[net],
                            g,
                            &mut scratch,
                        );
                    }
                };
                match mode {
                    Mode::Losses => {}
                    Mode::Weighted(_) => {
                        let touched = seed(&|_| true, &mut adjoints);
                        backward(0, touched, &adjoints);
                    }
                    Mode::PerTerm => {
                        for (k, t) in terms.iter().enumerate() {
                            let touched = seed(&|j| j == k, &mut adjoints);
                            backward(t.slot(), touched, &adjoints);
                        }
                    }
                }
            }
        }
        self.finish(sums)
    }
}

/// Unweighted losses of `model` over `colloc`, evaluated point by point.
pub fn loss_terms<F: Real, M: FieldModel<F> + ?Sized, P: ProblemData<F> + ?Sized>(
    model: &M,
    colloc: &CollocationSet<F>,
    problem: &P,
) -> Result<LossBreakdown<F>> {
    PreparedProblem::new(colloc, problem)?.losses_with(model)
}
