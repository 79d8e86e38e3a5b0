//! Optimization loop: weighted loss gradients, balancing cadence and Adam.

mod checkpoint;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balancing::{balance, BalancerConfig, GradStats};
use crate::geometry::CollocationSet;
use crate::network::{Architecture, InputScaling, ModelState, Normalization, OutputScaling, NUM_NETWORKS};
use crate::physics::{LossBreakdown, PreparedProblem, ProblemData, TermId, NUM_TERMS};
use crate::{Error, Real, Result};

pub use checkpoint::{Checkpoint, NetworkRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

/// Adam hyperparameters with a cosine learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Learning rate reached at the final iteration.
    pub final_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            final_learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.learning_rate) || !pos(self.final_learning_rate) {
            return Err(Error::config("optimizer.learning_rate", "must be positive"));
        }
        for (name, b) in [("optimizer.beta1", self.beta1), ("optimizer.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !pos(self.epsilon) {
            return Err(Error::config("optimizer.epsilon", "must be positive"));
        }
        Ok(())
    }

    /// Cosine decay from `learning_rate` to `final_learning_rate` over
    /// `total` iterations.
    pub fn learning_rate_at(&self, iteration: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.learning_rate;
        }
        let frac = iteration as f64 / (total - 1) as f64;
        let (a, b) = (self.learning_rate, self.final_learning_rate);
        b + 0.5 * (a - b) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Adam moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<F = f64> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub step: u64,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
    /// Learning rate of the most recent step.
    pub learning_rate: F,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(num_params: usize, config: &AdamConfig) -> Self {
        Self {
            m: vec![F::zero(); num_params],
            v: vec![F::zero(); num_params],
            step: 0,
            beta1: F::lit(config.beta1),
            beta2: F::lit(config.beta2),
            epsilon: F::lit(config.epsilon),
            learning_rate: F::lit(config.learning_rate),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<F: Real>(state: &mut OptimizerState<F>, params: &mut [F], grads: &[F], lr: F) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::config(
            "gradient",
            format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                state.m.len(),
                params.len(),
                grads.len()
            ),
        ));
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric("adam_step", format!("non-finite gradient entry {k}")));
    }
    state.step += 1;
    state.learning_rate = lr;
    let one = F::one();
    let n = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = one - state.beta1.powi(n);
    let c2 = one - state.beta2.powi(n);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = state.beta1 * state.m[k] + (one - state.beta1) * g;
        state.v[k] = state.beta2 * state.v[k] + (one - state.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub optimizer: AdamConfig,
    pub balancing: BalancerConfig,
    /// Checkpoint interval in iterations (`0` for end of run only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            optimizer: AdamConfig::default(),
            balancing: BalancerConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.balancing.validate()
    }
}

/// Losses of one iteration, evaluated before its parameter update.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRow<F = f64> {
    pub iteration: usize,
    pub total: F,
    pub losses: [F; NUM_TERMS],
}

/// Weights and the statistics they were computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSnapshot<F = f64> {
    pub iteration: usize,
    pub theta: F,
    pub degenerate: bool,
    pub weights: [F; NUM_TERMS],
    pub max: [F; NUM_TERMS],
    pub mean: [F; NUM_TERMS],
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainRecord<F = f64> {
    pub losses: Vec<LossRow<F>>,
    pub weights: Vec<WeightSnapshot<F>>,
    /// Wall-clock seconds for each block of 100 iterations, keyed by the
    /// last iteration of the block. Not part of determinism comparisons.
    pub timing: Vec<(usize, f64)>,
    pub active: [bool; NUM_TERMS],
}

impl<F: Real> TrainRecord<F> {
    pub fn push_losses(&mut self, row: LossRow<F>) -> Result<()> {
        if let Some(last) = self.losses.last() {
            if row.iteration <= last.iteration {
                return Err(Error::Usage("loss rows must have increasing iterations".into()));
            }
        }
        self.losses.push(row);
        Ok(())
    }

    /// Weights in force at `iteration`.
    pub fn weights_at(&self, iteration: usize) -> Option<&[F; NUM_TERMS]> {
        self.weights
            .iter()
            .rev()
            .find(|s| s.iteration <= iteration)
            .map(|s| &s.weights)
    }
}

/// Input normalization over the collocation bounds and output scaling from
/// the initial and Dirichlet targets.
pub fn model_scalings<F: Real, P: ProblemData<F> + ?Sized>(
    colloc: &CollocationSet<F>,
    problem: &P,
    normalization: Normalization,
) -> Result<(InputScaling<F>, [OutputScaling<F>; NUM_NETWORKS])> {
    let (lo, hi) = colloc.input_bounds()?;
    let input = InputScaling::from_bounds_with(lo, hi, normalization)?;
    let mut samples: [Vec<F>; NUM_NETWORKS] = Default::default();
    for x in &colloc.initial {
        let xs = [x[0], x[1], x[2]];
        let u = problem.initial_displacement(&xs, x[3])?;
        for i in 0..3 {
            samples[i].push(u[i]);
        }
        samples[3].push(problem.initial_temperature(&xs, x[3])?);
    }
    for x in &colloc.dirichlet {
        let d = problem.dirichlet(x)?;
        for k in 0..NUM_NETWORKS {
            samples[k].push(d[k]);
        }
    }
    let outputs = samples.map(OutputScaling::from_samples);
    Ok((input, outputs))
}

/// Freshly initialized model for a problem, with the default input
/// normalization.
pub fn init_model<F: Real, P: ProblemData<F> + ?Sized>(
    arch: &Architecture,
    colloc: &CollocationSet<F>,
    problem: &P,
    seed: u64,
) -> Result<ModelState<F>> {
    init_model_with(arch, colloc, problem, seed, Normalization::default())
}

pub fn init_model_with<F: Real, P: ProblemData<F> + ?Sized>(
    arch: &Architecture,
    colloc: &CollocationSet<F>,
    problem: &P,
    seed: u64,
    normalization: Normalization,
) -> Result<ModelState<F>> {
    arch.validate()?;
    let (input, outputs) = model_scalings(colloc, problem, normalization)?;
    ModelState::init(arch, input, outputs, seed)
}

/// Called with `(iteration, model, optimizer, weights)` at checkpoint times.
pub type CheckpointHook<'a, F> =
    dyn FnMut(usize, &ModelState<F>, &OptimizerState<F>, &[F; NUM_TERMS]) -> Result<()> + 'a;

/// Trainer state that survives between iterations.
pub struct Trainer<'a, F: Real> {
    pub problem: &'a PreparedProblem<F>,
    pub config: TrainConfig,
    pub optimizer: OptimizerState<F>,
    pub weights: [F; NUM_TERMS],
    pub iteration: usize,
    pub record: TrainRecord<F>,
}

impl<'a, F: Real> Trainer<'a, F> {
    pub fn new(problem: &'a PreparedProblem<F>, model: &ModelState<F>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            problem,
            config,
            optimizer: OptimizerState::new(model.num_params(), &config.optimizer),
            weights: [F::one(); NUM_TERMS],
            iteration: 0,
            record: TrainRecord {
                active: problem.active,
                ..TrainRecord::default()
            },
        })
    }

    /// One full-batch iteration: losses, (re)balancing, Adam update.
    pub fn step(&mut self, model: &mut ModelState<F>) -> Result<LossBreakdown<F>> {
        let it = self.iteration;
        let ranges = model.param_ranges();
        let (mut breakdown, grad) = if self.config.balancing.is_update(it) {
            let (b, per_term) = self.problem.term_gradients(model)?;
            check_term_gradients(&per_term)?;
            let (update, stats) = balance(
                &per_term,
                &ranges,
                &self.problem.active,
                &self.config.balancing,
                &self.weights,
            )?;
            self.weights = update.weights;
            self.record
                .weights
                .push(snapshot(it, &update.weights, update.theta, update.degenerate, &stats));
            let mut grad = vec![F::zero(); model.num_params()];
            for (k, g) in per_term.iter().enumerate() {
                let w = self.weights[k];
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += w * *v;
                }
            }
            (b, grad)
        } else {
            self.problem.weighted_gradient(model, &self.weights)?
        };
        breakdown.weights = self.weights;
        let total = breakdown.total();
        if !total.is_finite() {
            return Err(Error::numeric(format!("iteration {it}"), "non-finite total loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            let (_, per_term) = self.problem.term_gradients(model)?;
            check_term_gradients(&per_term)?;
            return Err(Error::numeric(
                format!("iteration {it}"),
                "non-finite weighted gradient",
            ));
        }
        log::debug!("iteration {it}: total {total:e}");
        self.record.push_losses(LossRow {
            iteration: it,
            total,
            losses: breakdown.losses,
        })?;
        let lr = F::lit(self.config.optimizer.learning_rate_at(it, self.config.iterations));
        let mut flat = model.to_flat();
        adam_step(&mut self.optimizer, &mut flat, &grad, lr)?;
        model.set_flat(&flat)?;
        self.iteration += 1;
        Ok(breakdown)
    }

    /// Runs the remaining iterations.
    pub fn run(&mut self, model: &mut ModelState<F>, mut hook: Option<&mut CheckpointHook<'_, F>>) -> Result<()> {
        let mut block = Instant::now();
        while self.iteration < self.config.iterations {
            if let Err(e) = self.step(model) {
                if let Some(h) = hook.as_deref_mut() {
                    h(self.iteration, model, &self.optimizer, &self.weights)?;
                }
                return Err(e);
            }
            let done = self.iteration;
            if done.is_multiple_of(100) {
                let secs = block.elapsed().as_secs_f64();
                self.record.timing.push((done - 1, secs));
                if let Some(last) = self.record.losses.last() {
                    log::info!(
                        "iteration {done}/{}: total loss {:e}, {secs:.1}s per 100",
                        self.config.iterations,
                        last.total
                    );
                }
                block = Instant::now();
            }
            let every = self.config.checkpoint_every;
            if every > 0 && done.is_multiple_of(every) && done < self.config.iterations {
                if let Some(h) = hook.as_deref_mut() {
                    h(done, model, &self.optimizer, &self.weights)?;
                }
            }
        }
        if let Some(h) = hook {
            h(self.iteration, model, &self.optimizer, &self.weights)?;
        }
        Ok(())
    }
}

fn check_term_gradients<F: Real>(per_term: &[Vec<F>]) -> Result<()> {
    for (t, g) in TermId::ALL.iter().zip(per_term) {
        let norm = g.iter().fold(F::zero(), |acc, v| acc + *v * *v);
        if !norm.is_finite() {
            return Err(Error::numeric(format!("gradient of {t}"), "non-finite gradient norm"));
        }
    }
    Ok(())
}

fn snapshot<F: Real>(
    iteration: usize,
    weights: &[F; NUM_TERMS],
    theta: F,
    degenerate: bool,
    stats: &[GradStats<F>; NUM_TERMS],
) -> WeightSnapshot<F> {
    WeightSnapshot {
        iteration,
        theta,
        degenerate,
        weights: *weights,
        max: stats.map(|s| s.max),
        mean: stats.map(|s| s.mean),
    }
}

/// Trains `model` in place for `config.iterations` full-batch steps.
pub fn train<F: Real>(
    model: &mut ModelState<F>,
    problem: &PreparedProblem<F>,
    config: &TrainConfig,
) -> Result<TrainRecord<F>> {
    let mut trainer = Trainer::new(problem, model, *config)?;
    trainer.run(model, None)?;
    Ok(trainer.record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::<f64>::new(3, &cfg);
        st.m = vec![1.0, 0.0, -1.0];
        let mut p = vec![0.5, -0.25, 2.0];
        let before = p.clone();
        // moments decay; the update is driven by the stale first moment
        adam_step(&mut st, &mut p, &[0.0; 3], 0.0).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.m, vec![0.9, 0.0, -0.9]);
        let mut st = OptimizerState::<f64>::new(3, &cfg);
        adam_step(&mut st, &mut p, &[0.0; 3], 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::<f64>::new(1, &cfg);
        let mut p = vec![0.0];
        let lr = 1e-3;
        for _ in 0..500 {
            let prev = p[0];
            adam_step(&mut st, &mut p, &[3.0], lr).unwrap();
            let step = prev - p[0];
            assert!((step - lr).abs() < 1e-8, "{step}");
        }
        let mut st = OptimizerState::<f64>::new(1, &cfg);
        let mut q = vec![0.0];
        adam_step(&mut st, &mut q, &[-0.01], lr).unwrap();
        assert!(q[0] > 0.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut st = OptimizerState::<f64>::new(2, &AdamConfig::default());
        let mut p = vec![0.0; 2];
        assert!(matches!(
            adam_step(&mut st, &mut p, &[0.0, f64::NAN], 1e-3),
            Err(Error::Numeric { .. })
        ));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = AdamConfig::default();
        assert_eq!(c.learning_rate_at(0, 2000), 1e-3);
        assert!((c.learning_rate_at(1999, 2000) - 1e-4).abs() < 1e-18);
        assert!((c.learning_rate_at(1000, 2001) - 5.5e-4).abs() < 1e-15);
    }
}
