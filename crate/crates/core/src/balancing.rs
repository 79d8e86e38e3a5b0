//! Adaptive loss weights from per-term gradient statistics.
//!
//! Each PDE weight is `Θ / max_i` and every other weight `Θ / mean_k`,
//! where `Θ` is the average of the four PDE gradient maxima. Statistics are
//! taken over absolute gradient entries in the parameter scope of the term.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::network::{ModelState, NUM_NETWORKS};
use crate::physics::{PreparedProblem, Scope, TermId, TermKind, NUM_TERMS};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradStats<F = f64> {
    pub term: TermId,
    /// Largest absolute gradient entry.
    pub max: F,
    /// Mean absolute gradient entry.
    pub mean: F,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalancerConfig {
    /// Iterations between weight updates.
    pub period: usize,
    /// Floor for denominators and for `Θ`.
    pub epsilon: f64,
    /// Optional exponential smoothing factor in `[0, 1)`; the new weight is
    /// `s·old + (1 − s)·instantaneous`.
    pub smoothing: Option<f64>,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        Self {
            period: 20,
            epsilon: 1e-12,
            smoothing: None,
        }
    }
}

impl BalancerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::config("balancing.period", "must be at least 1"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config("balancing.epsilon", "must be positive"));
        }
        if let Some(s) = self.smoothing {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::config("balancing.smoothing", "must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn is_update(&self, iteration: usize) -> bool {
        iteration.is_multiple_of(self.period)
    }
}

/// Statistics of one term's gradient over its parameter scope.
pub fn stats_from_gradient<F: Real>(
    term: TermId,
    grad: &[F],
    ranges: &[Range<usize>; NUM_NETWORKS],
) -> Result<GradStats<F>> {
    let slice = match term.scope() {
        Scope::AllNetworks => grad,
        Scope::Network(k) => &grad[ranges[k].clone()],
    };
    if slice.is_empty() {
        return Err(Error::config(format!("scope of {term}"), "no parameters"));
    }
    let (max, sum) = slice
        .iter()
        .fold((F::zero(), F::zero()), |(m, s), g| (m.max(g.abs()), s + g.abs()));
    Ok(GradStats {
        term,
        max,
        mean: sum / F::from_usize_lossy(slice.len()),
    })
}

/// Statistics of a single term at the current parameters.
pub fn grad_stats<F: Real>(term: TermId, model: &ModelState<F>, problem: &PreparedProblem<F>) -> Result<GradStats<F>> {
    let (_, grads) = problem.term_gradients(model)?;
    stats_from_gradient(term, &grads[term.slot()], &model.param_ranges())
}

/// Statistics of all terms from their gradients (term order).
pub fn all_stats<F: Real>(
    grads: &[Vec<F>],
    ranges: &[Range<usize>; NUM_NETWORKS],
) -> Result<[GradStats<F>; NUM_TERMS]> {
    let v = TermId::ALL
        .iter()
        .map(|&t| stats_from_gradient(t, &grads[t.slot()], ranges))
        .collect::<Result<Vec<_>>>()?;
    Ok(v.try_into().expect("one entry per term"))
}

/// `Θ = (max_1 + max_2 + max_3 + max_4) / 4`.
pub fn compute_theta<F: Real>(pde: &[GradStats<F>; 4]) -> F {
    pde.iter().fold(F::zero(), |acc, s| acc + s.max) / F::lit(4.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightUpdate<F = f64> {
    pub weights: [F; NUM_TERMS],
    pub theta: F,
    /// `Θ` fell below epsilon and unit weights were used.
    pub degenerate: bool,
}

/// Instantaneous weights. Inactive terms keep weight 1.
pub fn update_weights<F: Real>(
    stats: &[GradStats<F>; NUM_TERMS],
    active: &[bool; NUM_TERMS],
    theta: F,
    config: &BalancerConfig,
    previous: &[F; NUM_TERMS],
) -> WeightUpdate<F> {
    let eps = F::lit(config.epsilon);
    if !(theta > eps) {
        return WeightUpdate {
            weights: [F::one(); NUM_TERMS],
            theta,
            degenerate: true,
        };
    }
    let mut weights = [F::one(); NUM_TERMS];
    for (k, s) in stats.iter().enumerate() {
        if !active[k] {
            continue;
        }
        let denom = if s.term.kind == TermKind::Pde { s.max } else { s.mean };
        let instant = theta / denom.max(eps);
        weights[k] = match config.smoothing {
            Some(a) => {
                let a = F::lit(a);
                a * previous[k] + (F::one() - a) * instant
            }
            None => instant,
        };
    }
    WeightUpdate {
        weights,
        theta,
        degenerate: false,
    }
}

/// Stats, `Θ` and new weights from per-term gradients.
pub fn balance<F: Real>(
    grads: &[Vec<F>],
    ranges: &[Range<usize>; NUM_NETWORKS],
    active: &[bool; NUM_TERMS],
    config: &BalancerConfig,
    previous: &[F; NUM_TERMS],
) -> Result<(WeightUpdate<F>, [GradStats<F>; NUM_TERMS])> {
    let stats = all_stats(grads, ranges)?;
    let pde: [GradStats<F>; 4] = std::array::from_fn(|i| stats[i]);
    let theta = compute_theta(&pde);
    Ok((update_weights(&stats, active, theta, config, previous), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(max: f64, mean: f64) -> [GradStats<f64>; NUM_TERMS] {
        TermId::ALL.map(|term| GradStats { term, max, mean })
    }

    #[test]
    fn single_parameter_stats() {
        let ranges = [0..1, 1..1, 1..1, 1..1];
        let s = stats_from_gradient(TermId::ALL[15], &[6.0], &ranges).unwrap();
        assert_eq!((s.max, s.mean), (6.0, 6.0));
        let z = stats_from_gradient(TermId::ALL[0], &[0.0, 0.0], &[0..1, 1..2, 2..2, 2..2]).unwrap();
        assert_eq!((z.max, z.mean), (0.0, 0.0));
        assert!(stats_from_gradient(TermId::ALL[16], &[6.0], &ranges).is_err());
    }

    #[test]
    fn theta_examples() {
        let mk = |m: [f64; 4]| {
            std::array::from_fn(|i| GradStats {
                term: TermId::ALL[i],
                max: m[i],
                mean: 0.0,
            })
        };
        assert_eq!(compute_theta(&mk([2.0; 4])), 2.0);
        assert_eq!(compute_theta(&mk([1.0, 2.0, 3.0, 4.0])), 2.5);
        assert_eq!(compute_theta(&mk([0.0; 4])), 0.0);
    }

    #[test]
    fn weight_examples() {
        let cfg = BalancerConfig::default();
        let active = [true; NUM_TERMS];
        let one = [1.0; NUM_TERMS];
        let u = update_weights(&stats(3.0, 3.0), &active, 3.0, &cfg, &one);
        assert!(u.weights.iter().all(|&w| w == 1.0));
        let mut s = stats(3.0, 3.0);
        s[15].mean = 0.3;
        let u = update_weights(&s, &active, 3.0, &cfg, &one);
        assert!((u.weights[15] - 10.0).abs() < 1e-14);
        let u = update_weights(&stats(0.0, 0.0), &active, 0.0, &cfg, &one);
        assert!(u.degenerate);
        assert_eq!(u.weights, one);
    }

    #[test]
    fn inactive_terms_keep_unit_weight() {
        let mut active = [true; NUM_TERMS];
        active[11] = false;
        let mut s = stats(2.0, 0.5);
        s[11].mean = 0.0;
        let u = update_weights(&s, &active, 2.0, &BalancerConfig::default(), &[1.0; NUM_TERMS]);
        assert_eq!(u.weights[11], 1.0);
        assert_eq!(u.weights[12], 4.0);
        assert_eq!(u.weights[0], 1.0);
    }

    #[test]
    fn smoothing_blends() {
        let cfg = BalancerConfig {
            smoothing: Some(0.5),
            ..BalancerConfig::default()
        };
        let u = update_weights(&stats(1.0, 0.25), &[true; NUM_TERMS], 1.0, &cfg, &[2.0; NUM_TERMS]);
        assert_eq!(u.weights[0], 1.5);
        assert_eq!(u.weights[5], 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(BalancerConfig {
            period: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BalancerConfig {
            epsilon: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BalancerConfig::default().is_update(40));
        assert!(!BalancerConfig::default().is_update(41));
    }
}
