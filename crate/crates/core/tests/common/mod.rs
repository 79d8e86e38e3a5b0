#![allow(dead_code)]

use fgm_pinn::autodiff::{Tape, Var};
use fgm_pinn::experiment::ShapeConfig;
use fgm_pinn::geometry::{BcAssignment, CollocationSet, NeumannPoint, Pairing, TimeGrid};
use fgm_pinn::network::{record_forward_jet, ModelState};
use fgm_pinn::physics::{PreparedProblem, SetKind, NUM_TERMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_time() -> TimeGrid<f64> {
    TimeGrid {
        t0: 0.0,
        tf: 1.0,
        dt: 0.1,
    }
}

pub fn cube() -> ShapeConfig {
    ShapeConfig::Cube {
        extents: [[0.0, 1.0]; 3],
        grid: [9, 9, 9],
    }
}

pub fn coating(size_ratio: f64) -> ShapeConfig {
    ShapeConfig::Coating {
        size_ratio,
        grid: [9, 9, 4],
    }
}

pub fn comb() -> ShapeConfig {
    ShapeConfig::Comb(Default::default())
}

/// `n` uniform random points inside `shape` at uniform random times, plus
/// `n` random initial points; boundary samples come from the shape's own
/// lattice at random times.
pub fn random_collocation(
    shape: &ShapeConfig,
    bc: BcAssignment,
    time: TimeGrid<f64>,
    n: usize,
    seed: u64,
) -> CollocationSet<f64> {
    let mut set = shape
        .collocation(time, bc, Pairing::Random { seed, per_point: 1 })
        .unwrap();
    let body = shape.shape().unwrap().unwrap();
    let (lo, hi) = body.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut inside = || loop {
        let x: [f64; 3] = std::array::from_fn(|a| rng.gen_range(lo[a]..=hi[a]));
        if body.contains(&x, 0.0) {
            return x;
        }
    };
    let mut spatial: Vec<[f64; 3]> = (0..2 * n).map(|_| inside()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7111e);
    set.interior = spatial
        .drain(..n)
        .map(|x| [x[0], x[1], x[2], rng.gen_range(time.t0..=time.tf)])
        .collect();
    set.initial = spatial.into_iter().map(|x| [x[0], x[1], x[2], time.t0]).collect();
    set
}

/// Keeps every `stride`-th point of each family.
pub fn thin(set: &CollocationSet<f64>, stride: usize) -> CollocationSet<f64> {
    let pick = |v: &Vec<[f64; 4]>| v.iter().step_by(stride).copied().collect::<Vec<_>>();
    let neumann: Vec<NeumannPoint<f64>> = set.neumann.iter().step_by(stride).cloned().collect();
    CollocationSet {
        interior: pick(&set.interior),
        initial: pick(&set.initial),
        dirichlet: pick(&set.dirichlet),
        neumann,
        time: set.time,
        cloud: set.cloud.clone(),
    }
}

/// Per-term gradients recorded on a scalar tape, independent of the
/// batched reverse pass.
pub fn tape_term_gradients(
    prepared: &PreparedProblem<f64>,
    model: &ModelState<f64>,
) -> ([f64; NUM_TERMS], Vec<Vec<f64>>) {
    let flat = model.to_flat();
    let ranges = model.param_ranges();
    let mut losses = [0.0; NUM_TERMS];
    let mut grads = vec![vec![0.0; flat.len()]; NUM_TERMS];
    for set in &prepared.sets {
        if set.points.is_empty() {
            continue;
        }
        let terms = set.kind.terms();
        let orders = set.kind.orders();
        let n = set.points.len() as f64;
        for (k, &term) in terms.iter().enumerate() {
            let (mut tape, leaves) = Tape::with_params(&flat);
            let mut squares: Vec<Var> = Vec::with_capacity(set.points.len());
            for (p, x) in set.points.iter().enumerate() {
                let jets: Vec<Vec<Var>> = (0..4)
                    .map(|net| {
                        record_forward_jet(
                            &mut tape,
                            &model.nets[net],
                            &leaves[ranges[net].clone()],
                            &model.input,
                            &model.outputs[net],
                            x,
                            orders[net],
                        )
                        .unwrap()
                    })
                    .collect();
                let form = &set.forms[p * terms.len() + k];
                let mut parts = vec![tape.constant(form.offset)];
                for e in &form.entries {
                    parts.push(tape.scale(jets[e.net as usize][e.comp as usize], e.coeff));
                }
                let r = tape.sum(&parts);
                squares.push(tape.square(r));
            }
            let total = tape.sum(&squares);
            let loss = tape.scale(total, 1.0 / n);
            tape.finish(loss);
            losses[term.slot()] = tape.value(loss);
            grads[term.slot()] = tape.param_gradient(loss).unwrap();
        }
    }
    (losses, grads)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest componentwise difference relative to the reference's largest
/// magnitude.
pub fn rel_diff(a: &[f64], reference: &[f64]) -> f64 {
    let scale = max_abs(reference);
    let d = a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

pub fn interior_kind(set: SetKind) -> bool {
    set == SetKind::Interior
}

/// Largest relative deviation from `w·max = Θ` (PDE terms) and
/// `w·mean = Θ` (other active terms), and from `Θ` being the mean of the
/// PDE maxima, over every logged balancing update.
pub fn balancing_identity_error(record: &fgm_pinn::training::TrainRecord<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for s in record.weights.iter().filter(|s| !s.degenerate) {
        let theta_ref = s.max[..4].iter().sum::<f64>() / 4.0;
        worst = worst.max((s.theta - theta_ref).abs() / s.theta);
        for k in 0..NUM_TERMS {
            if !record.active[k] {
                continue;
            }
            let stat = if k < 4 { s.max[k] } else { s.mean[k] };
            worst = worst.max((s.weights[k] * stat - s.theta).abs() / s.theta);
        }
    }
    worst
}

/// True when balancing updates happened at exactly the iterations
/// `0, period, 2·period, …` below `iterations`.
pub fn balancing_cadence_ok(record: &fgm_pinn::training::TrainRecord<f64>, iterations: usize, period: usize) -> bool {
    let logged: Vec<usize> = record.weights.iter().map(|s| s.iteration).collect();
    let expected: Vec<usize> = (0..iterations).step_by(period).collect();
    logged == expected
}
