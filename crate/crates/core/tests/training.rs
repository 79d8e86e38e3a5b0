mod common;

use common::{balancing_cadence_ok, balancing_identity_error, unit_time};
use fgm_pinn::experiment::ShapeConfig;
use fgm_pinn::geometry::{BcAssignment, Pairing};
use fgm_pinn::materials::{CaseId, MaterialModel, PhysicalConstants};
use fgm_pinn::mms::ManufacturedProblem;
use fgm_pinn::network::{Architecture, ModelState};
use fgm_pinn::physics::PreparedProblem;
use fgm_pinn::training::{init_model, TrainConfig, Trainer};
use fgm_pinn::Activation;

fn small_coating() -> (PreparedProblem<f64>, ModelState<f64>) {
    let shape = ShapeConfig::Coating {
        size_ratio: 1e3,
        grid: [4, 4, 3],
    };
    let colloc = shape
        .collocation(unit_time(), BcAssignment::TOP_NEUMANN, Pairing::Tensor)
        .unwrap();
    let problem =
        ManufacturedProblem::new(MaterialModel::builtin(CaseId::Case1, PhysicalConstants::default()).unwrap());
    let prepared = PreparedProblem::new(&colloc, &problem).unwrap();
    let arch = Architecture {
        hidden_layers: 2,
        neurons: 8,
        activation: Activation::Swish,
    };
    let model = init_model(&arch, &colloc, &problem, 3).unwrap();
    (prepared, model)
}

fn config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        ..TrainConfig::default()
    }
}

#[test]
fn balancing_identities_hold_on_every_update() {
    let (prepared, mut model) = small_coating();
    assert!(
        prepared.active.iter().all(|a| *a),
        "every term should be active on the coating"
    );
    let mut trainer = Trainer::new(&prepared, &model, config(100)).unwrap();
    let mut previous = trainer.weights;
    for it in 0..100 {
        trainer.step(&mut model).unwrap();
        if trainer.weights != previous {
            assert_eq!(it % 20, 0, "weights changed at iteration {it}");
        }
        previous = trainer.weights;
    }
    let e = balancing_identity_error(&trainer.record);
    assert!(e <= 1e-12, "identity error {e:e}");
    assert!(balancing_cadence_ok(&trainer.record, 100, 20));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let (prepared, mut model) = small_coating();
        let mut trainer = Trainer::new(&prepared, &model, config(30)).unwrap();
        trainer.run(&mut model, None).unwrap();
        (
            model.to_flat(),
            trainer.record.losses.clone(),
            trainer.record.weights.clone(),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn zero_iterations_leave_the_model_unchanged() {
    let (prepared, mut model) = small_coating();
    let before = model.clone();
    let mut trainer = Trainer::new(&prepared, &model, config(0)).unwrap();
    trainer.run(&mut model, None).unwrap();
    assert_eq!(model, before);
}

#[test]
fn short_training_reduces_the_loss() {
    let (prepared, mut model) = small_coating();
    let mut trainer = Trainer::new(&prepared, &model, config(200)).unwrap();
    trainer.run(&mut model, None).unwrap();
    let first = &trainer.record.losses[0];
    let last = trainer.record.losses.last().unwrap();
    let sum = |l: &[f64]| l.iter().sum::<f64>();
    assert!(sum(&last.losses) < 0.5 * sum(&first.losses));
}

#[test]
fn checkpoint_hook_sees_the_final_state() {
    let (prepared, mut model) = small_coating();
    let mut cfg = config(25);
    cfg.checkpoint_every = 10;
    let mut trainer = Trainer::new(&prepared, &model, cfg).unwrap();
    let mut seen = Vec::new();
    let mut last = None;
    let mut hook = |it: usize, m: &ModelState<f64>, _: &_, _: &_| {
        seen.push(it);
        last = Some(m.clone());
        Ok(())
    };
    trainer.run(&mut model, Some(&mut hook)).unwrap();
    assert!(seen.contains(&10) && seen.contains(&20));
    assert_eq!(last.unwrap(), model);
}
