mod common;

use common::{coating, comb, cube, unit_time};
use fgm_pinn::experiment::ShapeConfig;
use fgm_pinn::geometry::{
    read_point_cloud, test_grid, write_point_cloud, BcAssignment, CollocationSet, Pairing, Region, TimeGrid,
};
use proptest::prelude::*;

fn unit(n: &[f64; 3]) -> bool {
    (n.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12
}

fn check_set(shape: &ShapeConfig, set: &CollocationSet<f64>) {
    let body = shape.shape().unwrap().unwrap();
    let (t0, tf) = (set.time.t0, set.time.tf);
    for x in set.interior.iter().chain(&set.initial).chain(&set.dirichlet) {
        assert!(body.contains(&[x[0], x[1], x[2]], 1e-9), "{x:?} outside");
        assert!(x[3] >= t0 && x[3] <= tf);
    }
    for p in &set.neumann {
        assert!(body.contains(&[p.x[0], p.x[1], p.x[2]], 1e-9));
        assert!(unit(&p.normal));
    }
    assert!(set.initial.iter().all(|x| x[3] == t0));
    assert!(set.cloud.boundary.iter().all(|b| unit(&b.normal)));
}

#[test]
fn cube_has_729_interior_and_486_boundary_points() {
    let set = cube()
        .collocation(unit_time(), BcAssignment::AllDirichlet, Pairing::Tensor)
        .unwrap();
    assert_eq!(set.cloud.interior.len(), 729);
    assert_eq!(set.cloud.boundary.len(), 486);
    assert_eq!(set.interior.len(), 729 * 11);
    assert_eq!(set.dirichlet.len(), 486 * 11);
    assert!(set.neumann.is_empty());
    check_set(&cube(), &set);
}

#[test]
fn coating_has_324_interior_and_306_boundary_points() {
    let shape = coating(1e5);
    let set = shape
        .collocation(unit_time(), shape.default_bc(), Pairing::Tensor)
        .unwrap();
    assert_eq!(set.cloud.interior.len(), 324);
    assert_eq!(set.cloud.boundary.len(), 306);
    assert_eq!(set.cloud.count(Region::Neumann), 81);
    check_set(&shape, &set);
}

#[test]
fn comb_splits_its_boundary_at_the_clamp_line() {
    let shape = comb();
    let time = TimeGrid {
        t0: 0.0,
        tf: 2.0,
        dt: 0.2,
    };
    let set = shape
        .collocation(time, shape.default_bc(), shape.default_pairing())
        .unwrap();
    check_set(&shape, &set);
    for b in &set.cloud.boundary {
        let clamped = b.x[1] >= 1.16e-3;
        assert_eq!(b.region == Region::Dirichlet, clamped, "{:?}", b.x);
    }
    assert_eq!(set.interior.len(), 2 * set.cloud.interior.len());
}

#[test]
fn test_nodes_are_surface_plus_interior_grid() {
    let shape = cube();
    let set = shape
        .collocation(unit_time(), BcAssignment::AllDirichlet, Pairing::Tensor)
        .unwrap();
    let surface: Vec<[f64; 3]> = set.cloud.boundary.iter().map(|b| b.x).collect();
    let nodes = test_grid(&shape.shape().unwrap().unwrap(), &surface, 11);
    assert_eq!(nodes.len(), 486 + 1331);
    assert_eq!(&nodes[..486], &surface[..]);
}

#[test]
fn point_cloud_round_trips_through_csv() {
    let set = comb()
        .collocation(unit_time(), comb().default_bc(), Pairing::Tensor)
        .unwrap();
    let mut buf = Vec::new();
    write_point_cloud(&set.cloud, &mut buf).unwrap();
    let back: fgm_pinn::geometry::PointCloud<f64> =
        read_point_cloud(buf.as_slice(), std::path::Path::new("mem.csv")).unwrap();
    assert_eq!(back.interior, set.cloud.interior);
    assert_eq!(back.boundary.len(), set.cloud.boundary.len());
    for (a, b) in back.boundary.iter().zip(&set.cloud.boundary) {
        assert_eq!((a.x, a.region), (b.x, b.region));
        // Only Neumann rows carry normals.
        if b.region == Region::Neumann {
            assert_eq!(a.normal, b.normal);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coating_samples_stay_inside_for_any_ratio(exp in 0.0f64..9.0) {
        let shape = coating(10f64.powf(exp));
        let set = shape.collocation(unit_time(), shape.default_bc(), Pairing::Tensor).unwrap();
        prop_assert_eq!(set.cloud.interior.len(), 324);
        prop_assert_eq!(set.cloud.boundary.len(), 306);
        check_set(&shape, &set);
    }

    #[test]
    fn random_pairing_draws_times_in_range(seed in any::<u64>(), per_point in 1usize..4) {
        let set = cube()
            .collocation(unit_time(), BcAssignment::AllDirichlet, Pairing::Random { seed, per_point })
            .unwrap();
        prop_assert_eq!(set.interior.len(), 729 * per_point);
        prop_assert!(set.interior.iter().all(|x| (0.0..=1.0).contains(&x[3])));
        let again = cube()
            .collocation(unit_time(), BcAssignment::AllDirichlet, Pairing::Random { seed, per_point })
            .unwrap();
        prop_assert_eq!(again, set);
    }
}
