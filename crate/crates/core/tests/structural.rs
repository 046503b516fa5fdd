mod common;

use common::{advertising_model, sup_diff};
use dde_hjb::dde::simulate;
use dde_hjb::structural::{
    build_x1, eta_shift, evolve_abstract, lbar, semigroup_apply, semigroup_apply_time, structural_trajectory, M2Point,
};
use dde_hjb::{ControlGrid, Grid, HistoryFunctional, InitialTriple, ModelSpec};
use proptest::prelude::*;

#[test]
fn abstract_path_matches_simulation_for_both_models() {
    let grid = Grid::spanning(0.0, 2.5, 1.0, 8).unwrap();
    let control = ControlGrid::new((0..grid.n_t).map(|k| 0.2 + 0.1 * (k % 3) as f64).collect());
    let phi1: Vec<f64> = (0..=8).map(|j| 1.0 + 0.05 * j as f64).collect();
    let omega: Vec<f64> = (0..=8).map(|j| 0.3 - 0.01 * j as f64).collect();
    for model in [ModelSpec::ak(0.7, 1.0, 0.0), advertising_model(8)] {
        let init = InitialTriple::new(phi1[8], phi1.clone(), omega.clone());
        let direct = simulate(&model, &grid, &init, &control).unwrap();
        let x = build_x1(&model, &init, grid.delta()).unwrap();
        let path = evolve_abstract(&model, &grid, &x, &control).unwrap().scalar();
        assert!(sup_diff(&direct.k, &path) <= 1e-12);
    }
}

#[test]
fn ak_structural_state_reflects_histories() {
    // x1(alpha) = -a phi1(-alpha - R) + omega(-alpha - R)
    let model = ModelSpec::ak(0.5, 1.0, 0.0);
    let phi1: Vec<f64> = (0..=4).map(|j| j as f64).collect();
    let omega = vec![1.0; 5];
    let x = build_x1(&model, &InitialTriple::new(4.0, phi1, omega), 0.25).unwrap();
    assert_eq!(x.x0, 4.0);
    assert_eq!(x.x1, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
}

#[test]
fn lbar_without_density_reflects() {
    let f = HistoryFunctional::new(0.0, 2.0, vec![]);
    assert_eq!(lbar(&f, &[1.0, 2.0, 3.0], 0.5).unwrap(), vec![6.0, 4.0, 2.0]);
}

#[test]
fn lbar_with_constant_density_accumulates() {
    // the last node carries only the trapezoid-weighted tail of the window
    let f = HistoryFunctional::new(0.0, 0.0, vec![1.0; 3]);
    let out = lbar(&f, &[1.0, 1.0, 1.0], 0.5).unwrap();
    assert_eq!(out, vec![0.25, 0.75, 0.75]);
}

#[test]
fn structural_trajectory_agrees_with_abstract_evolution() {
    let model = advertising_model(5);
    let grid = Grid::spanning(0.0, 2.0, 1.0, 5).unwrap();
    let init = InitialTriple::new(1.2, vec![0.8, 0.9, 1.0, 1.1, 1.15, 1.2], vec![0.5; 6]);
    let control = ControlGrid::constant(0.4, grid.n_t);
    let a = structural_trajectory(&model, &grid, &init, &control).unwrap();
    let x = build_x1(&model, &init, grid.delta()).unwrap();
    let b = evolve_abstract(&model, &grid, &x, &control).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p.x0 - q.x0).abs() < 1e-12);
        assert!(sup_diff(&p.x1, &q.x1) < 1e-12);
    }
}

#[test]
fn restarting_from_an_intermediate_state_continues_the_path() {
    let model = ModelSpec::ak(0.4, 1.0, 0.0);
    let grid = Grid::spanning(0.0, 3.0, 1.0, 6).unwrap();
    let x = M2Point::new(1.0, (0..=6).map(|j| 0.1 * j as f64).collect());
    let control = ControlGrid::new((0..grid.n_t).map(|k| 0.05 * k as f64).collect());
    let full = evolve_abstract(&model, &grid, &x, &control).unwrap();
    for split in [1, 5, 6, 11] {
        let later = grid.advanced(split);
        let rest = ControlGrid::new(control.values[split..].to_vec());
        let tail = evolve_abstract(&model, &later, &full.points[split], &rest).unwrap();
        for (j, p) in tail.points.iter().enumerate() {
            let q = &full.points[split + j];
            assert!((p.x0 - q.x0).abs() < 1e-12, "split {split} node {j}");
            assert!(sup_diff(&p.x1, &q.x1) < 1e-12, "split {split} node {j}");
        }
    }
}

#[test]
fn eta_shift_cutoffs() {
    let grid = Grid::spanning(0.0, 2.0, 1.0, 4).unwrap();
    let u = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(eta_shift(&grid, 0.0, &u).unwrap(), u.to_vec());
    assert_eq!(eta_shift(&grid, 0.5, &u).unwrap(), vec![0.0, 0.0, 1.0, 2.0, 3.0]);
    assert_eq!(eta_shift(&grid, 1.0, &u).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(eta_shift(&grid, 1.5, &u).unwrap(), vec![0.0; 5]);
    assert!(eta_shift(&grid, 0.3, &u).is_err());
}

#[test]
fn semigroup_identity_and_fixed_points() {
    let model = ModelSpec::ak(0.8, 1.0, 0.0);
    let phi = M2Point::new(0.3, vec![1.0, -2.0, 0.5, 4.0, 0.3]);
    assert_eq!(semigroup_apply(&model, 4, 0, &phi).unwrap(), phi);
    let constant = M2Point::new(2.0, vec![2.0; 5]);
    for steps in [1, 3, 4, 9] {
        assert_eq!(semigroup_apply(&model, 4, steps, &constant).unwrap(), constant);
    }
    assert!(semigroup_apply_time(&model, 4, 0.3, &phi).is_err());
    assert_eq!(
        semigroup_apply_time(&model, 4, 0.75, &phi).unwrap(),
        semigroup_apply(&model, 4, 3, &phi).unwrap()
    );
}

#[test]
fn m2_geometry() {
    let p = M2Point::new(1.0, vec![1.0, 1.0, 1.0]);
    assert!((p.norm(0.5) - 2.0_f64.sqrt()).abs() < 1e-15);
    let q = M2Point::zero(2);
    assert_eq!(p.lerp(&q, 0.5), M2Point::new(0.5, vec![0.5; 3]));
    assert_eq!(q.axpy(2.0, &p), M2Point::new(2.0, vec![2.0; 3]));
    assert!(M2Point::new(f64::NAN, vec![0.0; 3]).validate(2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Triples that differ by `(0, psi, a psi)` share their structural state
    /// and their trajectories.
    #[test]
    fn ak_equal_states_give_equal_paths(
        a in 0.1..1.0f64,
        phi0 in 0.0..3.0f64,
        phi1 in prop::collection::vec(0.0..3.0f64, 9),
        omega in prop::collection::vec(0.0..1.0f64, 9),
        psi in prop::collection::vec(-1.0..1.0f64, 9),
        c in prop::collection::vec(0.0..1.0f64, 16),
    ) {
        let model = ModelSpec::ak(a, 1.0, 0.0);
        let grid = Grid::spanning(0.0, 2.0, 1.0, 8).unwrap();
        let first = InitialTriple::new(phi0, phi1.clone(), omega.clone());
        let second = InitialTriple::new(
            phi0,
            phi1.iter().zip(&psi).map(|(p, d)| p + d).collect(),
            omega.iter().zip(&psi).map(|(w, d)| w + a * d).collect(),
        );
        let x = build_x1(&model, &first, grid.delta()).unwrap();
        let y = build_x1(&model, &second, grid.delta()).unwrap();
        prop_assert!(sup_diff(&x.x1, &y.x1) < 1e-12);
        let control = ControlGrid::new(c);
        let k1 = simulate(&model, &grid, &first, &control).unwrap().k;
        let k2 = simulate(&model, &grid, &second, &control).unwrap().k;
        prop_assert!(sup_diff(&k1, &k2) < 1e-10);
    }

    #[test]
    fn build_x1_is_linear(
        phi1 in prop::collection::vec(-2.0..2.0f64, 7),
        omega in prop::collection::vec(-2.0..2.0f64, 7),
        lam in -3.0..3.0f64,
    ) {
        let model = ModelSpec::ak(0.6, 1.0, 0.0);
        let x = build_x1(&model, &InitialTriple::new(0.0, phi1.clone(), omega.clone()), 1.0 / 6.0).unwrap();
        let scaled = InitialTriple::new(0.0, phi1, omega).scaled(lam);
        let y = build_x1(&model, &scaled, 1.0 / 6.0).unwrap();
        let expect: Vec<f64> = x.x1.iter().map(|v| lam * v).collect();
        prop_assert!(sup_diff(&y.x1, &expect) < 1e-12);
    }

    /// Exact for compatible data `x0 = x1(0)`; otherwise the junction read
    /// differs between the two routes.
    #[test]
    fn semigroup_composes(
        a in 0.1..1.0f64,
        x0 in -2.0..2.0f64,
        x1 in prop::collection::vec(-2.0..2.0f64, 9),
        s1 in 0usize..12,
        s2 in 0usize..12,
    ) {
        let model = ModelSpec::ak(a, 1.0, 0.0);
        let mut x1 = x1;
        x1[8] = x0;
        let phi = M2Point::new(x0, x1);
        let direct = semigroup_apply(&model, 8, s1 + s2, &phi).unwrap();
        let inner = semigroup_apply(&model, 8, s2, &phi).unwrap();
        let composed = semigroup_apply(&model, 8, s1, &inner).unwrap();
        let diff = direct.axpy(-1.0, &composed);
        prop_assert!(diff.norm(1.0 / 8.0) <= 1e-10 * (1.0 + direct.norm(1.0 / 8.0)));
    }
}
