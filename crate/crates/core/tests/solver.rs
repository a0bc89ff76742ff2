use cmc_heights::graph::{mean_curvature, shape_data, Jet2};
use cmc_heights::solver::grid::{DomainGrid, DomainShape};
use cmc_heights::solver::{
    continuation_in_h, graph_height, sigma_profile, solve_dirichlet, FailureMode, GraphSolution, SolverConfig,
};
use cmc_heights::SpaceParams;
use proptest::prelude::*;

fn disk(radius: f64, n: usize) -> DomainGrid {
    DomainGrid::new(DomainShape::disk(radius), n).unwrap()
}

fn heights(params: &SpaceParams, h: f64) -> Vec<f64> {
    [32, 64, 128]
        .iter()
        .map(|&n| graph_height(&solve_dirichlet(&disk(0.5, n), 0.0, h, params, &SolverConfig::default()).unwrap()).unwrap())
        .collect()
}

// [DERIVED] grid-refinement oracle: O(h²) Cauchy sequence, Richardson value frozen
#[test]
fn nil_refinement_and_richardson_value() {
    let hs = heights(&SpaceParams::nil(0.5).unwrap(), 1.0);
    let ratio = (hs[1] - hs[0]) / (hs[2] - hs[1]);
    assert!((3.5..=4.5).contains(&ratio), "{hs:?}");
    assert!(((hs[2] - hs[1]) / hs[2]).abs() < 0.01);
    assert!(hs.windows(2).all(|w| w[1] > w[0]));
    let richardson = hs[2] + (hs[2] - hs[1]) / 3.0;
    assert!((richardson - 0.136_095_915_3).abs() < 1e-8, "{richardson}");
}

// [DERIVED] analytic spherical cap 1/H − √(1/H² − R²)
#[test]
fn euclidean_cap_refinement() {
    let hs = heights(&SpaceParams::euclidean(), 1.0);
    let exact = 1.0 - 0.75_f64.sqrt();
    assert!((hs[1] / exact - 1.0).abs() < 0.02);
    let ratio = (hs[1] - hs[0]) / (hs[2] - hs[1]);
    assert!((3.5..=4.5).contains(&ratio), "{hs:?}");
}

// [DERIVED] cap existence iff H·R ≤ 1
#[test]
fn continuation_on_unit_disk() {
    let steps =
        continuation_in_h(&disk(1.0, 32), 0.0, 0.0, 1.2, 12, &SpaceParams::euclidean(), &SolverConfig::default()).unwrap();
    assert_eq!(steps.len(), 13);
    assert_eq!(graph_height(steps[0].solution().unwrap()).unwrap(), 0.0);
    let prefix: Vec<&GraphSolution> = steps.iter().map_while(|s| s.solution()).collect();
    assert_eq!(prefix.len(), 10, "last success at H = 0.9");
    let hts: Vec<f64> = prefix.iter().map(|s| graph_height(s).unwrap()).collect();
    assert!(hts.windows(2).all(|w| w[1] >= w[0] - 1e-6));
    for s in &steps[10..] {
        assert_eq!(s.failure(), Some(FailureMode::VerticalBlowup), "H = {}", s.h);
    }
    // the second fundamental form stays bounded away from the boundary
    let inner_max = prefix
        .iter()
        .flat_map(|s| sigma_profile(s).unwrap())
        .filter(|b| b.distance_lo > 0.2)
        .filter_map(|b| b.max_sigma)
        .fold(0.0_f64, f64::max);
    assert!(inner_max < 2.0, "{inner_max}");
}

// [DERIVED] pointwise shape data of the section z = 0
#[test]
fn sigma_profile_of_nil_section() {
    let p = SpaceParams::nil(0.5).unwrap();
    let grid = disk(0.8, 16);
    let sol = solve_dirichlet(&grid, 0.0, 0.0, &p, &SolverConfig::default()).unwrap();
    let profile = sigma_profile(&sol).unwrap();
    let mut pointwise_max = 0.0_f64;
    for &k in grid.interior_nodes() {
        let [x, y] = grid.position(k);
        let s = shape_data(&Jet2::constant(x, y, 0.0), &p, sol.orientation).unwrap().sigma_sq.sqrt();
        let d = grid.boundary_distance(k, &p);
        let bin = profile.iter().find(|b| d >= b.distance_lo && d <= b.distance_hi).unwrap();
        assert!(s <= bin.max_sigma.unwrap() + 1e-12);
        pointwise_max = pointwise_max.max(s);
    }
    let binned_max = profile.iter().flat_map(|b| b.max_sigma).fold(0.0_f64, f64::max);
    assert!((binned_max - pointwise_max).abs() < 1e-12);
    assert!(binned_max > 0.0);
}

#[test]
fn json_round_trip() {
    let sol = solve_dirichlet(&disk(0.5, 16), 0.0, 1.0, &SpaceParams::psl(-1.0, 0.5).unwrap(), &SolverConfig::default())
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sol.json");
    sol.save_json(&path).unwrap();
    let back = GraphSolution::load_json(&path).unwrap();
    assert_eq!(back, sol);
    assert_eq!(graph_height(&back).unwrap(), graph_height(&sol).unwrap());
}

fn space(index: usize) -> SpaceParams {
    [SpaceParams::euclidean(), SpaceParams::nil(0.5).unwrap(), SpaceParams::psl(-1.0, 0.5).unwrap()][index]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // converged solutions satisfy the PDE at every interior node and have a single sign
    #[test]
    fn converged_solutions_solve_the_pde(which in 0usize..3, h in 0.1..1.6f64, square in any::<bool>()) {
        let grid = if square {
            DomainGrid::new(DomainShape::square(0.8), 16).unwrap()
        } else {
            disk(0.5, 16)
        };
        let p = space(which);
        let sol = solve_dirichlet(&grid, 0.0, h, &p, &SolverConfig::default()).unwrap();
        prop_assert!(sol.converged && sol.residual_max <= 1e-10);
        prop_assert!(sol.min_abs_nu > 0.0);
        for &k in grid.interior_nodes() {
            let hk = mean_curvature(&grid.jet(k, &sol.values), &p, sol.orientation).unwrap();
            prop_assert!((hk - h).abs() <= 1e-9);
        }
        for k in 0..grid.len() {
            if !grid.is_interior(k) {
                prop_assert_eq!(sol.values[k], 0.0);
            }
        }
        let pos = sol.values.iter().all(|v| *v >= 0.0);
        let neg = sol.values.iter().all(|v| *v <= 0.0);
        prop_assert!(pos || neg);
    }

    // vertical translations are isometries
    #[test]
    fn translation_equivariance(which in 0usize..3, c in -5.0..5.0f64, h in 0.2..1.2f64) {
        let grid = disk(0.5, 16);
        let p = space(which);
        let a = solve_dirichlet(&grid, 0.0, h, &p, &SolverConfig::default()).unwrap();
        let b = solve_dirichlet(&grid, c, h, &p, &SolverConfig::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x + c - y).abs() <= 1e-12 * (1.0 + c.abs()));
        }
        prop_assert!((graph_height(&a).unwrap() - graph_height(&b).unwrap()).abs() < 1e-12);
    }
}
