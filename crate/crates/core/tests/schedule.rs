use daps::schedule::{ode_grid, polynomial_grid, AnnealingPlan, DEFAULT_RHO};
use proptest::prelude::*;

// 40-digit evaluation of the closed form, rounded to f64.
const GRID_100_002_5_7: [f64; 5] = [
    100.0,
    25.802_932_759_127_758_047,
    4.802_630_882_675_750_582_1,
    0.523_033_125_192_351_673_12,
    0.02,
];

#[test]
fn five_node_grid_matches_extended_precision() {
    let g = polynomial_grid(100.0, 0.02, 5, 7.0).unwrap();
    for (a, b) in g.iter().zip(GRID_100_002_5_7) {
        assert!(((a - b) / b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn plan_prefix_is_the_polynomial_grid() {
    for n in [1usize, 2, 7, 50, 200] {
        let plan = AnnealingPlan::new(100.0, 0.1, n).unwrap();
        let grid = plan.grid();
        assert_eq!(grid.len(), n + 1);
        assert_eq!(grid[n], 0.0);
        if n >= 2 {
            assert_eq!(&grid[..n], polynomial_grid(100.0, 0.1, n, DEFAULT_RHO).unwrap().as_slice());
        }
    }
}

#[test]
fn ode_grid_ends_at_zero() {
    let g = ode_grid(3.0, 0.02, 6, 7.0).unwrap();
    assert_eq!(g.first(), Some(&3.0));
    assert_eq!(g.last(), Some(&0.0));
    assert!(g.windows(2).all(|w| w[0] > w[1]));
}

proptest! {
    #[test]
    fn grid_is_strictly_decreasing_and_positive(
        t_min in 1e-3f64..1.0,
        ratio in 1.01f64..1e4,
        n in 2usize..300,
        rho in 0.5f64..12.0,
    ) {
        let t_max = t_min * ratio;
        let g = polynomial_grid(t_max, t_min, n, rho).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g[0], t_max);
        prop_assert_eq!(g[n - 1], t_min);
        prop_assert!(g.windows(2).all(|w| w[0] > w[1]));
        prop_assert!(g.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn rho_one_is_arithmetic(t_min in 1e-3f64..1.0, span in 0.01f64..100.0, n in 2usize..100) {
        let t_max = t_min + span;
        let g = polynomial_grid(t_max, t_min, n, 1.0).unwrap();
        for (i, v) in g.iter().enumerate() {
            let lin = t_max + i as f64 / (n - 1) as f64 * (t_min - t_max);
            prop_assert!(((v - lin) / lin).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_invariants(sigma_min in 1e-3f64..1.0, ratio in 1.5f64..1e3, n in 1usize..250) {
        let sigma_max = sigma_min * ratio;
        let plan = AnnealingPlan::new(sigma_max, sigma_min, n).unwrap();
        let g = plan.grid();
        prop_assert_eq!(g[0], sigma_max);
        prop_assert_eq!(g[n], 0.0);
        if n >= 2 {
            prop_assert_eq!(g[n - 1], sigma_min);
        }
        prop_assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}
