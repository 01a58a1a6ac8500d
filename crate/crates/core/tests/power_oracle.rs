mod common;

use common::GridOracle;
use nalgebra::DMatrix;
use nf_noma::power::{constraint_violation, solve_mlb, solve_slb, QosThresholds, SolverOptions};
use nf_noma::rates::{rate_h, EffectiveGains};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOISE: f64 = 1e-12;

fn instance(rng: &mut ChaCha8Rng, h_leak: f64, l_leak: f64) -> EffectiveGains {
    EffectiveGains::from_matrix(DMatrix::from_fn(4, 2, |u, i| {
        let leak = if u % 2 == 0 { h_leak } else { l_leak };
        let scale = if u / 2 == i { 1.0 } else { leak };
        Complex64::from_polar(
            scale * rng.random_range(0.3f64..1.0) * 3e-5,
            rng.random_range(0.0..std::f64::consts::TAU),
        )
    }))
    .unwrap()
}

#[test]
fn slb_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = SolverOptions::default();
    let qos = QosThresholds::uniform(2, 4.0, 1.0).unwrap();
    for _ in 0..5 {
        let g = instance(&mut rng, 0.0, 0.3);
        let sol = solve_slb(&g, &qos, 1.0, NOISE, &opts).unwrap();
        let oracle = GridOracle {
            gains: &g,
            rate_h_min: 4.0,
            rate_l_min: 1.0,
            pmax: 1.0,
            noise: NOISE,
            h_interference: false,
        };
        let best = oracle.best(1000).unwrap();
        assert!(sol.objective >= best - 1e-3, "{} vs {best}", sol.objective);
        assert!(sol.kkt_residual < 1e-8, "{}", sol.kkt_residual);
        assert!(constraint_violation(&sol.allocation, &g, &qos, 1.0, NOISE).unwrap() <= 1e-9);
    }
}

#[test]
fn mlb_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let opts = SolverOptions::default();
    let qos = QosThresholds::uniform(2, 4.0, 1.0).unwrap();
    let mut solved = 0;
    for _ in 0..5 {
        let g = instance(&mut rng, 0.05, 0.3);
        let oracle = GridOracle {
            gains: &g,
            rate_h_min: 4.0,
            rate_l_min: 1.0,
            pmax: 1.0,
            noise: NOISE,
            h_interference: true,
        };
        let state = match solve_mlb(&g, &qos, 1.0, NOISE, &opts) {
            Ok(s) => s,
            Err(e) => {
                assert!(oracle.best(1000).is_none(), "solver: {e:?}");
                continue;
            }
        };
        let value: f64 = (0..2)
            .map(|m| rate_h(&state.allocation, &g, NOISE, m))
            .sum();
        let best = oracle.best(1000).unwrap();
        assert!(value >= best - 1e-3, "{value} vs {best}");
        assert!(state.kkt_residual < 1e-8, "{}", state.kkt_residual);
        assert!(constraint_violation(&state.allocation, &g, &qos, 1.0, NOISE).unwrap() <= 1e-9);
        solved += 1;
    }
    assert!(solved >= 3, "only {solved} feasible instances");
}
