mod common;

use common::grid;
use firstreturn_core::grid::Boundary;
use firstreturn_core::montecarlo::{episode_rng, monte_carlo_estimate, ReturnSampler, DEFAULT_STEP_CAP};
use firstreturn_core::return_time::expected_return_time;
use firstreturn_core::waiting_room::build_waiting_room;

#[test]
fn analytic_value_inside_interval_on_grid_cells() {
    let mut cells = 0;
    let mut inside = 0;
    for (dims, b) in [
        (vec![3, 3], Boundary::Periodic),
        (vec![3, 3], Boundary::StayStill),
        (vec![3, 3], Boundary::Reflecting),
        (vec![5], Boundary::Reflecting),
    ] {
        let (_, u) = grid(&dims, b);
        for o in 0..u.n_states() {
            let state = u.state(o).unwrap();
            let w = build_waiting_room(&u, state).unwrap();
            let exact = expected_return_time(&w).unwrap().value;
            let s = monte_carlo_estimate(&u, state, 100_000, 2024 + o as u64, DEFAULT_STEP_CAP).unwrap();
            assert_eq!(s.truncated_episodes, 0);
            cells += 1;
            if (s.mean - exact).abs() <= 3.0 * s.ci95_halfwidth {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.99 * cells as f64, "{inside}/{cells}");
}

#[test]
fn one_step_returns_track_self_loop_mass() {
    let (spec, u) = grid(&[4, 4], Boundary::StayStill);
    let sampler = ReturnSampler::new(&u);
    for p in spec.points() {
        let o = firstreturn_core::grid::point_to_index(&spec, &p).unwrap().get();
        let p_loop = u.get(o, o);
        let trials = 20_000u64;
        let ones = (0..trials)
            .filter(|&i| {
                let mut rng = episode_rng(11, i);
                sampler.run_episode(o, &mut rng, DEFAULT_STEP_CAP) == Some(1)
            })
            .count() as f64;
        if p_loop == 0.0 {
            assert_eq!(ones, 0.0);
        } else {
            let freq = ones / trials as f64;
            let sigma = (p_loop * (1.0 - p_loop) / trials as f64).sqrt();
            assert!((freq - p_loop).abs() <= 3.0 * sigma, "{freq} vs {p_loop}");
        }
    }
}

#[test]
fn stay_corner_resolves_against_published_value() {
    // 10^5 episodes cannot separate 16.0 from 16.5 at 3 * ci95 (the return
    // time variance at the corner is about 1223); 4 * 10^6 can.
    let (spec, u) = grid(&[4, 4], Boundary::StayStill);
    let o = firstreturn_core::grid::point_to_index(&spec, &vec![0, 0].into()).unwrap();
    let s = monte_carlo_estimate(&u, o, 4_000_000, 42, DEFAULT_STEP_CAP).unwrap();
    assert!((s.mean - 16.0).abs() <= 3.0 * s.ci95_halfwidth, "{s:?}");
    assert!((s.mean - 16.5).abs() > 3.0 * s.ci95_halfwidth, "{s:?}");
    assert!((s.variance - 1222.857142857).abs() < 0.05 * 1222.857142857);
}
