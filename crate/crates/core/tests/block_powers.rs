mod common;

use common::{assemble_modified, dense_power, random_chain};
use firstreturn_core::waiting_room::{build_waiting_room, modified_power};
use proptest::prelude::*;

fn check(seed: u64, k: usize) -> Result<(), TestCaseError> {
    let u = random_chain(seed, 10);
    let n = u.n_states();
    for o in 0..n {
        let w = build_waiting_room(&u, u.state(o).unwrap()).unwrap();
        let blocks = modified_power(&w, k).unwrap();
        let full = dense_power(&assemble_modified(&u, o), k);
        let m = n - 1;
        for i in 0..m {
            for j in 0..m {
                prop_assert!((blocks.q_power[(i, j)] - full[(i, j)]).abs() <= 1e-12);
            }
            prop_assert!((blocks.l_column[i] - full[(i, m)]).abs() <= 1e-12);
            prop_assert!((blocks.b_column[i] - full[(i, m + 1)]).abs() <= 1e-12);
        }
        // bottom rows are T for every k
        prop_assert_eq!(full[(m, m)], 0.0);
        prop_assert_eq!(full[(m, m + 1)], 1.0);
        prop_assert_eq!(full[(m + 1, m)], 0.0);
        prop_assert_eq!(full[(m + 1, m + 1)], 1.0);
        for j in 0..m {
            prop_assert_eq!(full[(m, j)], 0.0);
            prop_assert_eq!(full[(m + 1, j)], 0.0);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blocks_match_dense_powers(seed in any::<u64>(), k in 1usize..=8) {
        check(seed, k)?;
    }
}

#[test]
fn cycle_k5_against_dense() {
    check(12345, 5).unwrap();
}
