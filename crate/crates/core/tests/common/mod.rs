#![allow(dead_code)]

use firstreturn_core::dense::DenseMatrix;
use firstreturn_core::grid::{build_grid_chain, Boundary, GridSpec};
use firstreturn_core::StochasticMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Random strongly connected chain: a random Hamiltonian cycle guarantees
/// connectivity, extra edges and self-loops are sprinkled on top.
pub fn random_chain(seed: u64, max_states: usize) -> StochasticMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 + (rng.next_u64() as usize) % (max_states - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, (rng.next_u64() as usize) % (i + 1));
    }
    let density = 0.1 + 0.4 * uniform(&mut rng);
    let mut weights = vec![vec![0.0; n]; n];
    for k in 0..n {
        weights[perm[k]][perm[(k + 1) % n]] = 0.1 + uniform(&mut rng);
    }
    for row in weights.iter_mut() {
        for w in row.iter_mut() {
            if *w == 0.0 && uniform(&mut rng) < density {
                *w = 0.1 + uniform(&mut rng);
            }
        }
    }
    let mut entries = Vec::new();
    for (x, row) in weights.iter().enumerate() {
        let total: f64 = row.iter().sum();
        for (y, &w) in row.iter().enumerate() {
            if w > 0.0 {
                entries.push((x, y, w / total));
            }
        }
    }
    StochasticMatrix::from_sparse_rows(n, &entries).expect("generator builds valid chains")
}

pub fn random_vector(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| 2.0 * uniform(&mut rng) - 1.0).collect()
}

pub fn grid(dims: &[usize], b: Boundary) -> (GridSpec, StochasticMatrix) {
    let s = GridSpec::new(dims.to_vec(), b).unwrap();
    let u = build_grid_chain(&s).unwrap();
    (s, u)
}

/// The full modified matrix M, assembled entry by entry from U.
pub fn assemble_modified(u: &StochasticMatrix, o: usize) -> DenseMatrix {
    let n = u.n_states();
    let flat = |x: usize| if x < o { x } else { x - 1 };
    let (l, b) = (n - 1, n);
    let mut m = DenseMatrix::zeros(n + 1, n + 1);
    for (x, y, p) in u.entries() {
        if x == o {
            continue;
        }
        if y == o {
            m[(flat(x), l)] = p;
        } else {
            m[(flat(x), flat(y))] = p;
        }
    }
    m[(l, b)] = 1.0;
    m[(b, b)] = 1.0;
    m
}

pub fn dense_power(m: &DenseMatrix, k: usize) -> DenseMatrix {
    let mut out = DenseMatrix::identity(m.rows());
    for _ in 0..k {
        out = out.matmul(m);
    }
    out
}

pub fn grid_matrix() -> Vec<(Vec<usize>, Boundary)> {
    let mut v = Vec::new();
    for dims in [vec![5, 5], vec![3, 4], vec![2, 3, 4], vec![7]] {
        v.push((dims, Boundary::Periodic));
    }
    v.push((vec![6, 6], Boundary::Reflecting));
    v.push((vec![5], Boundary::Reflecting));
    v.push((vec![3, 3], Boundary::Reflecting));
    v.push((vec![4, 4], Boundary::StayStill));
    v.push((vec![3, 3], Boundary::StayStill));
    v
}
