//! Instance generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdist::ext::Top;
use bdist::metric::PseudometricMatrix;
use bdist::systems::{Dfa, Nfa, Pts};
use bdist::transport::FiniteDistribution;

pub use rand_chacha;

/// Random shortest-path-closed metric over `n` points.
pub fn random_metric(seed: u64, n: usize) -> PseudometricMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = rng.gen_range(0.1..4.0);
            table[i][j] = v;
            table[j][i] = v;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if table[i][k] + table[k][j] < table[i][j] {
                    table[i][j] = table[i][k] + table[k][j];
                }
            }
        }
    }
    PseudometricMatrix::new((0..n).map(|i| format!("s{i}")).collect(), Top::Inf, &table)
        .unwrap()
}

pub fn random_distribution(seed: u64, n: usize) -> FiniteDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    FiniteDistribution::proper(raw.into_iter().map(|w| w / total).collect()).unwrap()
}

/// Random dense probabilistic transition system with `n` states.
pub fn random_pts(seed: u64, n: usize, discount: f64) -> Pts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transition = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        })
        .collect();
    Pts {
        states: (0..n).map(|i| format!("s{i}")).collect(),
        discount,
        transition,
    }
}

pub fn random_dfa(seed: u64, n: usize, letters: usize) -> Dfa {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dfa {
        states: (0..n).map(|i| format!("q{i}")).collect(),
        alphabet: (0..letters).map(|a| format!("l{a}")).collect(),
        accept: (0..n).map(|_| rng.gen_bool(0.4)).collect(),
        next: (0..n)
            .map(|_| (0..letters).map(|_| rng.gen_range(0..n)).collect())
            .collect(),
        discount: 0.5,
    }
}

pub fn random_nfa(seed: u64, n: usize, letters: usize) -> Nfa {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Nfa {
        states: (0..n).map(|i| format!("q{i}")).collect(),
        alphabet: (0..letters).map(|a| format!("l{a}")).collect(),
        accept: (0..n).map(|_| rng.gen_bool(0.4)).collect(),
        next: (0..n)
            .map(|_| {
                (0..letters)
                    .map(|_| (0..n).filter(|_| rng.gen_bool(0.3)).collect())
                    .collect()
            })
            .collect(),
        discount: 0.5,
    }
}
