//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use skintone_core::color::RgbColor;
use skintone_core::stats::{DesignSpec, Frame, Term};

/// `n` random sRGB triples.
pub fn rgb_samples(n: usize, seed: u64) -> Vec<RgbColor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| RgbColor::new(rng.random(), rng.random(), rng.random())).collect()
}

/// Linear model with `p` continuous predictors and one three-level factor.
pub fn linear_design(n: usize, p: usize, seed: u64) -> DesignSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let xs: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| noise.sample(&mut rng)).collect()).collect();
    let levels: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
    let y = (0..n)
        .map(|i| {
            let signal: f64 = xs.iter().enumerate().map(|(j, x)| x[i] * (j % 3) as f64 * 0.5).sum();
            signal + if levels[i] == "b" { 0.7 } else { 0.0 } + noise.sample(&mut rng)
        })
        .collect();
    let mut frame = Frame::new().with_numeric("y", y).unwrap().with_categorical("f", levels).unwrap();
    let mut terms = Vec::new();
    for (j, x) in xs.into_iter().enumerate() {
        let name = format!("x{j}");
        frame = frame.with_numeric(name.clone(), x).unwrap();
        terms.push(Term::continuous(name));
    }
    terms.push(Term::categorical("f"));
    DesignSpec::new("y", terms, frame)
}

/// Random-intercept data: `groups` groups of `size` rows, column `group`.
pub fn grouped_design(groups: usize, size: usize, seed: u64) -> DesignSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = groups * size;
    let effects: Vec<f64> = (0..groups).map(|_| noise.sample(&mut rng) * 0.8).collect();
    let x1: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let y = (0..n).map(|i| 1.0 + 0.5 * x1[i] - 0.2 * x2[i] + effects[i / size] + noise.sample(&mut rng)).collect();
    let frame = Frame::new()
        .with_numeric("y", y)
        .unwrap()
        .with_numeric("x1", x1)
        .unwrap()
        .with_numeric("x2", x2)
        .unwrap()
        .with_categorical("group", (0..n).map(|i| format!("g{}", i / size)).collect::<Vec<_>>())
        .unwrap();
    DesignSpec::new("y", vec![Term::continuous("x1"), Term::continuous("x2")], frame)
}
