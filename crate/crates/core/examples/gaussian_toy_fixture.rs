//! Regenerates `data/gaussian_toy.txt`: 20 draws of `y ~ N(1, 2)` from ChaCha8 seeded with 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal = Normal::new(1.0, 2f64.sqrt()).unwrap();
    println!("# Gaussian missing-data toy: 20 observations y_i ~ N(1, 2).");
    println!("# Drawn with rand_distr::Normal from ChaCha8Rng::seed_from_u64(0);");
    println!("# regenerate with `cargo run -p samcmc --example gaussian_toy_fixture`.");
    for _ in 0..20 {
        println!("{:.16e}", normal.sample(&mut rng));
    }
}
