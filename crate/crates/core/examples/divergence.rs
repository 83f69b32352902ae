//! KL divergence between two class distributions, with and without
//! smoothing, in nats and bits.
//!
//!     cargo run --example divergence

use partisan_lens::{kld, KldOptions, LogBase};

fn main() {
    // Stance shares (negative, neutral, positive) of real and generated text.
    let real = [0.5, 0.3, 0.2];
    let generated = [0.8, 0.2, 0.0];

    let default = KldOptions::default();
    let d = kld(&generated, &real, default).unwrap();
    println!("D(gen || real) = {d:.4} nats (epsilon {})", default.epsilon);

    // The reverse direction puts the zero in the denominator; smoothing
    // keeps it finite but large.
    let r = kld(&real, &generated, default).unwrap();
    println!("D(real || gen) = {r:.4} nats");

    let bits = KldOptions {
        log_base: LogBase::Two,
        ..default
    };
    println!(
        "D(gen || real) = {:.4} bits",
        kld(&generated, &real, bits).unwrap()
    );

    let unsmoothed = KldOptions {
        epsilon: 0.0,
        log_base: LogBase::E,
    };
    println!(
        "D((0.5,0.5) || (0.9,0.1)) = {:.4} nats",
        kld(&[0.5, 0.5], &[0.9, 0.1], unsmoothed).unwrap()
    );
}
