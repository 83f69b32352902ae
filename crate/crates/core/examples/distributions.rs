//! Class distributions from per-instance labels, and the tendency score
//! that compares liberal and conservative shares across real and generated
//! text.
//!
//!     cargo run --example distributions

use partisan_lens::metrics::tendency_from_distributions;
use partisan_lens::{Cell, ClassDistribution, ClassSet, Ideology, Source};

fn dist(
    classes: &ClassSet,
    ideology: Ideology,
    source: Source,
    labels: &[&[&str]],
) -> ClassDistribution {
    let sets: Vec<Vec<&str>> = labels.iter().map(|l| l.to_vec()).collect();
    let cell = Cell {
        ideology: Some(ideology),
        source: Some(source),
        ..Default::default()
    };
    ClassDistribution::from_label_sets(classes, &sets, cell).unwrap()
}

fn main() {
    let emotion = ClassSet::emotion();

    // Emotion is multi-label: raw shares can sum past 1, normalized ones
    // always sum to 1.
    let real_lib = dist(
        &emotion,
        Ideology::Liberal,
        Source::Real,
        &[&["joy", "optimism"], &["anger"], &["joy"]],
    );
    let real_con = dist(
        &emotion,
        Ideology::Conservative,
        Source::Real,
        &[&["anger", "disgust"], &["anger"], &["fear"]],
    );
    let gen_lib = dist(
        &emotion,
        Ideology::Liberal,
        Source::Generated,
        &[&["joy"], &["optimism"], &["trust"]],
    );
    let gen_con = dist(
        &emotion,
        Ideology::Conservative,
        Source::Generated,
        &[&["anger"], &["anger", "fear"], &[]],
    );

    println!("{:<14} {:>8} {:>8}", "class", "raw", "norm");
    for (i, class) in real_lib.classes.iter().enumerate() {
        println!(
            "{class:<14} {:>8.3} {:>8.3}",
            real_lib.raw[i], real_lib.normalized[i]
        );
    }
    println!("raw sum {:.3}", real_lib.raw.iter().sum::<f64>());

    let t = tendency_from_distributions(&real_lib, &real_con, &gen_lib, &gen_con, 0.0).unwrap();
    println!("\ntendency accuracy {:.2}", t.overall);
    for (class, hit) in &t.per_class {
        println!("  {class:<14} {}", if *hit { "match" } else { "miss" });
    }
}
