//! Runs the bundled mini study (two datasets, three features) through the
//! `evaluate` and `report` commands and prints the rendered tables.
//!
//!     cargo run --example mini_study [output-dir]

use std::path::{Path, PathBuf};

use clap::Parser;
use partisan_lens::cli::{run, Cli};

fn main() {
    let config =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_study/config.json");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("partisan-lens-mini-study"));

    for command in ["evaluate", "report"] {
        let cli = Cli::parse_from([
            "partisan-lens",
            command,
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        let (summary, _) = run(&cli).unwrap_or_else(|e| panic!("{command}: {e}"));
        eprintln!("{command}: {}", summary["outputs"]);
    }
    print!(
        "{}",
        std::fs::read_to_string(out.join("tables.md")).unwrap()
    );
}
