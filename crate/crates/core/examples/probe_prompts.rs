//! Probe instructions for measuring a model: every issue of the COVID-19
//! preset, both ideologies, 100 prompts per batch and 10 repeats.
//!
//!     cargo run --example probe_prompts

use std::collections::BTreeMap;

use partisan_lens::instruction_builder::{
    build_probe_prompts, preset_issues, IdeologyTerms, InstructionTemplates, ProbePlan,
};

fn main() {
    let issues = preset_issues("covid").unwrap();
    let prompts = build_probe_prompts(
        &issues,
        &IdeologyTerms::default(),
        &InstructionTemplates::default(),
        ProbePlan::default(),
        42,
    )
    .unwrap();
    println!("{} prompts", prompts.len());

    let mut per_group: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for p in &prompts {
        *per_group
            .entry((&p.issue, p.ideology.as_str()))
            .or_default() += 1;
    }
    for ((issue, ideology), n) in per_group {
        println!("  {issue:<12} {ideology:<13} {n}");
    }

    println!("\nfirst prompt of each issue:");
    for issue in &issues {
        let p = prompts.iter().find(|p| p.issue == issue.issue).unwrap();
        println!("  {}", p.instruction);
    }
}
