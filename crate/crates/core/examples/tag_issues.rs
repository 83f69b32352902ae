//! Tags instances with an issue using the bundled COVID-19 lexicons, under
//! both tagging policies.
//!
//!     cargo run --example tag_issues

use partisan_lens::issue_tagger::{preset_lexicons, tag_issues, TagPolicy};
use partisan_lens::{Corpus, Ideology, Source, TextInstance};

fn main() {
    let texts = [
        (
            "t1",
            "Wear a mask in class, it protects the teachers",
            Ideology::Liberal,
        ),
        (
            "t2",
            "Vaccine mandates are government overreach",
            Ideology::Conservative,
        ),
        (
            "t3",
            "Schools should reopen, masks or not",
            Ideology::Conservative,
        ),
        ("t4", "Lovely sunset tonight", Ideology::Liberal),
    ];
    let corpus = Corpus::new(
        "tweets",
        texts
            .iter()
            .map(|(id, text, ideology)| TextInstance::new(*id, *text, *ideology, Source::Real))
            .collect(),
    );
    let lexicons = preset_lexicons("covid").unwrap();

    for policy in [TagPolicy::BestSingle, TagPolicy::AllMatching] {
        println!("{policy:?}");
        for inst in tag_issues(&corpus, &lexicons, policy).unwrap().iter() {
            println!(
                "  {} -> {}",
                inst.id,
                inst.topic.as_deref().unwrap_or("(untagged)")
            );
        }
    }
}
