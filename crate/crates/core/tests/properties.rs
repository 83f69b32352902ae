use std::path::Path;

use partisan_lens::corpus::read_corpus;
use partisan_lens::issue_tagger::{score_terms, tag_issues, IssueLexicon, TagPolicy};
use partisan_lens::metrics::{kld, tendency_accuracy, ClassDistribution, KldOptions};
use partisan_lens::{
    filter_corpus, Cell, ClassSet, Corpus, CorpusFilter, Ideology, LogBase, Source, TextInstance,
};
use proptest::prelude::*;

fn simplex(m: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u32..20, m).prop_filter_map("all zero", |w| {
        let s: u32 = w.iter().sum();
        (s > 0).then(|| w.iter().map(|&x| x as f64 / s as f64).collect())
    })
}

fn pair(m: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    m.prop_flat_map(|m| (simplex(m..m + 1), simplex(m..m + 1)))
}

fn opts(epsilon: f64) -> KldOptions {
    KldOptions {
        epsilon,
        log_base: LogBase::E,
    }
}

proptest! {
    #[test]
    fn kld_is_non_negative((p, q) in pair(2..13), eps in prop_oneof![Just(1e-6), Just(1e-3), Just(0.1)]) {
        prop_assert!(kld(&p, &q, opts(eps)).unwrap() >= -1e-12);
    }

    #[test]
    fn kld_of_a_distribution_with_itself_is_zero(p in simplex(2..13)) {
        prop_assert_eq!(kld(&p, &p, opts(1e-6)).unwrap(), 0.0);
    }

    #[test]
    fn bits_are_nats_over_ln2((p, q) in pair(2..8)) {
        let nats = kld(&p, &q, opts(1e-6)).unwrap();
        let bits = kld(&p, &q, KldOptions { epsilon: 1e-6, log_base: LogBase::Two }).unwrap();
        prop_assert!((bits * std::f64::consts::LN_2 - nats).abs() <= 1e-12 * nats.abs().max(1.0));
    }

    #[test]
    fn tendency_is_invariant_under_scaling_and_permutation(
        vs in (2usize..12).prop_flat_map(|m| prop::collection::vec(prop::collection::vec(0u32..5, m), 4)),
        scale in prop_oneof![Just(0.5), Just(2.0), Just(8.0)],
        seed in any::<u64>(),
    ) {
        let f: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|&x| x as f64 / 4.0).collect()).collect();
        let base = tendency_accuracy(&f[0], &f[1], &f[2], &f[3], 0.0).unwrap();

        let scaled: Vec<Vec<f64>> = f.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
        let s = tendency_accuracy(&scaled[0], &scaled[1], &scaled[2], &scaled[3], 0.0).unwrap();
        prop_assert_eq!(s.overall, base.overall);

        let m = f[0].len();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut x = seed;
        for i in (1..m).rev() {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (x >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f64>> = f.iter().map(|v| perm.iter().map(|&i| v[i]).collect()).collect();
        let p = tendency_accuracy(&permuted[0], &permuted[1], &permuted[2], &permuted[3], 0.0).unwrap();
        prop_assert_eq!(p.overall, base.overall);
        let expected: Vec<bool> = perm.iter().map(|&i| base.per_class[i]).collect();
        prop_assert_eq!(p.per_class, expected);
    }

    #[test]
    fn distributions_are_normalized(
        sets in prop::collection::vec(prop::collection::vec(0usize..11, 0..4), 1..30)
    ) {
        let classes = ClassSet::emotion();
        let labels: Vec<Vec<&str>> = sets
            .iter()
            .map(|s| s.iter().map(|&i| classes.classes[i].as_str()).collect())
            .collect();
        match ClassDistribution::from_label_sets(&classes, &labels, Cell::default()) {
            Ok(d) => {
                let total: f64 = d.normalized.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                prop_assert!(d.raw.iter().all(|&r| (0.0..=1.0).contains(&r)));
                for (r, n) in d.raw.iter().zip(&d.normalized) {
                    prop_assert_eq!(*r == 0.0, *n == 0.0);
                }
            }
            Err(_) => prop_assert!(sets.iter().all(Vec::is_empty)),
        }
    }

    #[test]
    fn corpus_round_trips_through_jsonl(insts in instances()) {
        let corpus = Corpus::new("c", insts);
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = read_corpus(&buf[..], "c", Path::new("mem")).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn ideology_filter_partitions_the_corpus(insts in instances()) {
        let corpus = Corpus::new("c", insts);
        let lib = filter_corpus(&corpus, &CorpusFilter { ideology: Some(Ideology::Liberal), ..Default::default() });
        let con = filter_corpus(&corpus, &CorpusFilter { ideology: Some(Ideology::Conservative), ..Default::default() });
        prop_assert_eq!(lib.len() + con.len(), corpus.len());
        prop_assert!(lib.iter().all(|i| i.ideology == Ideology::Liberal));
        prop_assert!(con.iter().all(|i| i.ideology == Ideology::Conservative));
        let all = filter_corpus(&corpus, &CorpusFilter::default());
        prop_assert_eq!(all, corpus);
    }

    #[test]
    fn best_single_tagging_matches_a_naive_scan(
        texts in prop::collection::vec(prop::collection::vec(0usize..VOCAB.len(), 0..8), 1..20),
        lexicon_terms in prop::collection::vec(prop::collection::btree_set(0usize..VOCAB.len(), 1..4), 1..4),
    ) {
        let lexicons: Vec<IssueLexicon> = lexicon_terms
            .iter()
            .enumerate()
            .map(|(k, terms)| IssueLexicon::new(format!("issue{k}"), terms.iter().map(|&i| VOCAB[i])).unwrap())
            .collect();
        let corpus = Corpus::new(
            "c",
            texts
                .iter()
                .enumerate()
                .map(|(n, words)| {
                    let text: Vec<String> = words
                        .iter()
                        .enumerate()
                        .map(|(j, &w)| if j % 2 == 0 { VOCAB[w].to_uppercase() } else { VOCAB[w].to_string() })
                        .collect();
                    TextInstance::new(format!("t{n}"), format!("x {}", text.join(" ")), Ideology::Liberal, Source::Real)
                })
                .collect(),
        );
        let tagged = tag_issues(&corpus, &lexicons, TagPolicy::BestSingle).unwrap();
        prop_assert_eq!(tagged.len(), corpus.len());
        for (words, inst) in texts.iter().zip(tagged.iter()) {
            let mut best: Option<(usize, usize)> = None;
            for (k, terms) in lexicon_terms.iter().enumerate() {
                let hits = terms.iter().filter(|t| words.contains(t)).count();
                if hits > 0 && best.is_none_or(|(_, b)| hits > b) {
                    best = Some((k, hits));
                }
            }
            let expected = best.map(|(k, _)| format!("issue{k}"));
            prop_assert_eq!(inst.topic.clone(), expected);
        }

        let all = tag_issues(&corpus, &lexicons, TagPolicy::AllMatching).unwrap();
        let expected_rows: usize = texts
            .iter()
            .map(|words| {
                let n = lexicon_terms.iter().filter(|t| t.iter().any(|x| words.contains(x))).count();
                n.max(1)
            })
            .sum();
        prop_assert_eq!(all.len(), expected_rows);
    }

    #[test]
    fn distinctive_scores_are_antisymmetric(
        a in prop::collection::vec(prop::collection::vec(0usize..VOCAB.len(), 1..6), 1..8),
        b in prop::collection::vec(prop::collection::vec(0usize..VOCAB.len(), 1..6), 1..8),
        prior in prop_oneof![Just(1.0), Just(0.5), Just(3.0)],
    ) {
        let fg = word_corpus(&a);
        let bg = word_corpus(&b);
        let ab = score_terms(&fg, &bg, 2, prior).unwrap();
        let ba = score_terms(&bg, &fg, 2, prior).unwrap();
        prop_assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert_eq!(&x.term, &y.term);
            prop_assert!(x.zeta.is_finite());
            prop_assert_eq!(x.zeta, -y.zeta);
        }
        let same = score_terms(&fg, &fg, 2, prior).unwrap();
        prop_assert!(same.iter().all(|s| s.zeta == 0.0));
    }
}

const VOCAB: [&str; 8] = [
    "mask", "vaccine", "school", "lab", "lockdown", "tax", "border", "gun",
];

fn word_corpus(texts: &[Vec<usize>]) -> Corpus {
    Corpus::new(
        "w",
        texts
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let words: Vec<&str> = w.iter().map(|&k| VOCAB[k]).collect();
                TextInstance::new(
                    format!("{i}"),
                    words.join(" "),
                    Ideology::Liberal,
                    Source::Real,
                )
            })
            .collect(),
    )
}

fn instances() -> impl Strategy<Value = Vec<TextInstance>> {
    prop::collection::vec(
        (
            "[a-z\\u{e9}\\u{1F600} \"\\\\\n]{1,20}",
            any::<bool>(),
            any::<bool>(),
            prop::option::of(prop_oneof![Just("masking"), Just("vaccine")]),
            prop::option::of(prop::collection::vec("[A-Z][a-z]{0,5}", 0..3)),
        ),
        0..12,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .filter(|(_, (text, ..))| !text.trim().is_empty())
            .map(|(i, (text, lib, real, topic, entities))| {
                let mut inst = TextInstance::new(
                    format!("id{i}"),
                    text,
                    if lib {
                        Ideology::Liberal
                    } else {
                        Ideology::Conservative
                    },
                    if real {
                        Source::Real
                    } else {
                        Source::Generated
                    },
                );
                inst.topic = topic.map(String::from);
                inst.entities = entities;
                inst
            })
            .collect()
    })
}
