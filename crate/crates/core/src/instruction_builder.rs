//! Ideology-conditioned instructions: entity statistics, ideology-term
//! sampling, template rendering, tuning-set export and probe prompts.
//!
//! All randomness is drawn from ChaCha streams keyed by a caller-supplied
//! seed. Per-instance and per-batch streams are derived with
//! [`derive_seed`], so output does not depend on iteration order.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Ideology, TextInstance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeologyTerms {
    pub liberal_terms: Vec<String>,
    pub conservative_terms: Vec<String>,
}

impl Default for IdeologyTerms {
    fn default() -> Self {
        IdeologyTerms {
            liberal_terms: vec!["liberal".into(), "left".into(), "Democratic".into()],
            // Capitalized "Conservative" is kept as given in the source term list.
            conservative_terms: vec!["conservative".into(), "right".into(), "Conservative".into()],
        }
    }
}

impl IdeologyTerms {
    pub fn for_ideology(&self, ideology: Ideology) -> &[String] {
        match ideology {
            Ideology::Liberal => &self.liberal_terms,
            Ideology::Conservative => &self.conservative_terms,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for ideology in Ideology::ALL {
            if self.for_ideology(ideology).is_empty() {
                return Err(format!("no ideology terms for {ideology}"));
            }
        }
        Ok(())
    }
}

/// Instruction templates. `{TERM}` is replaced by the sampled ideology term
/// and `{ENTITY}` by the chosen entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplates {
    pub with_entity: String,
    pub without_entity: String,
}

impl Default for InstructionTemplates {
    fn default() -> Self {
        InstructionTemplates {
            with_entity: "Write a tweet expressing a {TERM} perspective regarding {ENTITY}.".into(),
            without_entity: "Write a tweet expressing a {TERM} perspective.".into(),
        }
    }
}

impl InstructionTemplates {
    pub fn render(&self, term: &str, entity: Option<&str>) -> String {
        match entity {
            Some(e) => self
                .with_entity
                .replace("{TERM}", term)
                .replace("{ENTITY}", e),
            None => self.without_entity.replace("{TERM}", term),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionExample {
    pub instruction: String,
    pub output: String,
    pub ideology: Ideology,
    pub entity: Option<String>,
    pub instance_id: String,
}

/// Entity occurrence counts that passed the letter and frequency filters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityStats {
    pub counts: BTreeMap<String, u64>,
}

impl EntityStats {
    pub fn contains(&self, entity: &str) -> bool {
        self.counts.contains_key(entity)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Entities by descending count, ties alphabetical.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityFilter {
    pub min_letters: usize,
    pub min_count: u64,
}

impl Default for EntityFilter {
    fn default() -> Self {
        EntityFilter {
            min_letters: 2,
            min_count: 100,
        }
    }
}

fn letter_count(s: &str) -> usize {
    s.chars().filter(|c| c.is_alphabetic()).count()
}

/// Aggregates the pre-computed `entities` of every instance. Each listed
/// mention counts once.
pub fn compute_entity_stats(corpus: &Corpus, filter: EntityFilter) -> EntityStats {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for e in corpus.iter().filter_map(|i| i.entities.as_ref()).flatten() {
        *counts.entry(e.clone()).or_insert(0) += 1;
    }
    counts.retain(|e, n| letter_count(e) >= filter.min_letters && *n >= filter.min_count);
    EntityStats { counts }
}

/// Stable 64-bit seed from a base seed and a sequence of labels.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> &'a str {
    &items[rng.random_range(0..items.len())]
}

/// Renders the instruction for one instance. The ideology term is drawn
/// first, then an entity among those surviving `stats`.
pub fn build_instruction(
    instance: &TextInstance,
    stats: &EntityStats,
    terms: &IdeologyTerms,
    templates: &InstructionTemplates,
    rng_seed: u64,
) -> InstructionExample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let term = pick(&mut rng, terms.for_ideology(instance.ideology));

    let mut candidates: Vec<String> = Vec::new();
    for e in instance.entities.iter().flatten() {
        if stats.contains(e) && !candidates.contains(e) {
            candidates.push(e.clone());
        }
    }
    let entity = (!candidates.is_empty()).then(|| pick(&mut rng, &candidates).to_string());

    InstructionExample {
        instruction: templates.render(term, entity.as_deref()),
        output: instance.text.clone(),
        ideology: instance.ideology,
        entity,
        instance_id: instance.id.clone(),
    }
}

/// Builds one example per instance, each seeded by `derive_seed(seed, [id])`.
pub fn build_tuning_set(
    corpus: &Corpus,
    stats: &EntityStats,
    terms: &IdeologyTerms,
    templates: &InstructionTemplates,
    seed: u64,
) -> Vec<InstructionExample> {
    corpus
        .iter()
        .map(|inst| {
            build_instruction(
                inst,
                stats,
                terms,
                templates,
                derive_seed(seed, &[&inst.id]),
            )
        })
        .collect()
}

#[derive(Serialize)]
struct TuningRecord<'a> {
    instruction: &'a str,
    output: &'a str,
    id: &'a str,
}

pub fn write_tuning_set<W: Write>(
    examples: &[InstructionExample],
    mut w: W,
) -> std::io::Result<usize> {
    for ex in examples {
        serde_json::to_writer(
            &mut w,
            &TuningRecord {
                instruction: &ex.instruction,
                output: &ex.output,
                id: &ex.instance_id,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(examples.len())
}

/// Writes the tuning set as JSONL and returns the number of records.
pub fn export_tuning_set(
    corpus: &Corpus,
    stats: &EntityStats,
    terms: &IdeologyTerms,
    templates: &InstructionTemplates,
    seed: u64,
    path: &Path,
) -> std::io::Result<usize> {
    let examples = build_tuning_set(corpus, stats, terms, templates, seed);
    let mut w = BufWriter::new(File::create(path)?);
    let n = write_tuning_set(&examples, &mut w)?;
    w.flush()?;
    Ok(n)
}

/// One issue of a study: how generations are prompted and which target
/// stance annotation uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuePreset {
    pub issue: String,
    pub generation_framing: String,
    pub stance_target: String,
}

pub fn preset_issues(name: &str) -> Option<Vec<IssuePreset>> {
    let text = match name {
        "covid" => include_str!("../presets/issues_covid.json"),
        "abortion" => include_str!("../presets/issues_abortion.json"),
        "congress" => include_str!("../presets/issues_congress.json"),
        _ => return None,
    };
    Some(serde_json::from_str(text).expect("bundled issue presets are valid JSON"))
}

/// Reads an issue-preset file holding one preset object or an array.
pub fn load_issue_presets(path: &Path) -> Result<Vec<IssuePreset>, String> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<IssuePreset>),
        One(IssuePreset),
    }
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    match serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))? {
        OneOrMany::Many(v) => Ok(v),
        OneOrMany::One(p) => Ok(vec![p]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePrompt {
    pub instruction: String,
    pub ideology: Ideology,
    pub issue: String,
    pub repeat: u32,
    /// Seed of the (issue, ideology, repeat) batch this prompt belongs to.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub per_issue: u32,
    pub repeats: u32,
}

impl Default for ProbePlan {
    fn default() -> Self {
        ProbePlan {
            per_issue: 100,
            repeats: 10,
        }
    }
}

/// Produces `per_issue × repeats` prompts per issue and ideology, using the
/// entity template with the issue's generation framing as the entity.
pub fn build_probe_prompts(
    issues: &[IssuePreset],
    terms: &IdeologyTerms,
    templates: &InstructionTemplates,
    plan: ProbePlan,
    seed: u64,
) -> Result<Vec<ProbePrompt>, String> {
    if plan.per_issue == 0 || plan.repeats == 0 {
        return Err("per_issue and repeats must both be at least 1".into());
    }
    terms.validate()?;
    let mut out =
        Vec::with_capacity(issues.len() * 2 * plan.per_issue as usize * plan.repeats as usize);
    for preset in issues {
        for ideology in Ideology::ALL {
            for repeat in 0..plan.repeats {
                let batch_seed = derive_seed(
                    seed,
                    &[&preset.issue, ideology.as_str(), &repeat.to_string()],
                );
                let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
                for _ in 0..plan.per_issue {
                    let term = pick(&mut rng, terms.for_ideology(ideology));
                    out.push(ProbePrompt {
                        instruction: templates.render(term, Some(&preset.generation_framing)),
                        ideology,
                        issue: preset.issue.clone(),
                        repeat,
                        seed: batch_seed,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn write_probe_prompts<W: Write>(prompts: &[ProbePrompt], mut w: W) -> std::io::Result<usize> {
    for p in prompts {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(prompts.len())
}

/// Exact, case-sensitive, whole-token gazetteer matcher. Meant for building
/// fixtures; real corpora should carry entities from a proper NER tagger.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<(String, Vec<String>)>,
}

impl Gazetteer {
    pub fn new<I, S>(entities: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Gazetteer {
            entries: entities
                .into_iter()
                .map(Into::into)
                .map(|e: String| {
                    let toks = crate::issue_tagger::tokenize::tokenize_with(&e, true);
                    (e, toks)
                })
                .collect(),
        }
    }

    /// Entities mentioned in `text`, once per mention, in gazetteer order.
    pub fn find(&self, text: &str) -> Vec<String> {
        let toks = crate::issue_tagger::tokenize::tokenize_with(text, true);
        let mut out = Vec::new();
        for (name, seq) in &self.entries {
            if seq.is_empty() {
                continue;
            }
            let hits = toks
                .windows(seq.len())
                .filter(|w| *w == seq.as_slice())
                .count();
            out.extend(std::iter::repeat_n(name.clone(), hits));
        }
        out
    }

    /// Fills `entities` on every instance.
    pub fn annotate(&self, corpus: &Corpus) -> Corpus {
        Corpus::new(
            corpus.name.clone(),
            corpus
                .iter()
                .map(|i| {
                    let mut i = i.clone();
                    i.entities = Some(self.find(&i.text));
                    i
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;

    fn corpus_with_entities(spec: &[(&str, usize)]) -> Corpus {
        let mut instances = Vec::new();
        for (name, n) in spec {
            for k in 0..*n {
                instances.push(
                    TextInstance::new(
                        format!("{name}-{k}"),
                        "text",
                        Ideology::Liberal,
                        Source::Real,
                    )
                    .with_entities([*name]),
                );
            }
        }
        Corpus::new("e", instances)
    }

    #[test]
    fn entity_thresholds() {
        let c = corpus_with_entities(&[("Trump", 150), ("Xi", 150), ("Obama", 99)]);
        let stats = compute_entity_stats(&c, EntityFilter::default());
        let expected: BTreeMap<String, u64> =
            [("Trump".to_string(), 150), ("Xi".to_string(), 150)].into();
        assert_eq!(stats.counts, expected);

        let all = compute_entity_stats(
            &c,
            EntityFilter {
                min_letters: 2,
                min_count: 1,
            },
        );
        assert_eq!(all.len(), 3);
        assert!(compute_entity_stats(&Corpus::default(), EntityFilter::default()).is_empty());
    }

    #[test]
    fn letters_not_bytes_or_digits() {
        let c = corpus_with_entities(&[("X", 3), ("5G", 3), ("Ōe", 3)]);
        let stats = compute_entity_stats(
            &c,
            EntityFilter {
                min_letters: 2,
                min_count: 1,
            },
        );
        assert_eq!(stats.counts.keys().collect::<Vec<_>>(), ["Ōe"]);
    }

    #[test]
    fn instruction_with_entity() {
        let stats = EntityStats {
            counts: [("Trump".to_string(), 150)].into(),
        };
        let inst = TextInstance::new("1", "tweet", Ideology::Liberal, Source::Real)
            .with_entities(["Trump"]);
        let ex = build_instruction(
            &inst,
            &stats,
            &IdeologyTerms::default(),
            &InstructionTemplates::default(),
            0,
        );
        assert!(ex.instruction.contains("regarding Trump"));
        let hits = ["liberal", "left", "Democratic"]
            .iter()
            .filter(|t| ex.instruction.contains(&format!(" {t} ")))
            .count();
        assert_eq!(hits, 1);
        assert_eq!(ex.entity.as_deref(), Some("Trump"));
        assert_eq!(ex.output, "tweet");
    }

    #[test]
    fn instruction_without_entity_and_determinism() {
        let inst = TextInstance::new("2", "tweet", Ideology::Conservative, Source::Real)
            .with_entities(["Obama"]);
        let t = InstructionTemplates::default();
        let ex = build_instruction(
            &inst,
            &EntityStats::default(),
            &IdeologyTerms::default(),
            &t,
            9,
        );
        let allowed: Vec<String> = ["conservative", "right", "Conservative"]
            .iter()
            .map(|w| format!("Write a tweet expressing a {w} perspective."))
            .collect();
        assert!(allowed.contains(&ex.instruction));
        assert_eq!(ex.entity, None);
        let again = build_instruction(
            &inst,
            &EntityStats::default(),
            &IdeologyTerms::default(),
            &t,
            9,
        );
        assert_eq!(ex, again);
    }

    #[test]
    fn tuning_export_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus_with_entities(&[("Trump", 2), ("God", 1)]);
        let stats = compute_entity_stats(
            &c,
            EntityFilter {
                min_letters: 2,
                min_count: 2,
            },
        );
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        let d = (IdeologyTerms::default(), InstructionTemplates::default());
        assert_eq!(export_tuning_set(&c, &stats, &d.0, &d.1, 7, &a).unwrap(), 3);
        export_tuning_set(&c, &stats, &d.0, &d.1, 7, &b).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        assert_eq!(text.lines().count(), 3);
        // "God" is below min_count and must never be referenced.
        assert!(!text.contains("regarding God"));
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["id"], "Trump-0");

        let empty = dir.path().join("e.jsonl");
        assert_eq!(
            export_tuning_set(&Corpus::default(), &stats, &d.0, &d.1, 7, &empty).unwrap(),
            0
        );
        assert_eq!(fs::read_to_string(&empty).unwrap(), "");
    }

    #[test]
    fn probe_counts() {
        let issues = preset_issues("covid").unwrap();
        let d = (IdeologyTerms::default(), InstructionTemplates::default());
        let one = build_probe_prompts(
            &issues[..1],
            &d.0,
            &d.1,
            ProbePlan {
                per_issue: 1,
                repeats: 1,
            },
            1,
        )
        .unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[0].ideology, Ideology::Liberal);
        assert_eq!(one[1].ideology, Ideology::Conservative);
        assert!(one[0].instruction.ends_with("regarding COVID-19 origins."));

        let plan = ProbePlan {
            per_issue: 3,
            repeats: 2,
        };
        let a = build_probe_prompts(&issues, &d.0, &d.1, plan, 5).unwrap();
        let b = build_probe_prompts(&issues, &d.0, &d.1, plan, 5).unwrap();
        assert_eq!(a, b);
        assert!(build_probe_prompts(
            &issues,
            &d.0,
            &d.1,
            ProbePlan {
                per_issue: 0,
                repeats: 1
            },
            5
        )
        .is_err());
    }

    #[test]
    fn covid_stance_target_differs_for_origins_only() {
        let issues = preset_issues("covid").unwrap();
        assert_eq!(
            issues[0].stance_target,
            "origins of COVID-19 as a leak from a virology research lab"
        );
        assert_eq!(issues[2].generation_framing, "COVID-19 mask mandates");
        assert!(issues[1..]
            .iter()
            .all(|p| p.stance_target == p.generation_framing));
        assert!(preset_issues("nope").is_none());
    }

    #[test]
    fn gazetteer_counts_mentions() {
        let g = Gazetteer::new(["Trump", "New York"]);
        assert_eq!(
            g.find("Trump in New York, Trump again; trump"),
            vec!["Trump", "Trump", "New York"]
        );
    }

    #[test]
    fn derived_seeds_are_stable() {
        assert_eq!(derive_seed(1, &["a"]), derive_seed(1, &["a"]));
        assert_ne!(derive_seed(1, &["a"]), derive_seed(2, &["a"]));
        assert_ne!(derive_seed(1, &["ab", "c"]), derive_seed(1, &["a", "bc"]));
    }
}
