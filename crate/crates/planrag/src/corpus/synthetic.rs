//! A generated micro-world for offline, end-to-end runs.
//!
//! Each entity gets a set of aspect facts. A generic document carries
//! the entity's name but only the first `g` fact sentences; every fact
//! also lives in its own aspect document that is findable through a
//! unique keyword and never through the bare entity name. Searching by
//! name therefore surfaces an incomplete picture, which is exactly the
//! regime where plan-guided question queries pay off: they reach the
//! aspect documents the name query cannot.
//!
//! The world also scripts the offline backends. The generator writes
//! one sentence per aspect, copying the registered fact sentence when
//! it is present in the prompt's evidence and fabricating a variant
//! (carrying no fact identifier) when it is not. QA matches registered
//! fact strings inside passages; entailment checks planted fact
//! identifiers.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backends::offline::{FactIdEntailment, RegistryQa};
use crate::backends::{
    check_prompt, BackendError, Backends, SamplingParams, TextGenerator, DEFAULT_MAX_PROMPT_CHARS,
};
use crate::pipeline::prompts::QA_PAIRS_HEADER;
use crate::pipeline::{EntityKind, EntityQuery};

use super::{CorpusError, Document, DocumentIndex, LocalSearch};

const FIRST_NAMES: &[&str] = &[
    "Avery", "Briar", "Cedric", "Dahlia", "Emeric", "Farrah", "Gideon", "Halcyon", "Imogen",
    "Jasper", "Kestrel", "Lenora", "Milo", "Nadia", "Orson", "Petra",
];

const LAST_NAMES: &[&str] = &[
    "Stonebrook", "Quill", "Marlowe", "Thistlewood", "Vance", "Winslet", "Ashcombe", "Blackmere",
    "Crane", "Dunmore", "Eastgate", "Fenwick", "Greyson", "Hollis", "Ironwood", "Juniper",
];

const DISAMBIGUATORS: &[&str] = &["historian", "naturalist", "engineer"];

const ASPECT_NAMES: &[&str] = &["birth", "education", "career", "awards", "works", "legacy"];

const TOWNS: &[&str] = &[
    "Greywick", "Morning Hollow", "Eastmere", "Collier Bay", "Redfern", "Quellmar",
];
const FIELDS: &[&str] = &[
    "comparative botany", "hydrology", "medieval archives", "acoustics", "cartography",
    "tropical medicine",
];
const OCCUPATIONS: &[&str] = &[
    "field researcher", "archivist", "lecturer", "editor", "curator", "surveyor",
];
const AWARDS: &[&str] = &[
    "Meridian Prize", "Lantern Medal", "Harbor Fellowship", "Cobalt Grant",
];
const WORKS: &[&str] = &["River Atlas", "Quiet Meridian", "The Paper Orchard", "Salt and Signal"];
const ORGS: &[&str] = &["Northfield Institute", "Calder Library", "Atlas Society"];

// Markers identifying which prompt template produced a prompt. These
// are phrases from the built-in templates; the scripted generator only
// understands the built-in prompt shapes.
const OUTLINE_MARKER: &str = "write a list of instructions for how to provide an answer";
const QUESTIONS_MARKER: &str = "what are the questions you would want answered";
const SEARCH_GEN_MARKER: &str = "using only facts in the given text.";
const DIRECT_PREFIX: &str = "Write a fluent, clear paragraph about ";

/// One planted fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aspect {
    pub name: String,
    /// Unique token that retrieves this aspect's document.
    pub keyword: String,
    /// Unique token marking this fact wherever it is planted.
    pub fact_id: String,
    pub fact_sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldEntity {
    pub query: EntityQuery,
    pub slug: String,
    pub aspects: Vec<Aspect>,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    seed: u64,
    facts_per_entity: usize,
    generic_coverage: usize,
    entities: Vec<WorldEntity>,
    index: Arc<DocumentIndex>,
}

impl PartialEq for SyntheticWorld {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.facts_per_entity == other.facts_per_entity
            && self.generic_coverage == other.generic_coverage
            && self.entities == other.entities
            && *self.index == *other.index
    }
}

fn slugify(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn fact_sentence(rng: &mut ChaCha8Rng, aspect: &str, fact_id: &str) -> String {
    let year = 1890 + rng.gen_range(0..90);
    match aspect {
        "birth" => format!(
            "The subject was born in {year} in the town of {} ({fact_id}).",
            pick(rng, TOWNS)
        ),
        "education" => format!(
            "The subject studied {} at the {} ({fact_id}).",
            pick(rng, FIELDS),
            pick(rng, ORGS)
        ),
        "career" => format!(
            "The subject worked for three decades as a {} ({fact_id}).",
            pick(rng, OCCUPATIONS)
        ),
        "awards" => format!(
            "The subject received the {} in {year} ({fact_id}).",
            pick(rng, AWARDS)
        ),
        "works" => format!(
            "The subject's most cited work is titled {} ({fact_id}).",
            pick(rng, WORKS)
        ),
        "legacy" => format!(
            "The subject's papers are preserved by the {} ({fact_id}).",
            pick(rng, ORGS)
        ),
        other => format!("The subject's {other} milestone occurred in {year} ({fact_id})."),
    }
}

fn aspect_name(i: usize) -> String {
    ASPECT_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("topic{}", i + 1))
}

/// Builds a synthetic world: `n_entities` entities with
/// `facts_per_entity` planted facts each, of which the first
/// `generic_coverage` also appear in the entity's generic document.
pub fn build_synthetic_world(
    seed: u64,
    n_entities: usize,
    facts_per_entity: usize,
    generic_coverage: usize,
) -> Result<SyntheticWorld, CorpusError> {
    if n_entities == 0 {
        return Err(CorpusError::InvalidParams("n_entities must be >= 1".into()));
    }
    if facts_per_entity == 0 {
        return Err(CorpusError::InvalidParams(
            "facts_per_entity must be >= 1".into(),
        ));
    }
    if !(1..facts_per_entity).contains(&generic_coverage) {
        return Err(CorpusError::InvalidParams(format!(
            "generic_coverage must satisfy 1 <= g < facts_per_entity (got g={generic_coverage}, F={facts_per_entity})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut firsts: Vec<&str> = FIRST_NAMES.to_vec();
    let mut lasts: Vec<&str> = LAST_NAMES.to_vec();
    firsts.shuffle(&mut rng);
    lasts.shuffle(&mut rng);

    let mut entities = Vec::with_capacity(n_entities);
    let mut documents = Vec::new();

    for i in 0..n_entities {
        let first = firsts[i % firsts.len()];
        let last = lasts[i % lasts.len()];
        let name = if i < firsts.len() {
            format!("{first} {last}")
        } else {
            format!("{first} {last} {}", i / firsts.len() + 2)
        };
        let mut query = EntityQuery::new(&name, EntityKind::EntityBio);
        if i % 3 == 2 {
            query = query.with_disambiguator(DISAMBIGUATORS[(i / 3) % DISAMBIGUATORS.len()]);
        }
        let slug = slugify(&name);

        let aspects: Vec<Aspect> = (0..facts_per_entity)
            .map(|a| {
                let aspect = aspect_name(a);
                let fact_id = format!("fact-{slug}-{aspect}");
                let sentence = fact_sentence(&mut rng, &aspect, &fact_id);
                Aspect {
                    keyword: format!("kw-{slug}-{aspect}"),
                    fact_id,
                    fact_sentence: sentence,
                    name: aspect,
                }
            })
            .collect();

        let generic_body = {
            let mut body = format!("General profile of {}.", query.rendered());
            for aspect in &aspects[..generic_coverage] {
                body.push(' ');
                body.push_str(&aspect.fact_sentence);
            }
            body
        };
        documents.push(Document {
            id: format!("gen-{slug}"),
            title: query.rendered(),
            body: generic_body,
            url: format!("https://example.org/{slug}/profile"),
        });
        for aspect in &aspects {
            documents.push(Document {
                id: format!("asp-{slug}-{}", aspect.name),
                title: format!("Research notes {}", aspect.keyword),
                body: format!("{} Keywords: {}.", aspect.fact_sentence, aspect.keyword),
                url: format!("https://example.org/{slug}/{}", aspect.name),
            });
        }

        entities.push(WorldEntity {
            query,
            slug,
            aspects,
        });
    }

    // Aspect docs stay intact under snippet truncation regardless of F.
    let index = DocumentIndex::build(documents)?.with_snippet_words(400);

    Ok(SyntheticWorld {
        seed,
        facts_per_entity,
        generic_coverage,
        entities,
        index: Arc::new(index),
    })
}

impl SyntheticWorld {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn facts_per_entity(&self) -> usize {
        self.facts_per_entity
    }

    pub fn generic_coverage(&self) -> usize {
        self.generic_coverage
    }

    pub fn entities(&self) -> &[WorldEntity] {
        &self.entities
    }

    pub fn entity_queries(&self) -> Vec<EntityQuery> {
        self.entities.iter().map(|e| e.query.clone()).collect()
    }

    pub fn index(&self) -> Arc<DocumentIndex> {
        self.index.clone()
    }

    /// The scripted question wording for one aspect.
    pub fn question_for(aspect: &Aspect) -> String {
        format!("What supports {}?", aspect.keyword)
    }

    /// The deterministic fabricated sentence the generator emits when an
    /// aspect's fact is missing from the prompt evidence.
    pub fn fabricated_sentence(entity: &WorldEntity, aspect: &Aspect, seed: u64) -> String {
        format!(
            "{} is associated with {} detail-{seed}.",
            entity.query.rendered(),
            aspect.name
        )
    }

    /// Offline backend bundle scripted by this world.
    pub fn backends(&self) -> Backends {
        let mut qa = RegistryQa::new();
        for entity in &self.entities {
            for aspect in &entity.aspects {
                qa.register(&aspect.keyword, &aspect.fact_sentence);
            }
        }
        Backends {
            generator: Arc::new(WorldGenerator::new(self)),
            search: Arc::new(LocalSearch::new(self.index.clone())),
            qa: Arc::new(qa),
            entail: Arc::new(FactIdEntailment::default()),
        }
    }
}

/// Scripted generator over the world's fact tables. A pure function of
/// `(prompt, params)`: the prompt determines the stage and entity, the
/// sampling seed only flavors fabricated sentences.
pub struct WorldGenerator {
    /// Entities sorted by rendered-name length, longest first, so a name
    /// that happens to prefix another cannot be matched early.
    entities: Vec<WorldEntity>,
}

impl WorldGenerator {
    fn new(world: &SyntheticWorld) -> Self {
        let mut entities = world.entities.clone();
        entities.sort_by_key(|e| std::cmp::Reverse(e.query.rendered().len()));
        WorldGenerator { entities }
    }

    fn detect_entity(&self, prompt: &str) -> Option<&WorldEntity> {
        self.entities
            .iter()
            .find(|e| prompt.contains(&format!("about {}", e.query.rendered())))
    }

    fn write_from_evidence(&self, entity: &WorldEntity, prompt: &str, seed: u64) -> String {
        entity
            .aspects
            .iter()
            .map(|aspect| {
                if prompt.contains(&aspect.fact_id) {
                    aspect.fact_sentence.clone()
                } else {
                    SyntheticWorld::fabricated_sentence(entity, aspect, seed)
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn write_outline(&self, entity: &WorldEntity) -> String {
        entity
            .aspects
            .iter()
            .enumerate()
            .map(|(i, aspect)| {
                format!(
                    "Paragraph {}: Cover the {} of the subject; cite {}.",
                    i + 1,
                    aspect.name,
                    aspect.keyword
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn write_questions(&self, entity: &WorldEntity, prompt: &str) -> String {
        // With an outline, the paragraph description names its keyword.
        let cited: Vec<&Aspect> = entity
            .aspects
            .iter()
            .filter(|a| prompt.contains(&a.keyword))
            .collect();
        let targets: Vec<&Aspect> = if cited.is_empty() {
            // No outline: ask only about aspects visible in the evidence.
            entity
                .aspects
                .iter()
                .filter(|a| prompt.contains(&a.fact_id))
                .collect()
        } else {
            cited
        };
        targets
            .iter()
            .map(|a| SyntheticWorld::question_for(a))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl TextGenerator for WorldGenerator {
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<String, BackendError> {
        check_prompt(prompt, DEFAULT_MAX_PROMPT_CHARS)?;
        params.validate()?;
        let entity = self.detect_entity(prompt).ok_or_else(|| {
            BackendError::Unavailable("scripted generator: prompt names no known entity".into())
        })?;

        let output = if prompt.contains(QA_PAIRS_HEADER) || prompt.contains(SEARCH_GEN_MARKER) {
            self.write_from_evidence(entity, prompt, params.seed)
        } else if prompt.contains(OUTLINE_MARKER) {
            self.write_outline(entity)
        } else if prompt.contains(QUESTIONS_MARKER) {
            self.write_questions(entity, prompt)
        } else if prompt.starts_with(DIRECT_PREFIX) {
            // No evidence in context: every aspect gets fabricated.
            entity
                .aspects
                .iter()
                .map(|a| SyntheticWorld::fabricated_sentence(entity, a, params.seed))
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            return Err(BackendError::Unavailable(
                "scripted generator: unrecognized prompt shape".into(),
            ));
        };
        if output.is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(output)
    }
}
