//! Seeded generator of MSParS-like samples.
//!
//! Every sample instantiates a fixed per-class logical-form shape with a
//! predicate "frame" and entities drawn from the frame's domain. Question
//! templates mention each predicate through a unique relation phrase, so a
//! question pattern determines its logical-form pattern.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Sample, SplitTag};
use crate::error::Error;
use crate::lf::{ParamAnnotation, ParamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    SingleRelation,
    Aggregation,
    Yesno,
    Cvt,
    MultiTurnEntity,
    MultiTurnAnswer,
    Comparative,
    Superlative,
    MultiConstraint,
}

impl Shape {
    pub const ALL: [Shape; 9] = [
        Shape::SingleRelation,
        Shape::Aggregation,
        Shape::Yesno,
        Shape::Cvt,
        Shape::MultiTurnEntity,
        Shape::MultiTurnAnswer,
        Shape::Comparative,
        Shape::Superlative,
        Shape::MultiConstraint,
    ];

    /// The six table shapes plus the comparative and superlative variants.
    pub const DEFAULT: [Shape; 8] = [
        Shape::SingleRelation,
        Shape::Aggregation,
        Shape::Yesno,
        Shape::Cvt,
        Shape::MultiTurnEntity,
        Shape::MultiTurnAnswer,
        Shape::Comparative,
        Shape::Superlative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::SingleRelation => "single-relation",
            Shape::Aggregation => "aggregation",
            Shape::Yesno => "yesno",
            Shape::Cvt => "cvt",
            Shape::MultiTurnEntity => "multi-turn-entity",
            Shape::MultiTurnAnswer => "multi-turn-answer",
            Shape::Comparative => "comparative",
            Shape::Superlative => "superlative",
            Shape::MultiConstraint => "multi-constraint",
        }
    }

    fn form(self) -> &'static str {
        match self {
            Shape::SingleRelation => "( lambda ?x ( {P1} {E1} ?x ) )",
            Shape::Aggregation => "count ( lambda ?x ( {P1} {E1} ?x ) )",
            Shape::Yesno => "( {P1} {E1} {E2} )",
            Shape::Cvt => "( lambda ?x exist ?y ( and ( {P1} {E1} ?y ) ( {P2} ?y {E2} ) ( {P3} ?y ?x ) ) )",
            Shape::MultiTurnEntity => "( lambda ?x ( {P1} {E1} ?x ) ) ||| ( lambda ?x ( {P2} {E1} ?x ) )",
            Shape::MultiTurnAnswer => {
                "( lambda ?x ( {P1} {E1} ?x ) ) ||| ( lambda ?x exist ?y ( and ( {P1} {E1} ?y ) ( {P2} ?y ?x ) ) )"
            }
            Shape::Comparative => "( argmore ( lambda ?x ( {P1} {E1} ?x ) ) {P2} {V} )",
            Shape::Superlative => "( argmax ( lambda ?x ( {P1} {E1} ?x ) ) {P2} {V} )",
            Shape::MultiConstraint => "( lambda ?x ( and ( isa ?x {T} ) ( {P1} {E1} ?x ) ) )",
        }
    }

    /// Question templates. For yesno the template is chosen by predicate,
    /// which fixes the entity order per predicate.
    fn questions(self) -> &'static [&'static str] {
        match self {
            Shape::SingleRelation => &[
                "what is the {p1} of {e1}",
                "tell me the {p1} for {e1}",
                "what is {p1} for {e1}",
            ],
            Shape::Aggregation => &["how many {p1} does {e1} have", "count the {p1} of {e1}"],
            Shape::Yesno => &["does {e1} have {e2} as {p1}", "is {e2} the {p1} of {e1}"],
            Shape::Cvt => &[
                "what is the {p3} where {e1} has {p1} and {p2} is {e2}",
                "find the {p3} given {e1} with {p1} and {e2} as {p2}",
            ],
            Shape::MultiTurnEntity => &[
                "what is the {p1} of {e1} ||| and what is its {p2}",
                "tell me the {p1} of {e1} ||| also its {p2}",
            ],
            Shape::MultiTurnAnswer => &[
                "which {p1} does {e1} have ||| what is the {p2} of that one",
                "name the {p1} of {e1} ||| then give the {p2} of that answer",
            ],
            Shape::Comparative => &[
                "which {p1} of {e1} has {p2} more than {v}",
                "among the {p1} of {e1} which exceed {v} in {p2}",
            ],
            Shape::Superlative => &[
                "which {p1} of {e1} ranks number {v} by {p2}",
                "among the {p1} of {e1} find the top {v} by {p2}",
            ],
            Shape::MultiConstraint => &["which {t} is the {p1} of {e1}", "name the {t} that is {p1} of {e1}"],
        }
    }

    fn predicate_count(self) -> usize {
        match self {
            Shape::Cvt => 3,
            Shape::MultiTurnEntity | Shape::MultiTurnAnswer | Shape::Comparative | Shape::Superlative => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sketch shape `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub shapes: Vec<Shape>,
    pub entity_vocab: usize,
    pub predicate_vocab: usize,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            shapes: Shape::DEFAULT.to_vec(),
            entity_vocab: 200,
            predicate_vocab: 40,
            per_class: 100,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.shapes.is_empty() || self.entity_vocab == 0 || self.predicate_vocab == 0 || self.per_class == 0 {
            return Err(Error::Config("generator sizes must be at least 1".into()));
        }
        Ok(())
    }
}

const DOMAINS: [(&str, &str); 12] = [
    ("people", "person"),
    ("book", "edition"),
    ("film", "film"),
    ("music", "album"),
    ("sports", "team"),
    ("location", "city"),
    ("organization", "company"),
    ("education", "university"),
    ("medicine", "drug"),
    ("computer", "software"),
    ("food", "dish"),
    ("aviation", "airport"),
];

const NAMED_RELATIONS: [(&str, &str); 4] = [
    ("date_of_birth", "birth date"),
    ("number_of_pages", "number of pages"),
    ("place_of_birth", "birth place"),
    ("publication_date", "publication date"),
];

const MODIFIERS: [&str; 20] = [
    "release",
    "founding",
    "opening",
    "closing",
    "production",
    "award",
    "launch",
    "record",
    "debut",
    "final",
    "origin",
    "official",
    "primary",
    "annual",
    "current",
    "former",
    "total",
    "average",
    "main",
    "original",
];

const NOUNS: [&str; 15] = [
    "date", "place", "year", "count", "name", "country", "city", "language", "budget", "genre", "owner", "size",
    "price", "rating", "length",
];

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "dr",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "k", "s"];

struct Predicate {
    name: String,
    phrase: Vec<String>,
    domain: usize,
}

struct Inventory {
    predicates: Vec<Predicate>,
    domain_types: Vec<&'static str>,
    entities: Vec<Vec<String>>,
    entities_by_domain: Vec<Vec<usize>>,
}

fn template_words() -> HashSet<String> {
    let mut words = HashSet::new();
    for shape in Shape::ALL {
        for q in shape.questions() {
            words.extend(q.split_whitespace().map(str::to_string));
        }
    }
    for (d, t) in DOMAINS {
        words.insert(d.to_string());
        words.insert(t.to_string());
    }
    for (_, phrase) in NAMED_RELATIONS {
        words.extend(phrase.split_whitespace().map(str::to_string));
    }
    words.extend(MODIFIERS.iter().chain(NOUNS.iter()).map(|w| w.to_string()));
    words
}

fn build_inventory(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Inventory {
    let n_domains = DOMAINS.len().min(cfg.predicate_vocab.div_ceil(4)).max(1);

    let mut relations: Vec<(String, String)> = NAMED_RELATIONS
        .iter()
        .map(|(r, p)| (r.to_string(), p.to_string()))
        .collect();
    let mut combos: Vec<(String, String)> = MODIFIERS
        .iter()
        .flat_map(|m| NOUNS.iter().map(move |n| (format!("{m}_{n}"), format!("{m} {n}"))))
        .collect();
    combos.shuffle(rng);
    let taken: HashSet<String> = relations.iter().map(|(_, p)| p.clone()).collect();
    relations.extend(combos.into_iter().filter(|(_, p)| !taken.contains(p)));
    let mut extra = 0;
    while relations.len() < cfg.predicate_vocab {
        extra += 1;
        relations.push((format!("attribute{extra}"), format!("attribute{extra}")));
    }

    let predicates = (0..cfg.predicate_vocab)
        .map(|k| {
            let domain = k % n_domains;
            let (d, t) = DOMAINS[domain];
            let (rel, phrase) = &relations[k];
            Predicate {
                name: format!("mso:{d}.{t}.{rel}"),
                phrase: phrase.split_whitespace().map(str::to_string).collect(),
                domain,
            }
        })
        .collect();

    let reserved = template_words();
    let mut used_words: BTreeSet<String> = BTreeSet::new();
    let mut surfaces: HashSet<String> = HashSet::new();
    let mut entities = Vec::with_capacity(cfg.entity_vocab);
    let new_word = |rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>| loop {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        if !reserved.contains(&w) && !used.contains(&w) {
            used.insert(w.clone());
            return w;
        }
    };
    while entities.len() < cfg.entity_vocab {
        let len = match rng.gen_range(0..10) {
            0..=2 => 1,
            3..=7 => 2,
            _ => 3,
        };
        let words: Vec<String> = (0..len).map(|_| new_word(rng, &mut used_words)).collect();
        if surfaces.insert(words.join("_")) {
            entities.push(words);
        }
    }
    let mut entities_by_domain = vec![Vec::new(); n_domains];
    for j in 0..entities.len() {
        entities_by_domain[j % n_domains].push(j);
    }

    Inventory {
        predicates,
        domain_types: DOMAINS[..n_domains].iter().map(|(_, t)| *t).collect(),
        entities,
        entities_by_domain,
    }
}

fn build_frames(shape: Shape, inv: &Inventory, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = inv.predicates.len();
    let k = shape.predicate_count();
    if k == 1 {
        return (0..n).map(|p| vec![p]).collect();
    }
    let n_domains = inv.entities_by_domain.len();
    let mut frames: Vec<Vec<usize>> = Vec::with_capacity(n);
    // one ordering per predicate set, so patterns differ by more than order
    let mut seen: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for f in 0..n {
        let domain = f % n_domains;
        let pool: Vec<usize> = (0..n).filter(|p| inv.predicates[*p].domain == domain).collect();
        let pool = if pool.len() >= k { pool } else { (0..n).collect() };
        if pool.len() < k {
            // fewer predicates than slots: reuse with repetition
            frames.push((0..k).map(|i| pool[i % pool.len()]).collect());
            continue;
        }
        let mut frame: Vec<usize> = Vec::new();
        for _attempt in 0..16 {
            frame = pool.choose_multiple(rng, k).copied().collect();
            let mut key = frame.clone();
            key.sort_unstable();
            if let std::collections::hash_map::Entry::Vacant(slot) = seen.entry(key) {
                slot.insert(frame.clone());
                break;
            }
        }
        let mut key = frame.clone();
        key.sort_unstable();
        frames.push(seen[&key].clone());
    }
    frames
}

fn pick_entity(inv: &Inventory, domain: usize, avoid: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
    let pool = &inv.entities_by_domain[domain];
    let candidates: Vec<usize> = pool.iter().copied().filter(|e| Some(*e) != avoid).collect();
    if let Some(e) = candidates.choose(rng) {
        return *e;
    }
    let all: Vec<usize> = (0..inv.entities.len()).filter(|e| Some(*e) != avoid).collect();
    all.choose(rng).copied().unwrap_or(0)
}

fn instantiate(shape: Shape, frame: &[usize], inv: &Inventory, rng: &mut ChaCha8Rng) -> Sample {
    let preds: Vec<&Predicate> = frame.iter().map(|p| &inv.predicates[*p]).collect();
    let domain = preds[0].domain;
    let e1 = pick_entity(inv, domain, None, rng);
    let e2_domain = preds.get(1).map_or(domain, |p| p.domain);
    let e2 = pick_entity(inv, e2_domain, Some(e1), rng);
    let value = match shape {
        Shape::Superlative => rng.gen_range(1..=10).to_string(),
        _ => rng.gen_range(10..=2000).to_string(),
    };
    let type_word = inv.domain_types[domain].to_string();

    let templates = shape.questions();
    let template = match shape {
        Shape::Yesno => templates[frame[0] % templates.len()],
        _ => templates[rng.gen_range(0..templates.len())],
    };

    let mut tokens: Vec<String> = Vec::new();
    let mut params: Vec<ParamAnnotation> = Vec::new();
    let mut push_param = |tokens: &mut Vec<String>, words: &[String], kind: ParamKind| {
        let start = tokens.len();
        tokens.extend_from_slice(words);
        params.push(ParamAnnotation::new(words.join("_"), kind, start, tokens.len() - 1));
    };
    for piece in template.split_whitespace() {
        match piece {
            "{p1}" | "{p2}" | "{p3}" => {
                let i = (piece.as_bytes()[2] - b'1') as usize;
                tokens.extend_from_slice(&preds[i].phrase);
            }
            "{e1}" => push_param(&mut tokens, &inv.entities[e1], ParamKind::Entity),
            "{e2}" => push_param(&mut tokens, &inv.entities[e2], ParamKind::Entity),
            "{v}" => push_param(&mut tokens, std::slice::from_ref(&value), ParamKind::Value),
            "{t}" => push_param(&mut tokens, std::slice::from_ref(&type_word), ParamKind::Type),
            word => tokens.push(word.to_string()),
        }
    }

    let mut form = shape.form().to_string();
    for (i, p) in preds.iter().enumerate() {
        form = form.replace(&format!("{{P{}}}", i + 1), &p.name);
    }
    form = form
        .replace("{E1}", &inv.entities[e1].join("_"))
        .replace("{E2}", &inv.entities[e2].join("_"))
        .replace("{V}", &value)
        .replace("{T}", &type_word);

    Sample::new(tokens.join(" "), form, params, shape.name()).expect("generator emits well-formed samples")
}

/// Generates `per_class` samples for each configured shape. A pure function
/// of `cfg`, seed included.
pub fn generate_synthetic(cfg: &GenConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cfg = GenConfig {
        entity_vocab: cfg.entity_vocab.max(1),
        predicate_vocab: cfg.predicate_vocab.max(1),
        ..cfg.clone()
    };
    let inv = build_inventory(&cfg, &mut rng);
    let mut samples = Vec::with_capacity(cfg.shapes.len() * cfg.per_class);
    for &shape in &cfg.shapes {
        let frames = build_frames(shape, &inv, &mut rng);
        for i in 0..cfg.per_class {
            samples.push(instantiate(shape, &frames[i % frames.len()], &inv, &mut rng));
        }
    }
    Corpus::new(samples, SplitTag::Train)
}
