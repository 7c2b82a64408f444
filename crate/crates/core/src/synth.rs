//! Synthetic multilingual world.
//!
//! Sentences are bags of concept ids drawn from a Zipf distribution. Every
//! language renders a concept through its own randomly generated word, and no
//! word string is shared between languages, so translations are related only
//! through the planted concept identity and never through surface features.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::{Passage, Qrels, Query, RetrievalTask};
use crate::lang::Lang;
use crate::rng::{self, streams, StreamRng};
use crate::trainer::{IrPair, MonoCorpus, ParallelCorpus};

const CONSONANTS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "q", "r", "s", "t", "v", "w", "x",
    "z", "ch", "sh", "th", "kr", "tr", "pl", "st", "gn",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "y", "ai", "ou", "ei", "ua"];
const SYLLABLES_PER_LANGUAGE: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub num_concepts: usize,
    pub num_languages: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of tokens in a rendered sentence that are language-specific fillers.
    pub noise_rate: f64,
    pub zipf_exponent: f64,
    pub fillers_per_language: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            num_concepts: 500,
            num_languages: 8,
            min_len: 5,
            max_len: 12,
            noise_rate: 0.1,
            zipf_exponent: 1.0,
            fillers_per_language: 50,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_concepts == 0 || self.num_languages == 0 {
            return Err(Error::invalid("world needs at least one concept and one language"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid("sentence length range must satisfy 1 <= min <= max"));
        }
        if self.num_concepts < self.max_len {
            return Err(Error::invalid("num_concepts must be >= the maximum sentence length"));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::invalid("noise_rate must lie in [0, 1)"));
        }
        if !(self.zipf_exponent >= 0.0) || !self.zipf_exponent.is_finite() {
            return Err(Error::invalid("zipf exponent must be finite and >= 0"));
        }
        if self.fillers_per_language == 0 && self.noise_rate > 0.0 {
            return Err(Error::invalid("noise requires at least one filler word per language"));
        }
        Ok(())
    }

    pub fn languages(&self) -> Vec<Lang> {
        (0..self.num_languages as u16).map(Lang).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageLexicon {
    pub lang: Lang,
    /// Word for each concept id.
    pub surface: Vec<String>,
    pub fillers: Vec<String>,
}

/// An ordered bag of concept ids; the language-agnostic identity of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SemanticSentence {
    pub concepts: Vec<u32>,
}

impl SemanticSentence {
    pub fn concept_set(&self) -> BTreeSet<u32> {
        self.concepts.iter().copied().collect()
    }

    /// Sorted concept multiset.
    pub fn multiset(&self) -> Vec<u32> {
        let mut c = self.concepts.clone();
        c.sort_unstable();
        c
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub lexicons: Vec<LanguageLexicon>,
    /// Probability of each concept id.
    pub concept_probs: Vec<f64>,
    cdf: Vec<f64>,
}

fn make_word<R: Rng>(syllables: &[String], rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| syllables[rng.gen_range(0..syllables.len())].as_str()).collect()
}

/// Builds lexicons for every language. Deterministic in `spec.seed`.
pub fn build_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, streams::WORLD);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut lexicons = Vec::with_capacity(spec.num_languages);
    for l in 0..spec.num_languages {
        let mut inventory: BTreeSet<String> = BTreeSet::new();
        while inventory.len() < SYLLABLES_PER_LANGUAGE {
            let c = CONSONANTS[rng.gen_range(0..CONSONANTS.len())];
            let v = VOWELS[rng.gen_range(0..VOWELS.len())];
            let coda = if rng.gen_bool(0.3) { CONSONANTS[rng.gen_range(0..20)] } else { "" };
            inventory.insert(format!("{c}{v}{coda}"));
        }
        let syllables: Vec<String> = inventory.into_iter().collect();
        let mut fresh = |rng: &mut StreamRng| loop {
            let w = make_word(&syllables, rng);
            if taken.insert(w.clone()) {
                break w;
            }
        };
        let surface = (0..spec.num_concepts).map(|_| fresh(&mut rng)).collect();
        let fillers = (0..spec.fillers_per_language).map(|_| fresh(&mut rng)).collect();
        lexicons.push(LanguageLexicon { lang: Lang(l as u16), surface, fillers });
    }
    let weights: Vec<f64> = (0..spec.num_concepts)
        .map(|c| libm::pow((c + 1) as f64, -spec.zipf_exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    let concept_probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut acc = 0.0;
    let cdf = concept_probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    Ok(World { spec: spec.clone(), lexicons, concept_probs, cdf })
}

impl World {
    pub fn lexicon(&self, lang: Lang) -> Result<&LanguageLexicon> {
        self.lexicons.get(lang.0 as usize).ok_or(Error::UnknownLanguage(lang))
    }

    pub fn languages(&self) -> Vec<Lang> {
        self.spec.languages()
    }

    pub fn sample_concept<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u32
    }

    fn sample_len<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(self.spec.min_len..=self.spec.max_len)
    }

    /// Concepts drawn i.i.d. from the Zipf distribution.
    pub fn sample_sentence<R: Rng>(&self, rng: &mut R) -> SemanticSentence {
        let n = self.sample_len(rng);
        SemanticSentence { concepts: (0..n).map(|_| self.sample_concept(rng)).collect() }
    }

    /// Zipf draws without repeated concepts.
    pub fn sample_distinct_sentence<R: Rng>(&self, rng: &mut R) -> SemanticSentence {
        let n = self.sample_len(rng);
        let mut seen = BTreeSet::new();
        let mut concepts = Vec::with_capacity(n);
        while concepts.len() < n {
            let c = self.sample_concept(rng);
            if seen.insert(c) {
                concepts.push(c);
            }
        }
        SemanticSentence { concepts }
    }

    /// Renders concept words in order, with filler words inserted at random
    /// positions so that fillers make up `noise_rate` of the tokens.
    pub fn render<R: Rng>(&self, s: &SemanticSentence, lang: Lang, rng: &mut R) -> Result<String> {
        let lex = self.lexicon(lang)?;
        let mut words: Vec<&str> = s.concepts.iter().map(|&c| lex.surface[c as usize].as_str()).collect();
        let nr = self.spec.noise_rate;
        let fillers = libm::round(words.len() as f64 * nr / (1.0 - nr)) as usize;
        for _ in 0..fillers {
            let f = lex.fillers[rng.gen_range(0..lex.fillers.len())].as_str();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, f);
        }
        Ok(words.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedParallel {
    pub corpus: ParallelCorpus,
    pub sentences: Vec<SemanticSentence>,
}

/// `n_pairs` sentences rendered in both languages with independent filler noise.
pub fn make_parallel_corpus<R: Rng>(
    world: &World,
    lang_a: Lang,
    lang_b: Lang,
    n_pairs: usize,
    rng: &mut R,
) -> Result<GeneratedParallel> {
    world.lexicon(lang_a)?;
    world.lexicon(lang_b)?;
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut sentences = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let s = world.sample_sentence(rng);
        pairs.push((world.render(&s, lang_a, rng)?, world.render(&s, lang_b, rng)?));
        sentences.push(s);
    }
    Ok(GeneratedParallel { corpus: ParallelCorpus { lang_a, lang_b, pairs }, sentences })
}

pub fn make_monolingual_corpus<R: Rng>(world: &World, lang: Lang, n: usize, rng: &mut R) -> Result<MonoCorpus> {
    let sentences = (0..n)
        .map(|_| {
            let s = world.sample_sentence(rng);
            world.render(&s, lang, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonoCorpus { lang, sentences })
}

/// Training pairs for the retrieval loss: a gold passage with distinct
/// concepts and a query keeping half of them, both rendered in `lang`.
pub fn make_ir_pairs<R: Rng>(world: &World, lang: Lang, n: usize, rng: &mut R) -> Result<Vec<IrPair>> {
    world.lexicon(lang)?;
    (0..n)
        .map(|_| {
            let gold = world.sample_distinct_sentence(rng);
            let q = query_of(&gold, rng);
            Ok(IrPair { query: world.render(&q, lang, rng)?, passage: world.render(&gold, lang, rng)? })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GeneratedIrTask {
    pub task: RetrievalTask,
    /// Concepts of each corpus passage, aligned with `task.corpus()`.
    pub passage_concepts: Vec<SemanticSentence>,
    /// Concepts of each query, aligned with `task.queries()`.
    pub query_concepts: Vec<SemanticSentence>,
}

fn is_subset(small: &BTreeSet<u32>, big: &SemanticSentence) -> bool {
    small.iter().all(|c| big.concepts.contains(c))
}

fn query_of<R: Rng>(gold: &SemanticSentence, rng: &mut R) -> SemanticSentence {
    let keep = gold.concepts.len().div_ceil(2);
    let mut pos: Vec<usize> = (0..gold.concepts.len()).collect();
    pos.shuffle(rng);
    let mut pos = pos[..keep].to_vec();
    pos.sort_unstable();
    SemanticSentence { concepts: pos.iter().map(|&p| gold.concepts[p]).collect() }
}

const MAX_REJECTIONS: usize = 10_000;

/// Retrieval task in one language.
///
/// Gold passages use distinct concepts; each query keeps `⌈len/2⌉` of its gold
/// passage's concepts. Each distractor copies `⌊overlap·len⌋` concepts of a
/// random gold passage and draws the rest from the Zipf distribution. With
/// `overlap == 0` no passage other than the gold contains a query's full
/// concept set.
pub fn make_ir_task<R: Rng>(
    world: &World,
    lang: Lang,
    n_queries: usize,
    corpus_size: usize,
    distractor_overlap: f64,
    rng: &mut R,
) -> Result<GeneratedIrTask> {
    world.lexicon(lang)?;
    if !(0.0..1.0).contains(&distractor_overlap) {
        return Err(Error::invalid(format!("distractor overlap must lie in [0, 1), got {distractor_overlap}")));
    }
    if n_queries == 0 || corpus_size < n_queries {
        return Err(Error::invalid("need 1 <= n_queries <= corpus_size"));
    }
    let strict = distractor_overlap == 0.0;
    let mut golds: Vec<SemanticSentence> = Vec::with_capacity(n_queries);
    let mut queries: Vec<SemanticSentence> = Vec::with_capacity(n_queries);
    let mut query_sets: Vec<BTreeSet<u32>> = Vec::with_capacity(n_queries);
    for _ in 0..n_queries {
        let mut tries = 0;
        loop {
            tries += 1;
            let g = world.sample_distinct_sentence(rng);
            let q = query_of(&g, rng);
            let qs = q.concept_set();
            let clash = strict
                && (golds.iter().any(|o| is_subset(&qs, o))
                    || query_sets.iter().any(|s| is_subset(s, &g)));
            if !clash || tries > MAX_REJECTIONS {
                if clash {
                    return Err(Error::invalid("could not separate gold passages; world too small"));
                }
                golds.push(g);
                queries.push(q);
                query_sets.push(qs);
                break;
            }
        }
    }
    let mut distractors = Vec::with_capacity(corpus_size - n_queries);
    while distractors.len() < corpus_size - n_queries {
        let mut tries = 0;
        let d = loop {
            tries += 1;
            let anchor = &golds[rng.gen_range(0..golds.len())];
            let len = world.sample_len(rng);
            let copy = (libm::floor(distractor_overlap * len as f64) as usize).min(anchor.concepts.len());
            let mut pos: Vec<usize> = (0..anchor.concepts.len()).collect();
            pos.shuffle(rng);
            let mut concepts: Vec<u32> = pos[..copy].iter().map(|&p| anchor.concepts[p]).collect();
            while concepts.len() < len {
                concepts.push(world.sample_concept(rng));
            }
            concepts.shuffle(rng);
            let d = SemanticSentence { concepts };
            if !strict || !query_sets.iter().any(|s| is_subset(s, &d)) {
                break d;
            }
            if tries > MAX_REJECTIONS {
                return Err(Error::invalid("could not draw a separable distractor"));
            }
        };
        distractors.push(d);
    }

    // corpus: golds and distractors shuffled together, ids assigned afterwards
    let mut entries: Vec<(Option<usize>, SemanticSentence)> = golds
        .into_iter()
        .enumerate()
        .map(|(i, g)| (Some(i), g))
        .chain(distractors.into_iter().map(|d| (None, d)))
        .collect();
    entries.shuffle(rng);
    let mut gold_pid = alloc::vec![String::new(); n_queries];
    let mut corpus = Vec::with_capacity(corpus_size);
    let mut passage_concepts = Vec::with_capacity(corpus_size);
    for (i, (gold_of, s)) in entries.into_iter().enumerate() {
        let id = format!("{lang}-p{i:06}");
        if let Some(q) = gold_of {
            gold_pid[q] = id.clone();
        }
        corpus.push(Passage { id, lang, text: world.render(&s, lang, rng)? });
        passage_concepts.push(s);
    }
    let mut qs = Vec::with_capacity(n_queries);
    let mut qrels = Qrels::new();
    for (i, q) in queries.iter().enumerate() {
        let id = format!("{lang}-q{i:06}");
        qs.push(Query { id: id.clone(), text: world.render(q, lang, rng)? });
        qrels.insert(id, core::iter::once(gold_pid[i].clone()).collect());
    }
    Ok(GeneratedIrTask { task: RetrievalTask::new(qs, corpus, qrels)?, passage_concepts, query_concepts: queries })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitextTask {
    pub lang_a: Lang,
    pub lang_b: Lang,
    pub side_a: Vec<(String, String)>,
    pub side_b: Vec<(String, String)>,
    /// `(id_a, id_b)` of planted translation pairs.
    pub gold: Vec<(String, String)>,
}

pub const DEFAULT_GOLD_FRACTION: f64 = 0.025;

/// Noise count giving the requested gold fraction `n_gold / (n_gold + n_noise)`.
pub fn noise_for_fraction(n_gold: usize, fraction: f64) -> usize {
    libm::round(n_gold as f64 * (1.0 - fraction) / fraction) as usize
}

/// `n_gold` planted translations hidden among `n_noise` unrelated sentences
/// per side; both sides shuffled independently.
pub fn make_bitext_task<R: Rng>(
    world: &World,
    lang_a: Lang,
    lang_b: Lang,
    n_gold: usize,
    n_noise: usize,
    rng: &mut R,
) -> Result<BitextTask> {
    world.lexicon(lang_a)?;
    world.lexicon(lang_b)?;
    if n_gold == 0 {
        return Err(Error::invalid("bitext task needs at least one gold pair"));
    }
    let mut a: Vec<(Option<usize>, String)> = Vec::with_capacity(n_gold + n_noise);
    let mut b: Vec<(Option<usize>, String)> = Vec::with_capacity(n_gold + n_noise);
    for g in 0..n_gold {
        let s = world.sample_sentence(rng);
        a.push((Some(g), world.render(&s, lang_a, rng)?));
        b.push((Some(g), world.render(&s, lang_b, rng)?));
    }
    for _ in 0..n_noise {
        let s = world.sample_sentence(rng);
        a.push((None, world.render(&s, lang_a, rng)?));
        let s = world.sample_sentence(rng);
        b.push((None, world.render(&s, lang_b, rng)?));
    }
    a.shuffle(rng);
    b.shuffle(rng);
    let mut ga = alloc::vec![String::new(); n_gold];
    let mut gb = alloc::vec![String::new(); n_gold];
    let side = |v: Vec<(Option<usize>, String)>, prefix: &str, slots: &mut Vec<String>| {
        v.into_iter()
            .enumerate()
            .map(|(i, (g, t))| {
                let id = format!("{prefix}{i:06}");
                if let Some(g) = g {
                    slots[g] = id.clone();
                }
                (id, t)
            })
            .collect::<Vec<_>>()
    };
    let side_a = side(a, "a", &mut ga);
    let side_b = side(b, "b", &mut gb);
    Ok(BitextTask { lang_a, lang_b, side_a, side_b, gold: ga.into_iter().zip(gb).collect() })
}
