//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! repeated keys are errors. `seed` seeds the world, the data and the trainer.

use std::fmt::Write as _;

use xlir_core::mining::Direction;
use xlir_core::trainer::{ContrastiveRouting, TowerInit};
use xlir_core::{JointLossWeights, Lang};

use crate::experiment::{ExperimentSpec, Scenario};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("{key}: cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] xlir_core::Error),
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn lang(key: &str, value: &str) -> Result<Lang, ConfigError> {
    num(key, value)
}

fn lang_list(key: &str, value: &str) -> Result<Vec<Lang>, ConfigError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| lang(key, s)).collect()
}

fn topology(key: &str, value: &str) -> Result<Vec<(Lang, Lang)>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|d| {
            let (a, b) = d.split_once('-').ok_or_else(|| ConfigError::Value {
                key: key.into(),
                value: value.into(),
                reason: "directions are written lA-lB".into(),
            })?;
            Ok((lang(key, a)?, lang(key, b)?))
        })
        .collect()
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.into() }
}

/// Sets one key on `spec`. Returns `Ok(false)` for an unknown key.
pub fn apply(spec: &mut ExperimentSpec, key: &str, value: &str) -> Result<bool, ConfigError> {
    let t = &mut spec.train;
    let w = &mut spec.world;
    match key {
        "scenario" => spec.scenario = value.parse::<Scenario>().map_err(|_| bad(key, value, "unknown scenario"))?,
        "seed" => {
            let s = num(key, value)?;
            *spec = std::mem::take(spec).with_seed(s);
        }
        "source_lang" => spec.source_lang = lang(key, value)?,
        "uncovered" => spec.uncovered = lang_list(key, value)?,
        "ir_train_pairs" => spec.ir_train_pairs = num(key, value)?,
        "parallel_pairs" => spec.parallel_pairs = num(key, value)?,
        "nonparallel_sentences" => spec.nonparallel_sentences = num(key, value)?,
        "eval_queries" => spec.eval_queries = num(key, value)?,
        "eval_corpus" => spec.eval_corpus = num(key, value)?,
        "distractor_overlap" => spec.distractor_overlap = num(key, value)?,
        "k" => spec.k = num(key, value)?,
        "bitext_lang_a" => spec.bitext_langs.0 = lang(key, value)?,
        "bitext_lang_b" => spec.bitext_langs.1 = lang(key, value)?,
        "bitext_gold" => spec.bitext_gold = num(key, value)?,
        "bitext_gold_fraction" => spec.bitext_gold_fraction = num(key, value)?,
        "mining_k" => spec.mining.k = num(key, value)?,
        "candidate_depth" => spec.mining.candidate_depth = num(key, value)?,
        "direction" => {
            spec.mining.direction = match value {
                "forward" => Direction::Forward,
                "backward" => Direction::Backward,
                "union" => Direction::Union,
                _ => return Err(bad(key, value, "expected forward, backward or union")),
            }
        }
        "num_concepts" => w.num_concepts = num(key, value)?,
        "num_languages" => w.num_languages = num(key, value)?,
        "min_len" => w.min_len = num(key, value)?,
        "max_len" => w.max_len = num(key, value)?,
        "noise_rate" => w.noise_rate = num(key, value)?,
        "zipf_exponent" => w.zipf_exponent = num(key, value)?,
        "fillers_per_language" => w.fillers_per_language = num(key, value)?,
        "ngram" => t.ngram = num(key, value)?,
        "feature_dim" => t.feature_dim = num(key, value)?,
        "embed_dim" => t.embed_dim = num(key, value)?,
        "hash_seed" => t.hash_seed = num(key, value)?,
        "batch_size_ir" => t.batch_size_ir = num(key, value)?,
        "pairs_per_cl_batch" => t.pairs_per_cl_batch = num(key, value)?,
        "extras_per_cl_batch" => t.extras_per_cl_batch = num(key, value)?,
        "lr" => t.lr = num(key, value)?,
        "beta1" => t.beta1 = num(key, value)?,
        "beta2" => t.beta2 = num(key, value)?,
        "eps" => t.eps = num(key, value)?,
        "weight_decay" => t.weight_decay = num(key, value)?,
        "w_s" => t.weights = JointLossWeights::new(num(key, value)?, t.weights.w_l)?,
        "w_l" => t.weights = JointLossWeights::new(t.weights.w_s, num(key, value)?)?,
        "tau" => t.tau = num(key, value)?,
        "steps" => t.steps = num(key, value)?,
        "langpair_topology" => t.topology = topology(key, value)?,
        "routing" => {
            t.routing = match value {
                "passage-only" => ContrastiveRouting::PassageOnly,
                "both-towers" => ContrastiveRouting::BothTowers,
                _ => return Err(bad(key, value, "expected passage-only or both-towers")),
            }
        }
        "tower_init" => {
            t.init = match value {
                "independent" => TowerInit::Independent,
                "shared" => TowerInit::Shared,
                _ => return Err(bad(key, value, "expected independent or shared")),
            }
        }
        "checkpoint_every" => t.checkpoint_every = num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Applies every line of `text` on top of `spec`, then validates.
pub fn parse_into(spec: &mut ExperimentSpec, text: &str) -> Result<(), ConfigError> {
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (k, v) = s.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !seen.insert(k.to_string()) {
            return Err(ConfigError::Duplicate { line, key: k.into() });
        }
        if !apply(spec, k, v)? {
            return Err(ConfigError::UnknownKey { line, key: k.into() });
        }
    }
    spec.validate()?;
    Ok(())
}

pub fn parse(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut spec = ExperimentSpec::default();
    parse_into(&mut spec, text)?;
    Ok(spec)
}

fn join_langs(ls: &[Lang]) -> String {
    ls.iter().map(Lang::to_string).collect::<Vec<_>>().join(",")
}

/// Every key with its current value; `parse(&render(s))` reproduces `s`.
pub fn render(spec: &ExperimentSpec) -> String {
    let t = &spec.train;
    let w = &spec.world;
    let mut o = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(o, "{k} = {v}");
    };
    kv("scenario", spec.scenario.name().into());
    kv("seed", spec.seed.to_string());
    kv("source_lang", spec.source_lang.to_string());
    kv("uncovered", join_langs(&spec.uncovered));
    kv("ir_train_pairs", spec.ir_train_pairs.to_string());
    kv("parallel_pairs", spec.parallel_pairs.to_string());
    kv("nonparallel_sentences", spec.nonparallel_sentences.to_string());
    kv("eval_queries", spec.eval_queries.to_string());
    kv("eval_corpus", spec.eval_corpus.to_string());
    kv("distractor_overlap", format!("{:?}", spec.distractor_overlap));
    kv("k", spec.k.to_string());
    kv("bitext_lang_a", spec.bitext_langs.0.to_string());
    kv("bitext_lang_b", spec.bitext_langs.1.to_string());
    kv("bitext_gold", spec.bitext_gold.to_string());
    kv("bitext_gold_fraction", format!("{:?}", spec.bitext_gold_fraction));
    kv("mining_k", spec.mining.k.to_string());
    kv("candidate_depth", spec.mining.candidate_depth.to_string());
    kv(
        "direction",
        match spec.mining.direction {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Union => "union",
        }
        .into(),
    );
    kv("num_concepts", w.num_concepts.to_string());
    kv("num_languages", w.num_languages.to_string());
    kv("min_len", w.min_len.to_string());
    kv("max_len", w.max_len.to_string());
    kv("noise_rate", format!("{:?}", w.noise_rate));
    kv("zipf_exponent", format!("{:?}", w.zipf_exponent));
    kv("fillers_per_language", w.fillers_per_language.to_string());
    kv("ngram", t.ngram.to_string());
    kv("feature_dim", t.feature_dim.to_string());
    kv("embed_dim", t.embed_dim.to_string());
    kv("hash_seed", t.hash_seed.to_string());
    kv("batch_size_ir", t.batch_size_ir.to_string());
    kv("pairs_per_cl_batch", t.pairs_per_cl_batch.to_string());
    kv("extras_per_cl_batch", t.extras_per_cl_batch.to_string());
    kv("lr", format!("{:?}", t.lr));
    kv("beta1", format!("{:?}", t.beta1));
    kv("beta2", format!("{:?}", t.beta2));
    kv("eps", format!("{:?}", t.eps));
    kv("weight_decay", format!("{:?}", t.weight_decay));
    kv("w_s", format!("{:?}", t.weights.w_s));
    kv("w_l", format!("{:?}", t.weights.w_l));
    kv("tau", format!("{:?}", t.tau));
    kv("steps", t.steps.to_string());
    kv(
        "langpair_topology",
        t.topology.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(","),
    );
    kv(
        "routing",
        match t.routing {
            ContrastiveRouting::PassageOnly => "passage-only",
            ContrastiveRouting::BothTowers => "both-towers",
        }
        .into(),
    );
    kv(
        "tower_init",
        match t.init {
            TowerInit::Independent => "independent",
            TowerInit::Shared => "shared",
        }
        .into(),
    );
    kv("checkpoint_every", t.checkpoint_every.to_string());
    o
}
