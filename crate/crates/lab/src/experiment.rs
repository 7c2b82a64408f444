//! Scenario construction and the gen / train / eval / mine pipeline.

use std::collections::BTreeSet;

use xlir_core::eval::{evaluate, EvalReport, RankedList, RetrievalTask};
use xlir_core::mining::{self, Candidates, Margin, MiningConfig, Prf};
use xlir_core::rng::{self, streams};
use xlir_core::synth::{self, BitextTask, World, WorldSpec};
use xlir_core::trainer::{self, TrainConfig, TrainData, TrainOutcome};
use xlir_core::{DualEncoderModel, Error, Lang, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scenario {
    /// Every target language has a parallel corpus with the source language.
    #[default]
    AllParallel,
    /// Some target languages only have monolingual text.
    PartialParallel,
    /// Retrieval data only; no contrastive losses.
    IrOnly,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::AllParallel => "all-parallel",
            Scenario::PartialParallel => "partial-parallel",
            Scenario::IrOnly => "ir-only",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-parallel" => Ok(Scenario::AllParallel),
            "partial-parallel" => Ok(Scenario::PartialParallel),
            "ir-only" => Ok(Scenario::IrOnly),
            other => Err(Error::InvalidArgument(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Everything one run needs: world, data sizes, training and evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub seed: u64,
    pub world: WorldSpec,
    pub train: TrainConfig,
    /// Language with retrieval training data; parallel corpora pair it with the others.
    pub source_lang: Lang,
    /// Target languages without parallel data in the partial-parallel scenario.
    pub uncovered: Vec<Lang>,
    pub ir_train_pairs: usize,
    pub parallel_pairs: usize,
    pub nonparallel_sentences: usize,
    pub eval_queries: usize,
    pub eval_corpus: usize,
    pub distractor_overlap: f64,
    pub k: usize,
    pub bitext_langs: (Lang, Lang),
    pub bitext_gold: usize,
    pub bitext_gold_fraction: f64,
    pub mining: MiningConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            scenario: Scenario::AllParallel,
            seed: 0,
            world: WorldSpec::default(),
            train: TrainConfig::desk(),
            source_lang: Lang(0),
            uncovered: vec![Lang(5), Lang(6), Lang(7)],
            ir_train_pairs: 2000,
            parallel_pairs: 2000,
            nonparallel_sentences: 2000,
            eval_queries: 100,
            eval_corpus: 1000,
            distractor_overlap: 0.5,
            k: 10,
            bitext_langs: (Lang(0), Lang(1)),
            bitext_gold: 50,
            bitext_gold_fraction: synth::DEFAULT_GOLD_FRACTION,
            mining: MiningConfig::default(),
        }
    }
}

impl ExperimentSpec {
    /// Seeds the world and the trainer from the experiment seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.world.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn languages(&self) -> Vec<Lang> {
        self.world.languages()
    }

    /// Languages evaluated for zero-shot transfer: everything but the source.
    pub fn target_langs(&self) -> Vec<Lang> {
        self.languages().into_iter().filter(|&l| l != self.source_lang).collect()
    }

    /// Target languages that receive a parallel corpus.
    pub fn covered_langs(&self) -> Vec<Lang> {
        match self.scenario {
            Scenario::PartialParallel => {
                self.target_langs().into_iter().filter(|l| !self.uncovered.contains(l)).collect()
            }
            _ => self.target_langs(),
        }
    }

    /// Training configuration with the scenario's loss switches applied.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        match self.scenario {
            Scenario::IrOnly => {
                t.weights.w_s = 0.0;
                t.weights.w_l = 0.0;
            }
            // no monolingual corpora: the language loss contrasts pairs only
            Scenario::AllParallel => t.extras_per_cl_batch = 0,
            Scenario::PartialParallel => {}
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.effective_train().validate()?;
        let langs: BTreeSet<Lang> = self.languages().into_iter().collect();
        for l in std::iter::once(&self.source_lang)
            .chain(&self.uncovered)
            .chain([&self.bitext_langs.0, &self.bitext_langs.1])
        {
            if !langs.contains(l) {
                return Err(Error::UnknownLanguage(*l));
            }
        }
        if self.uncovered.contains(&self.source_lang) {
            return Err(Error::invalid("the source language cannot be uncovered"));
        }
        if self.scenario == Scenario::PartialParallel && self.uncovered.is_empty() {
            return Err(Error::invalid("partial-parallel needs at least one uncovered language"));
        }
        if self.bitext_langs.0 == self.bitext_langs.1 {
            return Err(Error::invalid("bitext languages must differ"));
        }
        if !(self.bitext_gold_fraction > 0.0 && self.bitext_gold_fraction <= 1.0) {
            return Err(Error::invalid("bitext gold fraction must lie in (0, 1]"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        self.mining.validate()
    }
}

/// Generated data for one run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: TrainData,
    pub eval: Vec<RetrievalTask>,
    pub bitext_train: BitextTask,
    pub bitext_test: BitextTask,
}

fn sub_stream(seed: u64, family: u64, id: u64) -> rng::StreamRng {
    rng::stream(rng::derive_seed(seed, family), id)
}

/// Builds the world and every corpus. Each corpus draws from its own stream
/// so changing one size leaves the others untouched.
pub fn generate(spec: &ExperimentSpec) -> Result<(World, Dataset)> {
    spec.validate()?;
    let world = synth::build_world(&spec.world)?;
    let src = spec.source_lang;
    let ir = synth::make_ir_pairs(&world, src, spec.ir_train_pairs, &mut sub_stream(spec.seed, streams::CORPUS, 0))?;

    let mut parallel = Vec::new();
    if spec.scenario != Scenario::IrOnly {
        for l in spec.covered_langs() {
            let mut r = sub_stream(spec.seed, streams::CORPUS, 100 + u64::from(l.0));
            parallel.push(synth::make_parallel_corpus(&world, src, l, spec.parallel_pairs, &mut r)?.corpus);
        }
    }
    let mut nonparallel = Vec::new();
    if spec.scenario == Scenario::PartialParallel {
        for &l in &spec.uncovered {
            let mut r = sub_stream(spec.seed, streams::CORPUS, 200 + u64::from(l.0));
            nonparallel.push(synth::make_monolingual_corpus(&world, l, spec.nonparallel_sentences, &mut r)?);
        }
    }

    let eval = spec
        .languages()
        .into_iter()
        .map(|l| {
            let mut r = sub_stream(spec.seed, streams::TASK, u64::from(l.0));
            Ok(synth::make_ir_task(&world, l, spec.eval_queries, spec.eval_corpus, spec.distractor_overlap, &mut r)?.task)
        })
        .collect::<Result<Vec<_>>>()?;

    let (a, b) = spec.bitext_langs;
    let noise = synth::noise_for_fraction(spec.bitext_gold, spec.bitext_gold_fraction);
    let bitext_train =
        synth::make_bitext_task(&world, a, b, spec.bitext_gold, noise, &mut sub_stream(spec.seed, streams::BITEXT, 0))?;
    let bitext_test =
        synth::make_bitext_task(&world, a, b, spec.bitext_gold, noise, &mut sub_stream(spec.seed, streams::BITEXT, 1))?;

    Ok((world, Dataset { train: TrainData { ir, parallel, nonparallel }, eval, bitext_train, bitext_test }))
}

pub fn train(spec: &ExperimentSpec, data: &TrainData) -> Result<TrainOutcome> {
    trainer::train_loop(data, &spec.effective_train(), |_, _, _| Ok(()))
}

pub fn eval_ir(model: &DualEncoderModel, tasks: &[RetrievalTask], k: usize) -> Result<(EvalReport, Vec<RankedList>)> {
    evaluate(model, tasks, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    Margin,
    Cosine,
}

/// Candidates of one split with gold labels attached.
#[derive(Debug, Clone)]
pub struct LabeledCandidates {
    pub candidates: Candidates,
    pub gold: Vec<bool>,
    pub total_gold: usize,
}

impl LabeledCandidates {
    /// `(score, is_gold)` under `scoring`; degenerate margins are left out.
    pub fn scored(&self, scoring: Scoring) -> Vec<(f64, bool)> {
        self.candidates
            .pairs
            .iter()
            .zip(&self.gold)
            .filter_map(|(p, &g)| match scoring {
                Scoring::Cosine => Some((p.cosine, g)),
                Scoring::Margin => p.margin.value().map(|s| (s, g)),
            })
            .collect()
    }

    /// P/R/F1 of the rule `score > threshold`.
    pub fn evaluate(&self, scoring: Scoring, threshold: f64) -> Prf {
        let scored = self.scored(scoring);
        let predicted = scored.iter().filter(|s| s.0 > threshold).count();
        let tp = scored.iter().filter(|s| s.0 > threshold && s.1).count();
        prf(tp, predicted, self.total_gold)
    }
}

fn prf(tp: usize, predicted: usize, gold: usize) -> Prf {
    let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let recall = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}

pub fn label_candidates(model: &DualEncoderModel, task: &BitextTask, cfg: &MiningConfig) -> Result<LabeledCandidates> {
    let a: Vec<&str> = task.side_a.iter().map(|s| s.1.as_str()).collect();
    let b: Vec<&str> = task.side_b.iter().map(|s| s.1.as_str()).collect();
    let candidates = mining::mine_pairs(model, &a, &b, cfg)?;
    let gold_set: BTreeSet<(&str, &str)> = task.gold.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let gold = candidates
        .pairs
        .iter()
        .map(|p| gold_set.contains(&(task.side_a[p.a].0.as_str(), task.side_b[p.b].0.as_str())))
        .collect();
    Ok(LabeledCandidates { candidates, gold, total_gold: task.gold.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub threshold: f64,
    pub train: Prf,
    pub test: Prf,
}

#[derive(Debug, Clone)]
pub struct MiningOutcome {
    pub margin: SplitResult,
    pub cosine: SplitResult,
    pub train: LabeledCandidates,
    pub test: LabeledCandidates,
}

impl MiningOutcome {
    /// Test-split candidates predicted parallel under the margin threshold, as id pairs.
    pub fn test_predictions(&self, task: &BitextTask) -> Vec<(String, String)> {
        self.test
            .candidates
            .pairs
            .iter()
            .filter(|p| matches!(p.margin, Margin::Score(s) if s > self.margin.threshold))
            .map(|p| (task.side_a[p.a].0.clone(), task.side_b[p.b].0.clone()))
            .collect()
    }
}

/// Calibrates a threshold on the train split and applies it unchanged to
/// the test split, for both margin and raw cosine scoring.
pub fn mine(model: &DualEncoderModel, train: &BitextTask, test: &BitextTask, cfg: &MiningConfig) -> Result<MiningOutcome> {
    let tr = label_candidates(model, train, cfg)?;
    let te = label_candidates(model, test, cfg)?;
    let split = |scoring| -> Result<SplitResult> {
        let choice = mining::tune_threshold(&tr.scored(scoring), tr.total_gold)?;
        Ok(SplitResult { threshold: choice.threshold, train: choice.prf, test: te.evaluate(scoring, choice.threshold) })
    };
    Ok(MiningOutcome { margin: split(Scoring::Margin)?, cosine: split(Scoring::Cosine)?, train: tr, test: te })
}
