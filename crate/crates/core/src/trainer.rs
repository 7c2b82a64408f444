//! Batch samplers, the joint training step and the training loop.
//!
//! Each step computes the retrieval, semantic and language contributions
//! against the same pre-step parameters, combines them with the joint weights
//! and applies one AdamW update per tower. The retrieval loss reaches both
//! towers; the two contrastive losses are computed on passage-tower embeddings
//! and only ever update the passage tower (unless the experimental
//! both-towers routing is selected).

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::index;
use rand::Rng;

use crate::batch::{EmbeddingBatch, Role};
use crate::encoder::{DualEncoderModel, FeatureExtractor, LinearEncoder, SparseVec, TowerGrad};
use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::losses::{self, JointLossWeights, LossOutput, MixedBatch, PairSet};
use crate::math::Matrix;
use crate::optim::{self, AdamWConfig, AdamWState};
use crate::rng::{self, streams, StreamRng};

/// Which towers receive the contrastive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContrastiveRouting {
    #[default]
    PassageOnly,
    /// Experimental: also encode contrastive batches with the query tower.
    /// Each contrastive loss becomes the mean of its two per-tower values.
    /// Known to destabilize training of the full-size model.
    BothTowers,
}

/// How the two towers are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TowerInit {
    /// Both towers from one draw, as when both start from the same pretrained encoder.
    Shared,
    #[default]
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub ngram: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hash_seed: u64,
    pub batch_size_ir: usize,
    pub pairs_per_cl_batch: usize,
    pub extras_per_cl_batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub weights: JointLossWeights,
    pub tau: f64,
    pub steps: usize,
    pub seed: u64,
    /// Allowed parallel directions; empty means every direction with data.
    pub topology: Vec<(Lang, Lang)>,
    pub routing: ContrastiveRouting,
    pub init: TowerInit,
    /// Checkpoint every this many steps; 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Desk-scale preset: minutes on one core.
    pub fn desk() -> Self {
        TrainConfig {
            ngram: crate::encoder::DEFAULT_NGRAM,
            feature_dim: crate::encoder::DEFAULT_FEATURE_DIM,
            embed_dim: crate::encoder::DEFAULT_EMBED_DIM,
            hash_seed: 0,
            batch_size_ir: 16,
            pairs_per_cl_batch: 8,
            extras_per_cl_batch: 8,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            weights: JointLossWeights::default(),
            tau: losses::DEFAULT_TEMPERATURE,
            steps: 1000,
            seed: 0,
            topology: Vec::new(),
            routing: ContrastiveRouting::PassageOnly,
            init: TowerInit::Independent,
            checkpoint_every: 0,
        }
    }

    /// Hyperparameters of the full-size recipe (batch 48, lr 1e-5), for reference runs.
    pub fn full_scale() -> Self {
        TrainConfig { batch_size_ir: 48, lr: 1e-5, ..Self::desk() }
    }

    pub fn extractor(&self) -> Result<FeatureExtractor> {
        FeatureExtractor::new(self.ngram, self.feature_dim, self.hash_seed)
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn sema_enabled(&self) -> bool {
        self.weights.w_s > 0.0 && self.pairs_per_cl_batch > 0
    }

    pub fn lang_enabled(&self) -> bool {
        self.weights.w_l > 0.0 && self.pairs_per_cl_batch > 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("eps must be > 0 and weight_decay >= 0"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau must be > 0"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim must be >= 1"));
        }
        JointLossWeights::new(self.weights.w_s, self.weights.w_l)?;
        if (self.weights.w_s > 0.0 || self.weights.w_l > 0.0) && self.pairs_per_cl_batch == 0 {
            return Err(Error::invalid("contrastive weights are set but pairs_per_cl_batch is 0"));
        }
        if self.lang_enabled() && 2 * self.pairs_per_cl_batch + self.extras_per_cl_batch < 3 {
            return Err(Error::invalid("language loss needs at least one third sentence per pair"));
        }
        self.extractor().map(|_| ())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrPair {
    pub query: String,
    pub passage: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub lang_a: Lang,
    pub lang_b: Lang,
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoCorpus {
    pub lang: Lang,
    pub sentences: Vec<String>,
}

/// Everything the training loop consumes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainData {
    pub ir: Vec<IrPair>,
    pub parallel: Vec<ParallelCorpus>,
    pub nonparallel: Vec<MonoCorpus>,
}

/// `n` distinct indices of a dataset of `len` items, in random order.
pub fn sample_ir_batch<R: Rng>(len: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    if len < n {
        return Err(Error::NotEnoughData { needed: n, available: len });
    }
    Ok(index::sample(rng, len, n).into_vec())
}

/// A sampled parallel pair: corpus index, pair index, and whether the pair is
/// read in the corpus' `(lang_b, lang_a)` orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairDraw {
    pub corpus: usize,
    pub pair: usize,
    pub flipped: bool,
}

/// Topology entries resolved to corpora that hold data.
fn resolve_topology(
    corpora: &[ParallelCorpus],
    topology: &[(Lang, Lang)],
) -> Result<Vec<(usize, bool)>> {
    let mut out = Vec::new();
    if topology.is_empty() {
        for (i, c) in corpora.iter().enumerate() {
            if !c.pairs.is_empty() {
                out.push((i, false));
            }
        }
    } else {
        for &(a, b) in topology {
            let found = corpora.iter().enumerate().find_map(|(i, c)| {
                if c.pairs.is_empty() {
                    None
                } else if (c.lang_a, c.lang_b) == (a, b) {
                    Some((i, false))
                } else if (c.lang_a, c.lang_b) == (b, a) {
                    Some((i, true))
                } else {
                    None
                }
            });
            if let Some(f) = found {
                out.push(f);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no allowed language direction has parallel data"));
    }
    Ok(out)
}

/// `n` distinct parallel pairs; each pair's direction is drawn uniformly from
/// the allowed topology, then a pair uniformly from that direction's corpus.
pub fn sample_parallel_batch<R: Rng>(
    corpora: &[ParallelCorpus],
    topology: &[(Lang, Lang)],
    n: usize,
    rng: &mut R,
) -> Result<Vec<PairDraw>> {
    let dirs = resolve_topology(corpora, topology)?;
    let distinct: BTreeSet<usize> = dirs.iter().map(|d| d.0).collect();
    let available: usize = distinct.iter().map(|&c| corpora[c].pairs.len()).sum();
    if available < n {
        return Err(Error::NotEnoughData { needed: n, available });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (corpus, flipped) = dirs[rng.gen_range(0..dirs.len())];
        let pair = rng.gen_range(0..corpora[corpus].pairs.len());
        if seen.insert((corpus, pair)) {
            out.push(PairDraw { corpus, pair, flipped });
        }
    }
    Ok(out)
}

/// Parallel pairs plus non-parallel extras for the language loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedDraw {
    pub pairs: Vec<PairDraw>,
    /// `(corpus, sentence)` indices into the non-parallel corpora.
    pub extras: Vec<(usize, usize)>,
}

impl MixedDraw {
    /// Rows are laid out as the pairs (adjacent) followed by the extras.
    pub fn pair_set(&self) -> PairSet {
        PairSet::adjacent(self.pairs.len())
    }

    pub fn extra_rows(&self) -> Vec<usize> {
        let base = 2 * self.pairs.len();
        (base..base + self.extras.len()).collect()
    }
}

/// Extras are drawn by picking a non-empty non-parallel corpus uniformly, then a
/// sentence uniformly within it, without repeats.
pub fn sample_mixed_batch<R: Rng>(
    parallel: &[ParallelCorpus],
    nonparallel: &[MonoCorpus],
    topology: &[(Lang, Lang)],
    pairs: usize,
    extras: usize,
    rng: &mut R,
) -> Result<MixedDraw> {
    if pairs == 0 {
        return Err(Error::invalid("the language loss needs at least one parallel pair"));
    }
    let pairs = sample_parallel_batch(parallel, topology, pairs, rng)?;
    let pools: Vec<usize> = nonparallel
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.sentences.is_empty())
        .map(|(i, _)| i)
        .collect();
    let available: usize = pools.iter().map(|&i| nonparallel[i].sentences.len()).sum();
    if available < extras {
        return Err(Error::NotEnoughData { needed: extras, available });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(extras);
    while out.len() < extras {
        let c = pools[rng.gen_range(0..pools.len())];
        let s = rng.gen_range(0..nonparallel[c].sentences.len());
        if seen.insert((c, s)) {
            out.push((c, s));
        }
    }
    Ok(MixedDraw { pairs, extras: out })
}

/// Pre-featurized training data.
#[derive(Debug, Clone)]
pub struct FeaturizedData {
    pub ir: Vec<(SparseVec, SparseVec)>,
    pub parallel: Vec<ParallelCorpusFeatures>,
    pub nonparallel: Vec<(Lang, Vec<SparseVec>)>,
}

#[derive(Debug, Clone)]
pub struct ParallelCorpusFeatures {
    pub lang_a: Lang,
    pub lang_b: Lang,
    pub pairs: Vec<(SparseVec, SparseVec)>,
}

impl FeaturizedData {
    pub fn new(data: &TrainData, fx: &FeatureExtractor) -> Result<Self> {
        let ir = data
            .ir
            .iter()
            .map(|p| Ok((fx.featurize(&p.query)?, fx.featurize(&p.passage)?)))
            .collect::<Result<Vec<_>>>()?;
        let parallel = data
            .parallel
            .iter()
            .map(|c| {
                let pairs = c
                    .pairs
                    .iter()
                    .map(|(a, b)| Ok((fx.featurize(a)?, fx.featurize(b)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ParallelCorpusFeatures { lang_a: c.lang_a, lang_b: c.lang_b, pairs })
            })
            .collect::<Result<Vec<_>>>()?;
        let nonparallel = data
            .nonparallel
            .iter()
            .map(|c| {
                let s = c.sentences.iter().map(|t| fx.featurize(t)).collect::<Result<Vec<_>>>()?;
                Ok((c.lang, s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeaturizedData { ir, parallel, nonparallel })
    }

    fn pair_rows<'a>(&'a self, draws: &[PairDraw], rows: &mut Vec<(&'a SparseVec, Lang)>) {
        for d in draws {
            let c = &self.parallel[d.corpus];
            let (a, b) = &c.pairs[d.pair];
            if d.flipped {
                rows.push((b, c.lang_b));
                rows.push((a, c.lang_a));
            } else {
                rows.push((a, c.lang_a));
                rows.push((b, c.lang_b));
            }
        }
    }
}

/// Feature rows of one step's batches.
#[derive(Debug, Clone, Default)]
pub struct StepInput<'a> {
    /// `(query, gold passage)` features.
    pub ir: Option<Vec<(&'a SparseVec, &'a SparseVec)>>,
    /// `2N` rows, pairs adjacent.
    pub parallel: Option<Vec<(&'a SparseVec, Lang)>>,
    /// Pair rows (adjacent) followed by extras.
    pub mixed: Option<(Vec<(&'a SparseVec, Lang)>, usize)>,
}

impl<'a> StepInput<'a> {
    pub fn from_draws(
        data: &'a FeaturizedData,
        ir: Option<&[usize]>,
        parallel: Option<&[PairDraw]>,
        mixed: Option<&MixedDraw>,
    ) -> Self {
        let ir = ir.map(|idx| idx.iter().map(|&i| (&data.ir[i].0, &data.ir[i].1)).collect());
        let parallel = parallel.map(|d| {
            let mut rows = Vec::with_capacity(2 * d.len());
            data.pair_rows(d, &mut rows);
            rows
        });
        let mixed = mixed.map(|m| {
            let mut rows = Vec::with_capacity(2 * m.pairs.len() + m.extras.len());
            data.pair_rows(&m.pairs, &mut rows);
            for &(c, s) in &m.extras {
                let (lang, sents) = &data.nonparallel[c];
                rows.push((&sents[s], *lang));
            }
            (rows, m.pairs.len())
        });
        StepInput { ir, parallel, mixed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub loss_ir: f64,
    pub loss_sema: f64,
    pub loss_lang: f64,
    pub loss_joint: f64,
}

/// Per-loss parameter gradients for one step, all taken at the same parameters.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub ir_query: TowerGrad,
    pub ir_passage: TowerGrad,
    pub sema_query: TowerGrad,
    pub sema_passage: TowerGrad,
    pub lang_query: TowerGrad,
    pub lang_passage: TowerGrad,
    pub loss_ir: Option<f64>,
    pub loss_sema: Option<f64>,
    pub loss_lang: Option<f64>,
}

impl StepGradients {
    /// `g_IR + w_s·g_sema + w_l·g_lang` for both towers. Terms with a zero
    /// weight are skipped entirely.
    pub fn combine(&self, w: JointLossWeights) -> Result<(TowerGrad, TowerGrad)> {
        let mut q = self.ir_query.clone();
        let mut p = self.ir_passage.clone();
        if w.w_s != 0.0 {
            q.add_scaled(&self.sema_query, w.w_s)?;
            p.add_scaled(&self.sema_passage, w.w_s)?;
        }
        if w.w_l != 0.0 {
            q.add_scaled(&self.lang_query, w.w_l)?;
            p.add_scaled(&self.lang_passage, w.w_l)?;
        }
        Ok((q, p))
    }

    pub fn joint_value(&self, w: JointLossWeights) -> f64 {
        self.loss_ir.unwrap_or(0.0)
            + w.w_s * self.loss_sema.unwrap_or(0.0)
            + w.w_l * self.loss_lang.unwrap_or(0.0)
    }
}

fn encode_rows(tower: &LinearEncoder, xs: &[&SparseVec]) -> Result<Matrix> {
    let d = tower.embed_dim();
    let mut m = Matrix::zeros(xs.len(), d);
    for (i, x) in xs.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&tower.encode(x)?);
    }
    Ok(m)
}

fn backprop_rows(grad: &mut TowerGrad, out: &Matrix, xs: &[&SparseVec], scale: f64) {
    for (i, x) in xs.iter().enumerate() {
        grad.add_outer(out.row(i), x, scale);
    }
}

fn check_finite(out: &LossOutput, name: &str) -> Result<()> {
    if !out.value.is_finite() || !out.grads.is_finite() {
        return Err(Error::NonFinite(format!("{name} loss")));
    }
    Ok(())
}

fn sema_on(tower: &LinearEncoder, rows: &[(&SparseVec, Lang)], tau: f64) -> Result<LossOutput> {
    let xs: Vec<&SparseVec> = rows.iter().map(|r| r.0).collect();
    let langs = rows.iter().map(|r| r.1).collect();
    let batch = EmbeddingBatch::new(encode_rows(tower, &xs)?, langs, vec![Role::Sentence; xs.len()])?;
    losses::sema_cl_loss(&batch, &PairSet::adjacent(xs.len() / 2), tau)
}

fn lang_on(tower: &LinearEncoder, rows: &[(&SparseVec, Lang)], pairs: usize) -> Result<LossOutput> {
    let xs: Vec<&SparseVec> = rows.iter().map(|r| r.0).collect();
    let langs = rows.iter().map(|r| r.1).collect();
    let batch = EmbeddingBatch::new(encode_rows(tower, &xs)?, langs, vec![Role::Sentence; xs.len()])?;
    let mixed = MixedBatch::new(batch, PairSet::adjacent(pairs), (2 * pairs..xs.len()).collect())?;
    losses::lang_cl_loss(&mixed)
}

/// Loss values and per-loss parameter gradients at the current parameters.
pub fn compute_gradients(
    model: &DualEncoderModel,
    input: &StepInput<'_>,
    tau: f64,
    routing: ContrastiveRouting,
) -> Result<StepGradients> {
    let zeros_q = TowerGrad::zeros_like(&model.query);
    let zeros_p = TowerGrad::zeros_like(&model.passage);
    let mut g = StepGradients {
        ir_query: zeros_q.clone(),
        ir_passage: zeros_p.clone(),
        sema_query: zeros_q.clone(),
        sema_passage: zeros_p.clone(),
        lang_query: zeros_q,
        lang_passage: zeros_p,
        loss_ir: None,
        loss_sema: None,
        loss_lang: None,
    };

    if let Some(ir) = &input.ir {
        let qx: Vec<&SparseVec> = ir.iter().map(|p| p.0).collect();
        let px: Vec<&SparseVec> = ir.iter().map(|p| p.1).collect();
        let qb = EmbeddingBatch::uniform(encode_rows(&model.query, &qx)?, Role::Query)?;
        let pb = EmbeddingBatch::uniform(encode_rows(&model.passage, &px)?, Role::Passage)?;
        let out = losses::ir_loss(&qb, &pb)?;
        check_finite(&out, "retrieval")?;
        let (gq, gp) = out.split_grads(qx.len());
        backprop_rows(&mut g.ir_query, &gq, &qx, 1.0);
        backprop_rows(&mut g.ir_passage, &gp, &px, 1.0);
        g.loss_ir = Some(out.value);
    }

    let both = routing == ContrastiveRouting::BothTowers;
    let share = if both { 0.5 } else { 1.0 };

    if let Some(rows) = &input.parallel {
        let xs: Vec<&SparseVec> = rows.iter().map(|r| r.0).collect();
        let out = sema_on(&model.passage, rows, tau)?;
        check_finite(&out, "semantic contrastive")?;
        backprop_rows(&mut g.sema_passage, &out.grads, &xs, share);
        let mut value = out.value;
        if both {
            let out = sema_on(&model.query, rows, tau)?;
            check_finite(&out, "semantic contrastive (query tower)")?;
            backprop_rows(&mut g.sema_query, &out.grads, &xs, share);
            value = 0.5 * (value + out.value);
        }
        g.loss_sema = Some(value);
    }

    if let Some((rows, pairs)) = &input.mixed {
        let xs: Vec<&SparseVec> = rows.iter().map(|r| r.0).collect();
        let out = lang_on(&model.passage, rows, *pairs)?;
        check_finite(&out, "language contrastive")?;
        backprop_rows(&mut g.lang_passage, &out.grads, &xs, share);
        let mut value = out.value;
        if both {
            let out = lang_on(&model.query, rows, *pairs)?;
            check_finite(&out, "language contrastive (query tower)")?;
            backprop_rows(&mut g.lang_query, &out.grads, &xs, share);
            value = 0.5 * (value + out.value);
        }
        g.loss_lang = Some(value);
    }
    Ok(g)
}

/// One joint update. Returns the losses measured before the update.
pub fn train_step(
    model: &mut DualEncoderModel,
    state: &mut AdamWState,
    input: &StepInput<'_>,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    let g = compute_gradients(model, input, cfg.tau, cfg.routing)?;
    let (gq, gp) = g.combine(cfg.weights)?;
    if !gq.is_finite() || !gp.is_finite() {
        return Err(Error::NonFinite("combined gradient".into()));
    }
    let adamw = cfg.adamw();
    optim::apply(&adamw, &mut state.query, &mut model.query, &gq)?;
    optim::apply(&adamw, &mut state.passage, &mut model.passage, &gp)?;
    if !state.is_finite() {
        return Err(Error::NonFinite("optimizer state".into()));
    }
    Ok(StepMetrics {
        step: 0,
        loss_ir: g.loss_ir.unwrap_or(0.0),
        loss_sema: g.loss_sema.unwrap_or(0.0),
        loss_lang: g.loss_lang.unwrap_or(0.0),
        loss_joint: g.joint_value(cfg.weights),
    })
}

/// Samplers for the three data streams, each on its own RNG stream of the
/// root seed so enabling one stream never perturbs another.
pub struct Samplers {
    ir: StreamRng,
    parallel: StreamRng,
    mixed: StreamRng,
}

impl Samplers {
    pub fn new(seed: u64) -> Self {
        Samplers {
            ir: rng::stream(seed, streams::IR_SAMPLER),
            parallel: rng::stream(seed, streams::PARALLEL_SAMPLER),
            mixed: rng::stream(seed, streams::MIXED_SAMPLER),
        }
    }

    /// Draws the batches for one step according to `cfg`.
    pub fn draw(
        &mut self,
        data: &TrainData,
        cfg: &TrainConfig,
    ) -> Result<(Option<Vec<usize>>, Option<Vec<PairDraw>>, Option<MixedDraw>)> {
        let ir = if cfg.batch_size_ir > 0 {
            Some(sample_ir_batch(data.ir.len(), cfg.batch_size_ir, &mut self.ir)?)
        } else {
            None
        };
        let par = if cfg.sema_enabled() {
            Some(sample_parallel_batch(&data.parallel, &cfg.topology, cfg.pairs_per_cl_batch, &mut self.parallel)?)
        } else {
            None
        };
        let mixed = if cfg.lang_enabled() {
            Some(sample_mixed_batch(
                &data.parallel,
                &data.nonparallel,
                &cfg.topology,
                cfg.pairs_per_cl_batch,
                cfg.extras_per_cl_batch,
                &mut self.mixed,
            )?)
        } else {
            None
        };
        Ok((ir, par, mixed))
    }
}

pub fn init_model(cfg: &TrainConfig) -> Result<DualEncoderModel> {
    let mut r = rng::stream(cfg.seed, streams::MODEL_INIT);
    match cfg.init {
        TowerInit::Independent => DualEncoderModel::init(cfg.extractor()?, cfg.embed_dim, &mut r),
        TowerInit::Shared => DualEncoderModel::init_shared(cfg.extractor()?, cfg.embed_dim, &mut r),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DualEncoderModel,
    pub state: AdamWState,
    pub trace: Vec<StepMetrics>,
}

/// Runs `cfg.steps` joint steps from a freshly initialized model.
/// `on_checkpoint(step, model, state)` fires every `cfg.checkpoint_every` steps.
pub fn train_loop<F>(data: &TrainData, cfg: &TrainConfig, on_checkpoint: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &DualEncoderModel, &AdamWState) -> Result<()>,
{
    let model = init_model(cfg)?;
    let state = AdamWState::new(&model);
    train_from(model, state, data, cfg, on_checkpoint)
}

pub fn train_from<F>(
    mut model: DualEncoderModel,
    mut state: AdamWState,
    data: &TrainData,
    cfg: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &DualEncoderModel, &AdamWState) -> Result<()>,
{
    cfg.validate()?;
    if cfg.steps == 0 {
        return Ok(TrainOutcome { model, state, trace: Vec::new() });
    }
    if cfg.batch_size_ir == 0 && !cfg.sema_enabled() && !cfg.lang_enabled() {
        return Err(Error::invalid("every loss is disabled"));
    }
    let feats = FeaturizedData::new(data, &model.extractor)?;
    let mut samplers = Samplers::new(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let (ir, par, mixed) = samplers.draw(data, cfg)?;
        let input = StepInput::from_draws(&feats, ir.as_deref(), par.as_deref(), mixed.as_ref());
        let mut m = train_step(&mut model, &mut state, &input, cfg)
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at step {step}")),
                other => other,
            })?;
        m.step = step;
        trace.push(m);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            on_checkpoint(step, &model, &state)?;
        }
    }
    Ok(TrainOutcome { model, state, trace })
}
