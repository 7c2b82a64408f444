//! Central finite-difference checks for every loss, on embedding rows and
//! through the linear encoder on weight entries.
//!
//! Error of an entry is `|analytic - numeric| / scale`, where `scale` is the
//! largest gradient magnitude in the instance; instances whose gradient is
//! everywhere below [`ABS_FLOOR`] are compared absolutely. Scaling each entry
//! by its own magnitude instead would flag near-cancelling entries whose
//! difference is pure rounding noise of order `eps / h`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::batch::{EmbeddingBatch, Role};
use crate::encoder::{DualEncoderModel, FeatureExtractor, LinearEncoder, SparseVec};
use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::losses::{self, JointLossWeights, LossOutput, MixedBatch, PairSet};
use crate::math::Matrix;
use crate::rng;
use crate::trainer::{compute_gradients, ContrastiveRouting, StepInput};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const ABS_FLOOR: f64 = 1e-8;
pub const DEFAULT_SIZES: [usize; 3] = [2, 4, 8];
pub const DEFAULT_TRIALS: usize = 100;

const EMBED_DIM: usize = 8;
const FEATURE_DIM: usize = 64;
const FEATURE_NNZ: usize = 5;
const SAMPLED_WEIGHTS: usize = 20;

/// Worst entry error between two gradients of the same instance.
pub fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let worst = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale < ABS_FLOOR {
        worst
    } else {
        worst / scale
    }
}

/// Central difference of `f` at `x` along coordinate `k`.
pub fn central_difference<F>(x: &mut [f64], k: usize, h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let orig = x[k];
    x[k] = orig + h;
    let plus = f(x);
    x[k] = orig - h;
    let minus = f(x);
    x[k] = orig;
    Ok((plus? - minus?) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckKind {
    Retrieval,
    Semantic,
    Language,
    /// The weighted sum of all three, taken through both encoder towers.
    JointThroughEncoder,
}

impl CheckKind {
    pub const ALL: [CheckKind; 4] =
        [CheckKind::Retrieval, CheckKind::Semantic, CheckKind::Language, CheckKind::JointThroughEncoder];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Retrieval => "ir",
            CheckKind::Semantic => "sema_cl",
            CheckKind::Language => "lang_cl",
            CheckKind::JointThroughEncoder => "joint_encoder",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub tau: f64,
    /// Added to every analytic gradient entry before comparison. Nonzero only
    /// to confirm that the check can fail.
    pub corruption: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            tau: losses::DEFAULT_TEMPERATURE,
            corruption: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub kind: CheckKind,
    pub size: usize,
    pub trials: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }

    pub fn summary(&self) -> String {
        format!(
            "{:<14} N={:<2} trials={:<4} worst={:.3e} tol={:.0e} {}",
            self.kind.name(),
            self.size,
            self.trials,
            self.worst,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn random_rows<R: Rng>(rng: &mut R, m: usize, d: usize) -> Matrix {
    let data = (0..m * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(m, d, data).expect("shape by construction")
}

fn corrupt(mut g: Vec<f64>, c: f64) -> Vec<f64> {
    if c != 0.0 {
        g.iter_mut().for_each(|x| *x += c);
    }
    g
}

/// Checks a loss of a matrix of rows against its analytic row gradients.
fn check_rows<F>(x: &Matrix, opts: &CheckOptions, f: F) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<LossOutput>,
{
    let analytic = corrupt(f(x)?.grads.as_slice().to_vec(), opts.corruption);
    let (m, d) = (x.rows(), x.cols());
    let mut flat = x.as_slice().to_vec();
    let mut numeric = vec![0.0; flat.len()];
    for (k, n) in numeric.iter_mut().enumerate() {
        *n = central_difference(&mut flat, k, opts.step, |v| {
            Ok(f(&Matrix::from_vec(m, d, v.to_vec())?)?.value)
        })?;
    }
    Ok(max_error(&analytic, &numeric))
}

/// One retrieval instance with `n` query/passage pairs.
pub fn check_retrieval<R: Rng>(n: usize, opts: &CheckOptions, rng: &mut R) -> Result<f64> {
    let x = random_rows(rng, 2 * n, EMBED_DIM);
    check_rows(&x, opts, |m| {
        let rows = m.as_slice();
        let half = n * m.cols();
        let q = Matrix::from_vec(n, m.cols(), rows[..half].to_vec())?;
        let p = Matrix::from_vec(n, m.cols(), rows[half..].to_vec())?;
        losses::ir_loss(&EmbeddingBatch::uniform(q, Role::Query)?, &EmbeddingBatch::uniform(p, Role::Passage)?)
    })
}

/// One semantic instance with `n` adjacent pairs.
pub fn check_semantic<R: Rng>(n: usize, opts: &CheckOptions, rng: &mut R) -> Result<f64> {
    let x = random_rows(rng, 2 * n, 2 * EMBED_DIM);
    let pairs = PairSet::adjacent(n);
    check_rows(&x, opts, |m| {
        losses::sema_cl_loss(&EmbeddingBatch::uniform(m.clone(), Role::Sentence)?, &pairs, opts.tau)
    })
}

/// One language instance with `n` adjacent pairs followed by `n` extras.
pub fn check_language<R: Rng>(n: usize, opts: &CheckOptions, rng: &mut R) -> Result<f64> {
    let x = random_rows(rng, 3 * n, EMBED_DIM);
    check_rows(&x, opts, |m| {
        let batch = EmbeddingBatch::uniform(m.clone(), Role::Sentence)?;
        losses::lang_cl_loss(&MixedBatch::new(batch, PairSet::adjacent(n), (2 * n..3 * n).collect())?)
    })
}

fn random_features<R: Rng>(rng: &mut R, count: usize) -> Result<Vec<SparseVec>> {
    (0..count)
        .map(|_| {
            let idx = index::sample(rng, FEATURE_DIM, FEATURE_NNZ);
            SparseVec::new(FEATURE_DIM, idx.iter().map(|c| (c as u32, rng.gen_range(0.1..1.0))).collect())
        })
        .collect()
}

fn random_model<R: Rng>(rng: &mut R) -> Result<DualEncoderModel> {
    let fx = FeatureExtractor::new(3, FEATURE_DIM, 0)?;
    let q = LinearEncoder::init(EMBED_DIM, FEATURE_DIM, rng)?;
    let p = LinearEncoder::init(EMBED_DIM, FEATURE_DIM, rng)?;
    DualEncoderModel::new(fx, q, p)
}

/// One joint instance through the encoder: `n` retrieval pairs, `n` parallel
/// pairs for the semantic term and `n` pairs plus `n` extras for the language
/// term, with random positive weights. Compares `SAMPLED_WEIGHTS` weight
/// entries per tower, drawn from the columns the features touch.
pub fn check_joint_through_encoder<R: Rng>(
    n: usize,
    routing: ContrastiveRouting,
    opts: &CheckOptions,
    rng: &mut R,
) -> Result<f64> {
    let model = random_model(rng)?;
    let ir_q = random_features(rng, n)?;
    let ir_p = random_features(rng, n)?;
    let par = random_features(rng, 2 * n)?;
    let mixed = random_features(rng, 3 * n)?;
    let w = JointLossWeights::new(rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0))?;
    let lang = |i: usize| Lang((i % 3) as u16);
    let input = StepInput {
        ir: Some(ir_q.iter().zip(&ir_p).collect()),
        parallel: Some(par.iter().enumerate().map(|(i, x)| (x, lang(i))).collect()),
        mixed: Some((mixed.iter().enumerate().map(|(i, x)| (x, lang(i))).collect(), n)),
    };

    let g = compute_gradients(&model, &input, opts.tau, routing)?;
    let (gq, gp) = g.combine(w)?;
    let mut worst: f64 = 0.0;
    for (tower, grad) in [(0usize, &gq), (1, &gp)] {
        let cols: Vec<u32> = ir_q
            .iter()
            .chain(&ir_p)
            .chain(&par)
            .chain(&mixed)
            .flat_map(|x| x.entries().iter().map(|e| e.0))
            .collect();
        let scale = grad.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut diff: f64 = 0.0;
        for _ in 0..SAMPLED_WEIGHTS {
            let r = rng.gen_range(0..EMBED_DIM);
            let c = cols[rng.gen_range(0..cols.len())] as usize;
            let flat = r * FEATURE_DIM + c;
            let analytic = grad.get(r, c) + opts.corruption;
            let mut wv = if tower == 0 { model.query.weights() } else { model.passage.weights() }.to_vec();
            let numeric = central_difference(&mut wv, flat, opts.step, |v| {
                let enc = LinearEncoder::from_weights(EMBED_DIM, FEATURE_DIM, v.to_vec())?;
                let probe = if tower == 0 {
                    DualEncoderModel::new(model.extractor.clone(), enc, model.passage.clone())?
                } else {
                    DualEncoderModel::new(model.extractor.clone(), model.query.clone(), enc)?
                };
                Ok(compute_gradients(&probe, &input, opts.tau, routing)?.joint_value(w))
            })?;
            diff = diff.max((analytic - numeric).abs());
        }
        let err = if scale < ABS_FLOOR { diff } else { diff / scale };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Runs `trials` instances of `kind` at each size and reports the worst error.
pub fn run_suite(
    kind: CheckKind,
    sizes: &[usize],
    trials: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Result<Vec<CheckReport>> {
    if trials == 0 || sizes.is_empty() {
        return Err(Error::invalid("gradcheck needs at least one size and one trial"));
    }
    if sizes.iter().any(|&n| n < 2) {
        return Err(Error::invalid("gradcheck sizes must be >= 2"));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut r = rng::stream(seed, (kind as u64 + 1) * 1000 + n as u64);
        let mut worst: f64 = 0.0;
        for t in 0..trials {
            let e = match kind {
                CheckKind::Retrieval => check_retrieval(n, opts, &mut r)?,
                CheckKind::Semantic => check_semantic(n, opts, &mut r)?,
                CheckKind::Language => check_language(n, opts, &mut r)?,
                CheckKind::JointThroughEncoder => {
                    let routing =
                        if t % 2 == 0 { ContrastiveRouting::PassageOnly } else { ContrastiveRouting::BothTowers };
                    check_joint_through_encoder(n, routing, opts, &mut r)?
                }
            };
            worst = worst.max(e);
        }
        out.push(CheckReport { kind, size: n, trials, worst, tolerance: opts.tolerance });
    }
    Ok(out)
}

/// Every check kind at every size.
pub fn run_all(sizes: &[usize], trials: usize, seed: u64, opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for kind in CheckKind::ALL {
        out.extend(run_suite(kind, sizes, trials, seed, opts)?);
    }
    Ok(out)
}
