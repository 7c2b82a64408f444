//! Retrieval, semantic contrastive and language contrastive objectives.
//!
//! Every loss returns its value together with the exact gradient with respect
//! to each input embedding row. All similarities are cosines; the retrieval and
//! language losses use no temperature.
//!
//! The semantic loss pulls the two members of each parallel pair together
//! against every other row of the batch. The language loss never looks at
//! negatives: it only asks that any third sentence sits at the same cosine from
//! both members of a pair, so its per-combination term bottoms out at `2·ln 2`
//! when `sim(z_i, z_k) = sim(z_j, z_k)`. That makes it usable on sentences of
//! languages that have no parallel data at all.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::math::{softmax_into, Matrix, UnitRows};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Loss value (nats) and gradient rows aligned with the loss input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Matrix,
}

impl LossOutput {
    fn checked(value: f64, grads: Matrix, what: &str) -> Result<Self> {
        if !value.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite(format!("{what} loss")));
        }
        Ok(LossOutput { value, grads })
    }

    /// Splits stacked gradients (as returned by [`ir_loss`]) into the first
    /// `n` rows and the rest.
    pub fn split_grads(&self, n: usize) -> (Matrix, Matrix) {
        let cols = self.grads.cols();
        let data = self.grads.as_slice();
        let top = Matrix::from_vec(n, cols, data[..n * cols].to_vec()).expect("split in range");
        let bottom = Matrix::from_vec(self.grads.rows() - n, cols, data[n * cols..].to_vec())
            .expect("split in range");
        (top, bottom)
    }
}

/// Parallel-pair relation over the rows of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
}

impl PairSet {
    /// Validates that indices are distinct within and across pairs and below `len`.
    pub fn new(pairs: Vec<(usize, usize)>, len: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(i, j) in &pairs {
            for idx in [i, j] {
                if idx >= len {
                    return Err(Error::invalid(format!("pair index {idx} out of range {len}")));
                }
                if !seen.insert(idx) {
                    return Err(Error::invalid(format!("index {idx} appears twice in pair set")));
                }
            }
        }
        Ok(PairSet { pairs })
    }

    /// Pairs `(2t, 2t+1)` for `t < n`: the layout produced by the batch samplers.
    pub fn adjacent(n: usize) -> Self {
        PairSet { pairs: (0..n).map(|t| (2 * t, 2 * t + 1)).collect() }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().flat_map(|&(i, j)| [i, j])
    }
}

/// A batch made of parallel pairs plus non-parallel extra sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub batch: EmbeddingBatch,
    pub parallel: PairSet,
    pub extras: Vec<usize>,
}

impl MixedBatch {
    pub fn new(batch: EmbeddingBatch, parallel: PairSet, extras: Vec<usize>) -> Result<Self> {
        let n = batch.len();
        let mut used: BTreeSet<usize> = parallel.members().collect();
        if used.iter().any(|&i| i >= n) {
            return Err(Error::invalid("pair index out of range"));
        }
        for &k in &extras {
            if k >= n {
                return Err(Error::invalid(format!("extra index {k} out of range {n}")));
            }
            if !used.insert(k) {
                return Err(Error::invalid(format!("extra index {k} overlaps another member")));
            }
        }
        Ok(MixedBatch { batch, parallel, extras })
    }

    /// Number of `(pair, third sentence)` combinations the language loss averages over.
    pub fn combination_count(&self) -> usize {
        let members = 2 * self.parallel.len() + self.extras.len();
        self.parallel.len() * members.saturating_sub(2)
    }
}

/// Weights of the semantic and language terms in the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLossWeights {
    pub w_s: f64,
    pub w_l: f64,
}

impl JointLossWeights {
    pub fn new(w_s: f64, w_l: f64) -> Result<Self> {
        for (name, w) in [("w_s", w_s), ("w_l", w_l)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(JointLossWeights { w_s, w_l })
    }
}

impl Default for JointLossWeights {
    fn default() -> Self {
        JointLossWeights { w_s: 0.01, w_l: 0.001 }
    }
}

/// In-batch-negative retrieval loss.
///
/// Row `i` of `passages` is the gold passage of query `i`; every other passage
/// is a negative. Gradients are stacked: queries first, then passages.
pub fn ir_loss(queries: &EmbeddingBatch, passages: &EmbeddingBatch) -> Result<LossOutput> {
    let n = queries.len();
    if passages.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: passages.len() });
    }
    if passages.dim() != queries.dim() {
        return Err(Error::DimensionMismatch { expected: queries.dim(), found: passages.dim() });
    }
    let d = queries.dim();
    let uq = UnitRows::new(queries.matrix())?;
    let up = UnitRows::new(passages.matrix())?;

    let mut qgrad = Matrix::zeros(n, d);
    let mut pgrad = Matrix::zeros(n, d);
    let mut logits = vec![0.0; n];
    let mut probs = vec![0.0; n];
    let mut value = 0.0;
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for (j, l) in logits.iter_mut().enumerate() {
            *l = uq.cross(i, &up, j);
        }
        let lse = softmax_into(&logits, &mut probs);
        value += lse - logits[i];
        for j in 0..n {
            let g = (probs[j] - if i == j { 1.0 } else { 0.0 }) * inv_n;
            uq.accumulate(i, &up, j, g, qgrad.row_mut(i));
            up.accumulate(j, &uq, i, g, pgrad.row_mut(j));
        }
    }
    LossOutput::checked(value * inv_n, Matrix::vstack(&qgrad, &pgrad)?, "retrieval")
}

/// Semantic contrastive loss with temperature `tau`.
///
/// `pairs` must partition all `2N` rows. For each direction of each pair the
/// positive logit is contrasted against every other row (self excluded), and
/// the `2N` log terms are averaged.
pub fn sema_cl_loss(batch: &EmbeddingBatch, pairs: &PairSet, tau: f64) -> Result<LossOutput> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("semantic contrastive pair set"));
    }
    let m = batch.len();
    if 2 * pairs.len() != m {
        return Err(Error::invalid(format!(
            "{} pairs do not partition a batch of {m} rows",
            pairs.len()
        )));
    }
    let mut partner = vec![usize::MAX; m];
    for &(i, j) in pairs.pairs() {
        if i >= m || j >= m {
            return Err(Error::invalid("pair index out of range"));
        }
        partner[i] = j;
        partner[j] = i;
    }
    let u = UnitRows::new(batch.matrix())?;
    let mut grads = Matrix::zeros(m, batch.dim());
    let others = m - 1;
    let mut logits = vec![0.0; others];
    let mut probs = vec![0.0; others];
    let mut idx = vec![0usize; others];
    let mut value = 0.0;
    let coef = 1.0 / (m as f64);
    for a in 0..m {
        let b = partner[a];
        let mut t = 0;
        for k in (0..m).filter(|&k| k != a) {
            logits[t] = u.sim(a, k) / tau;
            idx[t] = k;
            t += 1;
        }
        let lse = softmax_into(&logits, &mut probs);
        value += lse - u.sim(a, b) / tau;
        for t in 0..others {
            let k = idx[t];
            let g = (probs[t] - if k == b { 1.0 } else { 0.0 }) * coef / tau;
            u.accumulate(a, &u, k, g, grads.row_mut(a));
            u.accumulate(k, &u, a, g, grads.row_mut(k));
        }
    }
    LossOutput::checked(value * coef, grads, "semantic contrastive")
}

/// `softplus(d) + softplus(-d) = 2·ln(e^{d/2} + e^{-d/2})`, evaluated stably.
pub(crate) fn lang_term(d: f64) -> f64 {
    let a = d.abs();
    a + 2.0 * libm::log1p(libm::exp(-a))
}

/// Language contrastive loss, averaged over `(pair, third sentence)` combinations.
///
/// For each parallel pair `(i, j)` and each other member `k` (other pairs'
/// members and extras), the term is
/// `-[ln σ(s_ik - s_jk) + ln σ(s_jk - s_ik)]` with `s` the cosine.
pub fn lang_cl_loss(mixed: &MixedBatch) -> Result<LossOutput> {
    let count = mixed.combination_count();
    if mixed.parallel.is_empty() || count == 0 {
        return Err(Error::invalid("language contrastive loss has no (pair, k) combination"));
    }
    let batch = &mixed.batch;
    let u = UnitRows::new(batch.matrix())?;
    let members: Vec<usize> = mixed
        .parallel
        .members()
        .chain(mixed.extras.iter().copied())
        .collect();
    let mut grads = Matrix::zeros(batch.len(), batch.dim());
    let inv = 1.0 / count as f64;
    let mut value = 0.0;
    for &(i, j) in mixed.parallel.pairs() {
        for &k in members.iter().filter(|&&k| k != i && k != j) {
            let s_ik = u.sim(i, k);
            let s_jk = u.sim(j, k);
            let d = s_ik - s_jk;
            value += lang_term(d);
            let g = libm::tanh(0.5 * d) * inv;
            u.accumulate(i, &u, k, g, grads.row_mut(i));
            u.accumulate(k, &u, i, g, grads.row_mut(k));
            u.accumulate(j, &u, k, -g, grads.row_mut(j));
            u.accumulate(k, &u, j, -g, grads.row_mut(k));
        }
    }
    LossOutput::checked(value * inv, grads, "language contrastive")
}

/// `ir + w_s·sema + w_l·lang`, gradients combined with the same weights.
///
/// The three outputs must have gradients over the same rows.
pub fn joint_loss(
    ir: &LossOutput,
    sema: &LossOutput,
    lang: &LossOutput,
    w: JointLossWeights,
) -> Result<LossOutput> {
    let value = ir.value + w.w_s * sema.value + w.w_l * lang.value;
    let mut grads = ir.grads.clone();
    if w.w_s != 0.0 {
        grads.add_scaled(&sema.grads, w.w_s)?;
    }
    if w.w_l != 0.0 {
        grads.add_scaled(&lang.grads, w.w_l)?;
    }
    LossOutput::checked(value, grads, "joint")
}
