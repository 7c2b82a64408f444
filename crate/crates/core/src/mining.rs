//! Margin-scored bitext mining with a calibrated decision threshold.
//!
//! A candidate `(u, v)` scores `cos(u, v)` divided by the mean of the average
//! cosine of `u` to its `k` nearest cross-lingual neighbours and the same
//! quantity for `v`. Sentences that sit in dense neighbourhoods (hubs) are
//! penalized, which a raw cosine threshold cannot do.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::encoder::{DualEncoderModel, Tower};
use crate::error::{Error, Result};
use crate::math::{dot, Matrix, UnitRows};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_CANDIDATE_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    Forward,
    Backward,
    #[default]
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningConfig {
    pub k: usize,
    pub candidate_depth: usize,
    pub direction: Direction,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { k: DEFAULT_K, candidate_depth: DEFAULT_CANDIDATE_DEPTH, direction: Direction::Union }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.candidate_depth < self.k {
            return Err(Error::invalid("candidate_depth must be >= k"));
        }
        Ok(())
    }
}

/// Indices of the `k` largest entries, descending, ties by ascending index.
fn top_indices(row: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if k < v.len() {
        v.select_nth_unstable_by(k - 1, cmp);
        v.truncate(k);
    }
    v.sort_unstable_by(cmp);
    v
}

fn cosine_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch { expected: a.cols(), found: b.cols() });
    }
    let ua = UnitRows::new(a)?;
    let ub = UnitRows::new(b)?;
    let mut s = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ra = ua.unit.row(i);
        for (j, x) in s.row_mut(i).iter_mut().enumerate() {
            *x = dot(ra, ub.unit.row(j));
        }
    }
    Ok(s)
}

fn transpose(m: &Matrix) -> Matrix {
    let mut t = Matrix::zeros(m.cols(), m.rows());
    for i in 0..m.rows() {
        for (j, x) in m.row(i).iter().enumerate() {
            t.row_mut(j)[i] = *x;
        }
    }
    t
}

/// For each row of `a`, its `k` nearest rows of `b` by cosine as
/// `(index, cosine)`, exact, ties by ascending index.
pub fn knn(a: &Matrix, b: &Matrix, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if b.rows() < k {
        return Err(Error::NotEnoughData { needed: k, available: b.rows() });
    }
    let s = cosine_matrix(a, b)?;
    Ok(s.iter_rows().map(|r| top_indices(r, k)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Score(f64),
    /// Neighbourhood denominator was not positive.
    Degenerate,
}

impl Margin {
    pub fn value(self) -> Option<f64> {
        match self {
            Margin::Score(s) => Some(s),
            Margin::Degenerate => None,
        }
    }
}

/// `sim_uv / (Σ nn_u / 2k + Σ nn_v / 2k)` given the neighbourhood cosines of
/// both sentences.
pub fn margin_score(sim_uv: f64, nn_u: &[f64], nn_v: &[f64]) -> Result<Margin> {
    if nn_u.is_empty() || nn_u.len() != nn_v.len() {
        return Err(Error::invalid("neighbourhoods must be nonempty and of equal size k"));
    }
    let two_k = 2.0 * nn_u.len() as f64;
    let denom = nn_u.iter().sum::<f64>() / two_k + nn_v.iter().sum::<f64>() / two_k;
    if !(denom > 0.0) {
        return Ok(Margin::Degenerate);
    }
    Ok(Margin::Score(sim_uv / denom))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub a: usize,
    pub b: usize,
    pub cosine: f64,
    pub margin: Margin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    /// Sorted by `(a, b)`, each pair once.
    pub pairs: Vec<ScoredPair>,
    pub degenerate_count: usize,
    /// Neighbourhood size and depth actually used after clamping to the side sizes.
    pub k: usize,
    pub depth: usize,
}

/// Scores candidate pairs between two embedded sides.
///
/// `k` and `candidate_depth` are clamped to the size of the smaller side so
/// tiny inputs still produce candidates.
pub fn mine_embeddings(a: &Matrix, b: &Matrix, cfg: &MiningConfig) -> Result<Candidates> {
    cfg.validate()?;
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Empty("bitext side"));
    }
    let s = cosine_matrix(a, b)?;
    let st = transpose(&s);
    let k = cfg.k.min(a.rows()).min(b.rows());
    let depth_b = cfg.candidate_depth.min(b.rows());
    let depth_a = cfg.candidate_depth.min(a.rows());

    let nn_a: Vec<Vec<f64>> = s.iter_rows().map(|r| top_indices(r, k).into_iter().map(|x| x.1).collect()).collect();
    let nn_b: Vec<Vec<f64>> = st.iter_rows().map(|r| top_indices(r, k).into_iter().map(|x| x.1).collect()).collect();

    let mut cand: BTreeSet<(usize, usize)> = BTreeSet::new();
    if cfg.direction != Direction::Backward {
        for (i, r) in s.iter_rows().enumerate() {
            cand.extend(top_indices(r, depth_b).into_iter().map(|(j, _)| (i, j)));
        }
    }
    if cfg.direction != Direction::Forward {
        for (j, r) in st.iter_rows().enumerate() {
            cand.extend(top_indices(r, depth_a).into_iter().map(|(i, _)| (i, j)));
        }
    }
    let mut degenerate_count = 0;
    let mut pairs = Vec::with_capacity(cand.len());
    for (i, j) in cand {
        let cosine = s.row(i)[j];
        let margin = margin_score(cosine, &nn_a[i], &nn_b[j])?;
        if margin == Margin::Degenerate {
            degenerate_count += 1;
        }
        pairs.push(ScoredPair { a: i, b: j, cosine, margin });
    }
    Ok(Candidates { pairs, degenerate_count, k, depth: cfg.candidate_depth.min(a.rows().max(b.rows())) })
}

/// Encodes both sides with the passage tower and scores candidates.
pub fn mine_pairs<S: AsRef<str>>(
    model: &DualEncoderModel,
    side_a: &[S],
    side_b: &[S],
    cfg: &MiningConfig,
) -> Result<Candidates> {
    let embed = |side: &[S]| -> Result<Matrix> {
        let mut m = Matrix::zeros(side.len(), model.embed_dim());
        for (i, t) in side.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&model.embed_text(Tower::Passage, t.as_ref())?);
        }
        Ok(m)
    };
    mine_embeddings(&embed(side_a)?, &embed(side_b)?, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

fn unordered(p: &(String, String)) -> (String, String) {
    if p.0 <= p.1 {
        p.clone()
    } else {
        (p.1.clone(), p.0.clone())
    }
}

/// Set-based precision, recall and F1 over unordered id pairs.
pub fn f1_eval(predictions: &[(String, String)], gold: &[(String, String)]) -> Prf {
    let pred: BTreeSet<_> = predictions.iter().map(unordered).collect();
    let gold: BTreeSet<_> = gold.iter().map(unordered).collect();
    let tp = pred.intersection(&gold).count();
    Prf::from_counts(tp, pred.len(), gold.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub prf: Prf,
}

/// Threshold maximizing F1 of the rule `score > threshold`.
///
/// `scored` holds `(score, is_gold)` for every candidate; `total_gold` counts
/// all gold pairs of the split, including those missing from the candidates.
/// Candidate thresholds are every midpoint between distinct scores plus one
/// below the minimum and one above the maximum; ties go to the higher threshold.
pub fn tune_threshold(scored: &[(f64, bool)], total_gold: usize) -> Result<ThresholdChoice> {
    if total_gold == 0 {
        return Err(Error::invalid("threshold tuning needs at least one gold pair"));
    }
    if scored.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::NonFinite("candidate score".into()));
    }
    if scored.iter().filter(|s| s.1).count() > total_gold {
        return Err(Error::invalid("more gold candidates than total_gold"));
    }
    let mut v: Vec<(f64, bool)> = scored.to_vec();
    v.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    // start above the maximum: nothing predicted
    let top = v.first().map_or(0.0, |x| x.0) + 1.0;
    let mut best = ThresholdChoice { threshold: top, prf: Prf::from_counts(0, 0, total_gold) };
    let (mut predicted, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < v.len() {
        let s = v[i].0;
        while i < v.len() && v[i].0 == s {
            predicted += 1;
            tp += usize::from(v[i].1);
            i += 1;
        }
        let threshold = if i < v.len() { 0.5 * (s + v[i].0) } else { s - 1.0 };
        let prf = Prf::from_counts(tp, predicted, total_gold);
        // descending thresholds: strict improvement keeps ties at the higher one
        if prf.f1 > best.prf.f1 {
            best = ThresholdChoice { threshold, prf };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn ids(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_score(0.5, &[0.5; 4], &[0.5; 4]).unwrap(), Margin::Score(1.0));
        let Margin::Score(s) = margin_score(0.9, &[0.45; 4], &[0.45; 4]).unwrap() else { panic!() };
        assert!((s - 2.0).abs() < 1e-12);
        assert_eq!(margin_score(0.1, &[-0.5, 0.2], &[0.1, 0.1]).unwrap(), Margin::Degenerate);
        assert!(margin_score(0.1, &[0.5], &[]).is_err());
    }

    #[test]
    fn knn_needs_k_rows() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(knn(&a, &b, 3), Err(Error::NotEnoughData { needed: 3, available: 2 }));
        let nn = knn(&a, &b, 2).unwrap();
        assert_eq!(nn[0].iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn knn_ties_by_index() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -1.0], vec![2.0, 0.0]]).unwrap();
        let nn = knn(&a, &b, 3).unwrap();
        assert_eq!(nn[0].iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 0, 1]);
    }

    #[test]
    fn singleton_sides_give_one_candidate() {
        let a = Matrix::from_rows(&[vec![1.0, 0.2]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.3, 1.0]]).unwrap();
        let c = mine_embeddings(&a, &b, &MiningConfig::default()).unwrap();
        assert_eq!(c.pairs.len(), 1);
        assert_eq!(c.pairs[0].margin, Margin::Score(1.0));
    }

    #[test]
    fn f1_examples() {
        let gold = ids(&[("a1", "b1"), ("a2", "b2"), ("a3", "b3"), ("a4", "b4")]);
        assert_eq!(f1_eval(&gold, &gold), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        let none = f1_eval(&ids(&[("a1", "b2")]), &gold);
        assert_eq!(none, Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        let half = f1_eval(&ids(&[("a1", "b1"), ("b2", "a2"), ("a1", "b3"), ("a2", "b4")]), &gold);
        assert_eq!(half, Prf { precision: 0.5, recall: 0.5, f1: 0.5 });
        assert_eq!(f1_eval(&[], &gold).precision, 0.0);
    }

    #[test]
    fn threshold_examples() {
        let sep = [(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        let t = tune_threshold(&sep, 2).unwrap();
        assert_eq!(t.prf.f1, 1.0);
        assert!((t.threshold - 0.55).abs() < 1e-12);
        let all = [(0.9, true), (0.2, true), (0.5, true)];
        let t = tune_threshold(&all, 3).unwrap();
        assert!(t.threshold < 0.2);
        assert_eq!(t.prf.recall, 1.0);
        assert!(tune_threshold(&sep, 0).is_err());
        assert!(tune_threshold(&[(f64::NAN, true)], 1).is_err());
    }

    #[test]
    fn threshold_recall_counts_missing_golds() {
        let t = tune_threshold(&[(0.9, true)], 2).unwrap();
        assert_eq!(t.prf.recall, 0.5);
    }
}
