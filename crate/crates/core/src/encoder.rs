//! Hashed character n-gram features and the linear dual encoder.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_NGRAM: usize = 3;
pub const DEFAULT_FEATURE_DIM: usize = 4096;
pub const DEFAULT_EMBED_DIM: usize = 32;

/// Seeded 64-bit hash of a byte string: FNV-1a over the bytes starting from
/// `seed ^ FNV_OFFSET`, followed by the splitmix64 finalizer.
pub fn hash64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Sparse vector with sorted, unique indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn new(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(alloc::format!("duplicate sparse index {}", w[0].0)));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: i as usize + 1 });
            }
        }
        if entries.iter().any(|e| !e.1.is_finite()) {
            return Err(Error::NonFinite("sparse vector".into()));
        }
        Ok(SparseVec { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|e| e.1 * e.1).sum())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            d[i as usize] = v;
        }
        d
    }

    /// Entrywise sum of two sparse vectors of equal dimension.
    pub fn add(&self, other: &SparseVec) -> Result<SparseVec> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut acc: BTreeMap<u32, f64> = self.entries.iter().copied().collect();
        for &(i, v) in &other.entries {
            *acc.entry(i).or_insert(0.0) += v;
        }
        Ok(SparseVec { dim: self.dim, entries: acc.into_iter().collect() })
    }
}

/// Character n-gram hashing featurizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureExtractor {
    pub n: usize,
    pub feature_dim: usize,
    pub hash_seed: u64,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor { n: DEFAULT_NGRAM, feature_dim: DEFAULT_FEATURE_DIM, hash_seed: 0 }
    }
}

impl FeatureExtractor {
    pub fn new(n: usize, feature_dim: usize, hash_seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n-gram length must be >= 1"));
        }
        if feature_dim == 0 || feature_dim > u32::MAX as usize {
            return Err(Error::invalid("feature dimension out of range"));
        }
        Ok(FeatureExtractor { n, feature_dim, hash_seed })
    }

    /// Character n-grams of each lowercased whitespace token padded as `<tok>`.
    /// A padded token shorter than `n` is emitted whole.
    pub fn ngrams(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut out = Vec::new();
        for tok in lower.split_whitespace() {
            let padded: Vec<char> = core::iter::once('<')
                .chain(tok.chars())
                .chain(core::iter::once('>'))
                .collect();
            if padded.len() <= self.n {
                out.push(padded.iter().collect());
            } else {
                out.extend(padded.windows(self.n).map(|w| w.iter().collect::<String>()));
            }
        }
        out
    }

    pub fn bucket(&self, gram: &str) -> u32 {
        (hash64(self.hash_seed, gram.as_bytes()) % self.feature_dim as u64) as u32
    }

    /// Hashed n-gram counts, L2-normalized.
    pub fn featurize(&self, text: &str) -> Result<SparseVec> {
        if text.trim().is_empty() {
            return Err(Error::Empty("text"));
        }
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for g in self.ngrams(text) {
            *counts.entry(self.bucket(&g)).or_insert(0.0) += 1.0;
        }
        let norm = libm::sqrt(counts.values().map(|c| c * c).sum());
        let entries = counts.into_iter().map(|(i, c)| (i, c / norm)).collect();
        Ok(SparseVec { dim: self.feature_dim, entries })
    }
}

/// One tower: `z = W x` with `W` of shape `embed_dim × feature_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    embed_dim: usize,
    feature_dim: usize,
    weights: Vec<f64>,
}

/// Gradient with respect to a tower's weights, restricted to the columns a
/// single input touched.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub embed_dim: usize,
    pub columns: Vec<(u32, Vec<f64>)>,
}

impl LinearEncoder {
    pub fn from_weights(embed_dim: usize, feature_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if embed_dim == 0 || feature_dim == 0 {
            return Err(Error::invalid("encoder dimensions must be >= 1"));
        }
        if weights.len() != embed_dim * feature_dim {
            return Err(Error::DimensionMismatch {
                expected: embed_dim * feature_dim,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("encoder weights".into()));
        }
        Ok(LinearEncoder { embed_dim, feature_dim, weights })
    }

    /// Uniform initialization in `[-1/sqrt(feature_dim), 1/sqrt(feature_dim)]`.
    pub fn init<R: Rng>(embed_dim: usize, feature_dim: usize, rng: &mut R) -> Result<Self> {
        let a = 1.0 / libm::sqrt(feature_dim as f64);
        let weights = (0..embed_dim * feature_dim).map(|_| rng.gen_range(-a..=a)).collect();
        Self::from_weights(embed_dim, feature_dim, weights)
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.feature_dim + col]
    }

    fn check(&self, x: &SparseVec) -> Result<()> {
        if x.dim() != self.feature_dim {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, found: x.dim() });
        }
        Ok(())
    }

    pub fn encode(&self, x: &SparseVec) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut z = vec![0.0; self.embed_dim];
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &self.weights[r * self.feature_dim..(r + 1) * self.feature_dim];
            *zr = x.entries.iter().map(|&(c, v)| row[c as usize] * v).sum();
        }
        Ok(z)
    }

    /// `dL/dW = grad_z ⊗ x`, populated only on the columns where `x` is nonzero.
    pub fn backprop(&self, x: &SparseVec, grad_z: &[f64]) -> Result<ParamGrad> {
        self.check(x)?;
        if grad_z.len() != self.embed_dim {
            return Err(Error::DimensionMismatch { expected: self.embed_dim, found: grad_z.len() });
        }
        let columns = x
            .entries
            .iter()
            .map(|&(c, v)| (c, grad_z.iter().map(|g| g * v).collect()))
            .collect();
        Ok(ParamGrad { embed_dim: self.embed_dim, columns })
    }
}

/// Dense gradient buffer for one tower.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerGrad {
    embed_dim: usize,
    feature_dim: usize,
    data: Vec<f64>,
    touched: bool,
}

impl TowerGrad {
    pub fn zeros_like(enc: &LinearEncoder) -> Self {
        TowerGrad {
            embed_dim: enc.embed_dim,
            feature_dim: enc.feature_dim,
            data: vec![0.0; enc.weights.len()],
            touched: false,
        }
    }

    /// Whether any contribution has been accumulated.
    pub fn is_touched(&self) -> bool {
        self.touched
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.feature_dim + col]
    }

    /// `self += scale · grad_z ⊗ x`.
    pub fn add_outer(&mut self, grad_z: &[f64], x: &SparseVec, scale: f64) {
        self.touched = true;
        for (r, g) in grad_z.iter().enumerate() {
            let gs = g * scale;
            if gs == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.feature_dim..(r + 1) * self.feature_dim];
            for &(c, v) in &x.entries {
                row[c as usize] += gs * v;
            }
        }
    }

    pub fn add_param_grad(&mut self, g: &ParamGrad, scale: f64) {
        self.touched = true;
        for (c, col) in &g.columns {
            for (r, v) in col.iter().enumerate() {
                self.data[r * self.feature_dim + *c as usize] += scale * v;
            }
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &TowerGrad, scale: f64) -> Result<()> {
        if self.data.len() != other.data.len() {
            return Err(Error::DimensionMismatch { expected: self.data.len(), found: other.data.len() });
        }
        if !other.touched {
            return Ok(());
        }
        self.touched = true;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tower {
    Query,
    Passage,
}

/// Query and passage towers over a shared featurizer.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoderModel {
    pub extractor: FeatureExtractor,
    pub query: LinearEncoder,
    pub passage: LinearEncoder,
}

impl DualEncoderModel {
    pub fn new(extractor: FeatureExtractor, query: LinearEncoder, passage: LinearEncoder) -> Result<Self> {
        for t in [&query, &passage] {
            if t.feature_dim != extractor.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: extractor.feature_dim,
                    found: t.feature_dim,
                });
            }
        }
        if query.embed_dim != passage.embed_dim {
            return Err(Error::DimensionMismatch { expected: query.embed_dim, found: passage.embed_dim });
        }
        Ok(DualEncoderModel { extractor, query, passage })
    }

    /// Independently initialized towers, query tower drawn first.
    pub fn init<R: Rng>(extractor: FeatureExtractor, embed_dim: usize, rng: &mut R) -> Result<Self> {
        let query = LinearEncoder::init(embed_dim, extractor.feature_dim, rng)?;
        let passage = LinearEncoder::init(embed_dim, extractor.feature_dim, rng)?;
        Self::new(extractor, query, passage)
    }

    /// Both towers start from the same weights.
    pub fn init_shared<R: Rng>(extractor: FeatureExtractor, embed_dim: usize, rng: &mut R) -> Result<Self> {
        let tower = LinearEncoder::init(embed_dim, extractor.feature_dim, rng)?;
        Self::new(extractor, tower.clone(), tower)
    }

    pub fn embed_dim(&self) -> usize {
        self.query.embed_dim
    }

    pub fn tower(&self, t: Tower) -> &LinearEncoder {
        match t {
            Tower::Query => &self.query,
            Tower::Passage => &self.passage,
        }
    }

    pub fn embed_text(&self, tower: Tower, text: &str) -> Result<Vec<f64>> {
        self.tower(tower).encode(&self.extractor.featurize(text)?)
    }
}
