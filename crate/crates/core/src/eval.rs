//! Exhaustive dense retrieval and MRR@k / Recall@k.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::encoder::{DualEncoderModel, Tower};
use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::math::{Matrix, UnitRows};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub lang: Lang,
    pub text: String,
}

pub type Qrels = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalTask {
    queries: Vec<Query>,
    corpus: Vec<Passage>,
    qrels: Qrels,
}

impl RetrievalTask {
    pub fn new(queries: Vec<Query>, corpus: Vec<Passage>, qrels: Qrels) -> Result<Self> {
        let qids: BTreeSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
        let pids: BTreeSet<&str> = corpus.iter().map(|p| p.id.as_str()).collect();
        if qids.len() != queries.len() || pids.len() != corpus.len() {
            return Err(Error::invalid("duplicate query or passage id"));
        }
        for (q, rel) in &qrels {
            if !qids.contains(q.as_str()) {
                return Err(Error::invalid(format!("qrels reference unknown query {q}")));
            }
            if let Some(p) = rel.iter().find(|p| !pids.contains(p.as_str())) {
                return Err(Error::invalid(format!("qrels reference unknown passage {p}")));
            }
        }
        for q in &queries {
            if qrels.get(&q.id).map_or(true, BTreeSet::is_empty) {
                return Err(Error::invalid(format!("query {} has no relevant passage", q.id)));
            }
        }
        Ok(RetrievalTask { queries, corpus, qrels })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn corpus(&self) -> &[Passage] {
        &self.corpus
    }

    pub fn qrels(&self) -> &Qrels {
        &self.qrels
    }

    /// Language of a query: that of its smallest-id relevant passage.
    pub fn query_lang(&self, query_id: &str) -> Option<Lang> {
        let rel = self.qrels.get(query_id)?;
        let first = rel.iter().next()?;
        self.corpus.iter().find(|p| &p.id == first).map(|p| p.lang)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// `(passage id, score)`, scores non-increasing.
    pub hits: Vec<(String, f64)>,
}

/// Orders `(score, id)` by descending score, then ascending id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Exact top-`k` of each query row against all passage rows by cosine,
/// ties broken by ascending passage id. Returns `(passage index, score)` lists.
pub fn top_k(
    queries: &Matrix,
    passages: &Matrix,
    passage_ids: &[String],
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if passages.rows() == 0 {
        return Err(Error::Empty("corpus"));
    }
    if passage_ids.len() != passages.rows() {
        return Err(Error::DimensionMismatch { expected: passages.rows(), found: passage_ids.len() });
    }
    if queries.cols() != passages.cols() {
        return Err(Error::DimensionMismatch { expected: passages.cols(), found: queries.cols() });
    }
    let uq = UnitRows::new(queries)?;
    let up = UnitRows::new(passages)?;
    let n = passages.rows();
    let keep = k.min(n);
    let mut out = Vec::with_capacity(queries.rows());
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n);
    for qi in 0..queries.rows() {
        scored.clear();
        let qrow = uq.unit.row(qi);
        scored.extend((0..n).map(|j| (j, crate::math::dot(qrow, up.unit.row(j)))));
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            rank_order((a.1, &passage_ids[a.0]), (b.1, &passage_ids[b.0]))
        };
        if keep < n {
            scored.select_nth_unstable_by(keep - 1, cmp);
            scored.truncate(keep);
        }
        scored.sort_unstable_by(cmp);
        out.push(scored.clone());
    }
    Ok(out)
}

/// Encodes queries with the query tower and the corpus with the passage tower,
/// then ranks the whole corpus for every query.
pub fn search(model: &DualEncoderModel, task: &RetrievalTask, k: usize) -> Result<Vec<RankedList>> {
    if task.corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let d = model.embed_dim();
    let mut qm = Matrix::zeros(task.queries.len(), d);
    for (i, q) in task.queries.iter().enumerate() {
        qm.row_mut(i).copy_from_slice(&model.embed_text(Tower::Query, &q.text)?);
    }
    let mut pm = Matrix::zeros(task.corpus.len(), d);
    for (i, p) in task.corpus.iter().enumerate() {
        pm.row_mut(i).copy_from_slice(&model.embed_text(Tower::Passage, &p.text)?);
    }
    let ids: Vec<String> = task.corpus.iter().map(|p| p.id.clone()).collect();
    let hits = top_k(&qm, &pm, &ids, k)?;
    Ok(task
        .queries
        .iter()
        .zip(hits)
        .map(|(q, h)| RankedList {
            query_id: q.id.clone(),
            hits: h.into_iter().map(|(j, s)| (ids[j].clone(), s)).collect(),
        })
        .collect())
}

fn relevant<'a>(qrels: &'a Qrels, query_id: &str) -> Result<&'a BTreeSet<String>> {
    qrels
        .get(query_id)
        .ok_or_else(|| Error::invalid(format!("query {query_id} missing from qrels")))
}

/// Per-query reciprocal rank of the first relevant passage within the top `k`.
pub fn reciprocal_ranks(ranked: &[RankedList], qrels: &Qrels, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    ranked
        .iter()
        .map(|r| {
            let rel = relevant(qrels, &r.query_id)?;
            Ok(r.hits
                .iter()
                .take(k)
                .position(|(id, _)| rel.contains(id))
                .map_or(0.0, |p| 1.0 / (p + 1) as f64))
        })
        .collect()
}

/// Per-query fraction of relevant passages retrieved within the top `k`.
pub fn recalls(ranked: &[RankedList], qrels: &Qrels, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    ranked
        .iter()
        .map(|r| {
            let rel = relevant(qrels, &r.query_id)?;
            let hit = r.hits.iter().take(k).filter(|(id, _)| rel.contains(id)).count();
            Ok(hit as f64 / rel.len() as f64)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn mrr_at_k(ranked: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64> {
    Ok(mean(&reciprocal_ranks(ranked, qrels, k)?))
}

pub fn recall_at_k(ranked: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64> {
    Ok(mean(&recalls(ranked, qrels, k)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub per_lang: BTreeMap<Lang, Metrics>,
    /// Unweighted mean over languages.
    pub overall: Metrics,
}

impl EvalReport {
    /// Unweighted mean MRR over the given languages (all present ones if empty).
    pub fn mean_mrr(&self, langs: &[Lang]) -> f64 {
        let vals: Vec<f64> = if langs.is_empty() {
            self.per_lang.values().map(|m| m.mrr).collect()
        } else {
            langs.iter().filter_map(|l| self.per_lang.get(l)).map(|m| m.mrr).collect()
        };
        mean(&vals)
    }
}

/// Searches every task and aggregates metrics per query language.
pub fn evaluate(
    model: &DualEncoderModel,
    tasks: &[RetrievalTask],
    k: usize,
) -> Result<(EvalReport, Vec<RankedList>)> {
    let mut per: BTreeMap<Lang, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut runs = Vec::new();
    for task in tasks {
        let ranked = search(model, task, k)?;
        let rr = reciprocal_ranks(&ranked, &task.qrels, k)?;
        let rc = recalls(&ranked, &task.qrels, k)?;
        for ((r, m), c) in ranked.iter().zip(rr).zip(rc) {
            let lang = task
                .query_lang(&r.query_id)
                .ok_or_else(|| Error::invalid(format!("no language for query {}", r.query_id)))?;
            let e = per.entry(lang).or_default();
            e.0.push(m);
            e.1.push(c);
        }
        runs.extend(ranked);
    }
    let per_lang: BTreeMap<Lang, Metrics> = per
        .into_iter()
        .map(|(l, (m, r))| (l, Metrics { mrr: mean(&m), recall: mean(&r) }))
        .collect();
    let mrrs: Vec<f64> = per_lang.values().map(|m| m.mrr).collect();
    let recs: Vec<f64> = per_lang.values().map(|m| m.recall).collect();
    let overall = Metrics { mrr: mean(&mrrs), recall: mean(&recs) };
    Ok((EvalReport { k, per_lang, overall }, runs))
}
