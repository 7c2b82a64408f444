//! On-disk formats. Every writer is deterministic and every reader accepts
//! exactly what the matching writer emits, so write, read, write is
//! byte-stable.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use xlir_core::eval::{EvalReport, Metrics, Passage, Qrels, Query, RankedList};
use xlir_core::optim::{AdamWState, Moments};
use xlir_core::trainer::{IrPair, MonoCorpus, ParallelCorpus, StepMetrics};
use xlir_core::{DualEncoderModel, FeatureExtractor, Lang, LinearEncoder};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XLCR";
pub const OPTIMIZER_MAGIC: &[u8; 4] = b"XLCO";
pub const FORMAT_VERSION: u32 = 1;
pub const OPTIMIZER_SUFFIX: &str = ".adamw";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] xlir_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, FormatError>;

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

/// Fixed header shared by checkpoints and optimizer files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub feature_dim: u32,
    pub embed_dim: u32,
    pub ngram: u32,
    pub hash_seed: u64,
}

impl Header {
    pub fn of(model: &DualEncoderModel) -> Self {
        Header {
            feature_dim: model.extractor.feature_dim as u32,
            embed_dim: model.embed_dim() as u32,
            ngram: model.extractor.n as u32,
            hash_seed: model.extractor.hash_seed,
        }
    }

    fn params(&self) -> usize {
        self.feature_dim as usize * self.embed_dim as usize
    }

    fn write(&self, magic: &[u8; 4], w: &mut impl Write) -> io::Result<()> {
        w.write_all(magic)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.feature_dim.to_le_bytes())?;
        w.write_all(&self.embed_dim.to_le_bytes())?;
        w.write_all(&self.ngram.to_le_bytes())?;
        w.write_all(&self.hash_seed.to_le_bytes())
    }

    fn read(magic: &[u8; 4], r: &mut impl Read) -> Result<Self> {
        let mut m = [0u8; 4];
        r.read_exact(&mut m)?;
        if &m != magic {
            return Err(FormatError::Magic { expected: *magic, found: m });
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(FormatError::Version(version));
        }
        Ok(Header { feature_dim: read_u32(r)?, embed_dim: read_u32(r)?, ngram: read_u32(r)?, hash_seed: read_u64(r)? })
    }
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut b = [0u8; 1];
    if r.read(&mut b)? != 0 {
        return Err(FormatError::Mismatch("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn write_checkpoint(w: &mut impl Write, model: &DualEncoderModel) -> Result<()> {
    Header::of(model).write(CHECKPOINT_MAGIC, w)?;
    write_f64s(w, model.query.weights())?;
    write_f64s(w, model.passage.weights())?;
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<DualEncoderModel> {
    let h = Header::read(CHECKPOINT_MAGIC, r)?;
    let fx = FeatureExtractor::new(h.ngram as usize, h.feature_dim as usize, h.hash_seed)?;
    let (d, f) = (h.embed_dim as usize, h.feature_dim as usize);
    let query = LinearEncoder::from_weights(d, f, read_f64s(r, h.params())?)?;
    let passage = LinearEncoder::from_weights(d, f, read_f64s(r, h.params())?)?;
    expect_eof(r)?;
    Ok(DualEncoderModel::new(fx, query, passage)?)
}

/// Optimizer state for `model`, under the checkpoint's header.
pub fn write_optimizer(w: &mut impl Write, model: &DualEncoderModel, state: &AdamWState) -> Result<()> {
    Header::of(model).write(OPTIMIZER_MAGIC, w)?;
    for m in [&state.query, &state.passage] {
        w.write_all(&m.step.to_le_bytes())?;
        write_f64s(w, &m.m)?;
        write_f64s(w, &m.v)?;
    }
    Ok(())
}

/// Reads optimizer state and checks that it belongs to `model`.
pub fn read_optimizer(r: &mut impl Read, model: &DualEncoderModel) -> Result<AdamWState> {
    let h = Header::read(OPTIMIZER_MAGIC, r)?;
    if h != Header::of(model) {
        return Err(FormatError::Mismatch(format!("optimizer header {h:?} does not match the checkpoint")));
    }
    let mut tower = || -> Result<Moments> {
        let step = read_u64(r)?;
        Ok(Moments { step, m: read_f64s(r, h.params())?, v: read_f64s(r, h.params())? })
    };
    let state = AdamWState { query: tower()?, passage: tower()? };
    expect_eof(r)?;
    Ok(state)
}

pub const TRACE_HEADER: &str = "step,loss_ir,loss_sema,loss_lang,loss_joint";

pub fn write_trace(w: &mut impl Write, trace: &[StepMetrics]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for m in trace {
        writeln!(w, "{},{},{},{},{}", m.step, m.loss_ir, m.loss_sema, m.loss_lang, m.loss_joint)?;
    }
    Ok(())
}

pub fn read_trace(r: impl BufRead) -> Result<Vec<StepMetrics>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(parse_err(1, "missing trace header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(i + 1, "expected 5 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
        out.push(StepMetrics {
            step: f[0].parse().map_err(|_| parse_err(i + 1, "bad step"))?,
            loss_ir: num(f[1])?,
            loss_sema: num(f[2])?,
            loss_lang: num(f[3])?,
            loss_joint: num(f[4])?,
        });
    }
    Ok(out)
}

/// Rejects fields that would break a TSV row.
fn tsv_field(s: &str) -> Result<&str> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(FormatError::Mismatch(format!("field {s:?} contains a tab or line break")));
    }
    Ok(s)
}

fn tsv_rows(r: impl BufRead, cols: usize) -> Result<Vec<Vec<String>>> {
    r.lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line?;
            let f: Vec<String> = line.split('\t').map(str::to_owned).collect();
            if f.len() != cols {
                return Err(parse_err(i + 1, format!("expected {cols} tab-separated columns, found {}", f.len())));
            }
            Ok(f)
        })
        .collect()
}

fn parse_lang(line: usize, s: &str) -> Result<Lang> {
    s.parse().map_err(|_| parse_err(line, format!("bad language tag {s:?}")))
}

pub fn write_parallel(w: &mut impl Write, c: &ParallelCorpus) -> Result<()> {
    for (a, b) in &c.pairs {
        writeln!(w, "{}\t{}\t{}\t{}", c.lang_a, c.lang_b, tsv_field(a)?, tsv_field(b)?)?;
    }
    Ok(())
}

pub fn read_parallel(r: impl BufRead) -> Result<ParallelCorpus> {
    let rows = tsv_rows(r, 4)?;
    let first = rows.first().ok_or_else(|| parse_err(1, "empty parallel file"))?;
    let (lang_a, lang_b) = (parse_lang(1, &first[0])?, parse_lang(1, &first[1])?);
    let mut pairs = Vec::with_capacity(rows.len());
    for (i, f) in rows.into_iter().enumerate() {
        if parse_lang(i + 1, &f[0])? != lang_a || parse_lang(i + 1, &f[1])? != lang_b {
            return Err(parse_err(i + 1, "language pair changes within the file"));
        }
        let mut f = f.into_iter().skip(2);
        pairs.push((f.next().unwrap(), f.next().unwrap()));
    }
    Ok(ParallelCorpus { lang_a, lang_b, pairs })
}

/// Retrieval training pairs: `query \t passage`.
pub fn write_ir_pairs(w: &mut impl Write, pairs: &[IrPair]) -> Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}", tsv_field(&p.query)?, tsv_field(&p.passage)?)?;
    }
    Ok(())
}

pub fn read_ir_pairs(r: impl BufRead) -> Result<Vec<IrPair>> {
    Ok(tsv_rows(r, 2)?
        .into_iter()
        .map(|f| {
            let mut f = f.into_iter();
            IrPair { query: f.next().unwrap(), passage: f.next().unwrap() }
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    lang: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct QueryRecord {
    id: String,
    text: String,
}

fn write_jsonl<T: Serialize>(w: &mut impl Write, rows: impl IntoIterator<Item = T>) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut *w, &row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> Result<Vec<T>> {
    r.lines()
        .enumerate()
        .map(|(i, line)| serde_json::from_str(&line?).map_err(|e| parse_err(i + 1, e.to_string())))
        .collect()
}

/// Corpus JSONL: `{"id", "lang", "text"}` per line.
pub fn write_corpus(w: &mut impl Write, passages: &[Passage]) -> Result<()> {
    write_jsonl(
        w,
        passages.iter().map(|p| CorpusRecord { id: p.id.clone(), lang: p.lang.to_string(), text: p.text.clone() }),
    )
}

pub fn read_corpus(r: impl BufRead) -> Result<Vec<Passage>> {
    read_jsonl::<CorpusRecord>(r)?
        .into_iter()
        .enumerate()
        .map(|(i, c)| Ok(Passage { id: c.id, lang: parse_lang(i + 1, &c.lang)?, text: c.text }))
        .collect()
}

pub fn write_queries(w: &mut impl Write, queries: &[Query]) -> Result<()> {
    write_jsonl(w, queries.iter().map(|q| QueryRecord { id: q.id.clone(), text: q.text.clone() }))
}

pub fn read_queries(r: impl BufRead) -> Result<Vec<Query>> {
    Ok(read_jsonl::<QueryRecord>(r)?.into_iter().map(|q| Query { id: q.id, text: q.text }).collect())
}

/// Non-parallel sentences in corpus JSONL, ids `<lang>-m<index>`.
pub fn write_mono(w: &mut impl Write, c: &MonoCorpus) -> Result<()> {
    write_jsonl(
        w,
        c.sentences.iter().enumerate().map(|(i, s)| CorpusRecord {
            id: format!("{}-m{i:06}", c.lang),
            lang: c.lang.to_string(),
            text: s.clone(),
        }),
    )
}

pub fn read_mono(r: impl BufRead) -> Result<MonoCorpus> {
    let rows = read_corpus(r)?;
    let lang = rows.first().ok_or_else(|| parse_err(1, "empty monolingual file"))?.lang;
    if rows.iter().any(|p| p.lang != lang) {
        return Err(FormatError::Mismatch("monolingual file mixes languages".into()));
    }
    Ok(MonoCorpus { lang, sentences: rows.into_iter().map(|p| p.text).collect() })
}

/// Qrels TSV: `query_id \t passage_id \t 1`.
pub fn write_qrels(w: &mut impl Write, qrels: &Qrels) -> Result<()> {
    for (q, rel) in qrels {
        for p in rel {
            writeln!(w, "{}\t{}\t1", tsv_field(q)?, tsv_field(p)?)?;
        }
    }
    Ok(())
}

pub fn read_qrels(r: impl BufRead) -> Result<Qrels> {
    let mut out = Qrels::new();
    for (i, f) in tsv_rows(r, 3)?.into_iter().enumerate() {
        if f[2] != "1" {
            return Err(parse_err(i + 1, "relevance must be 1"));
        }
        let mut f = f.into_iter();
        let q = f.next().unwrap();
        out.entry(q).or_default().insert(f.next().unwrap());
    }
    Ok(out)
}

/// Id pairs, one `id_a \t id_b` per line. Used for bitext gold.
pub fn write_id_pairs(w: &mut impl Write, pairs: &[(String, String)]) -> Result<()> {
    for (a, b) in pairs {
        writeln!(w, "{}\t{}", tsv_field(a)?, tsv_field(b)?)?;
    }
    Ok(())
}

pub fn read_id_pairs(r: impl BufRead) -> Result<Vec<(String, String)>> {
    Ok(tsv_rows(r, 2)?
        .into_iter()
        .map(|f| {
            let mut f = f.into_iter();
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect())
}

/// Run file: `qid pid rank score`, ranks from 1, scores to 9 decimals.
pub fn write_run(w: &mut impl Write, runs: &[RankedList]) -> Result<()> {
    for r in runs {
        for (rank, (pid, score)) in r.hits.iter().enumerate() {
            if r.query_id.contains(char::is_whitespace) || pid.contains(char::is_whitespace) {
                return Err(FormatError::Mismatch("run file ids must not contain whitespace".into()));
            }
            writeln!(w, "{} {} {} {:.9}", r.query_id, pid, rank + 1, score)?;
        }
    }
    Ok(())
}

pub fn read_run(r: impl BufRead) -> Result<Vec<RankedList>> {
    let mut out: Vec<RankedList> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 4 {
            return Err(parse_err(i + 1, "expected `qid pid rank score`"));
        }
        let rank: usize = f[2].parse().map_err(|_| parse_err(i + 1, "bad rank"))?;
        let score: f64 = f[3].parse().map_err(|_| parse_err(i + 1, "bad score"))?;
        if out.last().map_or(true, |l| l.query_id != f[0]) {
            out.push(RankedList { query_id: f[0].to_owned(), hits: Vec::new() });
        }
        let list = out.last_mut().unwrap();
        if rank != list.hits.len() + 1 {
            return Err(parse_err(i + 1, "ranks must count up from 1"));
        }
        list.hits.push((f[1].to_owned(), score));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub mrr: f64,
    pub recall: f64,
}

impl From<Metrics> for MetricsJson {
    fn from(m: Metrics) -> Self {
        MetricsJson { mrr: m.mrr, recall: m.recall }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReportJson {
    pub k: usize,
    pub per_lang: BTreeMap<String, MetricsJson>,
    pub overall: MetricsJson,
}

impl From<&EvalReport> for EvalReportJson {
    fn from(r: &EvalReport) -> Self {
        EvalReportJson {
            k: r.k,
            per_lang: r.per_lang.iter().map(|(l, m)| (l.to_string(), (*m).into())).collect(),
            overall: r.overall.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfJson {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<xlir_core::mining::Prf> for PrfJson {
    fn from(p: xlir_core::mining::Prf) -> Self {
        PrfJson { precision: p.precision, recall: p.recall, f1: p.f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSplit {
    pub threshold: f64,
    pub train: PrfJson,
    pub test: PrfJson,
}

/// Mining report. The top-level figures are margin scoring on the test split
/// at the threshold tuned on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReportJson {
    pub k: usize,
    pub candidate_depth: usize,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate_count: usize,
    pub margin: ScoredSplit,
    pub cosine: ScoredSplit,
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(w: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(r: impl Read) -> Result<T> {
    Ok(serde_json::from_reader(r)?)
}

/// Scored pairs TSV: `id_a \t id_b \t score`, score to 9 decimals.
pub fn write_scored_pairs(w: &mut impl Write, pairs: &[(String, String, f64)]) -> Result<()> {
    for (a, b, s) in pairs {
        writeln!(w, "{}\t{}\t{s:.9}", tsv_field(a)?, tsv_field(b)?)?;
    }
    Ok(())
}

pub fn read_scored_pairs(r: impl BufRead) -> Result<Vec<(String, String, f64)>> {
    tsv_rows(r, 3)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let s = f[2].parse().map_err(|_| parse_err(i + 1, "bad score"))?;
            let mut f = f.into_iter();
            Ok((f.next().unwrap(), f.next().unwrap(), s))
        })
        .collect()
}
