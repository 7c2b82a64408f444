//! Dataset directories written by `gen-data` and read back by the other
//! commands.
//!
//! ```text
//! spec.conf                       the experiment spec that produced the data
//! train/ir_pairs.tsv
//! train/parallel-<a>-<b>.tsv      one per covered language
//! train/mono-<l>.jsonl            partial-parallel only
//! eval/<l>/{corpus.jsonl,queries.jsonl,qrels.tsv}
//! bitext/{train,test}/{side_a.jsonl,side_b.jsonl,gold.tsv}
//! manifest.json                   every file above with size and sha256
//! ```
//!
//! Readers take file order from the manifest and verify every checksum.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xlir_core::eval::{Passage, RetrievalTask};
use xlir_core::synth::BitextTask;
use xlir_core::trainer::TrainData;

use crate::experiment::{Dataset, ExperimentSpec};
use crate::formats::{self, FormatError};

pub const MANIFEST: &str = "manifest.json";
pub const SPEC_FILE: &str = "spec.conf";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Corrupt(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Core(#[from] xlir_core::Error),
}

type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub scenario: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

/// Writes one file and remembers it for the manifest.
struct Emitter<'a> {
    root: &'a Path,
    files: Vec<FileEntry>,
}

impl Emitter<'_> {
    fn emit<F>(&mut self, rel: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::result::Result<(), FormatError>,
    {
        let path = self.root.join(rel);
        let mut buf = Vec::new();
        body(&mut buf).map_err(|source| StoreError::Format { path: path.clone(), source })?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, &buf).map_err(io_err(&path))?;
        self.files.push(FileEntry { path: rel.to_owned(), bytes: buf.len() as u64, sha256: sha256_hex(&buf) });
        Ok(())
    }
}

fn bitext_side(ids: &[(String, String)], lang: xlir_core::Lang) -> Vec<Passage> {
    ids.iter().map(|(id, text)| Passage { id: id.clone(), lang, text: text.clone() }).collect()
}

/// Writes `data` under `root` and returns the manifest, also written there.
pub fn write_dataset(root: &Path, spec: &ExperimentSpec, data: &Dataset) -> Result<Manifest> {
    let mut e = Emitter { root, files: Vec::new() };
    e.emit(SPEC_FILE, |w| {
        w.extend_from_slice(crate::config::render(spec).as_bytes());
        Ok(())
    })?;
    e.emit("train/ir_pairs.tsv", |w| formats::write_ir_pairs(w, &data.train.ir))?;
    // empty corpora carry no data and have no file; the samplers skip them anyway
    for c in data.train.parallel.iter().filter(|c| !c.pairs.is_empty()) {
        e.emit(&format!("train/parallel-{}-{}.tsv", c.lang_a, c.lang_b), |w| formats::write_parallel(w, c))?;
    }
    for c in data.train.nonparallel.iter().filter(|c| !c.sentences.is_empty()) {
        e.emit(&format!("train/mono-{}.jsonl", c.lang), |w| formats::write_mono(w, c))?;
    }
    for task in &data.eval {
        let lang = task.corpus().first().map(|p| p.lang).ok_or_else(|| StoreError::Corrupt("empty eval corpus".into()))?;
        e.emit(&format!("eval/{lang}/corpus.jsonl"), |w| formats::write_corpus(w, task.corpus()))?;
        e.emit(&format!("eval/{lang}/queries.jsonl"), |w| formats::write_queries(w, task.queries()))?;
        e.emit(&format!("eval/{lang}/qrels.tsv"), |w| formats::write_qrels(w, task.qrels()))?;
    }
    for (split, t) in [("train", &data.bitext_train), ("test", &data.bitext_test)] {
        e.emit(&format!("bitext/{split}/side_a.jsonl"), |w| formats::write_corpus(w, &bitext_side(&t.side_a, t.lang_a)))?;
        e.emit(&format!("bitext/{split}/side_b.jsonl"), |w| formats::write_corpus(w, &bitext_side(&t.side_b, t.lang_b)))?;
        e.emit(&format!("bitext/{split}/gold.tsv"), |w| formats::write_id_pairs(w, &t.gold))?;
    }
    let manifest = Manifest { seed: spec.seed, scenario: spec.scenario.name().to_owned(), files: e.files };
    let path = root.join(MANIFEST);
    let mut buf = Vec::new();
    formats::write_json(&mut buf, &manifest).map_err(|source| StoreError::Format { path: path.clone(), source })?;
    fs::write(&path, buf).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads a dataset directory back, checking every file against the manifest.
pub struct DatasetReader {
    root: PathBuf,
    pub manifest: Manifest,
}

impl DatasetReader {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let f = fs::File::open(&path).map_err(io_err(&path))?;
        let manifest = formats::read_json(BufReader::new(f)).map_err(|source| StoreError::Format { path, source })?;
        Ok(DatasetReader { root: root.to_owned(), manifest })
    }

    /// Contents of `rel` after checking size and checksum.
    fn bytes(&self, rel: &str) -> Result<Vec<u8>> {
        let entry = self
            .manifest
            .files
            .iter()
            .find(|f| f.path == rel)
            .ok_or_else(|| StoreError::Corrupt(format!("{rel} is not in the manifest")))?;
        let path = self.root.join(rel);
        let buf = fs::read(&path).map_err(io_err(&path))?;
        if buf.len() as u64 != entry.bytes || sha256_hex(&buf) != entry.sha256 {
            return Err(StoreError::Corrupt(format!("{rel} does not match its manifest checksum")));
        }
        Ok(buf)
    }

    fn parse<T>(&self, rel: &str, f: impl FnOnce(Cursor<Vec<u8>>) -> std::result::Result<T, FormatError>) -> Result<T> {
        let buf = self.bytes(rel)?;
        f(Cursor::new(buf)).map_err(|source| StoreError::Format { path: self.root.join(rel), source })
    }

    fn paths(&self, prefix: &str, suffix: &str) -> Vec<String> {
        self.manifest
            .files
            .iter()
            .filter(|f| f.path.starts_with(prefix) && f.path.ends_with(suffix))
            .map(|f| f.path.clone())
            .collect()
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        let text = String::from_utf8(self.bytes(SPEC_FILE)?)
            .map_err(|_| StoreError::Corrupt(format!("{SPEC_FILE} is not UTF-8")))?;
        Ok(crate::config::parse(&text)?)
    }

    pub fn train(&self) -> Result<TrainData> {
        let ir = self.parse("train/ir_pairs.tsv", formats::read_ir_pairs)?;
        let parallel = self
            .paths("train/parallel-", ".tsv")
            .iter()
            .map(|p| self.parse(p, formats::read_parallel))
            .collect::<Result<_>>()?;
        let nonparallel =
            self.paths("train/mono-", ".jsonl").iter().map(|p| self.parse(p, formats::read_mono)).collect::<Result<_>>()?;
        Ok(TrainData { ir, parallel, nonparallel })
    }

    pub fn eval(&self) -> Result<Vec<RetrievalTask>> {
        self.paths("eval/", "/corpus.jsonl")
            .iter()
            .map(|p| {
                let dir = p.trim_end_matches("corpus.jsonl");
                let corpus = self.parse(p, formats::read_corpus)?;
                let queries = self.parse(&format!("{dir}queries.jsonl"), formats::read_queries)?;
                let qrels = self.parse(&format!("{dir}qrels.tsv"), formats::read_qrels)?;
                Ok(RetrievalTask::new(queries, corpus, qrels)?)
            })
            .collect()
    }

    pub fn bitext(&self, split: &str) -> Result<BitextTask> {
        let side = |name: &str| -> Result<(xlir_core::Lang, Vec<(String, String)>)> {
            let rows = self.parse(&format!("bitext/{split}/{name}.jsonl"), formats::read_corpus)?;
            let lang = rows.first().map(|p| p.lang).ok_or_else(|| StoreError::Corrupt(format!("empty bitext {name}")))?;
            Ok((lang, rows.into_iter().map(|p| (p.id, p.text)).collect()))
        };
        let (lang_a, side_a) = side("side_a")?;
        let (lang_b, side_b) = side("side_b")?;
        let gold = self.parse(&format!("bitext/{split}/gold.tsv"), formats::read_id_pairs)?;
        Ok(BitextTask { lang_a, lang_b, side_a, side_b, gold })
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset {
            train: self.train()?,
            eval: self.eval()?,
            bitext_train: self.bitext("train")?,
            bitext_test: self.bitext("test")?,
        })
    }
}
