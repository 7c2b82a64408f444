//! Subcommands. Each one reads its inputs, writes its outputs and returns a
//! [`CliError`] whose [`CliError::exit_code`] tells config, data and numeric
//! failures apart.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use xlir_core::gradcheck::{self, CheckOptions, CheckReport};
use xlir_core::optim::AdamWState;
use xlir_core::{trainer, DualEncoderModel, Error, Lang};

use crate::config::{self, ConfigError};
use crate::experiment::{self, ExperimentSpec, Scenario};
use crate::formats::{self, EvalReportJson, FormatError, MiningReportJson, ScoredSplit};
use crate::store::{self, DatasetReader, StoreError};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::UnknownLanguage(_) => CliError::Config(e.to_string()),
            Error::NonFinite(_) | Error::ZeroNorm(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(core) => core.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Core(core) => core.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Config(c) => c.into(),
            StoreError::Core(core) => core.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), FormatError>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, buf).map_err(io(path))
}

#[derive(Debug, Parser)]
#[command(name = "xlir", about = "Cross-lingual contrastive retrieval lab", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world, training corpora and evaluation tasks.
    GenData(GenDataArgs),
    /// Train a dual encoder on a generated dataset.
    Train(TrainArgs),
    /// Evaluate retrieval on a dataset's evaluation tasks.
    EvalIr(EvalArgs),
    /// Mine the dataset's bitext task with margin scoring.
    MineBitext(MineArgs),
    /// Finite-difference check of every loss gradient.
    Gradcheck(GradcheckArgs),
    /// Repeat generate, train and evaluate over a grid of settings.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
}

impl SpecArgs {
    /// Overlays the config file and flags on `spec`.
    fn apply(&self, mut spec: ExperimentSpec) -> Result<ExperimentSpec> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            config::parse_into(&mut spec, &text)?;
        }
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if let Some(s) = &self.scenario {
            spec.scenario = s.parse::<Scenario>()?;
        }
        if let Some(k) = self.k {
            spec.k = k;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_values_t = gradcheck::DEFAULT_SIZES)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    ParallelSize,
    NonparallelSize,
    LangpairTopology,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::ParallelSize => "parallel-size",
            Axis::NonparallelSize => "nonparallel-size",
            Axis::LangpairTopology => "langpair-topology",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Grid values: sizes, or topologies written `l0-l1,l0-l2`.
    #[arg(long, num_args = 1.., required = true)]
    pub grid: Vec<String>,
    /// Seeds 0..seeds, offset by --seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// CSV output file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a).map(drop),
        Command::Train(a) => train(&a).map(drop),
        Command::EvalIr(a) => eval_ir(&a).map(drop),
        Command::MineBitext(a) => mine_bitext(&a).map(drop),
        Command::Gradcheck(a) => {
            let reports = gradcheck(&a)?;
            for r in &reports {
                println!("{}", r.summary());
            }
            match reports.iter().filter(|r| !r.passed()).count() {
                0 => Ok(()),
                n => Err(CliError::Numeric(format!("{n} gradient checks failed"))),
            }
        }
        Command::Sweep(a) => sweep(&a).map(drop),
    }
}

pub fn gen_data(a: &GenDataArgs) -> Result<store::Manifest> {
    let spec = a.spec.apply(ExperimentSpec::default())?;
    let (_, data) = experiment::generate(&spec)?;
    Ok(store::write_dataset(&a.out, &spec, &data)?)
}

/// Spec stored with the data, overlaid with the command's flags.
fn data_spec(reader: &DatasetReader, args: &SpecArgs) -> Result<ExperimentSpec> {
    let base = reader.spec()?;
    let data_seed = base.seed;
    let mut spec = args.apply(base)?;
    // --seed reseeds the trainer only; the data are already fixed
    spec.seed = data_seed;
    spec.world.seed = data_seed;
    Ok(spec)
}

pub const MODEL_FILE: &str = "model.xlcr";
pub const TRACE_FILE: &str = "trace.csv";

pub fn optimizer_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(formats::OPTIMIZER_SUFFIX);
    PathBuf::from(s)
}

pub fn save_model(path: &Path, model: &DualEncoderModel, state: &AdamWState) -> Result<()> {
    write_file(path, |w| formats::write_checkpoint(w, model))?;
    write_file(&optimizer_path(path), |w| formats::write_optimizer(w, model, state))
}

pub fn load_model(path: &Path) -> Result<DualEncoderModel> {
    let f = fs::File::open(path).map_err(io(path))?;
    Ok(formats::read_checkpoint(&mut BufReader::new(f))?)
}

pub struct TrainResult {
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
}

pub fn train(a: &TrainArgs) -> Result<TrainResult> {
    let reader = DatasetReader::open(&a.data)?;
    let spec = data_spec(&reader, &a.spec)?;
    let data = reader.train()?;
    let cfg = spec.effective_train();
    let ckpt_dir = a.out.join("checkpoints");
    let mut save_err = None;
    let out = trainer::train_loop(&data, &cfg, |step, model, state| {
        save_model(&ckpt_dir.join(format!("step-{step:06}.xlcr")), model, state).map_err(|e| {
            save_err = Some(e);
            Error::invalid("checkpoint write failed")
        })
    });
    let out = match (out, save_err) {
        (_, Some(e)) => return Err(e),
        (out, None) => out?,
    };
    let checkpoint = a.out.join(MODEL_FILE);
    save_model(&checkpoint, &out.model, &out.state)?;
    let trace = a.out.join(TRACE_FILE);
    write_file(&trace, |w| formats::write_trace(w, &out.trace))?;
    write_file(&a.out.join(store::SPEC_FILE), |w| {
        w.extend_from_slice(config::render(&spec).as_bytes());
        Ok(())
    })?;
    Ok(TrainResult { checkpoint, trace })
}

/// The checkpoint must agree with the featurizer and sizes the spec asks for.
fn check_compatible(model: &DualEncoderModel, spec: &ExperimentSpec) -> Result<()> {
    let t = &spec.train;
    let want = (t.ngram, t.feature_dim, t.embed_dim, t.hash_seed);
    let have = (model.extractor.n, model.extractor.feature_dim, model.embed_dim(), model.extractor.hash_seed);
    if want != have {
        return Err(CliError::Data(format!(
            "checkpoint (ngram, feature_dim, embed_dim, hash_seed) = {have:?} but the configuration expects {want:?}"
        )));
    }
    Ok(())
}

pub const REPORT_FILE: &str = "report.json";
pub const RUN_FILE: &str = "run.txt";

pub fn eval_ir(a: &EvalArgs) -> Result<EvalReportJson> {
    let reader = DatasetReader::open(&a.data)?;
    let spec = data_spec(&reader, &a.spec)?;
    let model = load_model(&a.checkpoint)?;
    check_compatible(&model, &spec)?;
    let tasks = reader.eval()?;
    let (report, runs) = experiment::eval_ir(&model, &tasks, spec.k)?;
    let json = EvalReportJson::from(&report);
    write_file(&a.out.join(REPORT_FILE), |w| formats::write_json(w, &json))?;
    write_file(&a.out.join(RUN_FILE), |w| formats::write_run(w, &runs))?;
    Ok(json)
}

pub const MINING_FILE: &str = "mining.json";
pub const SCORED_FILE: &str = "scored_pairs.tsv";

pub fn mine_bitext(a: &MineArgs) -> Result<MiningReportJson> {
    let reader = DatasetReader::open(&a.data)?;
    let spec = data_spec(&reader, &a.spec)?;
    let model = load_model(&a.checkpoint)?;
    check_compatible(&model, &spec)?;
    let (train, test) = (reader.bitext("train")?, reader.bitext("test")?);
    let out = experiment::mine(&model, &train, &test, &spec.mining)?;
    let report = mining_report(&out);
    let scored: Vec<(String, String, f64)> = out
        .test
        .candidates
        .pairs
        .iter()
        .filter_map(|p| p.margin.value().map(|s| (test.side_a[p.a].0.clone(), test.side_b[p.b].0.clone(), s)))
        .collect();
    write_file(&a.out.join(MINING_FILE), |w| formats::write_json(w, &report))?;
    write_file(&a.out.join(SCORED_FILE), |w| formats::write_scored_pairs(w, &scored))?;
    Ok(report)
}

pub fn mining_report(out: &experiment::MiningOutcome) -> MiningReportJson {
    let split = |s: &experiment::SplitResult| ScoredSplit { threshold: s.threshold, train: s.train.into(), test: s.test.into() };
    MiningReportJson {
        k: out.test.candidates.k,
        candidate_depth: out.test.candidates.depth,
        threshold: out.margin.threshold,
        precision: out.margin.test.precision,
        recall: out.margin.test.recall,
        f1: out.margin.test.f1,
        degenerate_count: out.test.candidates.degenerate_count,
        margin: split(&out.margin),
        cosine: split(&out.cosine),
    }
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<Vec<CheckReport>> {
    if a.sizes.is_empty() || a.trials == 0 {
        return Err(CliError::Config("sizes and trials must be nonempty".into()));
    }
    if !(a.tolerance > 0.0) {
        return Err(CliError::Config("tolerance must be > 0".into()));
    }
    let opts = CheckOptions { tolerance: a.tolerance, ..CheckOptions::default() };
    Ok(gradcheck::run_all(&a.sizes, a.trials, a.seed, &opts)?)
}

/// Sets one grid value on `spec`.
pub fn apply_axis(spec: &mut ExperimentSpec, axis: Axis, value: &str) -> Result<()> {
    let size = || value.parse::<usize>().map_err(|_| CliError::Config(format!("grid value {value:?} is not a size")));
    match axis {
        Axis::ParallelSize => {
            spec.parallel_pairs = size()?;
            // no pairs at all is the retrieval-only baseline
            if spec.parallel_pairs == 0 {
                spec.scenario = Scenario::IrOnly;
            }
        }
        Axis::NonparallelSize => {
            spec.scenario = Scenario::PartialParallel;
            spec.nonparallel_sentences = size()?;
            if spec.nonparallel_sentences == 0 {
                spec.train.extras_per_cl_batch = 0;
            }
        }
        Axis::LangpairTopology => {
            config::apply(spec, "langpair_topology", value)?;
        }
    }
    spec.validate()?;
    Ok(())
}

/// Languages the sweep metric averages over.
pub fn sweep_langs(spec: &ExperimentSpec, axis: Axis) -> Vec<Lang> {
    match axis {
        Axis::NonparallelSize => spec.uncovered.clone(),
        _ => spec.target_langs(),
    }
}

/// Mean MRR@k over `langs` after one generate, train, evaluate cycle.
pub fn run_once(spec: &ExperimentSpec, langs: &[Lang]) -> Result<f64> {
    let (_, data) = experiment::generate(spec)?;
    let out = experiment::train(spec, &data.train)?;
    let (report, _) = experiment::eval_ir(&out.model, &data.eval, spec.k)?;
    Ok(report.mean_mrr(langs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval; absent for one seed.
    pub ci95: Option<f64>,
}

pub fn summarize(value: String, per_seed: Vec<f64>) -> SweepRow {
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let ci95 = (per_seed.len() > 1).then(|| {
        let var = per_seed.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    });
    SweepRow { value, per_seed, mean, ci95 }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_sweep(w: &mut impl Write, axis: Axis, k: usize, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "axis,value,seeds,mean_mrr_at_{k},ci95")?;
    for r in rows {
        let ci = r.ci95.map(|c| format!("{c:.6}")).unwrap_or_default();
        writeln!(w, "{},{},{},{:.6},{}", axis.name(), csv_field(&r.value), r.per_seed.len(), r.mean, ci)?;
    }
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<Vec<SweepRow>> {
    if a.grid.is_empty() || a.seeds == 0 {
        return Err(CliError::Config("the grid and the seed count must be nonempty".into()));
    }
    let base = a.spec.apply(ExperimentSpec::default())?;
    let mut rows = Vec::with_capacity(a.grid.len());
    for value in &a.grid {
        let mut per_seed = Vec::with_capacity(a.seeds as usize);
        for s in 0..a.seeds {
            let mut spec = base.clone().with_seed(base.seed + s);
            apply_axis(&mut spec, a.axis, value)?;
            per_seed.push(run_once(&spec, &sweep_langs(&spec, a.axis))?);
        }
        rows.push(summarize(value.clone(), per_seed));
    }
    let mut buf = Vec::new();
    write_sweep(&mut buf, a.axis, base.k, &rows).map_err(io(&a.out))?;
    write_file(&a.out, |w| {
        w.extend_from_slice(&buf);
        Ok(())
    })?;
    Ok(rows)
}
