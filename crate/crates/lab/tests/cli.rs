use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xlir::cli::{EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC};
use xlir::formats::{self, EvalReportJson, MiningReportJson};

const SMALL: &str = "\
ir_train_pairs = 60
parallel_pairs = 60
nonparallel_sentences = 30
eval_queries = 8
eval_corpus = 40
bitext_gold = 6
feature_dim = 512
embed_dim = 8
steps = 30
";

fn xlir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlir")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = xlir(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    xlir(args).status.code().unwrap()
}

struct Lab {
    dir: tempfile::TempDir,
}

impl Lab {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.conf"), format!("{SMALL}{extra}")).unwrap();
        Lab { dir }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn s(&self, rel: &str) -> String {
        self.p(rel).to_string_lossy().into_owned()
    }
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn gen_data_is_reproducible() {
    let lab = Lab::new("");
    for out in ["d1", "d2"] {
        ok(&["gen-data", "--config", &lab.s("small.conf"), "--seed", "4", "--out", &lab.s(out)]);
    }
    assert_eq!(read(&lab.p("d1/manifest.json")), read(&lab.p("d2/manifest.json")));
    ok(&["gen-data", "--config", &lab.s("small.conf"), "--seed", "5", "--out", &lab.s("d3")]);
    assert_ne!(read(&lab.p("d1/manifest.json")), read(&lab.p("d3/manifest.json")));
}

#[test]
fn train_eval_mine_pipeline() {
    let lab = Lab::new("checkpoint_every = 10\n");
    let conf = lab.s("small.conf");
    ok(&["gen-data", "--config", &conf, "--scenario", "partial-parallel", "--out", &lab.s("d")]);
    ok(&["train", "--data", &lab.s("d"), "--out", &lab.s("m")]);
    let trace = fs::read_to_string(lab.p("m/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 30);
    for step in [10, 20, 30] {
        assert!(lab.p(&format!("m/checkpoints/step-{step:06}.xlcr")).exists());
        assert!(lab.p(&format!("m/checkpoints/step-{step:06}.xlcr.adamw")).exists());
    }
    assert_eq!(read(&lab.p("m/checkpoints/step-000030.xlcr")), read(&lab.p("m/model.xlcr")));
    assert!(lab.p("m/model.xlcr.adamw").exists());

    let ckpt = lab.s("m/model.xlcr");
    for out in ["e1", "e2"] {
        ok(&["eval-ir", "--data", &lab.s("d"), "--checkpoint", &ckpt, "--out", &lab.s(out)]);
    }
    assert_eq!(read(&lab.p("e1/report.json")), read(&lab.p("e2/report.json")));
    assert_eq!(read(&lab.p("e1/run.txt")), read(&lab.p("e2/run.txt")));
    let report: EvalReportJson = formats::read_json(&read(&lab.p("e1/report.json"))[..]).unwrap();
    assert_eq!(report.k, 10);
    assert_eq!(report.per_lang.len(), 8);
    let n = report.per_lang.len() as f64;
    let mean_mrr = report.per_lang.values().map(|m| m.mrr).sum::<f64>() / n;
    let mean_rec = report.per_lang.values().map(|m| m.recall).sum::<f64>() / n;
    assert!((report.overall.mrr - mean_mrr).abs() <= 1e-12);
    assert!((report.overall.recall - mean_rec).abs() <= 1e-12);
    let run = fs::read_to_string(lab.p("e1/run.txt")).unwrap();
    assert_eq!(run.lines().count(), 8 * 8 * 10);

    // with one relevant passage, MRR@1 is precision@1 which is recall@1
    ok(&["eval-ir", "--data", &lab.s("d"), "--checkpoint", &ckpt, "--k", "1", "--out", &lab.s("e3")]);
    let r1: EvalReportJson = formats::read_json(&read(&lab.p("e3/report.json"))[..]).unwrap();
    for m in r1.per_lang.values() {
        assert_eq!(m.mrr, m.recall);
    }

    for out in ["b1", "b2"] {
        ok(&["mine-bitext", "--data", &lab.s("d"), "--checkpoint", &ckpt, "--out", &lab.s(out)]);
    }
    assert_eq!(read(&lab.p("b1/mining.json")), read(&lab.p("b2/mining.json")));
    assert_eq!(read(&lab.p("b1/scored_pairs.tsv")), read(&lab.p("b2/scored_pairs.tsv")));
    let mr: MiningReportJson = formats::read_json(&read(&lab.p("b1/mining.json"))[..]).unwrap();
    assert_eq!((mr.k, mr.candidate_depth), (4, 16));
    assert_eq!(mr.f1, mr.margin.test.f1);
    assert_eq!(mr.threshold, mr.margin.threshold);
    let json = String::from_utf8(read(&lab.p("b1/mining.json"))).unwrap();
    for key in ["\"k\"", "\"candidate_depth\"", "\"threshold\"", "\"precision\"", "\"recall\"", "\"f1\"", "\"degenerate_count\"", "\"cosine\""] {
        assert!(json.contains(key), "{key}");
    }
}

#[test]
fn zero_weights_equal_retrieval_only() {
    let lab = Lab::new("w_s = 0\nw_l = 0\n");
    let conf = lab.s("small.conf");
    for (scenario, out) in [("ir-only", "a"), ("all-parallel", "b")] {
        ok(&["gen-data", "--config", &conf, "--scenario", scenario, "--out", &lab.s(&format!("d{out}"))]);
        ok(&["train", "--data", &lab.s(&format!("d{out}")), "--out", &lab.s(&format!("m{out}"))]);
    }
    assert_eq!(read(&lab.p("ma/model.xlcr")), read(&lab.p("mb/model.xlcr")));
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let lab = Lab::new("");
    fs::write(lab.p("bad.conf"), "no_such_key = 1\n").unwrap();
    fs::write(lab.p("lr.conf"), "lr = -1\n").unwrap();
    assert_eq!(code(&["gen-data", "--config", &lab.s("bad.conf"), "--out", &lab.s("x")]), EXIT_CONFIG);
    assert_eq!(code(&["gen-data", "--config", &lab.s("lr.conf"), "--out", &lab.s("x")]), EXIT_CONFIG);
    assert_eq!(code(&["gen-data", "--scenario", "sideways", "--out", &lab.s("x")]), EXIT_CONFIG);
    assert_eq!(code(&["gen-data"]), EXIT_CONFIG);
    assert_eq!(code(&["train", "--data", &lab.s("missing"), "--out", &lab.s("m")]), EXIT_DATA);

    // a file where the output directory should be
    fs::write(lab.p("blocker"), "").unwrap();
    assert_eq!(code(&["gen-data", "--config", &lab.s("small.conf"), "--out", &lab.s("blocker/sub")]), EXIT_DATA);

    // checkpoint that disagrees with the configuration
    ok(&["gen-data", "--config", &lab.s("small.conf"), "--out", &lab.s("d")]);
    ok(&["train", "--data", &lab.s("d"), "--out", &lab.s("m")]);
    fs::write(lab.p("wide.conf"), "feature_dim = 1024\n").unwrap();
    let args = ["eval-ir", "--data", &lab.s("d"), "--checkpoint", &lab.s("m/model.xlcr"), "--config", &lab.s("wide.conf"), "--out", &lab.s("e")];
    assert_eq!(code(&args), EXIT_DATA);
    fs::write(lab.p("junk.xlcr"), b"XLCRjunk").unwrap();
    assert_eq!(code(&["eval-ir", "--data", &lab.s("d"), "--checkpoint", &lab.s("junk.xlcr"), "--out", &lab.s("e")]), EXIT_DATA);
}

#[test]
fn gradcheck_command_reports_and_fails_loudly() {
    let out = ok(&["gradcheck", "--sizes", "2,4", "--trials", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4 * 2);
    for name in ["ir ", "sema_cl ", "lang_cl ", "joint_encoder "] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.contains("worst=") && l.ends_with("PASS")), "{name}");
    }
    // no analytic gradient agrees with finite differences to 1e-30
    let out = xlir(&["gradcheck", "--sizes", "2", "--trials", "2", "--tolerance", "1e-30"]);
    assert_eq!(out.status.code(), Some(EXIT_NUMERIC));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
    assert_eq!(code(&["gradcheck", "--trials", "0"]), EXIT_CONFIG);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let lab = Lab::new("");
    let conf = lab.s("small.conf");
    ok(&["sweep", "--config", &conf, "--axis", "parallel-size", "--grid", "0", "20", "--seeds", "1", "--out", &lab.s("s.csv")]);
    let csv = fs::read_to_string(lab.p("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "axis,value,seeds,mean_mrr_at_10,ci95");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("parallel-size,0,1,") && lines[1].ends_with(','));

    ok(&["sweep", "--config", &conf, "--axis", "langpair-topology", "--grid", "l0-l1,l0-l2", "--seeds", "2", "--out", &lab.s("t.csv")]);
    let csv = fs::read_to_string(lab.p("t.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("langpair-topology,\"l0-l1,l0-l2\",2,"));
    assert!(!row.ends_with(','));

    ok(&["sweep", "--config", &conf, "--axis", "nonparallel-size", "--grid", "0", "--seeds", "1", "--out", &lab.s("n.csv")]);
    assert_eq!(code(&["sweep", "--config", &conf, "--axis", "parallel-size", "--grid", "many", "--out", &lab.s("x.csv")]), EXIT_CONFIG);
}

#[test]
fn confidence_interval_follows_normal_approximation() {
    let row = xlir::cli::summarize("v".into(), vec![0.1, 0.2, 0.3, 0.4]);
    let sd = (((0.15f64).powi(2) * 2.0 + (0.05f64).powi(2) * 2.0) / 3.0).sqrt();
    assert!((row.mean - 0.25).abs() < 1e-15);
    assert!((row.ci95.unwrap() - 1.96 * sd / 2.0).abs() < 1e-15);
    assert_eq!(xlir::cli::summarize("v".into(), vec![0.7]).ci95, None);
}
