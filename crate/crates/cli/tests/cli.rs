use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use unli_core::datamodel::{load_dataset, save_dataset, DataFormat};
use unli_core::{AnnotationEvent, CategoricalLabel, Dataset, SentencePair, Split};

fn unli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unli"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = unli(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn label_for(score: f64) -> CategoricalLabel {
    if score > 0.66 {
        CategoricalLabel::Ent
    } else if score < 0.33 {
        CategoricalLabel::Con
    } else {
        CategoricalLabel::Neu
    }
}

/// Pairs whose gold score is a function of one hypothesis token.
fn pairs(n: usize) -> Vec<SentencePair> {
    (0..n)
        .map(|i| {
            let k = i % 5;
            let gold = 0.05 + 0.2 * k as f64 + 0.01 * (i % 3) as f64;
            SentencePair {
                pair_id: format!("p{i:03}"),
                premise: format!("someone stands near landmark{}", i % 4),
                hypothesis: format!("marker{k} filler{}", i % 7),
                snli_label: Some(label_for(gold)),
                gold_score: Some(gold),
                split: match i % 3 {
                    0 | 1 => Split::Train,
                    _ => Split::Dev,
                },
            }
        })
        .collect()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let all = pairs(90);
        let save = |name: &str, subset: Vec<SentencePair>| {
            save_dataset(
                &Dataset::new(subset, vec![]).unwrap(),
                root.join(name),
                DataFormat::Csv,
            )
            .unwrap();
        };
        save("all.csv", all.clone());
        save(
            "train.csv",
            all.iter()
                .filter(|p| p.split == Split::Train)
                .cloned()
                .collect(),
        );
        save(
            "dev.csv",
            all.iter()
                .filter(|p| p.split == Split::Dev)
                .cloned()
                .collect(),
        );
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn unknown_verb_is_usage_error() {
    let o = unli(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn module_errors_exit_one_with_one_line() {
    let o = unli(&[
        "eval",
        "--gold",
        "/no/such/gold.csv",
        "--pred",
        "/no/such/pred.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
}

#[test]
fn randomized_verbs_require_seed() {
    let f = Fixture::new();
    for args in [
        vec!["batch", "--data", p(&f.path("all.csv"))],
        vec![
            "featurize",
            "--data",
            p(&f.path("all.csv")),
            "--out",
            "x.csv",
        ],
    ] {
        let o = unli(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn eval_prints_four_decimal_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.csv");
    let pred = dir.path().join("pred.csv");
    fs::write(&gold, "pair_id,score\na,0.1\nb,0.4\nc,0.35\nd,0.8\n").unwrap();
    fs::write(
        &pred,
        "pair_id,score\nd,0.7\nc,0.5\nb,0.3\na,0.2\nextra,0.9\n",
    )
    .unwrap();
    let out = ok(&["eval", "--gold", p(&gold), "--pred", p(&pred)]);
    let lines: Vec<_> = out.lines().collect();
    assert!(lines[0].contains("r") && lines[0].contains("MSE"));
    // scipy: r = 0.901439, rho = 0.8, mse = 0.013125
    let row: Vec<_> = lines[1].split_whitespace().collect();
    assert_eq!(row, ["0.9014", "0.8000", "0.0131", "4"]);

    let json: serde_json::Value = serde_json::from_str(&ok(&[
        "eval",
        "--gold",
        p(&gold),
        "--pred",
        p(&pred),
        "--json",
    ]))
    .unwrap();
    assert!((json["spearman"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!((json["pearson"].as_f64().unwrap() - 0.9014388502127688).abs() < 1e-12);
    assert!((json["mse"].as_f64().unwrap() - 0.013125).abs() < 1e-12);
    assert_eq!(json["n"], 4);
}

#[test]
fn eval_rejects_missing_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.csv");
    let pred = dir.path().join("pred.csv");
    fs::write(&gold, "a,0.1\nb,0.4\nc,0.3\n").unwrap();
    fs::write(&pred, "a,0.1\nb,0.4\n").unwrap();
    let o = unli(&["eval", "--gold", p(&gold), "--pred", p(&pred)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no prediction for pair c"));
}

#[test]
fn fit_surrogate_writes_label_means() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    fs::write(
        &data,
        "pair_id,premise,hypothesis,snli_label,gold_score,split\n\
         a,p,h,ent,0.9,train\nb,p,h,ent,0.8,train\nc,p,h,neu,0.5,train\n\
         d,p,h,con,0.1,train\ne,p,h,con,0.0,train\nf,p,h,con,0.9,dev\n",
    )
    .unwrap();
    let out = dir.path().join("map.json");
    ok(&["fit-surrogate", "--data", p(&data), "--out", p(&out)]);
    let map: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!((map["ent"].as_f64().unwrap() - 0.85).abs() < 1e-12);
    assert!((map["neu"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((map["con"].as_f64().unwrap() - 0.05).abs() < 1e-12);
}

#[test]
fn training_twice_gives_identical_checkpoint_bytes() {
    let f = Fixture::new();
    let feats = f.path("features.csv");
    ok(&[
        "featurize",
        "--data",
        p(&f.path("all.csv")),
        "--dim",
        "64",
        "--seed",
        "3",
        "--out",
        p(&feats),
    ]);
    let run = |name: &str| {
        let ck = f.path(name);
        ok(&[
            "train",
            "--features",
            p(&feats),
            "--train",
            p(&f.path("train.csv")),
            "--dev",
            p(&f.path("dev.csv")),
            "--seed",
            "7",
            "--lr",
            "0.05",
            "--epochs",
            "5",
            "--out",
            p(&ck),
        ]);
        fs::read(ck).unwrap()
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b);
    let ck: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(ck["dim"], 64);
    assert_eq!(ck["weights"].as_array().unwrap().len(), 64);
}

#[test]
fn train_then_eval_with_checkpoint() {
    let f = Fixture::new();
    let feats = f.path("features.csv");
    ok(&[
        "featurize",
        "--data",
        p(&f.path("all.csv")),
        "--dim",
        "64",
        "--seed",
        "1",
        "--out",
        p(&feats),
    ]);
    let ck = f.path("head.json");
    let preds = f.path("preds.csv");
    let out = ok(&[
        "train",
        "--features",
        p(&feats),
        "--train",
        p(&f.path("train.csv")),
        "--dev",
        p(&f.path("dev.csv")),
        "--seed",
        "2",
        "--lr",
        "0.1",
        "--epochs",
        "30",
        "--batch-size",
        "8",
        "--out",
        p(&ck),
        "--pred-out",
        p(&preds),
    ]);
    assert!(out.contains(" *"), "best epoch marked:\n{out}");

    let via_ck: serde_json::Value = serde_json::from_str(&ok(&[
        "eval",
        "--gold",
        p(&f.path("dev.csv")),
        "--checkpoint",
        p(&ck),
        "--features",
        p(&feats),
        "--json",
    ]))
    .unwrap();
    let via_pred: serde_json::Value = serde_json::from_str(&ok(&[
        "eval",
        "--gold",
        p(&f.path("dev.csv")),
        "--pred",
        p(&preds),
        "--json",
    ]))
    .unwrap();
    assert_eq!(via_ck, via_pred);
    assert!(via_ck["pearson"].as_f64().unwrap() > 0.9, "{via_ck}");
}

#[test]
fn pretrain_then_finetune_runs_both_stages() {
    let f = Fixture::new();
    let feats = f.path("features.csv");
    // pre-training pairs must not overlap the fine-tuning pairs
    let snli: Vec<SentencePair> = pairs(120)
        .into_iter()
        .skip(90)
        .map(|mut p| {
            p.gold_score = None;
            p.split = Split::Train;
            p
        })
        .collect();
    let mut everything = pairs(90);
    everything.extend(snli.clone());
    save_dataset(
        &Dataset::new(everything, vec![]).unwrap(),
        f.path("everything.csv"),
        DataFormat::Csv,
    )
    .unwrap();
    save_dataset(
        &Dataset::new(snli, vec![]).unwrap(),
        f.path("snli.csv"),
        DataFormat::Csv,
    )
    .unwrap();
    ok(&[
        "featurize",
        "--data",
        p(&f.path("everything.csv")),
        "--dim",
        "64",
        "--seed",
        "1",
        "--out",
        p(&feats),
    ]);
    ok(&[
        "fit-surrogate",
        "--data",
        p(&f.path("train.csv")),
        "--out",
        p(&f.path("map.json")),
    ]);
    let out = ok(&[
        "train",
        "--features",
        p(&feats),
        "--train",
        p(&f.path("train.csv")),
        "--dev",
        p(&f.path("dev.csv")),
        "--seed",
        "4",
        "--lr",
        "0.05",
        "--epochs",
        "3",
        "--pretrain",
        p(&f.path("snli.csv")),
        "--surrogate",
        p(&f.path("map.json")),
        "--pretrain-epochs",
        "2",
        "--out",
        p(&f.path("head.json")),
        "--json",
    ]);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    let stages = json["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 2);
    assert_eq!(stages[0]["stage"], "pretrain");
    assert_eq!(stages[0]["epochs"].as_array().unwrap().len(), 2);
    assert_eq!(stages[1]["epochs"].as_array().unwrap().len(), 3);
}

fn event(pair: &str, annotator: &str, raw: u32, round: u32) -> AnnotationEvent {
    AnnotationEvent {
        pair_id: pair.into(),
        annotator_id: annotator.into(),
        raw_slider: raw,
        batch_id: "b0".into(),
        timestamp: 0,
        round,
    }
}

#[test]
fn aggregate_writes_results_awaiting_and_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pairs.csv");
    let mut ps = pairs(3);
    for p in &mut ps {
        p.gold_score = None;
    }
    save_dataset(&Dataset::new(ps, vec![]).unwrap(), &data, DataFormat::Csv).unwrap();
    let events = dir.path().join("events.jsonl");
    let evs = [
        event("p000", "a", 5000, 1),
        event("p000", "b", 5000, 2),
        event("p001", "a", 1000, 1),
        event("p001", "b", 3500, 2),
        event("p002", "a", 4000, 1),
    ];
    let text: String = evs
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    fs::write(&events, text).unwrap();

    let out = dir.path().join("gold.csv");
    let awaiting = dir.path().join("awaiting.txt");
    let with_gold = dir.path().join("with_gold.csv");
    ok(&[
        "aggregate",
        "--data",
        p(&data),
        "--events",
        p(&events),
        "--out",
        p(&out),
        "--awaiting",
        p(&awaiting),
        "--dataset-out",
        p(&with_gold),
    ]);
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "pair_id,gold_score,n_responses,escalated\np000,0.5,2,false\n"
    );
    assert_eq!(fs::read_to_string(&awaiting).unwrap(), "p001\n");
    let ds = load_dataset(&with_gold, DataFormat::Csv).unwrap();
    assert_eq!(ds.pair("p000").unwrap().gold_score, Some(0.5));
    assert_eq!(ds.pair("p001").unwrap().gold_score, None);
}

#[test]
fn batch_output_is_seed_deterministic() {
    let f = Fixture::new();
    let a = ok(&[
        "batch",
        "--data",
        p(&f.path("all.csv")),
        "--seed",
        "11",
        "--split",
        "dev",
    ]);
    let b = ok(&[
        "batch",
        "--data",
        p(&f.path("all.csv")),
        "--seed",
        "11",
        "--split",
        "dev",
    ]);
    assert_eq!(a, b);
    let rows: Vec<_> = a.lines().skip(1).collect();
    // 30 dev pairs, redundancy 2 → 60 slots in 12 batches
    assert_eq!(rows.len(), 60);
    assert_eq!(
        a.lines().next().unwrap(),
        "batch_id,annotator,position,pair_id"
    );
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

#[test]
fn qualify_score_with_shipped_items_and_config() {
    let root = repo_root();
    let dir = tempfile::tempdir().unwrap();
    let items = fs::read_to_string(root.join("data/qualification_items.csv")).unwrap();
    let perfect: String = items
        .lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<_> = l.split(',').collect();
            format!("{},{}\n", cols[0], cols[3])
        })
        .collect();
    let resp = dir.path().join("resp.csv");
    fs::write(&resp, &perfect).unwrap();

    let o = Command::new(env!("CARGO_BIN_EXE_unli"))
        .current_dir(&root)
        .args([
            "--config",
            "data/example.toml",
            "qualify-score",
            "--responses",
            p(&resp),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS"));

    let flat = dir.path().join("flat.csv");
    let constant: String = items
        .lines()
        .skip(1)
        .map(|l| format!("{},5000\n", l.split(',').next().unwrap()))
        .collect();
    fs::write(&flat, constant).unwrap();
    let out = ok(&[
        "qualify-score",
        "--items",
        p(&root.join("data/qualification_items.csv")),
        "--responses",
        p(&flat),
        "--raw",
        "--json",
    ]);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["passed"], false);
    assert!(json["pearson"].is_null());
}

#[test]
fn config_with_missing_path_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[data]\nfeatures = \"/no/such/features.csv\"\n").unwrap();
    let o = unli(&["--config", p(&cfg), "eval", "--gold", "x", "--pred", "y"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn report_writes_artifacts() {
    let f = Fixture::new();
    let preds = f.path("preds.csv");
    let rows: String = pairs(90)
        .iter()
        .map(|p| format!("{},{}\n", p.pair_id, (p.gold_score.unwrap() * 0.9 + 0.05)))
        .collect();
    fs::write(&preds, rows).unwrap();
    let out_dir = f.path("report");
    let out = ok(&[
        "report",
        "--data",
        p(&f.path("all.csv")),
        "--pred",
        p(&preds),
        "--out-dir",
        p(&out_dir),
        "--json",
    ]);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["statistics"]["train"]["total_pairs"], 60);
    assert_eq!(json["statistics"]["dev"]["total_pairs"], 30);
    assert!((json["metrics"]["spearman"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for name in ["distribution.csv", "heatmap.csv", "heatmap.svg"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let dist = fs::read_to_string(out_dir.join("distribution.csv")).unwrap();
    assert!(dist.starts_with("label,count,p2,q25,median,q75,p98\nent,"));
    assert!(fs::read_to_string(out_dir.join("heatmap.svg"))
        .unwrap()
        .contains("<svg"));

    let text = ok(&[
        "report",
        "--data",
        p(&f.path("all.csv")),
        "--out-dir",
        p(&out_dir),
        "--edges",
        "0,0.5,1",
    ]);
    assert!(text.contains("premises"));
}

#[test]
fn ingest_validates_and_converts() {
    let f = Fixture::new();
    let jsonl = f.path("all.jsonl");
    let out = ok(&[
        "ingest",
        "--data",
        p(&f.path("all.csv")),
        "--out",
        p(&jsonl),
    ]);
    assert!(out.contains("90 pairs, 0 events"));
    let a = load_dataset(f.path("all.csv"), DataFormat::Csv).unwrap();
    let b = load_dataset(&jsonl, DataFormat::Jsonl).unwrap();
    assert_eq!(a, b);

    let bad = f.path("bad.csv");
    fs::write(
        &bad,
        "pair_id,premise,hypothesis,snli_label,gold_score,split\nx,p,h,ent,1.5,dev\n",
    )
    .unwrap();
    let o = unli(&["ingest", "--data", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pair x"), "{}", stderr(&o));
}

fn http_get(addr: &str, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(addr).ok()?;
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_listens_on_env_address() {
    let f = Fixture::new();
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let items = repo_root().join("data/qualification_items.csv");
    let mut child = Command::new(env!("CARGO_BIN_EXE_unli"))
        .env(unli_service::ADDR_ENV, &addr)
        .args([
            "serve",
            "--data",
            p(&f.path("dev.csv")),
            "--items",
            p(&items),
            "--events",
            p(&f.path("events.jsonl")),
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut response = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(&addr, "/progress") {
            response = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    child.kill().ok();
    child.wait().ok();
    let response = response.expect("server answered");
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"total_pairs\":30"), "{response}");
}
