use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use unli_core::config::ToolkitConfig;
use unli_core::datamodel::{
    dataset_statistics, load_dataset, load_events, load_scores, save_dataset, write_scores,
    DataFormat, SplitStats,
};
use unli_core::elicitation::{make_batches, run_aggregation, write_results_csv};
use unli_core::metrics::compute_metrics;
use unli_core::qualification::{evaluate_qualification, load_items};
use unli_core::regressor::{
    init_head, predict_pairs, pretrain_finetune, toy_featurize, train, EpochReport, FeatureTable,
    RegressionHead, TrainOutcome,
};
use unli_core::report::{
    build_heatmap, default_bin_edges, distribution_csv, human_performance, label_distribution,
};
use unli_core::surrogate::{apply_surrogate, fit_surrogate, SurrogateMap};
use unli_core::{Dataset, SentencePair, Split};
use unli_service::{AnnotationService, ServiceConfig};

use crate::args::*;

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| anyhow!("no {what} given (flag or config)"))
}

fn read_dataset(input: &DataInput, config: &ToolkitConfig) -> Result<Dataset> {
    let path = pick(&input.data, &config.data.dataset, "--data")?;
    read_dataset_at(&path, input.format.map(Into::into))
}

fn read_dataset_at(path: &Path, format: Option<DataFormat>) -> Result<Dataset> {
    let format = format.unwrap_or_else(|| DataFormat::from_path(path));
    load_dataset(path, format).with_context(|| format!("loading {}", path.display()))
}

fn in_split(pairs: &[SentencePair], split: Option<SplitArg>) -> Vec<SentencePair> {
    let split: Option<Split> = split.map(Into::into);
    pairs
        .iter()
        .filter(|p| split.is_none_or(|s| p.split == s))
        .cloned()
        .collect()
}

/// Gold scores from either a dataset file or a plain `pair_id,score` CSV.
fn load_gold(path: &Path) -> Result<Vec<(String, f64)>> {
    let format = DataFormat::from_path(path);
    match load_dataset(path, format) {
        Ok(ds) => {
            let gold: Vec<_> = ds
                .pairs()
                .iter()
                .filter_map(|p| p.gold_score.map(|g| (p.pair_id.clone(), g)))
                .collect();
            if gold.is_empty() {
                bail!("{} has no pairs with gold scores", path.display());
            }
            Ok(gold)
        }
        Err(dataset_err) if format == DataFormat::Csv => load_scores(path).map_err(|score_err| {
            anyhow!(
                "{} is neither a dataset ({dataset_err}) nor a score file ({score_err})",
                path.display()
            )
        }),
        Err(e) => Err(e).with_context(|| format!("loading {}", path.display())),
    }
}

/// Aligns predictions to gold ids; every gold id needs a prediction.
fn align(gold: &[(String, f64)], pred: &[(String, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let by_id: HashMap<&str, f64> = pred.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    for (id, score) in gold {
        let v = by_id
            .get(id.as_str())
            .ok_or_else(|| anyhow!("no prediction for pair {id}"))?;
        g.push(*score);
        p.push(*v);
    }
    Ok((g, p))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn statistics_table(stats: &std::collections::BTreeMap<Split, SplitStats>) -> String {
    let mut out = format!(
        "{:<6} {:>9} {:>7} {:>7} {:>7} {:>9} {:>7}\n",
        "split", "premises", "ent", "neu", "con", "unlabeled", "total"
    );
    for (split, s) in stats {
        out += &format!(
            "{:<6} {:>9} {:>7} {:>7} {:>7} {:>9} {:>7}\n",
            split.as_str(),
            s.distinct_premises,
            s.ent,
            s.neu,
            s.con,
            s.unlabeled,
            s.total_pairs
        );
    }
    out
}

pub fn ingest(args: IngestArgs, config: &ToolkitConfig) -> Result<()> {
    let mut ds = read_dataset(&args.input, config)?;
    if let Some(path) = args.events.as_ref().or(config.data.events.as_ref()) {
        let events = load_events(path).with_context(|| format!("loading {}", path.display()))?;
        ds.append_events(events)
            .with_context(|| format!("merging {}", path.display()))?;
    }
    let stats = dataset_statistics(&ds);
    if args.json {
        print_json(&json!({
            "pairs": ds.pairs().len(),
            "events": ds.events().len(),
            "statistics": stats,
        }))?;
    } else {
        print!("{}", statistics_table(&stats));
        println!("{} pairs, {} events", ds.pairs().len(), ds.events().len());
    }
    if let Some(out) = &args.out {
        save_dataset(&ds, out, DataFormat::from_path(out))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn batch(args: BatchArgs, config: &ToolkitConfig) -> Result<()> {
    let ds = read_dataset(&args.input, config)?;
    let ids: Vec<String> = in_split(ds.pairs(), args.split)
        .into_iter()
        .map(|p| p.pair_id)
        .collect();
    let redundancy = args.redundancy.unwrap_or(config.server.redundancy);
    let batches = make_batches(&ids, redundancy, args.seed)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(io::stdout().lock()),
    };
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(["batch_id", "annotator", "position", "pair_id"])?;
    for b in &batches {
        for (i, id) in b.pair_ids.iter().enumerate() {
            wtr.write_record([
                b.batch_id.as_str(),
                &b.assigned_annotator,
                &i.to_string(),
                id,
            ])?;
        }
    }
    wtr.flush()?;
    eprintln!("{} batches for {} pairs", batches.len(), ids.len());
    Ok(())
}

pub fn aggregate(args: AggregateArgs, config: &ToolkitConfig) -> Result<()> {
    let mut ds = read_dataset(&args.input, config)?;
    if let Some(path) = args.events.as_ref().or(config.data.events.as_ref()) {
        let events = load_events(path).with_context(|| format!("loading {}", path.display()))?;
        ds.append_events(events)
            .with_context(|| format!("merging {}", path.display()))?;
    }
    let mode = args.average.map(Into::into).unwrap_or(config.averaging);
    let run = run_aggregation(&ds, &config.scale, mode)?;
    match &args.out {
        Some(path) => write_results_csv(
            &run.results,
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )?,
        None => write_results_csv(&run.results, io::stdout().lock())?,
    }
    if let Some(path) = &args.awaiting {
        let mut text = run.awaiting.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.dataset_out {
        let scores: HashMap<&str, f64> = run
            .results
            .iter()
            .map(|r| (r.pair_id.as_str(), r.gold_score))
            .collect();
        let pairs: Vec<SentencePair> = ds
            .pairs()
            .iter()
            .map(|p| SentencePair {
                gold_score: scores.get(p.pair_id.as_str()).copied().or(p.gold_score),
                ..p.clone()
            })
            .collect();
        save_dataset(
            &Dataset::new(pairs, Vec::new())?,
            path,
            DataFormat::from_path(path),
        )
        .with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "aggregated {} pairs; {} awaiting a third response; {} with more than three responses",
        run.results.len(),
        run.awaiting.len(),
        run.overfull.len()
    );
    Ok(())
}

pub fn qualify_score(args: QualifyArgs, config: &ToolkitConfig) -> Result<()> {
    let path = pick(&args.items, &config.data.qualification_items, "--items")?;
    let items = load_items(&path).with_context(|| format!("loading {}", path.display()))?;
    let given: HashMap<String, f64> = load_scores(&args.responses)
        .with_context(|| format!("loading {}", args.responses.display()))?
        .into_iter()
        .collect();
    let responses = items
        .iter()
        .map(|item| {
            let v = *given
                .get(&item.pair.pair_id)
                .ok_or_else(|| anyhow!("no response for item {}", item.pair.pair_id))?;
            if args.raw {
                Ok(config.scale.to_probability(v)?)
            } else {
                Ok(v)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let result = evaluate_qualification(&items, &responses, &config.qualification)?;
    if args.json {
        return print_json(&result);
    }
    let fmt = |r: Option<f64>| r.map_or("undef".to_string(), |v| format!("{v:.4}"));
    println!("{}", if result.passed { "PASS" } else { "FAIL" });
    println!("easy items ok: {}", result.easy_ok);
    println!("pearson: {}", fmt(result.pearson));
    println!("spearman: {}", fmt(result.spearman));
    for d in &result.diagnostics {
        println!("  {d}");
    }
    Ok(())
}

pub fn fit_surrogate_cmd(args: FitSurrogateArgs, config: &ToolkitConfig) -> Result<()> {
    let ds = read_dataset(&args.input, config)?;
    let out = pick(&args.out, &config.surrogate_path, "--out")?;
    let map = fit_surrogate(&ds)?;
    map.save(&out)?;
    println!("ent {:.4}  neu {:.4}  con {:.4}", map.ent, map.neu, map.con);
    Ok(())
}

pub fn featurize(args: FeaturizeArgs, config: &ToolkitConfig) -> Result<()> {
    let ds = read_dataset(&args.input, config)?;
    let table = toy_featurize(ds.pairs(), args.dim, args.mode.into(), args.seed)?;
    table.save(&args.out)?;
    eprintln!(
        "{} vectors of dim {} written to {}",
        table.len(),
        table.dim(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StageReport {
    stage: &'static str,
    best_epoch: usize,
    epochs: Vec<EpochReport>,
}

impl StageReport {
    fn new(stage: &'static str, outcome: TrainOutcome) -> Self {
        Self {
            stage,
            best_epoch: outcome.best_epoch,
            epochs: outcome.epochs,
        }
    }
}

fn print_epochs(stages: &[StageReport]) {
    let fmt = |r: Option<f64>| r.map_or("undef".to_string(), |v| format!("{v:.4}"));
    println!(
        "{:<9} {:>5} {:>10} {:>8} {:>8} {:>8}",
        "stage", "epoch", "train_loss", "dev_r", "dev_rho", "dev_mse"
    );
    for s in stages {
        for e in &s.epochs {
            let mark = if e.epoch == s.best_epoch { " *" } else { "" };
            println!(
                "{:<9} {:>5} {:>10.4} {:>8} {:>8} {:>8.4}{mark}",
                s.stage,
                e.epoch,
                e.train_loss,
                fmt(e.dev.pearson),
                fmt(e.dev.spearman),
                e.dev.mse
            );
        }
    }
}

pub fn train_cmd(args: TrainArgs, config: &ToolkitConfig) -> Result<()> {
    let features = pick(&args.features, &config.data.features, "--features")?;
    let table =
        FeatureTable::load(&features).with_context(|| format!("loading {}", features.display()))?;
    let train_pairs = read_dataset_at(&args.train, None)?.into_parts().0;
    let dev_pairs = read_dataset_at(&args.dev, None)?.into_parts().0;

    let mut cfg = config.train;
    cfg.seed = args.seed;
    if let Some(l) = args.loss {
        cfg.loss = l.into();
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.max_grad_norm {
        cfg.max_grad_norm = v;
    }

    let (head, stages): (RegressionHead, Vec<StageReport>) = match &args.pretrain {
        Some(pre_path) => {
            let sur_path = pick(&args.surrogate, &config.surrogate_path, "--surrogate")?;
            let map = SurrogateMap::load(&sur_path)?;
            let labelled = read_dataset_at(pre_path, None)?.into_parts().0;
            let scored = apply_surrogate(&labelled, &map)?;
            let mut cfg_pre = cfg;
            if let Some(v) = args.pretrain_epochs {
                cfg_pre.epochs = v;
            }
            if let Some(v) = args.pretrain_lr {
                cfg_pre.lr = v;
            }
            cfg_pre.validate()?;
            if cfg.epochs > 0 {
                cfg.validate()?;
            }
            let out = pretrain_finetune(&table, &scored, &train_pairs, &dev_pairs, &cfg_pre, &cfg)?;
            let mut stages = vec![StageReport::new("pretrain", out.pretrain)];
            if let Some(f) = out.finetune {
                stages.push(StageReport::new("finetune", f));
            }
            (out.head, stages)
        }
        None => {
            cfg.validate()?;
            let init = init_head(&table, &train_pairs)?;
            let out = train(init, &table, &train_pairs, &dev_pairs, &cfg)?;
            (out.head.clone(), vec![StageReport::new("train", out)])
        }
    };

    head.save(&args.out)?;
    if let Some(path) = &args.pred_out {
        let preds = predict_pairs(&head, &table, &dev_pairs)?;
        let rows: Vec<(String, f64)> = dev_pairs
            .iter()
            .map(|p| p.pair_id.clone())
            .zip(preds)
            .collect();
        write_scores(path, ["pair_id", "score"], &rows)?;
    }
    if args.json {
        print_json(&json!({ "checkpoint": args.out, "stages": stages }))
    } else {
        print_epochs(&stages);
        println!("checkpoint written to {}", args.out.display());
        Ok(())
    }
}

pub fn eval(args: EvalArgs, _config: &ToolkitConfig) -> Result<()> {
    let gold = load_gold(&args.gold)?;
    let pred = match (&args.pred, &args.checkpoint, &args.features) {
        (Some(path), None, _) => {
            load_scores(path).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(ck), Some(features)) => {
            let head = RegressionHead::load(ck)?;
            let table = FeatureTable::load(features)?;
            gold.iter()
                .map(|(id, _)| {
                    let f = table
                        .get(id)
                        .ok_or_else(|| anyhow!("no features for pair {id}"))?;
                    Ok((id.clone(), head.predict(f)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => bail!("give either --pred or --checkpoint with --features"),
    };
    let (g, p) = align(&gold, &pred)?;
    let report = compute_metrics(&g, &p)?;
    if args.json {
        print_json(&report)
    } else {
        println!("{report}");
        Ok(())
    }
}

pub fn report(args: ReportArgs, config: &ToolkitConfig) -> Result<()> {
    let mut ds = read_dataset(&args.input, config)?;
    if let Some(path) = &args.events {
        ds.append_events(load_events(path)?)
            .with_context(|| format!("merging {}", path.display()))?;
    }
    let pairs = in_split(ds.pairs(), args.split);
    let stats = dataset_statistics(&ds);
    let dist = label_distribution(&pairs);
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dist_path = args.out_dir.join("distribution.csv");
    fs::write(&dist_path, distribution_csv(&dist))
        .with_context(|| format!("writing {}", dist_path.display()))?;

    let gold: Vec<(String, f64)> = pairs
        .iter()
        .filter_map(|p| p.gold_score.map(|g| (p.pair_id.clone(), g)))
        .collect();

    let mut metrics = None;
    let mut heatmap = None;
    if let Some(path) = &args.pred {
        let pred = load_scores(path).with_context(|| format!("loading {}", path.display()))?;
        let (g, p) = align(&gold, &pred)?;
        metrics = Some(compute_metrics(&g, &p)?);
        let edges = args
            .edges
            .clone()
            .or_else(|| config.bin_edges.clone())
            .unwrap_or_else(|| default_bin_edges(&config.scale));
        let map = build_heatmap(&g, &p, &edges)?;
        fs::write(args.out_dir.join("heatmap.csv"), map.to_csv())?;
        fs::write(args.out_dir.join("heatmap.svg"), map.to_svg())?;
        heatmap = Some(map);
    }

    let mut human = None;
    if let Some(path) = &args.reannotations {
        let re = load_events(path).with_context(|| format!("loading {}", path.display()))?;
        let covered: std::collections::HashSet<&str> =
            re.iter().map(|e| e.pair_id.as_str()).collect();
        let gold_pairs: Vec<SentencePair> = pairs
            .iter()
            .filter(|p| covered.contains(p.pair_id.as_str()))
            .cloned()
            .collect();
        human = Some(human_performance(
            &gold_pairs,
            &re,
            ds.events(),
            &config.scale,
        )?);
    }

    if args.json {
        return print_json(&json!({
            "statistics": stats,
            "distribution": dist,
            "metrics": metrics,
            "heatmap": heatmap,
            "human": human,
        }));
    }
    print!("{}", statistics_table(&stats));
    println!();
    print!("{}", distribution_csv(&dist));
    if let Some(m) = metrics {
        println!();
        println!("{m}");
    }
    if let Some(h) = human {
        println!();
        println!("human performance");
        println!("{}", h.metrics);
        for w in &h.overlap_warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

pub fn serve(args: ServeArgs, config: &ToolkitConfig) -> Result<()> {
    let ds = read_dataset(&args.input, config)?;
    let pairs = in_split(ds.pairs(), args.split);
    let items_path = pick(&args.items, &config.data.qualification_items, "--items")?;
    let items =
        load_items(&items_path).with_context(|| format!("loading {}", items_path.display()))?;
    let events = pick(&args.events, &config.data.events, "--events")?;
    let addr = args
        .addr
        .clone()
        .unwrap_or_else(|| config.server.addr.clone());
    let addr: std::net::SocketAddr = addr
        .parse()
        .with_context(|| format!("bad listen address `{addr}`"))?;

    let mut svc_cfg = ServiceConfig::new(events);
    svc_cfg.scale = config.scale;
    svc_cfg.thresholds = config.qualification;
    svc_cfg.averaging = config.averaging;
    svc_cfg.redundancy = config.server.redundancy;
    svc_cfg.max_qualification_attempts = config.server.max_qualification_attempts;
    svc_cfg.qualification_log = args
        .qualification_log
        .clone()
        .or_else(|| config.server.qualification_log.clone());
    let service = AnnotationService::new(pairs, items, svc_cfg)?;

    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(unli_service::serve(std::sync::Arc::new(service), addr))?;
    Ok(())
}
