//! Core domain types, dataset ingestion and the append-only annotation log.
//!
//! Dataset files come in two flavours:
//!
//! - CSV, pairs only, columns `pair_id,premise,hypothesis,snli_label,gold_score,split`.
//!   An empty field encodes an absent optional. A leading header row is allowed.
//! - JSONL, one object per line tagged with `"kind": "pair"` or `"kind": "event"`.
//!
//! Annotation events are persisted on their own as JSONL, one
//! `{pair_id, annotator_id, raw_slider, batch_id, timestamp, round}` object
//! per line, see [`EventLog`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::SLIDER_STEPS;

/// SNLI categorical label. Ordered `Con < Neu < Ent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoricalLabel {
    Con,
    Neu,
    Ent,
}

impl CategoricalLabel {
    pub const ALL: [CategoricalLabel; 3] = [
        CategoricalLabel::Ent,
        CategoricalLabel::Neu,
        CategoricalLabel::Con,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoricalLabel::Ent => "ent",
            CategoricalLabel::Neu => "neu",
            CategoricalLabel::Con => "con",
        }
    }
}

impl fmt::Display for CategoricalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategoricalLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ent" | "entailment" => Ok(CategoricalLabel::Ent),
            "neu" | "neutral" => Ok(CategoricalLabel::Neu),
            "con" | "contradiction" => Ok(CategoricalLabel::Con),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub pair_id: String,
    pub premise: String,
    pub hypothesis: String,
    #[serde(default)]
    pub snli_label: Option<CategoricalLabel>,
    #[serde(default)]
    pub gold_score: Option<f64>,
    pub split: Split,
}

impl SentencePair {
    pub fn validate(&self) -> Result<()> {
        let invariant = |field, message: &str| Error::Invariant {
            pair_id: self.pair_id.clone(),
            field,
            message: message.to_string(),
        };
        if self.pair_id.is_empty() {
            return Err(invariant("pair_id", "empty pair id"));
        }
        if self.premise.trim().is_empty() {
            return Err(invariant("premise", "empty premise"));
        }
        if self.hypothesis.trim().is_empty() {
            return Err(invariant("hypothesis", "empty hypothesis"));
        }
        if let Some(score) = self.gold_score {
            if !(0.0..=1.0).contains(&score) {
                return Err(invariant("gold_score", "score out of range"));
            }
        }
        Ok(())
    }
}

/// One annotator's raw slider response to one pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub pair_id: String,
    pub annotator_id: String,
    pub raw_slider: u32,
    pub batch_id: String,
    pub timestamp: i64,
    /// 1 or 2 for the initial redundant responses, 3 for escalation.
    pub round: u32,
}

impl AnnotationEvent {
    pub fn validate(&self) -> Result<()> {
        if self.raw_slider > SLIDER_STEPS {
            return Err(Error::SliderRange(self.raw_slider as f64));
        }
        if self.round < 1 {
            return Err(Error::Invariant {
                pair_id: self.pair_id.clone(),
                field: "round",
                message: "round must be at least 1".into(),
            });
        }
        if self.annotator_id.is_empty() {
            return Err(Error::Invariant {
                pair_id: self.pair_id.clone(),
                field: "annotator_id",
                message: "empty annotator id".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            _ => Err(Error::InvalidArgument(format!("unknown format `{s}`"))),
        }
    }
}

/// Validated collection of pairs and the annotation events on them.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pairs: Vec<SentencePair>,
    events: Vec<AnnotationEvent>,
    index: HashMap<String, usize>,
    judged: HashSet<(String, String)>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.pairs == other.pairs && self.events == other.events
    }
}

impl Dataset {
    pub fn new(pairs: Vec<SentencePair>, events: Vec<AnnotationEvent>) -> Result<Self> {
        let mut dataset = Dataset::default();
        for pair in pairs {
            dataset.push_pair(pair)?;
        }
        dataset.append_events(events)?;
        Ok(dataset)
    }

    fn push_pair(&mut self, pair: SentencePair) -> Result<()> {
        pair.validate()?;
        if self.index.contains_key(&pair.pair_id) {
            return Err(Error::Invariant {
                pair_id: pair.pair_id,
                field: "pair_id",
                message: "duplicate pair id".into(),
            });
        }
        self.index.insert(pair.pair_id.clone(), self.pairs.len());
        self.pairs.push(pair);
        Ok(())
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn events(&self) -> &[AnnotationEvent] {
        &self.events
    }

    pub fn pair(&self, pair_id: &str) -> Option<&SentencePair> {
        self.index.get(pair_id).map(|&i| &self.pairs[i])
    }

    pub fn has_judged(&self, pair_id: &str, annotator_id: &str) -> bool {
        self.judged
            .contains(&(pair_id.to_string(), annotator_id.to_string()))
    }

    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = &SentencePair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    /// Checks that `events` could be appended without touching the dataset.
    pub fn check_events(&self, events: &[AnnotationEvent]) -> Result<()> {
        let mut incoming = HashSet::new();
        for event in events {
            event.validate()?;
            if !self.index.contains_key(&event.pair_id) {
                return Err(Error::UnknownPair(event.pair_id.clone()));
            }
            let key = (event.pair_id.clone(), event.annotator_id.clone());
            if self.judged.contains(&key) || !incoming.insert(key) {
                return Err(Error::DuplicateAnnotation {
                    pair_id: event.pair_id.clone(),
                    annotator_id: event.annotator_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Appends all events or none of them.
    pub fn append_events(&mut self, events: Vec<AnnotationEvent>) -> Result<()> {
        self.check_events(&events)?;
        for event in events {
            self.judged
                .insert((event.pair_id.clone(), event.annotator_id.clone()));
            self.events.push(event);
        }
        Ok(())
    }

    /// Events grouped by pair, in pair order then arrival order.
    pub fn events_by_pair(&self) -> Vec<(&SentencePair, Vec<&AnnotationEvent>)> {
        let mut grouped: Vec<Vec<&AnnotationEvent>> = vec![Vec::new(); self.pairs.len()];
        for event in &self.events {
            grouped[self.index[&event.pair_id]].push(event);
        }
        self.pairs.iter().zip(grouped).collect()
    }

    pub fn into_parts(self) -> (Vec<SentencePair>, Vec<AnnotationEvent>) {
        (self.pairs, self.events)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Pair(SentencePair),
    Event(AnnotationEvent),
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        DataFormat::Csv => read_csv(file),
        DataFormat::Jsonl => read_jsonl(BufReader::new(file), path),
    }
}

/// Parses pair rows from CSV text.
pub fn read_csv(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut pairs = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(i + 1);
        if i == 0 && record.get(0) == Some("pair_id") {
            continue;
        }
        if record.len() != 6 {
            return Err(Error::parse(
                line,
                format!("expected 6 columns, found {}", record.len()),
            ));
        }
        let snli_label = match &record[3] {
            "" => None,
            s => Some(s.parse()?),
        };
        let gold_score = match &record[4] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("invalid gold_score `{s}`")))?,
            ),
        };
        let split = record[5]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid split `{}`", &record[5])))?;
        pairs.push(SentencePair {
            pair_id: record[0].to_string(),
            premise: record[1].to_string(),
            hypothesis: record[2].to_string(),
            snli_label,
            gold_score,
            split,
        });
    }
    Dataset::new(pairs, Vec::new())
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Dataset> {
    let mut pairs = Vec::new();
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))? {
            Record::Pair(p) => pairs.push(p),
            Record::Event(e) => events.push(e),
        }
    }
    Dataset::new(pairs, events)
}

/// Writes a dataset. CSV files carry pairs only, so datasets with events
/// must be saved as JSONL.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        DataFormat::Csv => {
            if !dataset.events.is_empty() {
                return Err(Error::InvalidArgument(
                    "CSV datasets carry pairs only; save events as JSONL".into(),
                ));
            }
            write_csv(dataset.pairs(), file).map_err(|e| Error::io(path, e))
        }
        DataFormat::Jsonl => {
            let mut out = std::io::BufWriter::new(file);
            let io = |e| Error::io(path, e);
            for pair in &dataset.pairs {
                serde_json::to_writer(&mut out, &Record::Pair(pair.clone()))
                    .map_err(|e| io(e.into()))?;
                out.write_all(b"\n").map_err(io)?;
            }
            for event in &dataset.events {
                serde_json::to_writer(&mut out, &Record::Event(event.clone()))
                    .map_err(|e| io(e.into()))?;
                out.write_all(b"\n").map_err(io)?;
            }
            out.flush().map_err(io)
        }
    }
}

pub fn write_csv(pairs: &[SentencePair], writer: impl Write) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| std::io::Error::other(e);
    wtr.write_record([
        "pair_id",
        "premise",
        "hypothesis",
        "snli_label",
        "gold_score",
        "split",
    ])
    .map_err(to_io)?;
    for p in pairs {
        let label = p.snli_label.map(|l| l.as_str()).unwrap_or("");
        let score = p.gold_score.map(|s| s.to_string()).unwrap_or_default();
        wtr.write_record([
            p.pair_id.as_str(),
            &p.premise,
            &p.hypothesis,
            label,
            &score,
            p.split.as_str(),
        ])
        .map_err(to_io)?;
    }
    wtr.flush()
}

/// Reads a plain `id,score` CSV (optional header) such as a prediction file.
pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if record.len() < 2 {
            return Err(Error::parse(i + 1, "expected `id,score`"));
        }
        match record[1].trim().parse::<f64>() {
            Ok(v) => out.push((record[0].to_string(), v)),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::parse(
                    i + 1,
                    format!("invalid score `{}`", &record[1]),
                ))
            }
        }
    }
    Ok(out)
}

pub fn write_scores(
    path: impl AsRef<Path>,
    header: [&str; 2],
    rows: &[(String, f64)],
) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    wtr.write_record(header).map_err(io)?;
    for (id, v) in rows {
        wtr.write_record([id.as_str(), &v.to_string()])
            .map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub distinct_premises: usize,
    pub ent: usize,
    pub neu: usize,
    pub con: usize,
    pub unlabeled: usize,
    pub total_pairs: usize,
}

/// Per-split counts, always containing all three splits.
pub fn dataset_statistics(dataset: &Dataset) -> BTreeMap<Split, SplitStats> {
    let mut stats: BTreeMap<Split, SplitStats> = Split::ALL
        .iter()
        .map(|&s| (s, SplitStats::default()))
        .collect();
    let mut premises: HashMap<Split, HashSet<&str>> = HashMap::new();
    for pair in dataset.pairs() {
        let entry = stats.get_mut(&pair.split).expect("all splits present");
        match pair.snli_label {
            Some(CategoricalLabel::Ent) => entry.ent += 1,
            Some(CategoricalLabel::Neu) => entry.neu += 1,
            Some(CategoricalLabel::Con) => entry.con += 1,
            None => entry.unlabeled += 1,
        }
        entry.total_pairs += 1;
        premises
            .entry(pair.split)
            .or_default()
            .insert(&pair.premise);
    }
    for (split, set) in premises {
        stats
            .get_mut(&split)
            .expect("all splits present")
            .distinct_premises = set.len();
    }
    stats
}

/// Append-only JSONL event log.
///
/// Each [`EventLog::append`] call writes its events with a single `write_all`
/// followed by `sync_data`. A torn final line left by a crash is dropped
/// when the log is reopened.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns the events already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<AnnotationEvent>)> {
        let path = path.as_ref().to_path_buf();
        let mut events = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut valid_len = 0usize;
            let mut offset = 0usize;
            for (i, line) in text.split_inclusive('\n').enumerate() {
                offset += line.len();
                let complete = line.ends_with('\n');
                let body = line.trim();
                if body.is_empty() {
                    valid_len = offset;
                    continue;
                }
                match serde_json::from_str::<AnnotationEvent>(body) {
                    Ok(event) if complete => {
                        event.validate()?;
                        events.push(event);
                        valid_len = offset;
                    }
                    // torn tail from an interrupted append
                    _ if !complete => break,
                    Ok(_) => unreachable!(),
                    Err(e) => return Err(Error::parse(i + 1, e.to_string())),
                }
            }
            if valid_len < text.len() {
                let f = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                f.set_len(valid_len as u64)
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok((EventLog { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably writes `events`. Callers validate first.
    pub fn append(&mut self, events: &[AnnotationEvent]) -> Result<()> {
        let mut buf = Vec::new();
        for event in events {
            serde_json::to_writer(&mut buf, event).map_err(|e| Error::io(&self.path, e.into()))?;
            buf.push(b'\n');
        }
        self.file
            .write_all(&buf)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }

    /// Validates against `dataset`, persists, then commits in memory.
    /// Nothing is written or committed if validation fails.
    pub fn append_to(&mut self, dataset: &mut Dataset, events: Vec<AnnotationEvent>) -> Result<()> {
        dataset.check_events(&events)?;
        self.append(&events)?;
        dataset.append_events(events)
    }
}

/// Reads a standalone event JSONL file.
pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<AnnotationEvent>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: AnnotationEvent =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        events.push(event);
    }
    Ok(events)
}
