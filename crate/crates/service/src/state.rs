//! Annotation workflow state behind the HTTP layer.
//!
//! All mutations go through one mutex, so event-log appends are serialized
//! and every request sees a consistent snapshot.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use unli_core::datamodel::EventLog;
use unli_core::elicitation::{needs_escalation, run_aggregation, AveragingMode, BATCH_SIZE};
use unli_core::qualification::{
    evaluate_qualification, QualificationItem, QualificationResult, Thresholds,
};
use unli_core::scale::SLIDER_STEPS;
use unli_core::{AnnotationEvent, Dataset, ScaleParams, SentencePair};

use crate::error::ServiceError;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub scale: ScaleParams,
    pub thresholds: Thresholds,
    pub averaging: AveragingMode,
    pub redundancy: usize,
    pub max_qualification_attempts: u32,
    pub event_log: PathBuf,
    pub qualification_log: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(event_log: impl Into<PathBuf>) -> Self {
        Self {
            scale: ScaleParams::default(),
            thresholds: Thresholds::default(),
            averaging: AveragingMode::default(),
            redundancy: 2,
            max_qualification_attempts: 1,
            event_log: event_log.into(),
            qualification_log: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairView {
    pub pair_id: String,
    pub premise: String,
    pub hypothesis: String,
}

impl From<&SentencePair> for PairView {
    fn from(p: &SentencePair) -> Self {
        Self {
            pair_id: p.pair_id.clone(),
            premise: p.premise.clone(),
            hypothesis: p.hypothesis.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ServedBatch {
    pub batch_id: String,
    pub pairs: Vec<PairView>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PairStatus {
    /// Still waiting for more initial responses.
    Pending { pair_id: String, responses: usize },
    /// Enough concordant responses to aggregate.
    Complete { pair_id: String, responses: usize },
    /// Two discordant responses; a third annotator has been queued.
    Escalated { pair_id: String, responses: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmitOutcome {
    pub accepted: bool,
    pub pairs: Vec<PairStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub annotated: usize,
    pub awaiting_escalation: usize,
    pub aggregated: usize,
    pub total_pairs: usize,
    pub events: usize,
}

#[derive(Debug, Default)]
struct Session {
    qualified: bool,
    attempts: u32,
    open_batch: Option<String>,
    served: HashSet<String>,
}

#[derive(Debug)]
struct OpenBatch {
    annotator_id: String,
    pair_ids: Vec<String>,
}

#[derive(Debug)]
struct State {
    dataset: Dataset,
    log: EventLog,
    qualification_log: Option<File>,
    sessions: HashMap<String, Session>,
    /// One entry per response still needed, FIFO.
    queue: VecDeque<String>,
    open: HashMap<String, OpenBatch>,
    escalated: Vec<String>,
    escalated_set: HashSet<String>,
    next_batch: u64,
}

#[derive(Serialize)]
struct QualificationRecord<'a> {
    annotator_id: &'a str,
    passed: bool,
    pearson: Option<f64>,
    spearman: Option<f64>,
    timestamp: i64,
}

pub struct AnnotationService {
    config: ServiceConfig,
    items: Vec<QualificationItem>,
    state: Mutex<State>,
}

fn now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl AnnotationService {
    /// Builds the service over `pairs`, replaying any events already in the
    /// configured log to rebuild the work queue.
    pub fn new(
        pairs: Vec<SentencePair>,
        items: Vec<QualificationItem>,
        config: ServiceConfig,
    ) -> Result<Self, ServiceError> {
        config.scale.validate()?;
        if config.redundancy < 1 {
            return Err(ServiceError::BadRequest(
                "redundancy must be at least 1".into(),
            ));
        }
        let (log, events) = EventLog::open(&config.event_log)?;
        let dataset = Dataset::new(pairs, events)?;

        let mut counts: HashMap<&str, Vec<&AnnotationEvent>> = HashMap::new();
        for e in dataset.events() {
            counts.entry(e.pair_id.as_str()).or_default().push(e);
        }
        let mut queue = VecDeque::new();
        for round in 0..config.redundancy {
            for p in dataset.pairs() {
                let have = counts.get(p.pair_id.as_str()).map_or(0, Vec::len);
                if have <= round {
                    queue.push_back(p.pair_id.clone());
                }
            }
        }
        let mut escalated = Vec::new();
        for p in dataset.pairs() {
            if let Some(ev) = counts.get(p.pair_id.as_str()) {
                if ev.len() >= 2 && needs_escalation(ev[0], ev[1])? {
                    escalated.push(p.pair_id.clone());
                    if ev.len() == 2 {
                        queue.push_back(p.pair_id.clone());
                    }
                }
            }
        }

        let mut sessions: HashMap<String, Session> = HashMap::new();
        for e in dataset.events() {
            let s = sessions.entry(e.annotator_id.clone()).or_default();
            s.qualified = true;
            s.served.insert(e.pair_id.clone());
        }
        let qualification_log = match &config.qualification_log {
            Some(path) => {
                replay_qualifications(path, &mut sessions)?;
                Some(
                    OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(path)
                        .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?,
                )
            }
            None => None,
        };

        let next_batch = dataset
            .events()
            .iter()
            .filter_map(|e| e.batch_id.strip_prefix('b')?.parse::<u64>().ok())
            .max()
            .map_or(0, |n| n + 1);
        let escalated_set = escalated.iter().cloned().collect();
        Ok(Self {
            config,
            items,
            state: Mutex::new(State {
                dataset,
                log,
                qualification_log,
                sessions,
                queue,
                open: HashMap::new(),
                escalated,
                escalated_set,
                next_batch,
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        // write paths validate before mutating, so a poisoned lock still
        // guards consistent state
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn qualification_items(&self) -> Vec<PairView> {
        self.items.iter().map(|i| PairView::from(&i.pair)).collect()
    }

    /// Scores a qualification attempt given raw slider positions, one per item.
    pub fn qualify(
        &self,
        annotator_id: &str,
        raws: &[i64],
    ) -> Result<QualificationResult, ServiceError> {
        if annotator_id.is_empty() {
            return Err(ServiceError::BadRequest("missing annotator_id".into()));
        }
        let probs = raws
            .iter()
            .map(|&r| {
                if (0..=SLIDER_STEPS as i64).contains(&r) {
                    Ok(self.config.scale.to_probability(r as f64)?)
                } else {
                    Err(ServiceError::BadRequest(format!(
                        "slider value {r} outside [0, 10000]"
                    )))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut state = self.lock();
        let session = state.sessions.entry(annotator_id.to_string()).or_default();
        if session.qualified {
            return Err(ServiceError::Conflict(format!(
                "{annotator_id} is already qualified"
            )));
        }
        if session.attempts >= self.config.max_qualification_attempts {
            return Err(ServiceError::Forbidden(format!(
                "{annotator_id} has used all {} qualification attempts",
                self.config.max_qualification_attempts
            )));
        }
        let result = evaluate_qualification(&self.items, &probs, &self.config.thresholds)
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        session.attempts += 1;
        session.qualified = result.passed;

        if let Some(file) = state.qualification_log.as_mut() {
            let record = QualificationRecord {
                annotator_id,
                passed: result.passed,
                pearson: result.pearson,
                spearman: result.spearman,
                timestamp: now(),
            };
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.sync_data())
                .map_err(|e| ServiceError::Internal(format!("qualification log: {e}")))?;
        }
        Ok(result)
    }

    pub fn is_qualified(&self, annotator_id: &str) -> bool {
        self.lock()
            .sessions
            .get(annotator_id)
            .is_some_and(|s| s.qualified)
    }

    /// Marks an annotator as qualified without a test (e.g. a trusted pool).
    pub fn grant_qualification(&self, annotator_id: &str) {
        self.lock()
            .sessions
            .entry(annotator_id.to_string())
            .or_default()
            .qualified = true;
    }

    /// Serves up to five pairs this annotator has never seen. Returns the
    /// annotator's already-open batch if there is one.
    pub fn next_batch(&self, annotator_id: &str) -> Result<Option<ServedBatch>, ServiceError> {
        let mut guard = self.lock();
        let state = &mut *guard;
        let session = match state.sessions.get_mut(annotator_id) {
            Some(s) if s.qualified => s,
            _ => {
                return Err(ServiceError::Forbidden(format!(
                    "{annotator_id} is not qualified"
                )))
            }
        };
        if let Some(id) = &session.open_batch {
            let open = &state.open[id];
            return Ok(Some(ServedBatch {
                batch_id: id.clone(),
                pairs: open
                    .pair_ids
                    .iter()
                    .map(|p| PairView::from(state.dataset.pair(p).expect("served pairs exist")))
                    .collect(),
            }));
        }

        let mut picked: Vec<String> = Vec::with_capacity(BATCH_SIZE);
        let mut i = 0;
        while i < state.queue.len() && picked.len() < BATCH_SIZE {
            let pair_id = &state.queue[i];
            let eligible = !session.served.contains(pair_id)
                && !state.dataset.has_judged(pair_id, annotator_id)
                && !picked.contains(pair_id);
            if eligible {
                picked.push(state.queue.remove(i).expect("index in range"));
            } else {
                i += 1;
            }
        }
        if picked.is_empty() {
            return Ok(None);
        }
        let batch_id = format!("b{:06}", state.next_batch);
        state.next_batch += 1;
        session.served.extend(picked.iter().cloned());
        session.open_batch = Some(batch_id.clone());
        let pairs = picked
            .iter()
            .map(|p| PairView::from(state.dataset.pair(p).expect("queued pairs exist")))
            .collect();
        state.open.insert(
            batch_id.clone(),
            OpenBatch {
                annotator_id: annotator_id.to_string(),
                pair_ids: picked,
            },
        );
        Ok(Some(ServedBatch { batch_id, pairs }))
    }

    /// Persists one raw response per served pair, all or nothing, then
    /// queues a third annotation for any pair whose first two responses
    /// disagree by more than the escalation threshold.
    pub fn submit_batch(
        &self,
        annotator_id: Option<&str>,
        batch_id: &str,
        raws: &[i64],
    ) -> Result<SubmitOutcome, ServiceError> {
        let mut guard = self.lock();
        let state = &mut *guard;
        let open = state
            .open
            .get(batch_id)
            .ok_or_else(|| ServiceError::Conflict(format!("batch {batch_id} is not open")))?;
        if let Some(who) = annotator_id {
            if who != open.annotator_id {
                return Err(ServiceError::Conflict(format!(
                    "batch {batch_id} is not open for {who}"
                )));
            }
        }
        if raws.len() != open.pair_ids.len() {
            return Err(ServiceError::BadRequest(format!(
                "expected {} slider values, got {}",
                open.pair_ids.len(),
                raws.len()
            )));
        }
        if let Some(bad) = raws
            .iter()
            .find(|r| !(0..=SLIDER_STEPS as i64).contains(*r))
        {
            return Err(ServiceError::BadRequest(format!(
                "slider value {bad} outside [0, 10000]"
            )));
        }

        let mut responses: HashMap<&str, usize> = HashMap::new();
        for e in state.dataset.events() {
            *responses.entry(e.pair_id.as_str()).or_default() += 1;
        }
        let timestamp = now();
        let mut events = Vec::with_capacity(raws.len());
        for (pair_id, &raw) in open.pair_ids.iter().zip(raws) {
            let have = responses.get(pair_id.as_str()).copied().unwrap_or(0);
            if have >= 3 {
                return Err(ServiceError::Conflict(format!(
                    "pair {pair_id} already has 3 responses"
                )));
            }
            events.push(AnnotationEvent {
                pair_id: pair_id.clone(),
                annotator_id: open.annotator_id.clone(),
                raw_slider: raw as u32,
                batch_id: batch_id.to_string(),
                timestamp,
                round: have as u32 + 1,
            });
        }
        state.log.append_to(&mut state.dataset, events)?;

        let open = state.open.remove(batch_id).expect("checked above");
        if let Some(s) = state.sessions.get_mut(&open.annotator_id) {
            s.open_batch = None;
        }

        let mut per_pair: HashMap<&str, Vec<&AnnotationEvent>> = HashMap::new();
        for e in state.dataset.events() {
            per_pair.entry(e.pair_id.as_str()).or_default().push(e);
        }
        let mut statuses = Vec::with_capacity(open.pair_ids.len());
        let mut newly_escalated = Vec::new();
        for pair_id in &open.pair_ids {
            let ev = &per_pair[pair_id.as_str()];
            let responses = ev.len();
            let status = if responses == 2 && needs_escalation(ev[0], ev[1])? {
                if !state.escalated_set.contains(pair_id) {
                    newly_escalated.push(pair_id.clone());
                }
                PairStatus::Escalated {
                    pair_id: pair_id.clone(),
                    responses,
                }
            } else if responses >= self.config.redundancy.max(2) || responses == 3 {
                PairStatus::Complete {
                    pair_id: pair_id.clone(),
                    responses,
                }
            } else {
                PairStatus::Pending {
                    pair_id: pair_id.clone(),
                    responses,
                }
            };
            statuses.push(status);
        }
        for pair_id in newly_escalated {
            state.escalated_set.insert(pair_id.clone());
            state.escalated.push(pair_id.clone());
            state.queue.push_back(pair_id);
        }
        Ok(SubmitOutcome {
            accepted: true,
            pairs: statuses,
        })
    }

    pub fn progress(&self) -> Result<Progress, ServiceError> {
        let state = self.lock();
        let run = run_aggregation(&state.dataset, &self.config.scale, self.config.averaging)?;
        let annotated = state
            .dataset
            .events()
            .iter()
            .map(|e| e.pair_id.as_str())
            .collect::<HashSet<_>>()
            .len();
        Ok(Progress {
            annotated,
            awaiting_escalation: run.awaiting.len(),
            aggregated: run.results.len(),
            total_pairs: state.dataset.pairs().len(),
            events: state.dataset.events().len(),
        })
    }

    pub fn pair(&self, pair_id: &str) -> Option<PairView> {
        self.lock().dataset.pair(pair_id).map(PairView::from)
    }

    /// Snapshot of all persisted events.
    pub fn events(&self) -> Vec<AnnotationEvent> {
        self.lock().dataset.events().to_vec()
    }

    /// Pairs queued for a third annotation, in the order they were queued.
    pub fn escalations(&self) -> Vec<String> {
        self.lock().escalated.clone()
    }

    /// Responses still needed across all pairs.
    pub fn pending_slots(&self) -> usize {
        self.lock().queue.len()
    }
}

fn replay_qualifications(
    path: &PathBuf,
    sessions: &mut HashMap<String, Session>,
) -> Result<(), ServiceError> {
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            // torn tail from an interrupted write
            Err(_) => continue,
        };
        let (Some(id), Some(passed)) = (value["annotator_id"].as_str(), value["passed"].as_bool())
        else {
            continue;
        };
        let s = sessions.entry(id.to_string()).or_default();
        s.attempts += 1;
        s.qualified |= passed;
    }
    Ok(())
}
