//! Case store: in-memory state folded from the event log, with every
//! mutation funnelled through a single writer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use corax_core::imageio::GrayImage;
use corax_core::metrics::{CaseOutcome, MetricsReport, Provenance, build_report};
use corax_core::referral::{
    Actor, CaseAnalysis, Decision, Pipeline, Referral, ReviewStatus, RoiMode, decide,
};
use corax_core::{CaseBundle, CaseBundleFile, CoraxError};
use serde::Serialize;

use crate::ServiceError;
use crate::events::{Event, EventBody, EventLog, LOG_FILE};

pub const ROI_DIR: &str = "rois";

#[derive(Clone, Debug)]
pub struct StoredCase {
    pub bundle: CaseBundle,
    pub file: CaseBundleFile,
    pub content_hash: String,
}

/// Everything the log implies. Ordered maps keep snapshots canonical.
#[derive(Clone, Debug, Default)]
pub struct State {
    pub last_seq: u64,
    pub cases: BTreeMap<String, StoredCase>,
    pub analyses: BTreeMap<String, CaseAnalysis>,
    referral_case: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct SnapshotCase<'a> {
    content_hash: &'a str,
    bundle: &'a CaseBundleFile,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    last_seq: u64,
    cases: BTreeMap<&'a str, SnapshotCase<'a>>,
    analyses: &'a BTreeMap<String, CaseAnalysis>,
}

impl State {
    pub fn replay(events: &[Event]) -> Result<State, ServiceError> {
        let mut state = State::default();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), ServiceError> {
        match &event.body {
            EventBody::CaseIngested {
                case_id,
                content_hash,
                bundle,
            } => {
                let loaded = bundle.resolve(None)?;
                self.cases.insert(
                    case_id.clone(),
                    StoredCase {
                        bundle: loaded,
                        file: bundle.clone(),
                        content_hash: content_hash.clone(),
                    },
                );
            }
            EventBody::CaseAnalyzed { case_id, analysis } => {
                if !self.cases.contains_key(case_id) {
                    return Err(ServiceError::CorruptLog(format!(
                        "seq {}: analysis of unknown case {case_id}",
                        event.seq
                    )));
                }
                for r in &analysis.referrals {
                    self.referral_case.insert(r.referral_id.clone(), case_id.clone());
                }
                self.analyses.insert(case_id.clone(), analysis.clone());
            }
            EventBody::ReferralDecided {
                referral_id,
                decision,
                actor,
            } => {
                let slot = self.referral_mut(referral_id).ok_or_else(|| {
                    ServiceError::CorruptLog(format!("seq {}: unknown referral {referral_id}", event.seq))
                })?;
                *slot = decide(slot, *decision, *actor).map_err(|e| {
                    ServiceError::CorruptLog(format!("seq {}: {e}", event.seq))
                })?;
            }
            EventBody::DatasetGenerated { .. } => {}
        }
        self.last_seq = event.seq;
        Ok(())
    }

    pub fn referral(&self, referral_id: &str) -> Option<&Referral> {
        let case = self.referral_case.get(referral_id)?;
        self.analyses[case]
            .referrals
            .iter()
            .find(|r| r.referral_id == referral_id)
    }

    fn referral_mut(&mut self, referral_id: &str) -> Option<&mut Referral> {
        let case = self.referral_case.get(referral_id)?;
        self.analyses
            .get_mut(case)?
            .referrals
            .iter_mut()
            .find(|r| r.referral_id == referral_id)
    }

    pub fn referrals(&self) -> impl Iterator<Item = &Referral> {
        self.analyses.values().flat_map(|a| a.referrals.iter())
    }

    /// Canonical JSON of the state; equal states give equal bytes.
    pub fn snapshot(&self) -> String {
        let snap = Snapshot {
            last_seq: self.last_seq,
            cases: self
                .cases
                .iter()
                .map(|(id, c)| {
                    (
                        id.as_str(),
                        SnapshotCase {
                            content_hash: &c.content_hash,
                            bundle: &c.file,
                        },
                    )
                })
                .collect(),
            analyses: &self.analyses,
        };
        serde_json::to_string(&snap).expect("state serializes")
    }
}

pub struct Store {
    dir: PathBuf,
    pipeline: Pipeline,
    writer: Mutex<EventLog>,
    state: RwLock<State>,
}

/// Outcome of an ingest: the case id and whether a new event was written.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Ingested {
    pub case_id: String,
    pub created: bool,
}

impl Store {
    /// Opens the store under `dir`, replaying `events.jsonl` if present.
    pub fn open(dir: &Path, pipeline: Pipeline) -> Result<Store, ServiceError> {
        std::fs::create_dir_all(dir)?;
        let (log, events) = EventLog::open(&dir.join(LOG_FILE))?;
        let state = State::replay(&events)?;
        Ok(Store {
            dir: dir.to_path_buf(),
            pipeline,
            writer: Mutex::new(log),
            state: RwLock::new(state),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Runs `f` against the current state under the read lock.
    pub fn read<T>(&self, f: impl FnOnce(&State) -> T) -> T {
        f(&self.state.read().expect("state lock poisoned"))
    }

    pub fn snapshot(&self) -> String {
        self.read(State::snapshot)
    }

    fn commit(&self, log: &mut EventLog, body: EventBody) -> Result<Event, ServiceError> {
        let event = log.append(body)?;
        self.state.write().expect("state lock poisoned").apply(&event)?;
        Ok(event)
    }

    /// Validates and stores a bundle. Re-ingesting identical content is a
    /// no-op; the same id with different content is a conflict.
    pub fn ingest(&self, file: CaseBundleFile) -> Result<Ingested, ServiceError> {
        file.validate()?;
        if let Some(p) = &file.image_path {
            let path = Path::new(p);
            if path.is_absolute() || path.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return Err(CoraxError::validation("image_path", "must be relative to the data directory").into());
            }
        }
        let bundle = file.resolve(Some(&self.dir))?;
        let embedded = bundle.to_embedded_file()?;
        let hash = bundle.content_hash()?;
        let mut log = self.writer.lock().expect("writer lock poisoned");
        let existing = self.read(|s| s.cases.get(&bundle.case_id).map(|c| c.content_hash.clone()));
        match existing {
            Some(h) if h == hash => {
                return Ok(Ingested {
                    case_id: bundle.case_id,
                    created: false,
                })
            }
            Some(_) => {
                return Err(CoraxError::Conflict(format!(
                    "case {} already exists with different content",
                    bundle.case_id
                ))
                .into())
            }
            None => {}
        }
        self.commit(
            &mut log,
            EventBody::CaseIngested {
                case_id: bundle.case_id.clone(),
                content_hash: hash,
                bundle: embedded,
            },
        )?;
        Ok(Ingested {
            case_id: bundle.case_id,
            created: true,
        })
    }

    /// Analyzes a case once; later calls return the stored analysis.
    pub fn analyze(&self, case_id: &str, roi_mode: Option<RoiMode>) -> Result<CaseAnalysis, ServiceError> {
        let mut log = self.writer.lock().expect("writer lock poisoned");
        let (case, existing) = self.read(|s| {
            (
                s.cases.get(case_id).map(|c| c.bundle.clone()),
                s.analyses.get(case_id).cloned(),
            )
        });
        let case = case.ok_or_else(|| ServiceError::NotFound(format!("case {case_id}")))?;
        if let Some(a) = existing {
            return Ok(a);
        }
        let mut analysis = self
            .pipeline
            .analyze_case_with(&case, roi_mode.unwrap_or(self.pipeline.roi_mode))?;
        for r in analysis.referrals.iter_mut() {
            r.roi = None;
        }
        self.commit(
            &mut log,
            EventBody::CaseAnalyzed {
                case_id: case_id.to_string(),
                analysis: analysis.clone(),
            },
        )?;
        Ok(analysis)
    }

    /// Records a decision; a referral can be decided exactly once.
    pub fn decide(&self, referral_id: &str, decision: Decision, actor: Actor) -> Result<Referral, ServiceError> {
        let mut log = self.writer.lock().expect("writer lock poisoned");
        let current = self
            .read(|s| s.referral(referral_id).cloned())
            .ok_or_else(|| ServiceError::NotFound(format!("referral {referral_id}")))?;
        if current.status != ReviewStatus::Pending {
            return Err(CoraxError::Conflict(format!(
                "referral {referral_id} is already {}",
                serde_json::to_value(current.status)?.as_str().unwrap_or("decided")
            ))
            .into());
        }
        self.commit(
            &mut log,
            EventBody::ReferralDecided {
                referral_id: referral_id.to_string(),
                decision,
                actor,
            },
        )?;
        Ok(self
            .read(|s| s.referral(referral_id).cloned())
            .expect("decided referral exists"))
    }

    pub fn record_dataset(&self, summary: serde_json::Value) -> Result<Event, ServiceError> {
        let mut log = self.writer.lock().expect("writer lock poisoned");
        self.commit(&mut log, EventBody::DatasetGenerated { summary })
    }

    pub fn case_referrals(&self, case_id: &str) -> Result<Vec<Referral>, ServiceError> {
        self.read(|s| {
            if !s.cases.contains_key(case_id) {
                return Err(ServiceError::NotFound(format!("case {case_id}")));
            }
            Ok(s.analyses
                .get(case_id)
                .map(|a| a.referrals.clone())
                .unwrap_or_default())
        })
    }

    pub fn queue(&self, status: Option<ReviewStatus>) -> Vec<Referral> {
        self.read(|s| {
            s.referrals()
                .filter(|r| status.is_none_or(|st| r.status == st))
                .cloned()
                .collect()
        })
    }

    pub fn case_image_png(&self, case_id: &str) -> Result<Vec<u8>, ServiceError> {
        let image = self
            .read(|s| s.cases.get(case_id).map(|c| c.bundle.image.clone()))
            .ok_or_else(|| ServiceError::NotFound(format!("case {case_id}")))?;
        Ok(image.encode_png()?)
    }

    /// ROI of a referral as PNG, rendered on first request and cached under
    /// `rois/<referral_id>.png`.
    pub fn roi_png(&self, referral_id: &str) -> Result<Vec<u8>, ServiceError> {
        let (referral, case) = self
            .read(|s| {
                let r = s.referral(referral_id)?.clone();
                let c = s.cases.get(&r.case_id)?.bundle.clone();
                Some((r, c))
            })
            .ok_or_else(|| ServiceError::NotFound(format!("referral {referral_id}")))?;
        let path = self.dir.join(ROI_DIR).join(format!("{referral_id}.png"));
        if let Ok(bytes) = std::fs::read(&path) {
            return Ok(bytes);
        }
        let roi = self
            .pipeline
            .build_roi(&case, referral.interval, referral.roi_mode, None)?;
        let bytes = GrayImage::from_frame(&roi).encode_png()?;
        std::fs::create_dir_all(path.parent().expect("roi dir"))?;
        let tmp = path.with_extension("png.tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(bytes)
    }

    /// Metrics over every analyzed case whose referrals are all decided.
    /// Misses are the ground-truth labels absent from the submitted report.
    pub fn metrics(&self) -> Result<MetricsReport, ServiceError> {
        let items: Vec<(CaseAnalysis, CaseBundle)> = self.read(|s| {
            s.analyses
                .values()
                .filter(|a| a.all_decided())
                .map(|a| (a.clone(), s.cases[&a.case_id].bundle.clone()))
                .collect()
        });
        let mut outcomes = Vec::with_capacity(items.len());
        for (mut analysis, case) in items {
            self.pipeline.attach_rois(&case, &mut analysis)?;
            outcomes.push(CaseOutcome {
                misses: case.ground_truth.labels.difference(&analysis.set_a),
                analysis,
                ground_truth: case.ground_truth.clone(),
                dims: case.dims(),
            });
        }
        Ok(build_report(&outcomes, None, Provenance::for_pipeline(&self.pipeline))?)
    }
}
