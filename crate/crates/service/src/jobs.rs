//! In-memory job store with LRU eviction and a bounded worker pool.
//!
//! Status only moves PENDING -> RUNNING -> DONE | FAILED, or PENDING ->
//! FAILED on cancellation. A final job is never modified again.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use fmkit_core::CancelToken;
use lru::LruCache;
use serde_json::Value;
use tokio::sync::Semaphore;

use crate::api::{ApiError, ErrorBody, JobStatus, JobView, ModelText};
use crate::ops::{self, Task};

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct Job {
    view: JobView,
    cancel: CancelToken,
}

#[derive(Clone)]
pub struct JobQueue {
    store: Arc<Mutex<LruCache<String, Job>>>,
    permits: Arc<Semaphore>,
    enum_bound: usize,
}

impl JobQueue {
    pub fn new(capacity: NonZeroUsize, workers: usize, enum_bound: usize) -> Self {
        JobQueue {
            store: Arc::new(Mutex::new(LruCache::new(capacity))),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            enum_bound,
        }
    }

    fn with<R>(&self, f: impl FnOnce(&mut LruCache<String, Job>) -> R) -> R {
        f(&mut self.store.lock().expect("job store poisoned"))
    }

    /// Records a PENDING job and schedules it; must run inside a tokio runtime.
    pub fn submit(&self, task: Task, model: ModelText) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let cancel = CancelToken::new();
        let view = JobView {
            job_id: id.clone(),
            operation: task.operation(),
            status: JobStatus::Pending,
            submitted_at: now_ms(),
            started_at: None,
            finished_at: None,
            result: None,
            error: None,
        };
        self.with(|s| {
            s.put(
                id.clone(),
                Job {
                    view,
                    cancel: cancel.clone(),
                },
            )
        });
        let queue = self.clone();
        let job_id = id.clone();
        tokio::spawn(async move {
            let _permit = queue
                .permits
                .clone()
                .acquire_owned()
                .await
                .expect("never closed");
            if !queue.start(&job_id) {
                return;
            }
            let bound = queue.enum_bound;
            let token = cancel.clone();
            let outcome =
                tokio::task::spawn_blocking(move || ops::run(&task, &model, bound, &token))
                    .await
                    .unwrap_or_else(|e| {
                        Err(ApiError::new(
                            axum::http::StatusCode::INTERNAL_SERVER_ERROR,
                            "internal",
                            format!("job panicked: {e}"),
                        ))
                    });
            queue.finish(&job_id, outcome);
        });
        id
    }

    /// PENDING -> RUNNING; false if the job was canceled or evicted meanwhile.
    fn start(&self, id: &str) -> bool {
        self.with(|s| match s.peek_mut(id) {
            Some(job) if job.view.status == JobStatus::Pending => {
                job.view.status = JobStatus::Running;
                job.view.started_at = Some(now_ms());
                true
            }
            _ => false,
        })
    }

    fn finish(&self, id: &str, outcome: Result<Value, ApiError>) {
        self.with(|s| {
            let Some(job) = s.peek_mut(id) else { return };
            if job.view.status != JobStatus::Running {
                return;
            }
            job.view.finished_at = Some(now_ms());
            match outcome {
                Ok(v) => {
                    job.view.status = JobStatus::Done;
                    job.view.result = Some(v);
                }
                Err(e) => fail(&mut job.view, e.body),
            }
        })
    }

    pub fn get(&self, id: &str) -> Option<JobView> {
        self.with(|s| s.get(id).map(|j| j.view.clone()))
    }

    /// PENDING fails at once; RUNNING is signalled and fails at its next
    /// checkpoint; final jobs are left alone.
    pub fn cancel(&self, id: &str) -> Option<JobStatus> {
        self.with(|s| {
            let job = s.get_mut(id)?;
            match job.view.status {
                JobStatus::Pending => {
                    job.cancel.cancel();
                    job.view.finished_at = Some(now_ms());
                    fail(&mut job.view, ApiError::canceled().body);
                }
                JobStatus::Running => job.cancel.cancel(),
                JobStatus::Done | JobStatus::Failed => {}
            }
            Some(job.view.status)
        })
    }

    pub fn len(&self) -> usize {
        self.with(|s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn fail(view: &mut JobView, error: ErrorBody) {
    view.status = JobStatus::Failed;
    view.error = Some(error);
}
