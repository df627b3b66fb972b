use std::collections::HashMap;
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use log::{error, info};
use serde::{Deserialize, Serialize};

use tabsynth::data::{Schema, Table};
use tabsynth::evaluate::{EvaluateOptions, EvaluationReport};
use tabsynth::gan::{FixedCondition, Synthesizer, TrainConfig};
use tabsynth::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Train,
    Synthesize,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

/// Epochs for training, rows for synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub current: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Id of the model, synthetic table or report the job produces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
}

#[derive(Debug, Default)]
pub(crate) struct JobBoard {
    inner: Mutex<(u64, HashMap<String, Job>)>,
}

impl JobBoard {
    pub(crate) fn create(&self, kind: JobKind, total: usize, artifact: Option<String>) -> Job {
        let mut g = self.inner.lock().expect("job board poisoned");
        g.0 += 1;
        let job = Job {
            id: format!("job-{}", g.0),
            kind,
            state: JobState::Queued,
            progress: Progress { current: 0, total },
            error: None,
            artifact,
        };
        g.1.insert(job.id.clone(), job.clone());
        job
    }

    pub(crate) fn get(&self, id: &str) -> Option<Job> {
        self.inner.lock().expect("job board poisoned").1.get(id).cloned()
    }

    /// The most recent job that produces `artifact`.
    pub(crate) fn for_artifact(&self, artifact: &str) -> Option<Job> {
        let g = self.inner.lock().expect("job board poisoned");
        g.1.values()
            .filter(|j| j.artifact.as_deref() == Some(artifact))
            .max_by_key(|j| j.id[4..].parse::<u64>().unwrap_or(0))
            .cloned()
    }

    /// Applies `f` unless that would move the state or progress backwards.
    pub(crate) fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        let mut g = self.inner.lock().expect("job board poisoned");
        if let Some(job) = g.1.get_mut(id) {
            let mut next = job.clone();
            f(&mut next);
            if next.state >= job.state && next.progress.current >= job.progress.current {
                *job = next;
            }
        }
    }

    fn running(&self, id: &str) {
        self.update(id, |j| j.state = JobState::Running);
    }

    fn finish(&self, id: &str, result: tabsynth::Result<String>) {
        self.update(id, |j| match result {
            Ok(artifact) => {
                j.state = JobState::Done;
                j.progress.current = j.progress.total;
                j.artifact = Some(artifact);
            }
            Err(e) => {
                j.state = JobState::Failed;
                j.error = Some(e.to_string());
            }
        });
    }
}

pub(crate) enum Task {
    Train {
        job: String,
        model: String,
        dataset: String,
        table: Table,
        schema: Schema,
        config: TrainConfig,
    },
}

/// Single training thread fed in FIFO order.
#[derive(Clone)]
pub(crate) struct Worker {
    tx: Sender<Task>,
}

impl Worker {
    pub(crate) fn spawn(ws: Workspace, jobs: Arc<JobBoard>) -> Self {
        let (tx, rx) = channel::<Task>();
        thread::Builder::new()
            .name("train-worker".into())
            .spawn(move || {
                for task in rx {
                    match task {
                        Task::Train {
                            job,
                            model,
                            dataset,
                            table,
                            schema,
                            config,
                        } => {
                            jobs.running(&job);
                            info!("{job}: training model {model} on {dataset}");
                            let result = Synthesizer::fit_with_progress(&table, &schema, &config, |r| {
                                jobs.update(&job, |j| j.progress.current = r.epoch);
                            })
                            .and_then(|m| ws.add_model_as(&model, &dataset, &m))
                            .map(|e| e.id);
                            if let Err(e) = &result {
                                error!("{job}: {e}");
                            }
                            jobs.finish(&job, result);
                        }
                    }
                }
            })
            .expect("spawn training worker");
        Worker { tx }
    }

    pub(crate) fn submit(&self, task: Task) {
        self.tx.send(task).expect("training worker is alive");
    }
}

pub(crate) fn run_synthesis(
    ws: &Workspace,
    jobs: &JobBoard,
    job: &str,
    model: &str,
    rows: usize,
    seed: u64,
    condition: Option<FixedCondition>,
) {
    jobs.running(job);
    let result = ws.load_model(model).and_then(|m| {
        let table = m.synthesize(rows, condition.as_ref(), seed)?;
        ws.add_synthetic(model, &table, seed, condition.map(|c| c.to_string()))
            .map(|e| e.id)
    });
    jobs.finish(job, result);
}

pub(crate) fn run_report(ws: &Workspace, jobs: &JobBoard, job: &str, model: &str, synthetic: &str, seed: u64) {
    jobs.running(job);
    let result = (|| {
        let entry = ws
            .manifest()?
            .model(model)
            .cloned()
            .ok_or_else(|| tabsynth::Error::NotFound(format!("model `{model}`")))?;
        let m = ws.load_model(model)?;
        let schema = m.transformer().schema().clone();
        let (real, _) = ws.load_dataset(&entry.dataset)?;
        let synth = ws.load_synthetic(synthetic)?;
        let options = EvaluateOptions {
            target: schema.target().map(|t| t.name.clone()),
            seed,
            ..EvaluateOptions::default()
        };
        let report = EvaluationReport::compute(&real, &synth, &schema, &options)?;
        ws.add_report(&report, Some(model.to_string()), Some(synthetic.to_string()))
            .map(|e| e.id)
    })();
    jobs.finish(job, result);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_and_progress_only_move_forward() {
        let board = JobBoard::default();
        let job = board.create(JobKind::Train, 10, None);
        board.update(&job.id, |j| j.progress.current = 4);
        board.update(&job.id, |j| j.progress.current = 2);
        assert_eq!(board.get(&job.id).unwrap().progress.current, 4);
        board.finish(&job.id, Ok("m".into()));
        board.update(&job.id, |j| j.state = JobState::Running);
        let done = board.get(&job.id).unwrap();
        assert_eq!(done.state, JobState::Done);
        assert_eq!(done.progress.current, 10);
        assert_eq!(done.artifact.as_deref(), Some("m"));
    }

    #[test]
    fn latest_job_for_artifact() {
        let board = JobBoard::default();
        board.create(JobKind::Train, 1, Some("a".into()));
        let second = board.create(JobKind::Train, 1, Some("a".into()));
        assert_eq!(board.for_artifact("a").unwrap().id, second.id);
        assert!(board.for_artifact("b").is_none());
    }
}
