//! Single runs and parameter sweeps with file output.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::ExperimentConfig;
use super::experiment::{run_point, Prepared, RunOptions, RunOutcome};
use super::output::{run_stem, write_index, write_run, IndexEntry, INDEX_FILE};
use super::{resolve_output_dir, HarnessError};

pub struct SweepResult {
    pub dir: PathBuf,
    pub index: PathBuf,
    pub entries: Vec<IndexEntry>,
    pub outcomes: Vec<RunOutcome>,
}

/// Runs every point of the configuration on `workers` threads and writes one
/// CSV plus sidecar per point and an index file.
pub fn sweep(config: &ExperimentConfig, workers: usize) -> Result<SweepResult, HarnessError> {
    let prep = Prepared::new(config)?;
    let points = config.points();
    let dir = resolve_output_dir(&config.output.dir);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunOutcome, HarnessError>>>> =
        Mutex::new((0..points.len()).map(|_| None).collect());
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(points.len()) {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= points.len() {
                    break;
                }
                let result = run_point(&prep, points[k], RunOptions::default());
                if result.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().expect("no poisoned workers")[k] = Some(result);
            });
        }
    });
    let mut outcomes = Vec::with_capacity(points.len());
    for slot in slots.into_inner().expect("no poisoned workers") {
        match slot {
            Some(Ok(o)) => outcomes.push(o),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    let mut entries = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let stem = run_stem(config, o.point);
        write_run(&dir, config, &stem, o, prep.compliant)?;
        entries.push(IndexEntry::new(config, &stem, o));
    }
    let index = dir.join(INDEX_FILE);
    write_index(&index, &entries)?;
    Ok(SweepResult {
        dir,
        index,
        entries,
        outcomes,
    })
}

/// A single-point run; fails if the configuration holds grids.
pub fn run(config: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    let n = config.points().len();
    if n != 1 {
        return Err(HarnessError::Config(format!(
            "configuration describes {n} runs; use the sweep command"
        )));
    }
    sweep(config, 1)
}
