//! Training observer that streams the metric log and writes periodic
//! checkpoints.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use seq2seq_core::model::Seq2SeqModel;
use seq2seq_core::training::{MetricRecord, TrainObserver, TrainingProgress};
use seq2seq_core::{Error, Real};

use crate::error::{AppError, AppResult};
use crate::io::save_checkpoint;

pub fn checkpoint_name(step: u64) -> String {
    format!("checkpoint-{step:08}.s2s")
}

pub const FINAL_CHECKPOINT: &str = "final.s2s";

pub struct RunObserver {
    log: Option<(PathBuf, File)>,
    checkpoint_dir: Option<PathBuf>,
    echo: bool,
    /// Records seen so far, in order.
    pub records: Vec<MetricRecord>,
    failure: Option<AppError>,
}

impl RunObserver {
    /// `log` is opened for appending. `echo` also prints each record on
    /// standard output.
    pub fn new(log: Option<&Path>, checkpoint_dir: Option<&Path>, echo: bool) -> AppResult<Self> {
        let log = match log {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| AppError::io(path, e))?;
                Some((path.to_path_buf(), file))
            }
            None => None,
        };
        Ok(Self {
            log,
            checkpoint_dir: checkpoint_dir.map(Path::to_path_buf),
            echo,
            records: Vec::new(),
            failure: None,
        })
    }

    /// The IO error that aborted training, if any.
    pub fn take_failure(&mut self) -> Option<AppError> {
        self.failure.take()
    }

    fn fail(&mut self, err: AppError) -> Error {
        let msg = err.to_string();
        self.failure = Some(err);
        Error::Input(msg)
    }
}

impl<T: Real> TrainObserver<T> for RunObserver {
    fn on_record(&mut self, record: &MetricRecord) -> seq2seq_core::Result<()> {
        self.records.push(*record);
        if self.echo {
            println!("{record}");
        }
        if let Some((path, file)) = self.log.as_mut() {
            let written = writeln!(file, "{record}").and_then(|_| file.flush());
            if let Err(e) = written {
                let err = AppError::io(path.clone(), e);
                return Err(self.fail(err));
            }
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, model: &Seq2SeqModel<T>, progress: &TrainingProgress) -> seq2seq_core::Result<()> {
        if let Some(dir) = &self.checkpoint_dir {
            let path = dir.join(checkpoint_name(progress.step));
            if let Err(e) = save_checkpoint(model, progress, &path) {
                return Err(self.fail(e));
            }
        }
        Ok(())
    }
}
