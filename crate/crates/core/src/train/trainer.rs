use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::init::init_params;
use super::optim::{adam_step, clip_gradients, AdamConfig, AdamState};
use crate::corpus::{EncodedSample, EntityLexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{evaluate_samples, MetricsReport};
use crate::model::{loss_teacher_forced, Checkpoint, Mode, ModelParams};
use crate::tensor::{Real, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    TargetReached,
    /// A loss or gradient went NaN/infinite; the best earlier model is kept.
    NonFinite { epoch: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub train_loss: f64,
    pub validation: MetricsReport,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub vocab_hash: String,
    pub num_parameters: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_checkpoint: Option<PathBuf>,
    pub stop: StopReason,
    /// Wall-clock seconds per epoch. The only field that varies between
    /// runs with the same seed.
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    pub fn best_validation(&self) -> Option<&MetricsReport> {
        let best = self.best_epoch?;
        self.epochs.iter().find(|e| e.epoch == best).map(|e| &e.validation)
    }

    /// The report with timings removed, for reproducibility comparisons.
    pub fn without_timings(&self) -> TrainReport {
        TrainReport {
            epoch_seconds: Vec::new(),
            ..self.clone()
        }
    }

    fn epoch_line(&self, i: usize) -> String {
        serde_json::to_string(&self.epochs[i]).expect("epoch record serializes") + "\n"
    }

    /// One JSON object per epoch, without timings.
    pub fn to_jsonl(&self) -> String {
        (0..self.epochs.len()).map(|i| self.epoch_line(i)).collect()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "variant {} ({} layer{}), {} parameters, {} epochs, stopped: {}\n",
            self.config.variant,
            self.config.layers,
            if self.config.layers == 1 { "" } else { "s" },
            self.num_parameters,
            self.epochs.len(),
            match &self.stop {
                StopReason::MaxEpochs => "max epochs".to_string(),
                StopReason::Patience => "patience".to_string(),
                StopReason::TargetReached => "target accuracy reached".to_string(),
                StopReason::NonFinite { epoch, message } => format!("non-finite in epoch {epoch}: {message}"),
            }
        );
        for e in &self.epochs {
            s.push_str(&format!(
                "epoch {:>3}  loss {:>9.4}  resp {:>5.1}  dial {:>5.1}  bleu {:>5.1}  f1 {:>5.1}{}\n",
                e.epoch,
                e.train_loss,
                100.0 * e.validation.per_response_accuracy,
                100.0 * e.validation.per_dialogue_accuracy,
                100.0 * e.validation.bleu,
                100.0 * e.validation.entity_f1,
                if e.improved { "  *" } else { "" }
            ));
        }
        if let Some(path) = &self.best_checkpoint {
            s.push_str(&format!("best checkpoint: {}\n", path.display()));
        }
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where to keep the best checkpoint so far.
    pub checkpoint_path: Option<PathBuf>,
    /// JSONL log, one line appended per epoch.
    pub log_path: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters of the best validation epoch (the initial parameters if no
    /// epoch completed).
    pub best: Checkpoint,
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Forward, backward, clip and Adam on one sample. Returns the loss before
/// the update.
pub fn train_step<T: Real>(
    model: &mut ModelParams<T>,
    adam: &mut AdamState<T>,
    sample: &EncodedSample,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (loss, mut grads) = {
        let mut tape = Tape::new(&model.params);
        let mut mode = Mode::Train {
            keep: config.keep_prob,
            rng,
        };
        let l = loss_teacher_forced(&mut tape, model, sample, &mut mode)?;
        let loss = tape.value(l).data()[0].as_f64();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {loss} on dialogue {} turn {}",
                sample.dialogue_id, sample.turn_index
            )));
        }
        (loss, tape.backward(l)?)
    };
    clip_gradients(&mut grads, config.clip_value);
    adam_step(&mut model.params, &grads, adam, &config.adam())?;
    Ok(loss)
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = File::options()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Per-sample training with validation after every epoch. Keeps the
/// parameters with the best validation per-response accuracy (earliest on
/// ties) and stops on patience, target accuracy, the epoch limit or a
/// non-finite loss. Deterministic for a given seed.
pub fn train_model(
    config: &TrainConfig,
    vocab: &Vocabulary,
    lexicon: &EntityLexicon,
    train: &[EncodedSample],
    valid: &[EncodedSample],
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model: ModelParams<f32> = init_params(config.variant, config.dims(vocab.len()), &mut rng)?;
    let mut adam = AdamState::new(&model.params);
    let vocab_hash = vocab.hash();
    let mut best = Checkpoint {
        params: model.clone(),
        vocab_hash: vocab_hash.clone(),
    };
    if let Some(path) = &options.log_path {
        File::create(path).map_err(|e| Error::io(path, e))?;
    }

    let mut report = TrainReport {
        config: config.clone(),
        vocab_hash,
        num_parameters: model.params.num_scalars(),
        epochs: Vec::new(),
        best_epoch: None,
        best_checkpoint: None,
        stop: StopReason::MaxEpochs,
        epoch_seconds: Vec::new(),
    };
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    'epochs: for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            match train_step(&mut model, &mut adam, &train[i], config, &mut rng) {
                Ok(loss) => total += loss,
                Err(Error::NonFinite(message)) => {
                    log::warn!("aborting in epoch {epoch}: {message}");
                    report.stop = StopReason::NonFinite { epoch, message };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let validation = evaluate_samples(&model.cast::<f64>(), vocab, lexicon, valid, config.max_response_len, false)?.report;
        let improved = validation.per_response_accuracy > best_accuracy;
        if improved {
            best_accuracy = validation.per_response_accuracy;
            best.params = model.clone();
            report.best_epoch = Some(epoch);
            since_best = 0;
            if let Some(path) = &options.checkpoint_path {
                best.save(path)?;
                report.best_checkpoint = Some(path.clone());
            }
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            validation,
            improved,
        };
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {epoch}: loss {:.4}, validation per-response {:.4}",
            record.train_loss,
            record.validation.per_response_accuracy
        );
        report.epochs.push(record);
        if let Some(path) = &options.log_path {
            append_line(path, &report.epoch_line(report.epochs.len() - 1))?;
        }
        if config.target_accuracy.is_some_and(|t| best_accuracy >= t) {
            report.stop = StopReason::TargetReached;
            break;
        }
        if config.patience > 0 && since_best >= config.patience {
            report.stop = StopReason::Patience;
            break;
        }
    }
    Ok(TrainOutcome { report, best })
}
