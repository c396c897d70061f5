use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::write_checkpoint;
use super::config::TrainConfig;
use super::seq2seq::Seq2Seq;
use crate::error::{Error, Result};
use crate::neural::{clip_global_norm, AdamState, LrScheduler, PlateauEvent};
use crate::scalar::Scalar;
use crate::text::{Corpus, Vocabulary};

/// Means over one pass of the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_nll: f64,
    pub reg: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Optimizer, schedule and shuffling state carried across epochs.
pub struct Trainer<T: Scalar> {
    config: TrainConfig,
    adam: AdamState<T>,
    scheduler: LrScheduler,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, model: &Seq2Seq<T>) -> Result<Self> {
        config.validate()?;
        let scheduler = LrScheduler::new(config.patience, config.lr_factor, config.min_lr)?;
        Ok(Self {
            adam: AdamState::new(config.adam, model.params()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            scheduler,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.adam.lr()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One shuffled pass with teacher forcing: per batch, forward, backward,
    /// clip, ADAM step.
    pub fn train_epoch(&mut self, model: &mut Seq2Seq<T>, corpus: &Corpus<T>) -> Result<EpochReport> {
        if corpus.is_empty() {
            return Err(Error::Empty("train_epoch"));
        }
        let mu = T::of(self.config.mu);
        let clip = T::of(self.config.clip_norm);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut loss, mut nll, mut reg) = (0.0, 0.0, 0.0);
        for batch in order.chunks(self.config.batch_size) {
            let mut grads = model.params().zero_grads();
            for &i in batch {
                let pair = &corpus.pairs[i];
                let terms = model.accumulate_grads(pair, mu, Some(&mut self.rng), &mut grads).map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("epoch {}, pair {i}: {msg}", self.epoch + 1)),
                    other => other,
                })?;
                loss += terms.loss.as_f64();
                nll += terms.nll.as_f64();
                reg += terms.reg.as_f64();
            }
            grads.scale(T::one() / T::of_usize(batch.len()));
            if !grads.all_finite() {
                return Err(Error::NonFinite(format!("gradient in epoch {}", self.epoch + 1)));
            }
            clip_global_norm(&mut grads, clip);
            self.adam.step(model.params_mut(), &grads)?;
        }
        self.epoch += 1;
        let n = corpus.len() as f64;
        Ok(EpochReport { epoch: self.epoch, train_loss: loss / n, train_nll: nll / n, reg: reg / n, val_loss: None, lr: self.adam.lr() })
    }

    /// Feeds the epoch's validation metric to the plateau schedule.
    pub fn observe(&mut self, metric: f64) -> PlateauEvent {
        let mut lr = self.adam.lr();
        let event = self.scheduler.observe(metric, &mut lr);
        self.adam.set_lr(lr);
        event
    }
}

/// Mean deterministic loss (no dropout) over a corpus.
pub fn evaluate_loss<T: Scalar>(model: &Seq2Seq<T>, corpus: &Corpus<T>, mu: f64) -> Result<f64> {
    Ok(model.batch_loss(&corpus.pairs, T::of(mu))?.as_f64())
}

/// Artifacts of one training run: `config.json`, `metrics.jsonl` and
/// `best.ckpt`, rewritten whenever the schedule sees an improvement.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    vocab: Option<Vocabulary>,
}

impl RunDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self { root: root.as_ref().to_path_buf(), vocab: None })
    }

    /// Embeds `vocab` in every checkpoint so it can be served on its own.
    pub fn with_vocab(mut self, vocab: Vocabulary) -> Self {
        self.vocab = Some(vocab);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.root.join("best.ckpt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn write_config<T: Scalar>(&self, model: &Seq2Seq<T>, train: &TrainConfig) -> Result<()> {
        let record = serde_json::json!({ "model": model.config(), "train": train });
        fs::write(self.root.join("config.json"), serde_json::to_vec_pretty(&record)?)?;
        File::create(self.metrics_path())?;
        Ok(())
    }

    pub fn log_epoch(&self, report: &EpochReport) -> Result<()> {
        let mut f = OpenOptions::new().append(true).create(true).open(self.metrics_path())?;
        writeln!(f, "{}", serde_json::to_string(report)?)?;
        Ok(())
    }

    pub fn read_metrics(&self) -> Result<Vec<EpochReport>> {
        let text = fs::read_to_string(self.metrics_path())?;
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
    }
}

/// Trains for `config.epochs` epochs. The schedule watches validation loss,
/// or training loss when `val` is empty.
pub fn fit<T: Scalar>(
    model: &mut Seq2Seq<T>,
    train: &Corpus<T>,
    val: &Corpus<T>,
    config: &TrainConfig,
    run: Option<&RunDir>,
) -> Result<Vec<EpochReport>> {
    let mut trainer = Trainer::new(config.clone(), model)?;
    if let Some(r) = run {
        r.write_config(model, config)?;
    }
    let mut reports = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut report = trainer.train_epoch(model, train)?;
        let watched = if val.is_empty() {
            report.train_loss
        } else {
            let v = evaluate_loss(model, val, config.mu)?;
            report.val_loss = Some(v);
            v
        };
        let event = trainer.observe(watched);
        report.lr = trainer.lr();
        if let Some(r) = run {
            r.log_epoch(&report)?;
            if event == PlateauEvent::Improved {
                write_checkpoint(model, r.vocab.as_ref(), r.checkpoint_path())?;
            }
        }
        reports.push(report);
    }
    Ok(reports)
}
