use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, cross_entropy_grad};
use super::optim::{AdamW, AdamWConfig, GroupLrs};
use super::schedule::WarmRestarts;
use crate::dataset::{DatasetManifest, EmotionLabel};
use crate::error::{Error, Result};
use crate::eval::metrics::{argmax, confusion_k, war};
use crate::model::{model_input, Mode, ModelState, Parameters, Params};
use crate::preprocess::PreprocessConfig;

/// One preprocessed training input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Array3<f64>,
    pub label: EmotionLabel,
}

/// Loads and preprocesses every sample of a manifest.
pub fn load_examples(manifest: &DatasetManifest, pcfg: &PreprocessConfig) -> Result<Vec<Example>> {
    pcfg.load_manifest(manifest)?
        .into_iter()
        .map(|(img, label)| {
            Ok(Example {
                input: model_input(&img)?,
                label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub micro_batch: usize,
    pub accum_steps: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Steps in the first cycle; `None` means one epoch.
    pub sched_t0: Option<u64>,
    pub sched_t_mult: u64,
    pub eta_min: f64,
    /// Patch embedding plus this many leading encoder layers stay fixed.
    pub freeze_depth: usize,
    /// Size of the fixed validation batch checked for a finite loss each epoch.
    pub probe_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            seed: 42,
            micro_batch: 2,
            accum_steps: 8,
            lr_encoder: 1e-7,
            lr_decoder: 1e-5,
            weight_decay: 0.05,
            betas: (0.9, 0.999),
            eps: 1e-8,
            sched_t0: None,
            sched_t_mult: 2,
            eta_min: 0.0,
            freeze_depth: 0,
            probe_size: 16,
        }
    }
}

impl TrainConfig {
    /// Desk-scale learning rates for the toy model.
    pub fn toy() -> Self {
        Self {
            epochs: 50,
            lr_encoder: 1e-3,
            lr_decoder: 1e-2,
            ..Self::default()
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.micro_batch * self.accum_steps
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.micro_batch == 0 {
            return Err(Error::config("train.micro_batch", "must be at least 1"));
        }
        if self.accum_steps == 0 {
            return Err(Error::config("train.accum_steps", "must be at least 1"));
        }
        if !(self.lr_encoder > 0.0 && self.lr_encoder < self.lr_decoder) {
            return Err(Error::config(
                "train.lr_encoder",
                format!(
                    "need 0 < lr_encoder < lr_decoder, got {} and {}",
                    self.lr_encoder, self.lr_decoder
                ),
            ));
        }
        for (key, b) in [("train.betas.0", self.betas.0), ("train.betas.1", self.betas.1)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, format!("{b} outside [0, 1)")));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::config("train.eps", "must be positive"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if self.sched_t0 == Some(0) {
            return Err(Error::config("train.sched_t0", "must be at least 1"));
        }
        if self.sched_t_mult == 0 {
            return Err(Error::config("train.sched_t_mult", "must be at least 1"));
        }
        if self.eta_min.is_nan() || self.eta_min < 0.0 {
            return Err(Error::config("train.eta_min", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    pub val_war: f64,
    pub probe_loss: f64,
    pub lr_encoder: Vec<f64>,
    pub lr_decoder: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Epoch with the highest validation WAR, earliest on ties.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.epochs {
            if best.is_none_or(|b| r.val_war > b.val_war) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    /// Equality on everything except wall time.
    pub fn same_run(&self, other: &TrainLog) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                EpochRecord {
                    wall_time_s: 0.0,
                    ..a.clone()
                } == EpochRecord {
                    wall_time_s: 0.0,
                    ..b.clone()
                }
            })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.epochs {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut epochs = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                epochs.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { epochs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Adds `scale * d(mean loss)/d params` for one batch into `grads` and
/// returns the batch's mean loss.
fn accumulate_batch(
    model: &ModelState,
    batch: &[&Example],
    scale: f64,
    grads: &mut Params,
    mode: &mut Mode<'_>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidAccumulation("empty micro-batch".into()));
    }
    let b = batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let (logits, cache) = model.forward_sample(ex.input.view(), mode)?;
        let row = logits.insert_axis(ndarray::Axis(0));
        let (loss, dl) = cross_entropy_grad(row.view(), &[ex.label.id()])?;
        total += loss;
        let dlogits = dl.row(0).mapv(|v| v * scale / b);
        model.backward_sample(&cache, dlogits.view(), grads);
    }
    Ok(total / b)
}

/// Mean loss over the batch and its gradient.
pub fn batch_gradients(model: &ModelState, batch: &[&Example], mode: &mut Mode<'_>) -> Result<(f64, Params)> {
    let mut grads = model.params.zeros_like();
    let loss = accumulate_batch(model, batch, 1.0, &mut grads, mode)?;
    Ok((loss, grads))
}

/// Average of the per-micro-batch mean-loss gradients. Micro-batches must
/// all have the same size.
pub fn accumulated_gradients(
    model: &ModelState,
    micro_batches: &[Vec<&Example>],
    mode: &mut Mode<'_>,
) -> Result<(f64, Params)> {
    let Some(first) = micro_batches.first() else {
        return Err(Error::InvalidAccumulation("no micro-batches".into()));
    };
    if let Some(bad) = micro_batches.iter().find(|m| m.len() != first.len()) {
        return Err(Error::InvalidAccumulation(format!(
            "micro-batch sizes differ: {} vs {}",
            first.len(),
            bad.len()
        )));
    }
    let scale = 1.0 / micro_batches.len() as f64;
    let mut grads = model.params.zeros_like();
    let mut loss = 0.0;
    for mb in micro_batches {
        loss += scale * accumulate_batch(model, mb, scale, &mut grads, mode)?;
    }
    Ok((loss, grads))
}

/// Eval-mode logits for a set of examples, `(N, classes)`.
pub fn predict(model: &ModelState, examples: &[Example]) -> Result<Array2<f64>> {
    let k = model.config().decoder.num_classes;
    let mut out = Array2::zeros((examples.len(), k));
    for (ex, mut row) in examples.iter().zip(out.rows_mut()) {
        row.assign(&model.logits(ex.input.view())?);
    }
    Ok(out)
}

/// Validation WAR of `model` on `examples`.
pub fn evaluate_war(model: &ModelState, examples: &[Example]) -> Result<f64> {
    let logits = predict(model, examples)?;
    let preds: Vec<usize> = logits.rows().into_iter().map(|r| argmax(&r.to_vec())).collect();
    let targets: Vec<usize> = examples.iter().map(|e| e.label.id()).collect();
    war(&confusion_k(&preds, &targets, logits.ncols())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestState {
    pub epoch: usize,
    pub val_war: f64,
    pub model: ModelState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Highest validation WAR seen, or the initial model if no epoch ran.
    pub best: ModelState,
    pub best_epoch: Option<usize>,
    pub last: ModelState,
    pub log: TrainLog,
}

/// Training loop state: everything needed to resume exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub(crate) config: TrainConfig,
    pub model: ModelState,
    pub optimizer: AdamW,
    pub(crate) schedule: WarmRestarts,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) epoch: usize,
    pub(crate) log: TrainLog,
    pub(crate) best: Option<BestState>,
}

impl Trainer {
    /// `train_len` fixes the steps per epoch, which sets the first
    /// schedule cycle unless `sched_t0` is given.
    pub fn new(model: ModelState, config: TrainConfig, train_len: usize) -> Result<Self> {
        config.validate()?;
        let steps = (train_len / config.effective_batch()) as u64;
        let t0 = match config.sched_t0 {
            Some(t0) => t0,
            None if steps == 0 && config.epochs > 0 => {
                return Err(Error::InvalidAccumulation(format!(
                    "{train_len} training samples is less than one effective batch of {}",
                    config.effective_batch()
                )))
            }
            None => steps.max(1),
        };
        Ok(Self {
            schedule: WarmRestarts::new(t0, config.sched_t_mult, config.eta_min)?,
            optimizer: AdamW::new(&model.params, config.adamw()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            model,
            config,
            epoch: 0,
            log: TrainLog::default(),
            best: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schedule(&self) -> &WarmRestarts {
        &self.schedule
    }

    /// Changes the total epoch count, e.g. to extend a resumed run.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.config.epochs = epochs;
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn best(&self) -> Option<&BestState> {
        self.best.as_ref()
    }

    /// Learning rates for the next optimizer step.
    pub fn current_lrs(&self) -> GroupLrs {
        let step = self.optimizer.step;
        GroupLrs {
            encoder: self.schedule.lr(step, self.config.lr_encoder),
            decoder: self.schedule.lr(step, self.config.lr_decoder),
        }
    }

    /// One optimizer step from `accum_steps` equal-sized micro-batches.
    /// Returns the mean loss.
    pub fn train_step_accumulated(&mut self, micro_batches: &[Vec<&Example>]) -> Result<f64> {
        if micro_batches.len() != self.config.accum_steps {
            return Err(Error::InvalidAccumulation(format!(
                "expected {} micro-batches, got {}",
                self.config.accum_steps,
                micro_batches.len()
            )));
        }
        let mut mode = Mode::Train(&mut self.rng);
        let (loss, grads) = accumulated_gradients(&self.model, micro_batches, &mut mode)?;
        let lrs = self.current_lrs();
        self.optimizer
            .step(&mut self.model.params, &grads, lrs, self.config.freeze_depth)?;
        Ok(loss)
    }

    fn run_epoch(&mut self, train: &[Example], val: &[Example]) -> Result<EpochRecord> {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut lr_encoder, mut lr_decoder, mut losses) = (Vec::new(), Vec::new(), Vec::new());
        for chunk in order.chunks_exact(self.config.effective_batch()) {
            let micro: Vec<Vec<&Example>> = chunk
                .chunks(self.config.micro_batch)
                .map(|c| c.iter().map(|&i| &train[i]).collect())
                .collect();
            let lrs = self.current_lrs();
            losses.push(self.train_step_accumulated(&micro)?);
            lr_encoder.push(lrs.encoder);
            lr_decoder.push(lrs.decoder);
        }
        self.epoch += 1;

        let probe = &val[..val.len().min(self.config.probe_size.max(1))];
        let probe_logits = predict(&self.model, probe)?;
        let targets: Vec<usize> = probe.iter().map(|e| e.label.id()).collect();
        let probe_loss = cross_entropy(probe_logits.view(), &targets)?;
        if !probe_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                loss: probe_loss,
            });
        }
        Ok(EpochRecord {
            epoch: self.epoch,
            steps: losses.len() as u64,
            train_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            val_war: evaluate_war(&self.model, val)?,
            probe_loss,
            lr_encoder,
            lr_decoder,
            wall_time_s: started.elapsed().as_secs_f64(),
        })
    }

    /// Runs the remaining epochs up to `config.epochs`, calling `on_epoch`
    /// after each one.
    pub fn fit_with(
        &mut self,
        train: &[Example],
        val: &[Example],
        mut on_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<FitOutcome> {
        let initial = self.model.clone();
        while self.epoch < self.config.epochs {
            if val.is_empty() {
                return Err(Error::EmptyEvaluation);
            }
            let record = self.run_epoch(train, val)?;
            if self.best.as_ref().is_none_or(|b| record.val_war > b.val_war) {
                self.best = Some(BestState {
                    epoch: record.epoch,
                    val_war: record.val_war,
                    model: self.model.clone(),
                });
            }
            self.log.epochs.push(record);
            on_epoch(self)?;
        }
        Ok(FitOutcome {
            best: self.best.as_ref().map_or(initial, |b| b.model.clone()),
            best_epoch: self.best.as_ref().map(|b| b.epoch),
            last: self.model.clone(),
            log: self.log.clone(),
        })
    }

    pub fn fit(&mut self, train: &[Example], val: &[Example]) -> Result<FitOutcome> {
        self.fit_with(train, val, |_| Ok(()))
    }
}

/// Trains a fresh [`Trainer`] over `config.epochs` epochs.
pub fn fit(model: ModelState, train: &[Example], val: &[Example], config: &TrainConfig) -> Result<FitOutcome> {
    if config.epochs == 0 {
        config.validate()?;
        return Ok(FitOutcome {
            best: model.clone(),
            best_epoch: None,
            last: model,
            log: TrainLog::default(),
        });
    }
    Trainer::new(model, config.clone(), train.len())?.fit(train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::adapters::SyntheticAdapter;
    use crate::model::ModelConfig;

    fn examples(per_class: usize, seed: u64) -> Vec<Example> {
        let manifest = SyntheticAdapter::new("s", per_class, seed).generate();
        load_examples(&manifest, &PreprocessConfig::toy()).unwrap()
    }

    fn toy_model() -> ModelState {
        ModelState::init(&ModelConfig::toy(), 3).unwrap()
    }

    #[test]
    fn defaults_follow_the_protocol() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.seed, c.micro_batch, c.accum_steps), (40, 42, 2, 8));
        assert_eq!(c.effective_batch(), 16);
        assert_eq!((c.lr_encoder, c.lr_decoder), (1e-7, 1e-5));
        c.validate().unwrap();
        TrainConfig::toy().validate().unwrap();
        let bad = TrainConfig {
            lr_encoder: 1e-3,
            lr_decoder: 1e-4,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "train.lr_encoder"));
    }

    #[test]
    fn single_micro_batch_equals_plain_gradient() {
        let model = toy_model();
        let ex = examples(1, 0);
        let batch: Vec<&Example> = ex.iter().take(2).collect();
        let plain = batch_gradients(&model, &batch, &mut Mode::Eval).unwrap();
        let acc = accumulated_gradients(&model, std::slice::from_ref(&batch), &mut Mode::Eval).unwrap();
        assert_eq!(plain, acc);
    }

    #[test]
    fn unequal_micro_batches_are_rejected() {
        let model = toy_model();
        let ex = examples(1, 0);
        let micro = vec![vec![&ex[0], &ex[1]], vec![&ex[2]]];
        assert!(matches!(
            accumulated_gradients(&model, &micro, &mut Mode::Eval),
            Err(Error::InvalidAccumulation(_))
        ));
    }

    #[test]
    fn wrong_micro_batch_count_is_rejected() {
        let ex = examples(3, 0);
        let mut trainer = Trainer::new(toy_model(), TrainConfig::toy(), ex.len()).unwrap();
        let micro = vec![vec![&ex[0], &ex[1]]; 3];
        assert!(matches!(
            trainer.train_step_accumulated(&micro),
            Err(Error::InvalidAccumulation(_))
        ));
    }

    #[test]
    fn zero_epochs_return_initial_state() {
        let ex = examples(1, 0);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::toy()
        };
        let out = fit(toy_model(), &ex, &ex, &cfg).unwrap();
        assert_eq!(out.best, toy_model());
        assert!(out.log.is_empty());
        assert_eq!(out.best_epoch, None);
    }

    #[test]
    fn best_epoch_is_earliest_maximum() {
        let rec = |epoch, val_war| EpochRecord {
            epoch,
            steps: 1,
            train_loss: 0.0,
            val_war,
            probe_loss: 0.0,
            lr_encoder: vec![],
            lr_decoder: vec![],
            wall_time_s: 0.0,
        };
        let log = TrainLog {
            epochs: vec![rec(1, 50.0), rec(2, 70.0), rec(3, 70.0), rec(4, 60.0)],
        };
        assert_eq!(log.best_epoch(), Some(2));
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        assert_eq!(TrainLog::read_jsonl(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn fit_keeps_the_logged_best_state() {
        let train = examples(5, 1);
        let val = examples(2, 2);
        let cfg = TrainConfig {
            epochs: 3,
            accum_steps: 2,
            ..TrainConfig::toy()
        };
        let mut trainer = Trainer::new(toy_model(), cfg, train.len()).unwrap();
        let out = trainer.fit(&train, &val).unwrap();
        assert_eq!(out.log.len(), 3);
        assert_eq!(out.best_epoch, out.log.best_epoch());
        let best = out.log.epochs[out.best_epoch.unwrap() - 1].val_war;
        assert_eq!(evaluate_war(&out.best, &val).unwrap(), best);
        assert!(out.log.epochs.iter().all(|r| r.probe_loss.is_finite() && r.steps == 8));
        assert_eq!(trainer.optimizer.step, 24);
    }
}
