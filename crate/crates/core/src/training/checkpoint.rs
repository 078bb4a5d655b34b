//! Full training-state checkpoints: model, optimizer moments, schedule
//! position, RNG state, best state and log, in one archive.

use std::collections::HashMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig, GroupLrs};
use super::schedule::WarmRestarts;
use super::trainer::{BestState, TrainConfig, TrainLog, Trainer};
use crate::error::{Error, Result};
use crate::model::weights::{
    fill_params, meta_value, model_config_key, param_tensors, read_metadata, state_from_archive, state_tensors,
    write_archive,
};
use crate::model::{ModelConfig, Parameters};

const TRAIN_CONFIG_KEY: &str = "train_config";
const TRAINER_KEY: &str = "trainer";
const LOG_KEY: &str = "train_log";

#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    epoch: usize,
    optimizer_step: u64,
    optimizer: AdamWConfig,
    lrs: GroupLrs,
    schedule: WarmRestarts,
    rng: ChaCha8Rng,
    best: Option<(usize, f64)>,
}

impl Trainer {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut tensors = state_tensors(&self.model, "model.");
        tensors.extend(param_tensors(&self.optimizer.m, "optim.m."));
        tensors.extend(param_tensors(&self.optimizer.v, "optim.v."));
        if let Some(best) = &self.best {
            tensors.extend(state_tensors(&best.model, "best."));
        }
        let meta = TrainerMeta {
            epoch: self.epoch,
            optimizer_step: self.optimizer.step,
            optimizer: self.optimizer.config,
            lrs: self.optimizer.lrs,
            schedule: self.schedule,
            rng: self.rng.clone(),
            best: self.best.as_ref().map(|b| (b.epoch, b.val_war)),
        };
        let mut log = Vec::new();
        self.log.write_jsonl(&mut log)?;
        let mut metadata = HashMap::new();
        metadata.insert(
            model_config_key().to_string(),
            serde_json::to_string(self.model.config())?,
        );
        metadata.insert(TRAIN_CONFIG_KEY.to_string(), serde_json::to_string(&self.config)?);
        metadata.insert(TRAINER_KEY.to_string(), serde_json::to_string(&meta)?);
        metadata.insert(
            LOG_KEY.to_string(),
            String::from_utf8(log).map_err(|e| Error::Archive(e.to_string()))?,
        );
        write_archive(path, tensors, metadata)
    }

    /// Restores a trainer saved with [`save_checkpoint`](Self::save_checkpoint).
    /// Continuing it gives the same result as an uninterrupted run.
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let meta = read_metadata(&bytes, path)?;
        let model_config: ModelConfig = serde_json::from_str(meta_value(&meta, model_config_key(), path)?)?;
        let config: TrainConfig = serde_json::from_str(meta_value(&meta, TRAIN_CONFIG_KEY, path)?)?;
        let tm: TrainerMeta = serde_json::from_str(meta_value(&meta, TRAINER_KEY, path)?)?;
        let log = TrainLog::read_jsonl(meta_value(&meta, LOG_KEY, path)?.as_bytes())?;

        let archive = SafeTensors::deserialize(&bytes).map_err(|e| Error::Archive(e.to_string()))?;
        let model = state_from_archive(&archive, &model_config, "model.")?;
        let mut m = model.params.zeros_like();
        let mut v = model.params.zeros_like();
        fill_params(&archive, &mut m, "optim.m.", |_| true)?;
        fill_params(&archive, &mut v, "optim.v.", |_| true)?;
        let best = match tm.best {
            Some((epoch, val_war)) => Some(BestState {
                epoch,
                val_war,
                model: state_from_archive(&archive, &model_config, "best.")?,
            }),
            None => None,
        };

        let mut optimizer = AdamW::new(&model.params, tm.optimizer);
        optimizer.m = m;
        optimizer.v = v;
        optimizer.step = tm.optimizer_step;
        optimizer.lrs = tm.lrs;
        Ok(Trainer {
            config,
            model,
            optimizer,
            schedule: tm.schedule,
            rng: tm.rng,
            epoch: tm.epoch,
            log,
            best,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::adapters::SyntheticAdapter;
    use crate::model::ModelState;
    use crate::preprocess::PreprocessConfig;
    use crate::training::load_examples;

    #[test]
    fn resume_matches_uninterrupted_run() {
        let pcfg = PreprocessConfig::toy();
        let train = load_examples(&SyntheticAdapter::new("t", 4, 1).generate(), &pcfg).unwrap();
        let val = load_examples(&SyntheticAdapter::new("v", 1, 2).generate(), &pcfg).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            accum_steps: 2,
            ..TrainConfig::toy()
        };
        let model = ModelState::init(&ModelConfig::toy(), 9).unwrap();

        let mut full = Trainer::new(model.clone(), cfg.clone(), train.len()).unwrap();
        let full_out = full.fit(&train, &val).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        let mut first = Trainer::new(
            model,
            TrainConfig {
                epochs: 2,
                ..cfg.clone()
            },
            train.len(),
        )
        .unwrap();
        first.fit(&train, &val).unwrap();
        first.save_checkpoint(&path).unwrap();

        let mut resumed = Trainer::load_checkpoint(&path).unwrap();
        assert_eq!(resumed.epochs_done(), 2);
        resumed.config.epochs = 3;
        let resumed_out = resumed.fit(&train, &val).unwrap();
        assert_eq!(resumed_out.last, full_out.last);
        assert_eq!(resumed_out.best, full_out.best);
        assert!(resumed_out.log.same_run(&full_out.log));
        assert_eq!(resumed.optimizer, full.optimizer);
    }
}
