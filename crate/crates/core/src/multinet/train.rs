//! Minibatch SGD on the summed cross-entropy of both branches of a network.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, MultiNetError, MultiNetModel, TaskPair};
use crate::dataset::FrameLabels;
use crate::nn::{self, Tensor};

/// Unset fields in serialized configs take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs_network1: usize,
    pub epochs_network2: usize,
    pub seed: u64,
    /// Loss weights in branch order (crash, road, weather, time).
    pub task_weights: [f32; 4],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs_network1: 80,
            epochs_network2: 30,
            seed: 0,
            task_weights: [1.0; 4],
        }
    }
}

impl TrainConfig {
    pub fn epochs(&self, pair: TaskPair) -> usize {
        match pair {
            TaskPair::CrashRoad => self.epochs_network1,
            TaskPair::WeatherTime => self.epochs_network2,
        }
    }

    pub fn pair_weights(&self, pair: TaskPair) -> [f32; 2] {
        match pair {
            TaskPair::CrashRoad => [self.task_weights[0], self.task_weights[1]],
            TaskPair::WeatherTime => [self.task_weights[2], self.task_weights[3]],
        }
    }

    /// A zero learning rate is accepted and leaves the weights untouched.
    pub fn validate(&self) -> Result<(), MultiNetError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(MultiNetError::InvalidConfig("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(MultiNetError::InvalidConfig("batch size must be positive"));
        }
        if self.task_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MultiNetError::InvalidConfig("task weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    /// `H x W x 3` image, any size from 8x8 up.
    pub image: Tensor,
    pub labels: FrameLabels,
}

/// Per-epoch mean training loss of each network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub network1: Vec<f64>,
    pub network2: Vec<f64>,
}

/// Trains one network of `model` in place and returns its per-epoch mean
/// loss. The shuffle order is fixed by `config.seed`.
pub fn train_pair(
    model: &mut MultiNetModel,
    pair: TaskPair,
    samples: &[TrainingSample],
    config: &TrainConfig,
) -> Result<Vec<f64>, MultiNetError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(MultiNetError::EmptyDataset);
    }
    let tasks = pair.tasks();
    let mut inputs = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let mut t = [0usize; 2];
        for (slot, &task) in t.iter_mut().zip(&tasks) {
            *slot = sample
                .labels
                .get(task)
                .ok_or(MultiNetError::MissingLabel { sample: i, task })?;
        }
        targets.push(t);
        inputs.push(model.prepare_input(&sample.image, pair)?);
    }

    let weights = config.pair_weights(pair);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(pair as u64 + 1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs(pair));
    let net = model.network_mut(pair);

    for _ in 0..config.epochs(pair) {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut sum: Option<Vec<Tensor>> = None;
            for &i in batch {
                let (loss, grads) = net.backward(&inputs[i], targets[i], weights)?;
                epoch_loss += loss;
                match &mut sum {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = sum.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f32;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            nn::sgd_step(net.parameters_mut(), &grads, config.learning_rate)?;
        }
        log.push(epoch_loss / samples.len() as f64);
    }
    Ok(log)
}

/// Builds a Glorot-initialized model from `config.seed` and trains both
/// networks independently.
pub fn train(
    samples: &[TrainingSample],
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<(MultiNetModel, TrainingLog), MultiNetError> {
    let mut model = MultiNetModel::new(model_config, config.seed)?;
    let network1 = train_pair(&mut model, TaskPair::CrashRoad, samples, config)?;
    let network2 = train_pair(&mut model, TaskPair::WeatherTime, samples, config)?;
    Ok((model, TrainingLog { network1, network2 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{CrashLikelihood, RoadFunction, TimeOfDay, Weather};
    use alloc::vec;

    fn sample(seed: u32, labels: FrameLabels) -> TrainingSample {
        let data = (0..16 * 16 * 3)
            .map(|i| libm::sinf((i as u32 * 13 + seed * 101) as f32 * 0.07) * 0.5 + 0.5)
            .collect();
        TrainingSample {
            image: Tensor::new(vec![16, 16, 3], data).unwrap(),
            labels,
        }
    }

    fn full_labels() -> FrameLabels {
        FrameLabels {
            crash_likelihood: Some(CrashLikelihood::Crash),
            road_function: Some(RoadFunction::Collector),
            weather: Some(Weather::Rainy),
            time_of_day: Some(TimeOfDay::Night),
        }
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.learning_rate, c.batch_size), (0.01, 32));
        assert_eq!((c.epochs_network1, c.epochs_network2), (80, 30));
        assert_eq!(c.task_weights, [1.0; 4]);
    }

    #[test]
    fn single_sample_overfits() {
        let config = TrainConfig {
            learning_rate: 0.05,
            epochs_network1: 200,
            epochs_network2: 200,
            seed: 3,
            ..TrainConfig::default()
        };
        let samples = [sample(1, full_labels())];
        let (model, log) = train(&samples, ModelConfig::desk(), &config).unwrap();
        assert!(*log.network1.last().unwrap() < 0.01, "{:?}", log.network1.last());
        assert!(*log.network2.last().unwrap() < 0.01, "{:?}", log.network2.last());
        let out = model.classify(&samples[0].image).unwrap();
        assert_eq!(FrameLabels::from(out.labels), full_labels());
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs_network1: 2,
            epochs_network2: 2,
            ..TrainConfig::default()
        };
        let samples = [sample(1, full_labels()), sample(2, full_labels())];
        let (trained, _) = train(&samples, ModelConfig::desk(), &config).unwrap();
        assert_eq!(trained, MultiNetModel::new(ModelConfig::desk(), 0).unwrap());
    }

    #[test]
    fn one_step_moves_both_branches() {
        let config = TrainConfig {
            epochs_network1: 1,
            epochs_network2: 1,
            seed: 11,
            ..TrainConfig::default()
        };
        let samples = [sample(4, full_labels()), sample(5, full_labels())];
        let initial = MultiNetModel::new(ModelConfig::desk(), 11).unwrap();
        let (trained, _) = train(&samples, ModelConfig::desk(), &config).unwrap();
        for pair in TaskPair::ALL {
            for (before, after) in initial.network(pair).heads().iter().zip(trained.network(pair).heads()) {
                assert_ne!(before, after, "{pair:?} head did not change");
            }
        }
        assert_ne!(
            initial.network(TaskPair::WeatherTime).trunk(),
            trained.network(TaskPair::WeatherTime).trunk()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let config = TrainConfig {
            batch_size: 2,
            epochs_network1: 3,
            epochs_network2: 3,
            seed: 8,
            ..TrainConfig::default()
        };
        let samples: Vec<_> = (0..5).map(|i| sample(i, full_labels())).collect();
        let a = train(&samples, ModelConfig::desk(), &config).unwrap();
        let b = train(&samples, ModelConfig::desk(), &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_missing_labels_and_empty_sets() {
        let config = TrainConfig::default();
        let mut model = MultiNetModel::zeroed(ModelConfig::desk(), 0).unwrap();
        assert_eq!(
            train_pair(&mut model, TaskPair::CrashRoad, &[], &config),
            Err(MultiNetError::EmptyDataset)
        );
        let partial = FrameLabels {
            weather: None,
            ..full_labels()
        };
        let samples = [sample(0, full_labels()), sample(1, partial)];
        assert!(train_pair(&mut model, TaskPair::CrashRoad, &samples, &config).is_ok());
        assert_eq!(
            train_pair(&mut model, TaskPair::WeatherTime, &samples, &config),
            Err(MultiNetError::MissingLabel {
                sample: 1,
                task: crate::labels::Task::Weather
            })
        );
        let bad = TrainConfig {
            learning_rate: -0.1,
            ..TrainConfig::default()
        };
        assert!(train_pair(&mut model, TaskPair::CrashRoad, &samples, &bad).is_err());
    }
}
