//! The two parallel multi-task networks and four-label scene classification.
//!
//! Network 1 flattens a 96x96x3 downsample of the frame and feeds two
//! perceptron branches (1024 -> 512 -> classes) for crash likelihood and
//! road function. Network 2 runs three conv/relu/pool blocks (7x7 kernels,
//! 32/64/128 channels) over a 128x128x3 downsample, reaching a 10x10x128
//! feature map, and feeds two dense-256 branches for weather and time of
//! day. Branch order is always (crash, road, weather, time).

mod codec;
mod train;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labels::{SceneLabels, Task};
use crate::nn::{self, init, ContainerError, LayerSpec, NnError, Sequential, Tensor};

pub use codec::MODEL_FORMAT;
pub use train::{train, train_pair, TrainConfig, TrainingLog, TrainingSample};

/// Smallest accepted input side before resizing.
pub const MIN_INPUT_SIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum MultiNetError {
    Nn(NnError),
    Container(ContainerError),
    ImageTooSmall { height: usize, width: usize },
    NotRgb(Vec<usize>),
    NonFiniteImage,
    EmptyDataset,
    MissingLabel { sample: usize, task: Task },
    InvalidConfig(&'static str),
    /// Weight file header disagrees with the layers or tensors it declares.
    HeaderMismatch(alloc::string::String),
}

impl fmt::Display for MultiNetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiNetError::Nn(e) => e.fmt(f),
            MultiNetError::Container(e) => e.fmt(f),
            MultiNetError::ImageTooSmall { height, width } => write!(
                f,
                "image {height}x{width} is smaller than {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}"
            ),
            MultiNetError::NotRgb(shape) => write!(f, "expected an HxWx3 image, got shape {shape:?}"),
            MultiNetError::NonFiniteImage => f.write_str("image contains non-finite values"),
            MultiNetError::EmptyDataset => f.write_str("training set is empty"),
            MultiNetError::MissingLabel { sample, task } => {
                write!(f, "sample {sample} has no {task} label")
            }
            MultiNetError::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
            MultiNetError::HeaderMismatch(why) => write!(f, "weight header mismatch: {why}"),
        }
    }
}

impl core::error::Error for MultiNetError {}

impl From<NnError> for MultiNetError {
    fn from(e: NnError) -> Self {
        MultiNetError::Nn(e)
    }
}

impl From<ContainerError> for MultiNetError {
    fn from(e: ContainerError) -> Self {
        MultiNetError::Container(e)
    }
}

/// Layer widths and input sizes of both networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub network1_input: usize,
    pub network1_hidden: [usize; 2],
    pub network2_input: usize,
    pub network2_kernel: usize,
    pub network2_channels: [usize; 3],
    pub network2_dense: usize,
}

impl ModelConfig {
    /// Full-size architecture.
    pub const fn full() -> Self {
        ModelConfig {
            network1_input: 96,
            network1_hidden: [1024, 512],
            network2_input: 128,
            network2_kernel: 7,
            network2_channels: [32, 64, 128],
            network2_dense: 256,
        }
    }

    /// Reduced widths and input sizes for fast training on a CPU. The layer
    /// structure is identical to [`ModelConfig::full`].
    pub const fn desk() -> Self {
        ModelConfig {
            network1_input: 16,
            network1_hidden: [64, 32],
            network2_input: 40,
            network2_kernel: 3,
            network2_channels: [4, 8, 16],
            network2_dense: 32,
        }
    }

    pub fn network1_input_shape(&self) -> [usize; 3] {
        [self.network1_input, self.network1_input, 3]
    }

    pub fn network2_input_shape(&self) -> [usize; 3] {
        [self.network2_input, self.network2_input, 3]
    }

    pub fn network1_trunk(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::Flatten]
    }

    pub fn network1_head(&self, classes: usize) -> Vec<LayerSpec> {
        let inputs: usize = self.network1_input_shape().iter().product();
        let [h1, h2] = self.network1_hidden;
        vec![
            LayerSpec::Dense { inputs, units: h1 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: h1, units: h2 },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: h2,
                units: classes,
            },
        ]
    }

    pub fn network2_trunk(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut in_channels = 3;
        for &out_channels in &self.network2_channels {
            specs.push(LayerSpec::Conv2d {
                kernel: self.network2_kernel,
                in_channels,
                out_channels,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::MaxPool2x2);
            in_channels = out_channels;
        }
        specs.push(LayerSpec::Flatten);
        specs
    }

    /// Shape of the last pooled feature map of network 2.
    pub fn network2_feature_shape(&self) -> Result<Vec<usize>, NnError> {
        let trunk = self.network2_trunk();
        let shapes = Sequential::chain_shapes(&self.network2_input_shape(), &trunk[..trunk.len() - 1])?;
        Ok(shapes.last().expect("non-empty").clone())
    }

    pub fn network2_head(&self, classes: usize) -> Result<Vec<LayerSpec>, NnError> {
        let inputs = self.network2_feature_shape()?.iter().product();
        Ok(vec![
            LayerSpec::Dense {
                inputs,
                units: self.network2_dense,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: self.network2_dense,
                units: classes,
            },
        ])
    }

    pub fn validate(&self) -> Result<(), MultiNetError> {
        let positive = self.network1_input > 0
            && self.network1_hidden.iter().all(|&v| v > 0)
            && self.network2_channels.iter().all(|&v| v > 0)
            && self.network2_kernel > 0
            && self.network2_dense > 0;
        if !positive {
            return Err(MultiNetError::InvalidConfig("layer sizes must be positive"));
        }
        self.network2_feature_shape()?;
        Ok(())
    }
}

/// Which of the two networks, named by the tasks it serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskPair {
    CrashRoad,
    WeatherTime,
}

impl TaskPair {
    pub const ALL: [TaskPair; 2] = [TaskPair::CrashRoad, TaskPair::WeatherTime];

    pub fn tasks(self) -> [Task; 2] {
        match self {
            TaskPair::CrashRoad => [Task::CrashLikelihood, Task::RoadFunction],
            TaskPair::WeatherTime => [Task::Weather, Task::TimeOfDay],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskPair::CrashRoad => "crash-road",
            TaskPair::WeatherTime => "weather-time",
        }
    }
}

impl core::str::FromStr for TaskPair {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskPair::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| alloc::format!("unknown task pair {s:?} (crash-road or weather-time)"))
    }
}

/// A shared trunk feeding two classification heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaskNet {
    trunk: Sequential,
    heads: [Sequential; 2],
}

impl MultiTaskNet {
    fn new(input_shape: &[usize], trunk: &[LayerSpec], heads: [Vec<LayerSpec>; 2]) -> Result<Self, NnError> {
        let trunk = Sequential::new(input_shape, trunk)?;
        let [a, b] = heads;
        let head_a = Sequential::new(trunk.output_shape(), &a)?;
        let head_b = Sequential::new(trunk.output_shape(), &b)?;
        Ok(MultiTaskNet {
            trunk,
            heads: [head_a, head_b],
        })
    }

    pub fn trunk(&self) -> &Sequential {
        &self.trunk
    }

    pub fn heads(&self) -> &[Sequential; 2] {
        &self.heads
    }

    pub fn input_shape(&self) -> &[usize] {
        self.trunk.input_shape()
    }

    /// Parameters in declaration order: trunk, first head, second head.
    pub fn parameters(&self) -> impl Iterator<Item = &Tensor> {
        self.trunk
            .parameters()
            .chain(self.heads[0].parameters())
            .chain(self.heads[1].parameters())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        let [a, b] = &mut self.heads;
        self.trunk
            .parameters_mut()
            .chain(a.parameters_mut())
            .chain(b.parameters_mut())
    }

    /// Named parts in declaration order.
    pub(crate) fn parts(&self) -> [(&'static str, &Sequential); 3] {
        [
            ("trunk", &self.trunk),
            ("head0", &self.heads[0]),
            ("head1", &self.heads[1]),
        ]
    }

    /// Logits of both heads.
    pub fn forward(&self, input: &Tensor) -> Result<[Tensor; 2], NnError> {
        let features = self.trunk.forward(input)?;
        Ok([self.heads[0].forward(&features)?, self.heads[1].forward(&features)?])
    }

    /// Weighted sum of both heads' cross-entropy losses and its gradient
    /// for every parameter, in declaration order.
    pub fn backward(
        &self,
        input: &Tensor,
        targets: [usize; 2],
        loss_weights: [f32; 2],
    ) -> Result<(f64, Vec<Tensor>), NnError> {
        let trunk_trace = self.trunk.forward_trace(input)?;
        let features = trunk_trace.output();
        let mut loss = 0.0;
        let mut head_grads = Vec::with_capacity(2);
        let mut feature_grad = Tensor::zeros(features.shape());
        for ((head, &target), &weight) in self.heads.iter().zip(&targets).zip(&loss_weights) {
            let trace = head.forward_trace(features)?;
            let (head_loss, probabilities) = nn::softmax_cross_entropy(trace.output(), target)?;
            loss += f64::from(weight) * head_loss;
            let mut grad = nn::ops::cross_entropy_grad(&probabilities, target);
            grad.data_mut().iter_mut().for_each(|g| *g *= weight);
            let (params, grad_in) = head.backward(&trace, &grad)?;
            for (acc, g) in feature_grad.data_mut().iter_mut().zip(grad_in.data()) {
                *acc += g;
            }
            head_grads.push(params);
        }
        let (mut grads, _) = self.trunk.backward(&trunk_trace, &feature_grad)?;
        grads.extend(head_grads.into_iter().flatten());
        Ok((loss, grads))
    }
}

/// Both networks of the scene classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiNetModel {
    config: ModelConfig,
    seed: u64,
    network1: MultiTaskNet,
    network2: MultiTaskNet,
}

/// Output of [`MultiNetModel::classify`]: labels and per-task softmax scores
/// in branch order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: SceneLabels,
    pub scores: [Vec<f32>; 4],
}

impl MultiNetModel {
    /// All-zero parameters.
    pub fn zeroed(config: ModelConfig, seed: u64) -> Result<Self, MultiNetError> {
        config.validate()?;
        let class_counts = Task::ALL.map(Task::num_classes);
        let network1 = MultiTaskNet::new(
            &config.network1_input_shape(),
            &config.network1_trunk(),
            [
                config.network1_head(class_counts[0]),
                config.network1_head(class_counts[1]),
            ],
        )?;
        let network2 = MultiTaskNet::new(
            &config.network2_input_shape(),
            &config.network2_trunk(),
            [
                config.network2_head(class_counts[2])?,
                config.network2_head(class_counts[3])?,
            ],
        )?;
        Ok(MultiNetModel {
            config,
            seed,
            network1,
            network2,
        })
    }

    /// Glorot-initialized model; network 1 is drawn before network 2.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, MultiNetError> {
        let mut model = MultiNetModel::zeroed(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for net in [&mut model.network1, &mut model.network2] {
            init::glorot_uniform(&mut net.trunk, &mut rng);
            for head in &mut net.heads {
                init::glorot_uniform(head, &mut rng);
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn network(&self, pair: TaskPair) -> &MultiTaskNet {
        match pair {
            TaskPair::CrashRoad => &self.network1,
            TaskPair::WeatherTime => &self.network2,
        }
    }

    pub fn network_mut(&mut self, pair: TaskPair) -> &mut MultiTaskNet {
        match pair {
            TaskPair::CrashRoad => &mut self.network1,
            TaskPair::WeatherTime => &mut self.network2,
        }
    }

    /// Input side length of a network.
    pub fn input_side(&self, pair: TaskPair) -> usize {
        match pair {
            TaskPair::CrashRoad => self.config.network1_input,
            TaskPair::WeatherTime => self.config.network2_input,
        }
    }

    /// Resizes an image to the input size of a network.
    pub fn prepare_input(&self, image: &Tensor, pair: TaskPair) -> Result<Tensor, MultiNetError> {
        check_image(image)?;
        let side = self.input_side(pair);
        Ok(nn::resize_image(image, (side, side))?)
    }

    /// Raw logits of both heads for an already prepared input.
    pub fn logits(&self, pair: TaskPair, prepared: &Tensor) -> Result<[Tensor; 2], MultiNetError> {
        Ok(self.network(pair).forward(prepared)?)
    }

    /// Four labels for an `H x W x 3` image (any size from 8x8 up). Each
    /// label is the argmax of its branch's softmax.
    pub fn classify(&self, image: &Tensor) -> Result<Classification, MultiNetError> {
        let mut logits = Vec::with_capacity(4);
        for pair in TaskPair::ALL {
            let input = self.prepare_input(image, pair)?;
            logits.extend(self.logits(pair, &input)?);
        }
        classification_from_logits(&logits)
    }
}

/// Labels and softmax scores from the four branch logits.
pub fn classification_from_logits(logits: &[Tensor]) -> Result<Classification, MultiNetError> {
    let mut scores: [Vec<f32>; 4] = Default::default();
    let mut indices = [0usize; 4];
    for (i, task) in Task::ALL.into_iter().enumerate() {
        let l = &logits[i];
        if l.len() != task.num_classes() {
            return Err(NnError::ShapeMismatch {
                op: "branch logits",
                expected: vec![task.num_classes()],
                actual: l.shape().to_vec(),
            }
            .into());
        }
        let p = nn::softmax(l)?;
        indices[i] = p.argmax();
        scores[i] = p.into_data();
    }
    let labels = SceneLabels::from_indices(indices).expect("argmax within vocabulary");
    Ok(Classification { labels, scores })
}

fn check_image(image: &Tensor) -> Result<(), MultiNetError> {
    let shape = image.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(MultiNetError::NotRgb(shape.to_vec()));
    }
    if shape[0] < MIN_INPUT_SIDE || shape[1] < MIN_INPUT_SIDE {
        return Err(MultiNetError::ImageTooSmall {
            height: shape[0],
            width: shape[1],
        });
    }
    if !image.is_finite() {
        return Err(MultiNetError::NonFiniteImage);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{CrashLikelihood, RoadFunction, TimeOfDay, Weather};

    fn image(h: usize, w: usize, seed: u32) -> Tensor {
        let data = (0..h * w * 3)
            .map(|i| libm::sinf((i as u32 * 7 + seed) as f32 * 0.013) * 0.5 + 0.5)
            .collect();
        Tensor::new(vec![h, w, 3], data).unwrap()
    }

    #[test]
    fn full_shape_chain() {
        let cfg = ModelConfig::full();
        assert_eq!(cfg.network2_feature_shape().unwrap(), vec![10, 10, 128]);
        let shapes = Sequential::chain_shapes(&cfg.network2_input_shape(), &cfg.network2_trunk()).unwrap();
        let sides: Vec<usize> = shapes.iter().take(10).map(|s| s[0]).collect();
        assert_eq!(sides, [128, 122, 122, 61, 55, 55, 27, 21, 21, 10]);
        assert_eq!(shapes.last().unwrap(), &vec![12_800]);
        let head = cfg.network1_head(3);
        assert_eq!(head[0], LayerSpec::Dense { inputs: 27_648, units: 1024 });
        assert_eq!(head[2], LayerSpec::Dense { inputs: 1024, units: 512 });
        assert_eq!(cfg.network2_head(5).unwrap()[0], LayerSpec::Dense { inputs: 12_800, units: 256 });
    }

    #[test]
    fn desk_config_is_valid() {
        let cfg = ModelConfig::desk();
        cfg.validate().unwrap();
        assert_eq!(cfg.network2_feature_shape().unwrap(), vec![3, 3, 16]);
        let bad = ModelConfig {
            network2_input: 20,
            ..ModelConfig::desk()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_model_gives_uniform_scores() {
        let model = MultiNetModel::zeroed(ModelConfig::desk(), 0).unwrap();
        let out = model.classify(&image(30, 50, 1)).unwrap();
        let lens: Vec<usize> = out.scores.iter().map(Vec::len).collect();
        assert_eq!(lens, [3, 4, 5, 3]);
        for s in &out.scores {
            let u = 1.0 / s.len() as f32;
            assert!(s.iter().all(|&p| (p - u).abs() < 1e-7));
        }
        assert_eq!(out.labels.crash_likelihood, CrashLikelihood::NoCrash);
    }

    #[test]
    fn scores_are_distributions() {
        let model = MultiNetModel::new(ModelConfig::desk(), 9).unwrap();
        let out = model.classify(&image(64, 48, 3)).unwrap();
        for s in &out.scores {
            let sum: f32 = s.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(s.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn classify_rejects_bad_images() {
        let model = MultiNetModel::zeroed(ModelConfig::desk(), 0).unwrap();
        assert!(matches!(
            model.classify(&image(7, 20, 0)),
            Err(MultiNetError::ImageTooSmall { .. })
        ));
        assert!(matches!(
            model.classify(&Tensor::zeros(&[10, 10, 1])),
            Err(MultiNetError::NotRgb(_))
        ));
        let mut nan = image(10, 10, 0);
        nan.data_mut()[5] = f32::NAN;
        assert_eq!(model.classify(&nan), Err(MultiNetError::NonFiniteImage));
    }

    #[test]
    fn labels_follow_logit_peaks() {
        let peak = |k: usize, at: usize| {
            let mut v = vec![0.0f32; k];
            v[at] = 4.0;
            Tensor::from_vec(v).unwrap()
        };
        let logits = [peak(3, 1), peak(4, 3), peak(5, 0), peak(3, 1)];
        let out = classification_from_logits(&logits).unwrap();
        assert_eq!(
            out.labels,
            SceneLabels {
                crash_likelihood: CrashLikelihood::PreCrash,
                road_function: RoadFunction::Local,
                weather: Weather::Clear,
                time_of_day: TimeOfDay::Daytime,
            }
        );
        // shifting a branch's logits by a constant keeps its label
        let shifted: Vec<Tensor> = logits
            .iter()
            .map(|t| Tensor::from_vec(t.data().iter().map(|v| v + 17.5).collect()).unwrap())
            .collect();
        assert_eq!(classification_from_logits(&shifted).unwrap().labels, out.labels);
    }

    #[test]
    fn identical_resized_inputs_classify_identically() {
        let model = MultiNetModel::new(ModelConfig::desk(), 5).unwrap();
        let a = model.classify(&image(40, 40, 2)).unwrap();
        let b = model.classify(&image(40, 40, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn task_pair_names() {
        assert_eq!("crash-road".parse::<TaskPair>().unwrap(), TaskPair::CrashRoad);
        assert_eq!("weather-time".parse::<TaskPair>().unwrap(), TaskPair::WeatherTime);
        assert!("all".parse::<TaskPair>().is_err());
    }
}
