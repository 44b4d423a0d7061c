//! Self-describing model files on top of the weight container.
//!
//! Header entries, in order: `format`, `seed`, `arch`, one `labels` line per
//! task and one `layer` line per layer. Tensors are named
//! `<network>.<part>.<layer>.weight|bias` and stored in declaration order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{ModelConfig, MultiNetError, MultiNetModel, TaskPair};
use crate::labels::Task;
use crate::nn::WeightFile;

pub const MODEL_FORMAT: &str = "scenerisk-multinet-1";

fn network_name(pair: TaskPair) -> &'static str {
    match pair {
        TaskPair::CrashRoad => "network1",
        TaskPair::WeatherTime => "network2",
    }
}

fn arch_line(c: &ModelConfig) -> String {
    format!(
        "network1_input={} network1_hidden={},{} network2_input={} network2_kernel={} network2_channels={},{},{} network2_dense={}",
        c.network1_input,
        c.network1_hidden[0],
        c.network1_hidden[1],
        c.network2_input,
        c.network2_kernel,
        c.network2_channels[0],
        c.network2_channels[1],
        c.network2_channels[2],
        c.network2_dense,
    )
}

fn parse_arch(line: &str) -> Result<ModelConfig, MultiNetError> {
    let bad = || MultiNetError::HeaderMismatch(format!("bad arch line {line:?}"));
    let mut config = ModelConfig::desk();
    let mut seen = 0;
    for field in line.split(' ') {
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        let nums: Vec<usize> = value
            .split(',')
            .map(|v| v.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match (key, nums.as_slice()) {
            ("network1_input", &[v]) => config.network1_input = v,
            ("network1_hidden", &[a, b]) => config.network1_hidden = [a, b],
            ("network2_input", &[v]) => config.network2_input = v,
            ("network2_kernel", &[v]) => config.network2_kernel = v,
            ("network2_channels", &[a, b, c]) => config.network2_channels = [a, b, c],
            ("network2_dense", &[v]) => config.network2_dense = v,
            _ => return Err(bad()),
        }
        seen += 1;
    }
    if seen != 6 {
        return Err(bad());
    }
    Ok(config)
}

fn single<'a>(file: &'a WeightFile, key: &'a str) -> Result<&'a str, MultiNetError> {
    let mut values = file.meta(key);
    match (values.next(), values.next()) {
        (Some(v), None) => Ok(v),
        _ => Err(MultiNetError::HeaderMismatch(format!("expected one {key} entry"))),
    }
}

/// Header metadata and tensor names a model of this shape must carry.
fn layout(model: &MultiNetModel) -> (Vec<(String, String)>, Vec<String>) {
    let mut meta = Vec::new();
    meta.push(("format".to_string(), MODEL_FORMAT.to_string()));
    meta.push(("seed".to_string(), model.seed.to_string()));
    meta.push(("arch".to_string(), arch_line(&model.config)));
    for task in Task::ALL {
        meta.push((
            "labels".to_string(),
            format!("{} {}", task.name(), task.class_names().join(",")),
        ));
    }
    let mut names = Vec::new();
    for pair in TaskPair::ALL {
        for (part, seq) in model.network(pair).parts() {
            for (i, layer) in seq.layers().iter().enumerate() {
                let prefix = format!("{}.{part}.{i}", network_name(pair));
                meta.push(("layer".to_string(), format!("{prefix} {}", layer.spec())));
                if !layer.params().is_empty() {
                    names.push(format!("{prefix}.weight"));
                    names.push(format!("{prefix}.bias"));
                }
            }
        }
    }
    (meta, names)
}

impl MultiNetModel {
    pub fn to_weight_file(&self) -> WeightFile {
        let (metadata, names) = layout(self);
        let params = TaskPair::ALL
            .into_iter()
            .flat_map(|pair| self.network(pair).parameters().cloned().collect::<Vec<_>>());
        WeightFile {
            metadata,
            tensors: names.into_iter().zip(params).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_weight_file()
            .encode()
            .expect("generated header text is always encodable")
    }

    /// Rebuilds a model, checking every header line and tensor shape
    /// against the architecture the header declares.
    pub fn from_weight_file(file: WeightFile) -> Result<Self, MultiNetError> {
        let format = single(&file, "format")?;
        if format != MODEL_FORMAT {
            return Err(MultiNetError::HeaderMismatch(format!(
                "unsupported model format {format:?} (expected {MODEL_FORMAT})"
            )));
        }
        let seed = single(&file, "seed")?
            .parse()
            .map_err(|_| MultiNetError::HeaderMismatch("bad seed".into()))?;
        let config = parse_arch(single(&file, "arch")?)?;
        let mut model = MultiNetModel::zeroed(config, seed)?;

        let (meta, names) = layout(&model);
        if file.metadata != meta {
            let first = meta
                .iter()
                .zip(&file.metadata)
                .find(|(a, b)| a != b)
                .map(|(want, got)| format!("expected {} {:?}, found {} {:?}", want.0, want.1, got.0, got.1))
                .unwrap_or_else(|| {
                    format!("expected {} entries, found {}", meta.len(), file.metadata.len())
                });
            return Err(MultiNetError::HeaderMismatch(first));
        }
        if file.tensors.len() != names.len() {
            return Err(MultiNetError::HeaderMismatch(format!(
                "expected {} tensors, found {}",
                names.len(),
                file.tensors.len()
            )));
        }
        let mut stored = file.tensors.into_iter().zip(names);
        for pair in TaskPair::ALL {
            for slot in model.network_mut(pair).parameters_mut() {
                let ((name, tensor), expected) = stored.next().expect("counts checked");
                if name != expected || tensor.shape() != slot.shape() {
                    return Err(MultiNetError::HeaderMismatch(format!(
                        "tensor {name} {:?} does not match {expected} {:?}",
                        tensor.shape(),
                        slot.shape()
                    )));
                }
                *slot = tensor;
            }
        }
        Ok(model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MultiNetError> {
        MultiNetModel::from_weight_file(WeightFile::decode(bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ContainerError, Tensor};

    #[test]
    fn round_trip_is_bitwise() {
        let model = MultiNetModel::new(ModelConfig::desk(), 21).unwrap();
        let bytes = model.to_bytes();
        let loaded = MultiNetModel::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        let bits = |m: &MultiNetModel| -> Vec<u32> {
            TaskPair::ALL
                .into_iter()
                .flat_map(|p| m.network(p).parameters().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&loaded), bits(&model));
        assert_eq!(loaded.config(), model.config());
        assert_eq!(loaded.seed(), 21);
    }

    #[test]
    fn header_is_self_describing() {
        let file = MultiNetModel::zeroed(ModelConfig::desk(), 0).unwrap().to_weight_file();
        let labels: Vec<&str> = file.meta("labels").collect();
        assert_eq!(labels[0], "crash_likelihood no_crash,pre_crash,crash");
        assert_eq!(labels[3], "time_of_day dawn_dusk,daytime,night");
        let layers: Vec<&str> = file.meta("layer").collect();
        assert_eq!(layers[0], "network1.trunk.0 flatten");
        assert_eq!(layers[1], "network1.head0.0 dense 768 64");
        assert!(layers.contains(&"network2.trunk.0 conv2d 3 3 4"));
        assert_eq!(file.tensors[0].0, "network1.head0.0.weight");
        assert_eq!(parse_arch(&arch_line(&ModelConfig::full())).unwrap(), ModelConfig::full());
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let bytes = MultiNetModel::new(ModelConfig::desk(), 1).unwrap().to_bytes();
        let mut bad = bytes.clone();
        bad[0] ^= 0x20;
        assert_eq!(
            MultiNetModel::from_bytes(&bad),
            Err(MultiNetError::Container(ContainerError::BadMagic))
        );
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(
            MultiNetModel::from_bytes(cut),
            Err(MultiNetError::Container(ContainerError::Truncated { .. }))
        ));
    }

    #[test]
    fn shape_disagreement_is_rejected() {
        let model = MultiNetModel::new(ModelConfig::desk(), 1).unwrap();
        let mut file = model.to_weight_file();
        file.tensors[1].1 = Tensor::zeros(&[65]);
        assert!(matches!(
            MultiNetModel::from_weight_file(file),
            Err(MultiNetError::HeaderMismatch(_))
        ));
        let mut file = model.to_weight_file();
        let idx = file.metadata.iter().position(|(k, _)| k == "labels").unwrap();
        file.metadata[idx].1 = "crash_likelihood a,b,c".into();
        assert!(MultiNetModel::from_weight_file(file).is_err());
        let mut file = model.to_weight_file();
        file.metadata[0].1 = "scenerisk-multinet-2".into();
        assert!(MultiNetModel::from_weight_file(file).is_err());
    }
}
