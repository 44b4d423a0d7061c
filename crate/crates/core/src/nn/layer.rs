//! Layer specifications and sequential stacks with exact reverse-mode
//! gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::ops;
use super::{NnError, Tensor};

/// Kind and hyperparameters of one layer. Convolutions use valid padding
/// and stride 1; pooling uses 2x2 windows with stride 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        units: usize,
    },
    Conv2d {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
    },
    MaxPool2x2,
    Relu,
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Shapes of the trainable tensors, weights first.
    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, units } => vec![vec![units, inputs], vec![units]],
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
            } => vec![
                vec![kernel, kernel, in_channels, out_channels],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` of the weight tensor, if any.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, units } => Some((inputs, units)),
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
            } => Some((kernel * kernel * in_channels, kernel * kernel * out_channels)),
            _ => None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = |expected: Vec<usize>| NnError::ShapeMismatch {
            op: self.kind(),
            expected,
            actual: input.to_vec(),
        };
        match *self {
            LayerSpec::Dense { inputs, units } => {
                if input != [inputs] {
                    return Err(mismatch(vec![inputs]));
                }
                Ok(vec![units])
            }
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
            } => {
                let &[h, w, c] = input else {
                    return Err(mismatch(vec![kernel, kernel, in_channels]));
                };
                if c != in_channels {
                    return Err(mismatch(vec![h, w, in_channels]));
                }
                if kernel == 0 || kernel > h || kernel > w {
                    return Err(NnError::KernelTooLarge {
                        kernel,
                        height: h,
                        width: w,
                    });
                }
                Ok(vec![h - kernel + 1, w - kernel + 1, out_channels])
            }
            LayerSpec::MaxPool2x2 => {
                let &[h, w, c] = input else {
                    return Err(mismatch(vec![2, 2, 1]));
                };
                if h < 2 || w < 2 {
                    return Err(NnError::InputTooSmall {
                        op: "maxpool2x2",
                        height: h,
                        width: w,
                    });
                }
                Ok(vec![h / 2, w / 2, c])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Softmax => {
                if input.len() != 1 || input[0] < 2 {
                    return Err(mismatch(vec![2]));
                }
                Ok(input.to_vec())
            }
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Dense { inputs, units } => write!(f, "dense {inputs} {units}"),
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
            } => write!(f, "conv2d {kernel} {in_channels} {out_channels}"),
            other => f.write_str(other.kind()),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_ascii_whitespace();
        let kind = parts.next().ok_or_else(|| String::from("empty layer spec"))?;
        let nums: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| format!("bad number {p:?} in layer spec")))
            .collect::<Result<_, _>>()?;
        let spec = match (kind, nums.as_slice()) {
            ("dense", &[inputs, units]) => LayerSpec::Dense { inputs, units },
            ("conv2d", &[kernel, in_channels, out_channels]) => LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
            },
            ("maxpool2x2", []) => LayerSpec::MaxPool2x2,
            ("relu", []) => LayerSpec::Relu,
            ("flatten", []) => LayerSpec::Flatten,
            ("softmax", []) => LayerSpec::Softmax,
            _ => return Err(format!("unrecognized layer spec {s:?}")),
        };
        Ok(spec)
    }
}

/// A layer and its parameters (`[weights, bias]` for dense and conv2d).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    params: Vec<Tensor>,
}

impl Layer {
    pub fn zeroed(spec: LayerSpec) -> Self {
        let params = spec
            .parameter_shapes()
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect();
        Layer { spec, params }
    }

    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        match self.spec {
            LayerSpec::Dense { .. } => ops::dense_forward(input, &self.params[0], &self.params[1]),
            LayerSpec::Conv2d { .. } => ops::conv2d_forward(input, &self.params[0], &self.params[1]),
            LayerSpec::MaxPool2x2 => ops::maxpool2x2_forward(input),
            LayerSpec::Relu => Ok(ops::relu_forward(input)),
            LayerSpec::Flatten => input.clone().reshape(vec![input.len()]),
            LayerSpec::Softmax => ops::softmax(input),
        }
    }

    /// Parameter gradients and the gradient with respect to the input, given
    /// the input and output of the forward pass.
    pub fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        grad_output: &Tensor,
    ) -> Result<(Vec<Tensor>, Tensor), NnError> {
        match self.spec {
            LayerSpec::Dense { .. } => {
                let (gw, gb, gi) = ops::dense_backward(input, &self.params[0], grad_output)?;
                Ok((vec![gw, gb], gi))
            }
            LayerSpec::Conv2d { .. } => {
                let (gk, gb, gi) = ops::conv2d_backward(input, &self.params[0], grad_output)?;
                Ok((vec![gk, gb], gi))
            }
            LayerSpec::MaxPool2x2 => Ok((Vec::new(), ops::maxpool2x2_backward(input, grad_output)?)),
            LayerSpec::Relu => Ok((Vec::new(), ops::relu_backward(input, grad_output)?)),
            LayerSpec::Flatten => {
                grad_output.expect_shape("flatten grad", &[input.len()])?;
                Ok((Vec::new(), grad_output.clone().reshape(input.shape().to_vec())?))
            }
            LayerSpec::Softmax => Ok((Vec::new(), ops::softmax_backward(output, grad_output)?)),
        }
    }
}

/// Activations recorded by [`Sequential::forward_trace`]: the input followed
/// by every layer output.
#[derive(Clone, Debug)]
pub struct Trace {
    pub activations: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds at least the input")
    }
}

/// A chain of layers with a fixed input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Sequential {
    /// Zero-initialized stack; fails if the specs do not chain.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Self, NnError> {
        let output_shape = Self::chain_shapes(input_shape, specs)?
            .pop()
            .expect("chain includes the input shape");
        Ok(Sequential {
            input_shape: input_shape.to_vec(),
            output_shape,
            layers: specs.iter().map(|&s| Layer::zeroed(s)).collect(),
        })
    }

    /// Shapes flowing through the stack, starting with the input shape.
    pub fn chain_shapes(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Vec<Vec<usize>>, NnError> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NnError::EmptyDimension);
        }
        let mut shapes = vec![input_shape.to_vec()];
        for spec in specs {
            let next = spec.output_shape(shapes.last().expect("non-empty"))?;
            if next.contains(&0) {
                return Err(NnError::EmptyDimension);
            }
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(Tensor::len).sum()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        input.expect_shape("network input", &self.input_shape)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace, NnError> {
        input.expect_shape("network input", &self.input_shape)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Parameter gradients in declaration order and the input gradient.
    pub fn backward(&self, trace: &Trace, grad_output: &Tensor) -> Result<(Vec<Tensor>, Tensor), NnError> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(NnError::InvalidSpec("trace does not belong to this network"));
        }
        grad_output.expect_shape("network output grad", &self.output_shape)?;
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        let mut grad = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (params, grad_in) =
                layer.backward(&trace.activations[i], &trace.activations[i + 1], &grad)?;
            per_layer.push(params);
            grad = grad_in;
        }
        let grads = per_layer.into_iter().rev().flatten().collect();
        Ok((grads, grad))
    }
}
