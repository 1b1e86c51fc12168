use crate::error::{EngineError, Result};
use crate::init::{layer_seed, seeded_init, LayerParams};
use crate::layer::{Layer, Mode};
use crate::param::Param;
use crate::scalar::Scalar;
use crate::spec::LayerSpec;
use crate::tensor::{Shape, Tensor};

/// An ordered stack of layers with reverse-mode gradients.
#[derive(Clone, Debug)]
pub struct Sequential<T> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    recorded: bool,
}

impl<T: Scalar> Sequential<T> {
    /// Builds the stack with seeded initialization (one derived seed per layer).
    pub fn init(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let params = specs
            .iter()
            .enumerate()
            .map(|(i, s)| seeded_init(s, layer_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(specs, params)
    }

    pub fn from_params(specs: Vec<LayerSpec>, params: Vec<LayerParams<T>>) -> Result<Self> {
        if specs.len() != params.len() {
            return Err(EngineError::shape("layer parameter sets", specs.len(), params.len()));
        }
        for pair in specs.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(EngineError::InvalidSpec(format!(
                    "{:?} emits {} channels but {:?} expects {}",
                    pair[0].kind, pair[0].out_channels, pair[1].kind, pair[1].in_channels
                )));
            }
        }
        let mut layers = specs
            .iter()
            .zip(params)
            .map(|(s, p)| Layer::from_params(s, p))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = layers.first_mut() {
            first.disable_input_grad();
        }
        Ok(Sequential {
            specs,
            layers,
            recorded: false,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Output shape after every layer, starting from `input`.
    pub fn trace(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.specs.len());
        let mut cur = input;
        for (i, spec) in self.specs.iter().enumerate() {
            cur = spec.output_shape(cur).map_err(|e| {
                let mut trail = format!("{input}");
                for s in &shapes {
                    trail.push_str(&format!(" -> {s}"));
                }
                EngineError::InvalidSpec(format!("layer {i} ({:?}) after {trail}: {e}", spec.kind))
            })?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn forward(&mut self, input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let mut x = input;
        self.recorded = false;
        for layer in self.layers.iter_mut() {
            x = layer.forward(x, mode)?;
        }
        self.recorded = mode == Mode::Train;
        Ok(x)
    }

    /// Accumulates parameter gradients for `grad_output` (the loss gradient
    /// with respect to the last forward output).
    pub fn backward(&mut self, grad_output: Vec<Tensor<T>>) -> Result<()> {
        if !self.recorded {
            return Err(EngineError::BackwardBeforeForward {
                layer: "sequential".into(),
            });
        }
        self.recorded = false;
        let mut g = grad_output;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.backward(g)?;
            for p in layer.params() {
                if p.grad.iter().any(|v| !v.is_finite()) {
                    return Err(EngineError::NonFiniteGradient {
                        param: format!("layer{i}.{}", p.name),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            for p in l.params_mut() {
                p.zero_grad();
            }
        }
    }

    /// Parameters in a stable order, named `layer{i}.{name}`.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params_mut()
                    .into_iter()
                    .map(move |p| (format!("layer{i}.{}", p.name), p))
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|p| p.len())
            .sum()
    }

    pub fn export(&self) -> Vec<LayerParams<T>> {
        self.layers.iter().map(|l| l.export()).collect()
    }

    pub fn clear_cache(&mut self) {
        self.recorded = false;
        for l in &mut self.layers {
            l.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(1, 2, [1, 3, 3], [1, 1, 1], [0, 1, 1]),
            LayerSpec::batchnorm(2),
            LayerSpec::relu(2),
            LayerSpec::maxpool(2, [1, 2, 2]),
            LayerSpec::deconv(2, 1, [1, 3, 3], [1, 2, 2], [0, 1, 1], [0, 1, 1]),
            LayerSpec::sigmoid(1),
        ]
    }

    #[test]
    fn trace_reports_every_layer() {
        let net = Sequential::<f32>::init(tiny(), 0).unwrap();
        let shapes = net.trace(Shape::new(1, 2, 4, 4)).unwrap();
        assert_eq!(shapes.len(), 6);
        assert_eq!(*shapes.last().unwrap(), Shape::new(1, 2, 4, 4));
        assert_eq!(shapes[3], Shape::new(2, 2, 2, 2));
    }

    #[test]
    fn trace_error_names_layer() {
        let net = Sequential::<f32>::init(tiny(), 0).unwrap();
        let err = net.trace(Shape::new(1, 2, 5, 5)).unwrap_err().to_string();
        assert!(err.contains("layer 3"), "{err}");
    }

    #[test]
    fn channel_chain_is_validated() {
        let specs = vec![LayerSpec::conv(1, 2, [1, 1, 1], [1, 1, 1], [0, 0, 0]), LayerSpec::batchnorm(3)];
        assert!(Sequential::<f32>::init(specs, 0).is_err());
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut net = Sequential::<f64>::init(tiny(), 0).unwrap();
        let g = vec![Tensor::zeros(Shape::new(1, 2, 4, 4))];
        assert!(matches!(net.backward(g), Err(EngineError::BackwardBeforeForward { .. })));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut net = Sequential::<f32>::init(tiny(), 9).unwrap();
        let x = Tensor::from_fn(Shape::new(1, 2, 4, 4), |i| (i as f32 * 0.37).sin().abs());
        let a = net.forward(vec![x.clone()], Mode::Eval).unwrap();
        let b = net.forward(vec![x], Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert!(a[0].data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
