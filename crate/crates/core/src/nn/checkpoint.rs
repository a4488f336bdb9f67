//! Model checkpoints as a documented JSON tensor format: a bundle of named
//! tensors (shape + row-major values) plus string attributes. Every model
//! family round-trips through [`TensorBundle`].

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ffnn::{FeedForwardModel, Layer, OutputKind};
use super::rbm::{Rbm, RbmStack};
use super::rnn::RecurrentModel;
use super::sae::{AutoencoderLevel, AutoencoderStack};
use super::Activation;
use crate::error::{Error, Result};

/// One named tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn from_matrix(name: impl Into<String>, m: &Array2<f64>) -> Self {
        Tensor {
            name: name.into(),
            shape: vec![m.nrows(), m.ncols()],
            values: m.iter().copied().collect(),
        }
    }

    pub fn from_vector(name: impl Into<String>, v: &Array1<f64>) -> Self {
        Tensor {
            name: name.into(),
            shape: vec![v.len()],
            values: v.to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::invalid(format!(
                "tensor {:?} is not a matrix (shape {:?})",
                self.name, self.shape
            )));
        }
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.values.clone())
            .map_err(|e| Error::invalid(format!("tensor {:?}: {e}", self.name)))
    }

    pub fn to_vector(&self) -> Result<Array1<f64>> {
        if self.shape.len() != 1 {
            return Err(Error::invalid(format!(
                "tensor {:?} is not a vector (shape {:?})",
                self.name, self.shape
            )));
        }
        Ok(Array1::from_vec(self.values.clone()))
    }
}

/// A named collection of tensors with string attributes; the on-disk
/// checkpoint format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBundle {
    pub model: String,
    pub attrs: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

impl TensorBundle {
    fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("checkpoint is missing tensor {name:?}")))
    }

    fn attr(&self, name: &str) -> Result<&str> {
        self.attrs
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::invalid(format!("checkpoint is missing attribute {name:?}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TensorBundle> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn activation_attr(a: Activation) -> &'static str {
    match a {
        Activation::Sigmoid => "sigmoid",
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
        Activation::Linear => "linear",
    }
}

impl FeedForwardModel {
    pub fn to_bundle(&self) -> TensorBundle {
        let mut tensors = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            tensors.push(Tensor::from_matrix(format!("layer{i}.weights"), &layer.weights));
            tensors.push(Tensor::from_vector(format!("layer{i}.biases"), &layer.biases));
        }
        tensors.push(Tensor {
            name: "label_values".into(),
            shape: vec![self.label_values.len()],
            values: self.label_values.clone(),
        });
        let mut attrs = BTreeMap::new();
        attrs.insert("activation".into(), activation_attr(self.activation).into());
        attrs.insert(
            "output".into(),
            match self.output {
                OutputKind::SigmoidBinary => "sigmoid_binary".into(),
                OutputKind::SoftmaxMulticlass => "softmax_multiclass".into(),
            },
        );
        attrs.insert("n_layers".into(), self.layers.len().to_string());
        TensorBundle {
            model: "ffnn".into(),
            attrs,
            tensors,
        }
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let n_layers: usize = bundle
            .attr("n_layers")?
            .parse()
            .map_err(|_| Error::invalid("bad n_layers attribute"))?;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            layers.push(Layer {
                weights: bundle.get(&format!("layer{i}.weights"))?.to_matrix()?,
                biases: bundle.get(&format!("layer{i}.biases"))?.to_vector()?,
            });
        }
        let activation: Activation = bundle.attr("activation")?.parse()?;
        let output = match bundle.attr("output")? {
            "sigmoid_binary" => OutputKind::SigmoidBinary,
            _ => OutputKind::SoftmaxMulticlass,
        };
        Ok(FeedForwardModel {
            layers,
            activation,
            output,
            label_values: bundle.get("label_values")?.values.clone(),
        })
    }
}

impl RecurrentModel {
    pub fn to_bundle(&self) -> TensorBundle {
        let tensors = vec![
            Tensor::from_matrix("w_in", &self.w_in),
            Tensor::from_matrix("w_nn", &self.w_nn),
            Tensor::from_matrix("w_o", &self.w_o),
            Tensor {
                name: "label_values".into(),
                shape: vec![self.label_values.len()],
                values: self.label_values.clone(),
            },
        ];
        TensorBundle {
            model: "rnn".into(),
            attrs: BTreeMap::new(),
            tensors,
        }
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let mut model = RecurrentModel::new(
            bundle.get("w_in")?.to_matrix()?,
            bundle.get("w_nn")?.to_matrix()?,
            bundle.get("w_o")?.to_matrix()?,
        )?;
        model.label_values = bundle.get("label_values")?.values.clone();
        Ok(model)
    }
}

impl AutoencoderStack {
    pub fn to_bundle(&self) -> TensorBundle {
        let mut tensors = Vec::new();
        for (i, level) in self.levels.iter().enumerate() {
            tensors.push(Tensor::from_matrix(
                format!("level{i}.encoder.weights"),
                &level.encoder.weights,
            ));
            tensors.push(Tensor::from_vector(
                format!("level{i}.encoder.biases"),
                &level.encoder.biases,
            ));
            tensors.push(Tensor::from_matrix(
                format!("level{i}.decoder.weights"),
                &level.decoder.weights,
            ));
            tensors.push(Tensor::from_vector(
                format!("level{i}.decoder.biases"),
                &level.decoder.biases,
            ));
        }
        let mut attrs = BTreeMap::new();
        attrs.insert("activation".into(), activation_attr(self.activation).into());
        attrs.insert("n_levels".into(), self.levels.len().to_string());
        TensorBundle {
            model: "sae".into(),
            attrs,
            tensors,
        }
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let n_levels: usize = bundle
            .attr("n_levels")?
            .parse()
            .map_err(|_| Error::invalid("bad n_levels attribute"))?;
        let mut levels = Vec::with_capacity(n_levels);
        for i in 0..n_levels {
            levels.push(AutoencoderLevel {
                encoder: Layer {
                    weights: bundle.get(&format!("level{i}.encoder.weights"))?.to_matrix()?,
                    biases: bundle.get(&format!("level{i}.encoder.biases"))?.to_vector()?,
                },
                decoder: Layer {
                    weights: bundle.get(&format!("level{i}.decoder.weights"))?.to_matrix()?,
                    biases: bundle.get(&format!("level{i}.decoder.biases"))?.to_vector()?,
                },
            });
        }
        let stack = AutoencoderStack {
            levels,
            activation: bundle.attr("activation")?.parse()?,
        };
        stack.check_shapes()?;
        Ok(stack)
    }
}

impl RbmStack {
    pub fn to_bundle(&self) -> TensorBundle {
        let mut tensors = Vec::new();
        for (i, rbm) in self.rbms.iter().enumerate() {
            tensors.push(Tensor::from_matrix(format!("rbm{i}.weights"), &rbm.weights));
            tensors.push(Tensor::from_vector(
                format!("rbm{i}.visible_bias"),
                &rbm.visible_bias,
            ));
            tensors.push(Tensor::from_vector(
                format!("rbm{i}.hidden_bias"),
                &rbm.hidden_bias,
            ));
        }
        let mut attrs = BTreeMap::new();
        attrs.insert("n_rbms".into(), self.rbms.len().to_string());
        TensorBundle {
            model: "dbn".into(),
            attrs,
            tensors,
        }
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let n_rbms: usize = bundle
            .attr("n_rbms")?
            .parse()
            .map_err(|_| Error::invalid("bad n_rbms attribute"))?;
        let mut rbms = Vec::with_capacity(n_rbms);
        for i in 0..n_rbms {
            rbms.push(Rbm {
                weights: bundle.get(&format!("rbm{i}.weights"))?.to_matrix()?,
                visible_bias: bundle.get(&format!("rbm{i}.visible_bias"))?.to_vector()?,
                hidden_bias: bundle.get(&format!("rbm{i}.hidden_bias"))?.to_vector()?,
            });
        }
        let stack = RbmStack { rbms };
        stack.check_shapes()?;
        Ok(stack)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ffnn_round_trips_through_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = FeedForwardModel::init(
            3,
            &[4, 2],
            2,
            Activation::Tanh,
            vec![0.0, 1.0],
            &mut rng,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.to_bundle().save(&path).unwrap();
        let loaded = FeedForwardModel::from_bundle(&TensorBundle::load(&path).unwrap()).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn rnn_and_stacks_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rnn = RecurrentModel::init(2, 3, 2, &mut rng);
        assert_eq!(
            RecurrentModel::from_bundle(&rnn.to_bundle()).unwrap(),
            rnn
        );

        let rbm_stack = RbmStack {
            rbms: vec![Rbm::init(6, 4, &mut rng), Rbm::init(4, 2, &mut rng)],
        };
        assert_eq!(
            RbmStack::from_bundle(&rbm_stack.to_bundle()).unwrap(),
            rbm_stack
        );
    }

    #[test]
    fn missing_tensor_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model =
            FeedForwardModel::init(2, &[2], 2, Activation::Sigmoid, vec![0.0, 1.0], &mut rng);
        let mut bundle = model.to_bundle();
        bundle.tensors.retain(|t| t.name != "layer0.biases");
        assert!(FeedForwardModel::from_bundle(&bundle).is_err());
    }
}
