//! Versioned JSON checkpoints of the model, optimizer and loss weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OptimizerState;
use crate::autodiff::Activation;
use crate::network::{DenseLayer, InputScaling, ModelState, OutputScaling, ParamSet, NUM_NETWORKS};
use crate::physics::NUM_TERMS;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fgm-pinn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub id: u8,
    pub activation: Activation,
    pub widths: Vec<usize>,
    /// Flat parameters, per layer: row-major weights then bias.
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub iteration: usize,
    pub seed: u64,
    pub networks: Vec<NetworkRecord>,
    pub input: InputScaling<f64>,
    pub outputs: [OutputScaling<f64>; NUM_NETWORKS],
    pub optimizer: OptimizerState<f64>,
    pub weights: [f64; NUM_TERMS],
}

impl Checkpoint {
    pub fn capture(
        iteration: usize,
        model: &ModelState<f64>,
        optimizer: &OptimizerState<f64>,
        weights: &[f64; NUM_TERMS],
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            iteration,
            seed: model.seed,
            networks: model
                .nets
                .iter()
                .map(|n| NetworkRecord {
                    id: n.id,
                    activation: n.activation,
                    widths: n.widths(),
                    params: n.to_flat(),
                })
                .collect(),
            input: model.input,
            outputs: model.outputs,
            optimizer: optimizer.clone(),
            weights: *weights,
        }
    }

    pub fn model(&self) -> Result<ModelState<f64>> {
        if self.networks.len() != NUM_NETWORKS {
            return Err(Error::config("checkpoint.networks", "expected four networks"));
        }
        let mut nets = Vec::with_capacity(NUM_NETWORKS);
        for rec in &self.networks {
            if rec.widths.len() < 2 {
                return Err(Error::config("checkpoint.networks.widths", "need at least two widths"));
            }
            let layers = rec.widths.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
            let mut net = ParamSet::from_layers(rec.id, rec.activation, layers)?;
            net.set_flat(&rec.params)?;
            nets.push(net);
        }
        let model = ModelState {
            nets: nets.try_into().expect("four networks"),
            input: self.input,
            outputs: self.outputs,
            seed: self.seed,
        };
        model.validate()?;
        if self.optimizer.m.len() != model.num_params() || self.optimizer.v.len() != model.num_params() {
            return Err(Error::config(
                "checkpoint.optimizer",
                "moment length does not match the model",
            ));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Serde(format!("not a checkpoint (format `{}`)", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;
    use crate::training::AdamConfig;

    #[test]
    fn json_round_trip_is_exact() {
        let arch = Architecture {
            hidden_layers: 2,
            neurons: 5,
            activation: Activation::Tanh,
        };
        let input = InputScaling::from_bounds([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1e-7, 1.0]).unwrap();
        let outputs = [OutputScaling {
            scale: 1.3e-3,
            shift: 7e-4,
        }; NUM_NETWORKS];
        let model = ModelState::init(&arch, input, outputs, 9).unwrap();
        let mut opt = OptimizerState::new(model.num_params(), &AdamConfig::default());
        opt.m[3] = 0.1 + 0.2;
        opt.step = 17;
        let ck = Checkpoint::capture(17, &model, &opt, &[1.0 / 3.0; NUM_TERMS]);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model().unwrap(), model);
        let bad = ck.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(Checkpoint::from_json(&bad).is_err());
    }
}
