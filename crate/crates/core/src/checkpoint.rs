//! Self-describing checkpoint documents.
//!
//! A checkpoint captures everything needed to resume or evaluate a run:
//! the network architecture, the survival schedule (if any), every
//! parameter tensor and batch-norm running statistic as a named flat
//! array with an explicit shape, and the positions of all RNG streams.
//! Serialization goes through JSON, whose shortest-representation float
//! encoding round-trips `f64` values bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resnet::{Network, NetworkSpec};
use crate::rng::{StreamSet, StreamState};
use crate::stochastic::SurvivalSchedule;
use crate::tensor::Tensor;

/// Current on-disk format version. Bump on incompatible layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// One tensor flattened for storage, identified by its parameter path
/// (e.g. `blocks.0.conv1.kernel`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    fn from_tensor(name: &str, t: &Tensor) -> Self {
        NamedArray {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }
}

/// A complete training snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub network: NetworkSpec,
    pub schedule: Option<SurvivalSchedule>,
    /// Learnable parameters in canonical order.
    pub params: Vec<NamedArray>,
    /// Non-learned state (batch-norm running statistics).
    pub state: Vec<NamedArray>,
    /// Positions of all RNG streams at capture time.
    pub rng_streams: Vec<StreamState>,
}

impl Checkpoint {
    /// Snapshots a network, its schedule, and the RNG stream positions.
    pub fn capture(
        net: &Network,
        schedule: Option<&SurvivalSchedule>,
        streams: &StreamSet,
    ) -> Checkpoint {
        let params = net
            .named_params()
            .into_iter()
            .map(|(name, t)| NamedArray::from_tensor(&name, t))
            .collect();
        let state = net
            .named_state()
            .into_iter()
            .map(|(name, t)| NamedArray::from_tensor(&name, t))
            .collect();
        Checkpoint {
            format_version: FORMAT_VERSION,
            network: net.spec.clone(),
            schedule: schedule.cloned(),
            params,
            state,
            rng_streams: streams.capture(),
        }
    }

    /// Rebuilds the network, schedule, and RNG streams from this snapshot.
    ///
    /// Every stored array must match a parameter or state entry of the
    /// reconstructed network by name and shape; missing or surplus names
    /// are errors, as is a version mismatch.
    pub fn restore(&self) -> Result<(Network, Option<SurvivalSchedule>, StreamSet)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format version {} not supported (expected {})",
                self.format_version, FORMAT_VERSION
            )));
        }
        self.network.validate()?;
        // Architecture first; the freshly initialized values are then
        // overwritten wholesale, so the throwaway init stream is fine.
        let mut scratch = crate::rng::RngStream::new(0, crate::rng::stream::WEIGHT_INIT);
        let mut net = Network::init(self.network.clone(), &mut scratch)?;

        copy_back(net.named_params_mut(), &self.params, "parameter")?;
        copy_back(net.named_state_mut(), &self.state, "state")?;

        let streams = StreamSet::restore(&self.rng_streams)?;
        Ok((net, self.schedule.clone(), streams))
    }

    /// Serializes to a JSON string.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a checkpoint from JSON.
    pub fn from_json(s: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(s)?)
    }

    /// Writes the checkpoint to `path` as JSON.
    pub fn save_file(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_json()?)?)
    }

    /// Reads a checkpoint from a JSON file.
    pub fn load_file(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }
}

/// Overwrites each named tensor with its stored array, verifying that the
/// stored set and the live set agree exactly on names and shapes.
fn copy_back(
    live: Vec<(String, &mut Tensor)>,
    stored: &[NamedArray],
    kind: &str,
) -> Result<()> {
    if live.len() != stored.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} {kind} arrays but network expects {}",
            stored.len(),
            live.len()
        )));
    }
    for (name, tensor) in live {
        let arr = stored
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Config(format!("checkpoint missing {kind} array `{name}`")))?;
        if arr.shape != tensor.shape() {
            return Err(Error::Shape(format!(
                "checkpoint {kind} `{name}` has shape {:?}, network expects {:?}",
                arr.shape,
                tensor.shape()
            )));
        }
        if arr.data.len() != tensor.len() {
            return Err(Error::Shape(format!(
                "checkpoint {kind} `{name}` has {} values, shape {:?} requires {}",
                arr.data.len(),
                arr.shape,
                tensor.len()
            )));
        }
        tensor.data_mut().copy_from_slice(&arr.data);
    }
    Ok(())
}
