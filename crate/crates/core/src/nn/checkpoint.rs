//! Binary checkpoint format:
//!
//! ```text
//! "SWCK" | version: u8 | header_len: u32 LE | header: JSON | payload: f64 LE...
//! ```
//!
//! The header lists tensor names and shapes; the payload concatenates the
//! tensors in header order.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::mlp::MlpPolicy;
use super::policy::{ActorCritic, NetworkSpec};
use super::tcn::{Tcn, TcnPolicy};
use super::tensor::Tensor;
use crate::env::NormalizationConstants;
use crate::error::NnError;

pub const MAGIC: &[u8; 4] = b"SWCK";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: usize,
    pub seed: u64,
    /// Whether the privileged vector carries the alignment flag.
    pub include_alignment: bool,
    /// Free-form training details (config snapshot, ablation tag, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    network: NetworkSpec,
    tensors: Vec<TensorInfo>,
    normalization: Option<NormalizationConstants>,
    metadata: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkSpec,
    pub tensors: Vec<(String, Tensor)>,
    pub normalization: Option<NormalizationConstants>,
    pub metadata: CheckpointMeta,
}

fn split_named(names: &[(String, Vec<usize>)], params: &[f64]) -> Result<Vec<(String, Tensor)>, NnError> {
    let total: usize = names.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if total != params.len() {
        return Err(NnError::ShapeMismatch(format!("{} parameters for tensors totalling {total}", params.len())));
    }
    let mut off = 0;
    names
        .iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let t = Tensor::from_vec(shape, params[off..off + n].to_vec())?;
            off += n;
            Ok((name.clone(), t))
        })
        .collect()
}

impl Checkpoint {
    pub fn from_policy<P: ActorCritic>(
        policy: &P,
        normalization: Option<NormalizationConstants>,
        metadata: CheckpointMeta,
    ) -> Result<Self, NnError> {
        Ok(Self {
            network: policy.spec(),
            tensors: split_named(&policy.param_names(), policy.params())?,
            normalization,
            metadata,
        })
    }

    pub fn from_encoder(
        encoder: &Tcn,
        normalization: Option<NormalizationConstants>,
        metadata: CheckpointMeta,
    ) -> Result<Self, NnError> {
        Ok(Self {
            network: NetworkSpec::TcnEncoder { tcn: encoder.config().clone() },
            tensors: split_named(&encoder.config().param_names(""), encoder.params())?,
            normalization,
            metadata,
        })
    }

    fn expected_names(&self) -> Result<Vec<(String, Vec<usize>)>, NnError> {
        Ok(match &self.network {
            NetworkSpec::MlpPolicy { input_dim, hidden, action_dim } => {
                MlpPolicy::zeros(*input_dim, hidden, *action_dim).param_names()
            }
            NetworkSpec::TcnPolicy { actor, critic } => {
                let mut names = actor.param_names("actor.");
                names.extend(critic.param_names("critic."));
                names.push(("log_std".into(), vec![actor.output_dim()]));
                names
            }
            NetworkSpec::TcnEncoder { tcn } => tcn.param_names(""),
        })
    }

    /// Concatenated parameters after checking names and shapes against
    /// the declared network.
    pub fn flat_params(&self) -> Result<Vec<f64>, NnError> {
        let want = self.expected_names()?;
        if want.len() != self.tensors.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} network needs {} tensors, checkpoint has {}",
                self.network.name(),
                want.len(),
                self.tensors.len()
            )));
        }
        let mut out = Vec::new();
        for ((wn, ws), (n, t)) in want.iter().zip(&self.tensors) {
            if wn != n || ws.as_slice() != t.shape() {
                return Err(NnError::ShapeMismatch(format!("tensor {n} {:?} where {wn} {ws:?} was expected", t.shape())));
            }
            out.extend_from_slice(t.data());
        }
        Ok(out)
    }

    pub fn mlp_policy(&self) -> Result<MlpPolicy, NnError> {
        match &self.network {
            NetworkSpec::MlpPolicy { input_dim, hidden, action_dim } => {
                MlpPolicy::from_params(*input_dim, hidden, *action_dim, self.flat_params()?)
            }
            other => Err(NnError::ShapeMismatch(format!("expected an MLP policy, found {}", other.name()))),
        }
    }

    pub fn tcn_policy(&self) -> Result<TcnPolicy, NnError> {
        match &self.network {
            NetworkSpec::TcnPolicy { actor, critic } => {
                TcnPolicy::from_params(actor.clone(), critic.clone(), self.flat_params()?)
            }
            other => Err(NnError::ShapeMismatch(format!("expected a TCN policy, found {}", other.name()))),
        }
    }

    pub fn encoder(&self) -> Result<Tcn, NnError> {
        match &self.network {
            NetworkSpec::TcnEncoder { tcn } => Tcn::from_params(tcn.clone(), self.flat_params()?),
            other => Err(NnError::ShapeMismatch(format!("expected a TCN encoder, found {}", other.name()))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            network: self.network.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorInfo { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
            normalization: self.normalization,
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let n: usize = self.tensors.iter().map(|(_, t)| t.len()).sum();
        let mut out = Vec::with_capacity(9 + json.len() + 8 * n);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 9 || &bytes[..4] != MAGIC {
            return Err(NnError::Corrupt("missing SWCK magic".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(NnError::VersionMismatch { found: bytes[4], expected: FORMAT_VERSION });
        }
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let body = &bytes[9..];
        if body.len() < hlen {
            return Err(NnError::Corrupt(format!("header needs {hlen} bytes, {} present", body.len())));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| NnError::Corrupt(format!("bad header: {e}")))?;
        let payload = &body[hlen..];
        let n: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if payload.len() != 8 * n {
            return Err(NnError::Corrupt(format!("payload has {} bytes, header declares {}", payload.len(), 8 * n)));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let tensors = header
            .tensors
            .into_iter()
            .map(|info| {
                let len: usize = info.shape.iter().product();
                let data: Vec<f64> = values.by_ref().take(len).collect();
                Ok((info.name, Tensor::from_vec(&info.shape, data)?))
            })
            .collect::<Result<_, NnError>>()?;
        Ok(Self {
            network: header.network,
            tensors,
            normalization: header.normalization,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let io = |source| NnError::Io { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let bytes = std::fs::read(path).map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}
