//! Small dense-network engine with hand-written backward passes.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod mlp;
pub mod policy;
pub mod tcn;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use loss::{bce_with_logits, sigmoid, student_loss, student_loss_grad, StudentLoss, STUDENT_BCE_WEIGHT};
pub use mlp::{Activation, Mlp, MlpPolicy, PolicyOutput};
pub use policy::{gaussian_entropy, gaussian_log_prob, gaussian_sample, ActorCritic, NetworkSpec};
pub use tcn::{Tcn, TcnConfig, TcnPolicy};
pub use tensor::Tensor;
