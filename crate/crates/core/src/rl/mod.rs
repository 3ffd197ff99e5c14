pub mod gae;
pub mod ppo;
pub mod train;

pub use gae::{compute_gae, normalize};
pub use ppo::{clipped_surrogate, ppo_update, PpoConfig, PpoStats, RolloutBuffer};
pub use train::{train_teacher, CurveRow, EvalPoint, PolicyArch, RlConfig, TeacherRun};
