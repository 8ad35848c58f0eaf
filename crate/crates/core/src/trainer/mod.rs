//! Q-learning with experience replay and the supervised sub-tasks.

mod pool;
mod replay;
mod rl;
mod supervised;

pub use pool::TowerPool;
pub use replay::ReplayBuffer;
pub use rl::{
    epsilon_at, q_update, run_rl, unlocked_sizes, write_rl_log, EpisodeLog, RlReport, TrainConfig,
    Transition,
};
pub use supervised::{
    glue_labels, run_supervised, stability_example, write_curve, CurvePoint, SupervisedConfig,
    SupervisedReport, SupervisedTask,
};
