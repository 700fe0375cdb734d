//! Offline training: value and transport losses, the update step, the
//! behavior-cloning, IQL and adversarial baselines, and the training loop.

mod analysis;
mod bundle;
mod config;
mod critic;
mod losses;
mod train;

pub use analysis::{average_ranks, spearman, trajectory_transport, TrajectoryTransport};
pub use bundle::{CheckpointBundle, LossBreakdown};
pub use config::{Algorithm, FrozenCritic, TrainingConfig, CONFIG_KEYS};
pub use critic::{BatchVars, Critic};
pub use losses::{
    advantage_weight, advw_discriminator_loss, advw_policy_loss, awr_policy_loss, awr_targets, expectile_graph,
    expectile_loss, psi_objective, q_loss, v_loss, AwrTargets, DiscriminatorTerms, PsiTerms,
};
pub use train::{continue_training, metrics_csv, train, MetricsRow, TrainRun, METRICS_HEADER};
