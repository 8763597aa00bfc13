//! Adaptation objectives: RBF-kernel MMD, pairwise multi-domain
//! discrepancy, the adversarial multi-task loss, classification losses,
//! classifier-discrepancy objectives and the progressive schedules.

pub mod kernel;
pub mod mmd;
pub mod objective;
pub mod schedule;

pub use kernel::{rbf_kernel, Bandwidth, KernelConfig, SIGMA_FLOOR};
pub use mmd::{
    classifier_discrepancy, classifier_discrepancy_with_grad, mmd_squared, mmd_squared_with_grad,
};
pub use objective::{
    binom2, ce_sum_rows, classification_loss, dat_loss, pairwise_mmd_loss, total_loss,
    LossBreakdown, PairTerm, PairwiseMmd,
};
pub use schedule::{mu_schedule, ScheduleState};
