//! The four training procedures — pretraining, fine-tuning with layer
//! selection, adversarial training, discrepancy minimization and the
//! three-step moment-matching schema — plus optimizer, schedules and
//! mini-batch sampling.

pub mod config;
pub mod dat;
pub mod discrepancy;
pub mod engine;
pub mod finetune;
pub mod optim;
pub mod pretrain;
pub mod report;
pub mod sampler;

pub use config::{Method, MethodConfig, TrainConfig, TrainRunConfig};
pub use dat::train_dat;
pub use discrepancy::{train_discrepancy_min, train_moment_matching};
pub use engine::{
    adaptable_layers, embed_utterance, make_domain_head, make_domain_subnets, make_speaker_head,
};
pub use finetune::fine_tune;
pub use optim::{lr_schedule, warmup_factor, Adam, OptimizerConfig, Progress};
pub use pretrain::pretrain;
pub use report::{EpochStats, TrainReport};
pub use sampler::{sample_minibatch, DomainBatch, Segment, TrainView};
