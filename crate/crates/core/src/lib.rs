pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod profiler;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{
    ActivityDistribution, Architecture, EncodedExample, EncodedTweet, Features, Model, ModelSpec,
    TimeCode, Vocab, NUM_CLASSES,
};
pub use params::{adam_step, AdamConfig, Initializer, ParamId, ParameterStore};
pub use tape::{ParamGrads, Tape, Var};
pub use tensor::Tensor;
pub use metrics::EvalReport;
pub use train::{evaluate, fit, train, EpochLog, TrainConfig, TrainOutcome};
pub use profiler::{account_profile, follower_profile, profile_records, profile_report, AccountProfile, DistributionRecord, ProfileReport};
