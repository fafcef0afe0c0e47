//! Model specifications, encoded inputs, the architecture zoo and
//! checkpoints.

mod checkpoint;
mod example;
mod spec;
mod vocab;
mod zoo;

pub use checkpoint::{Checkpoint, FORMAT as CHECKPOINT_FORMAT, VERSION as CHECKPOINT_VERSION};
pub use example::{
    ActivityDistribution, EncodedExample, EncodedTweet, TimeCode, DAYS, NUM_CLASSES, PAD_DAY,
    PAD_PERIOD, PERIODS,
};
pub use spec::{Architecture, Features, ModelSpec};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
pub use zoo::{Model, Network};
