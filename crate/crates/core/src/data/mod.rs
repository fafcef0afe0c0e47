//! Corpus ingestion, cleaning, labelling, encoding and splitting.

mod corpus;
mod embeddings;
mod filter;
mod history;
mod labels;
mod pos;
mod record;
mod split;
mod synth;
mod text;
mod time;

pub use corpus::{normalize_tokens, prepare, Encoder, ExampleRecord, PrepareSummary, PreparedCorpus};
pub use embeddings::Embeddings;
pub use filter::{dedup, filter_tokens, filter_tweet, is_poi, FilterDecision, RejectReason, MIN_TOKENS};
pub use history::build_history;
pub use labels::{label_tweet, normalize_category, ActivityLabel, LabelRules, OverrideRule, CATEGORY_TABLE};
pub use pos::{coarse_tag, fallback_pos_tag, TAGSET};
pub use record::{read_jsonl, read_records, read_records_lenient, write_jsonl, TweetRecord};
pub use split::{class_weights, split_dataset, Split};
pub use synth::{generate_synthetic, BowOracle, SynthConfig, SynthMode};
pub use text::{is_mention, is_url, segment_hashtags, tokenize, Dictionary};
pub use time::encode_time;
