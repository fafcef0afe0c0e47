//! Seeded synthetic corpora whose labels depend on content, direct context
//! and history in controlled ways.

use std::collections::{BTreeMap, HashSet};

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NUM_CLASSES;

use super::labels::ActivityLabel;
use super::record::TweetRecord;
use super::time::encode_time;

/// How the label depends on features beyond the target's content.
///
/// Outside `ContentOnly`, the keyword picks one of three groups and a
/// second bit picks the class within the group (`label = 2 * group + bit`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// Six keyword groups, label = group.
    ContentOnly,
    /// Group 0: majority marker group of the history. Group 1: post period
    /// in {06-12, 12-18}. Group 2: keyword tagged as a verb.
    ContextNecessary,
    /// Group 0: keyword tagged as a verb. Group 1: post period. Group 2:
    /// XOR of the two.
    DirectContext,
    /// Every group: majority marker group of the history.
    HistoryDependent,
}

impl std::str::FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "content_only" => Ok(Self::ContentOnly),
            "context_necessary" => Ok(Self::ContextNecessary),
            "direct_context" => Ok(Self::DirectContext),
            "history_dependent" => Ok(Self::HistoryDependent),
            _ => Err(Error::Config(format!("unknown synthetic mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub num_examples: usize,
    pub num_authors: usize,
    pub history_len: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub keywords_per_class: usize,
    pub markers_per_group: usize,
    pub mode: SynthMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            num_examples: 10_000,
            num_authors: 500,
            history_len: 5,
            min_len: 4,
            max_len: 8,
            keywords_per_class: 8,
            markers_per_group: 8,
            mode: SynthMode::ContextNecessary,
        }
    }
}

const FILLER_TAGS: [&str; 7] = ["N", "V", "A", "D", "P", "R", "O"];

impl SynthConfig {
    fn num_keywords(&self) -> usize {
        NUM_CLASSES * self.keywords_per_class
    }

    fn num_fillers(&self) -> usize {
        self.vocab_size.saturating_sub(self.num_keywords() + 2 * self.markers_per_group)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.keywords_per_class == 0 || self.markers_per_group == 0 {
            return bad("keyword and marker counts must be positive");
        }
        if self.num_fillers() < 2 {
            return bad("vocab_size leaves fewer than 2 filler words");
        }
        if self.min_len < 3 || self.max_len < self.min_len {
            return bad("need 3 <= min_len <= max_len");
        }
        if self.num_examples == 0 || self.num_authors == 0 || self.num_authors > self.num_examples {
            return bad("need 0 < num_authors <= num_examples");
        }
        let needs_history = matches!(self.mode, SynthMode::ContextNecessary | SynthMode::HistoryDependent);
        if needs_history && self.history_len == 0 {
            return bad("history-based modes need history_len > 0");
        }
        Ok(())
    }
}

struct Roles {
    keywords: Vec<String>,
    markers: [Vec<String>; 2],
    fillers: Vec<String>,
}

fn roles(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Roles {
    let mut words: Vec<String> = (0..cfg.vocab_size).map(|i| format!("w{i:03}")).collect();
    words.shuffle(rng);
    let fillers = words.split_off(cfg.num_keywords() + 2 * cfg.markers_per_group);
    let m1 = words.split_off(cfg.num_keywords() + cfg.markers_per_group);
    let m0 = words.split_off(cfg.num_keywords());
    Roles {
        keywords: words,
        markers: [m0, m1],
        fillers,
    }
}

/// Majority marker group of the last `len` markers; ties go to the most
/// recent one. `None` when there is no history.
fn history_bit(markers: &[usize], len: usize) -> Option<usize> {
    let window = &markers[markers.len().saturating_sub(len)..];
    let last = *window.last()?;
    let ones = window.iter().filter(|&&m| m == 1).count();
    Some(match (2 * ones).cmp(&window.len()) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => last,
    })
}

/// Generates a labelled corpus of `num_examples` unique tweets. Every record
/// has tokens, POS tags, a POI location type and a label.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Vec<TweetRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roles = roles(cfg, &mut rng);
    let pair_groups = NUM_CLASSES / 2;
    let base = Utc.with_ymd_and_hms(2017, 1, 2, 0, 0, 0).unwrap();
    let mut out = Vec::with_capacity(cfg.num_examples);
    for a in 0..cfg.num_authors {
        let count = cfg.num_examples / cfg.num_authors + usize::from(a < cfg.num_examples % cfg.num_authors);
        let mut t = base + Duration::minutes(rng.random_range(0..60 * 24 * 60));
        let mut markers: Vec<usize> = Vec::new();
        let mut seen: HashSet<Vec<String>> = HashSet::new();
        for k in 0..count {
            t += Duration::minutes(rng.random_range(60..72 * 60));
            let period = encode_time(t, None).period;
            let hist = history_bit(&markers, cfg.history_len);
            let marker = rng.random_range(0..2);
            let verb = rng.random_bool(0.5);
            let (keyword_class, label) = match cfg.mode {
                SynthMode::ContentOnly => {
                    let c = rng.random_range(0..NUM_CLASSES);
                    (c, c)
                }
                mode => {
                    let g = if mode == SynthMode::ContextNecessary && hist.is_none() {
                        rng.random_range(1..pair_groups)
                    } else {
                        rng.random_range(0..pair_groups)
                    };
                    let in_period = usize::from(period == 1 || period == 2);
                    let bit = match (mode, g) {
                        (SynthMode::HistoryDependent, _) | (SynthMode::ContextNecessary, 0) => hist.unwrap_or(0),
                        (SynthMode::ContextNecessary, 1) | (SynthMode::DirectContext, 1) => in_period,
                        (SynthMode::ContextNecessary, _) | (SynthMode::DirectContext, 0) => usize::from(verb),
                        _ => usize::from(verb) ^ in_period,
                    };
                    // a pair group owns the keywords of both its classes
                    (2 * g + rng.random_range(0..2), 2 * g + bit)
                }
            };
            let kw = &roles.keywords[keyword_class * cfg.keywords_per_class
                ..(keyword_class + 1) * cfg.keywords_per_class];
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            let (tokens, tags) = loop {
                let mut slots: Vec<(String, String)> = (0..len - 2)
                    .map(|_| {
                        let w = roles.fillers[rng.random_range(0..roles.fillers.len())].clone();
                        let tag = FILLER_TAGS[rng.random_range(0..FILLER_TAGS.len())].to_string();
                        (w, tag)
                    })
                    .collect();
                let kw_tag = if verb { "V" } else { "N" };
                let kw_pos = rng.random_range(0..=slots.len());
                slots.insert(kw_pos, (kw[rng.random_range(0..kw.len())].clone(), kw_tag.into()));
                let mk = &roles.markers[marker];
                let mk_pos = rng.random_range(0..=slots.len());
                slots.insert(mk_pos, (mk[rng.random_range(0..mk.len())].clone(), "N".into()));
                let (tokens, tags): (Vec<String>, Vec<String>) = slots.into_iter().unzip();
                if seen.insert(tokens.clone()) {
                    break (tokens, tags);
                }
            };
            let mut rec = TweetRecord::new(format!("s{a:04}-{k:04}"), format!("u{a:04}"), t, tokens.join(" "));
            rec.tokens = tokens;
            rec.pos = Some(tags);
            rec.location_type = Some("POI".into());
            rec.label = Some(ActivityLabel::from_index(label)?);
            out.push(rec);
            markers.push(marker);
        }
    }
    Ok(out)
}

const SMOOTHING: f64 = 0.01;

/// Multinomial naive Bayes over target tokens; sees content only.
#[derive(Debug, Clone)]
pub struct BowOracle {
    log_prior: Vec<f64>,
    counts: Vec<BTreeMap<String, f64>>,
    totals: Vec<f64>,
    vocab: usize,
}

impl BowOracle {
    pub fn fit<'a, I>(examples: I, num_classes: usize) -> Self
    where
        I: IntoIterator<Item = (&'a [String], usize)>,
    {
        let mut counts = vec![BTreeMap::new(); num_classes];
        let mut totals = vec![0.0; num_classes];
        let mut docs = vec![0.0; num_classes];
        let mut vocab = HashSet::new();
        for (tokens, y) in examples {
            docs[y] += 1.0;
            for t in tokens {
                *counts[y].entry(t.clone()).or_insert(0.0) += 1.0;
                totals[y] += 1.0;
                vocab.insert(t.clone());
            }
        }
        let n: f64 = docs.iter().sum();
        let log_prior = docs.iter().map(|&d| ((d + 1.0) / (n + num_classes as f64)).ln()).collect();
        Self {
            log_prior,
            counts,
            totals,
            vocab: vocab.len(),
        }
    }

    pub fn scores(&self, tokens: &[String]) -> Vec<f64> {
        (0..self.log_prior.len())
            .map(|c| {
                let denom = (self.totals[c] + SMOOTHING * self.vocab as f64).ln();
                self.log_prior[c]
                    + tokens
                        .iter()
                        .map(|t| (self.counts[c].get(t).copied().unwrap_or(0.0) + SMOOTHING).ln() - denom)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, tokens: &[String]) -> usize {
        let s = self.scores(tokens);
        (0..s.len()).fold(0, |best, c| if s[c] > s[best] { c } else { best })
    }
}
