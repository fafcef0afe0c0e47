//! Corpus preparation and feature encoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncodedExample, EncodedTweet, Vocab, NUM_CLASSES};

use super::filter::{dedup, filter_tweet, FilterDecision};
use super::history::build_history;
use super::labels::{label_tweet, ActivityLabel, LabelRules};
use super::pos::{fallback_pos_tag, TAGSET};
use super::record::TweetRecord;
use super::split::{class_weights, split_dataset, Split};
use super::text::{segment_hashtags, tokenize, Dictionary};
use super::time::encode_time;

/// A target record with its history records, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    #[serde(flatten)]
    pub target: TweetRecord,
    #[serde(default)]
    pub history: Vec<TweetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub input: usize,
    pub rejected: BTreeMap<String, usize>,
    pub duplicates: usize,
    pub kept: usize,
    pub label_counts: BTreeMap<String, usize>,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    /// Cleaned, labelled records sorted by author, time and id.
    pub records: Vec<TweetRecord>,
    pub histories: Vec<Vec<usize>>,
    pub split: Split,
    /// `None` when some class is absent from the training split.
    pub class_weights: Option<Vec<f64>>,
    pub summary: PrepareSummary,
}

impl PreparedCorpus {
    pub fn examples(&self, indices: &[usize]) -> Vec<ExampleRecord> {
        indices
            .iter()
            .map(|&i| ExampleRecord {
                target: self.records[i].clone(),
                history: self.histories[i].iter().map(|&j| self.records[j].clone()).collect(),
            })
            .collect()
    }
}

/// Tokenizes when needed and segments hashtags. Given POS tags stay aligned:
/// a segmented hashtag's pieces are tagged by the fallback tagger.
pub fn normalize_tokens(rec: &mut TweetRecord, dict: &Dictionary) {
    if rec.tokens.is_empty() {
        rec.tokens = tokenize(&rec.text);
        rec.pos = None;
    }
    let mut tokens = Vec::with_capacity(rec.tokens.len());
    let mut tags = rec.pos.as_ref().map(|_| Vec::with_capacity(rec.tokens.len()));
    for (i, tok) in rec.tokens.iter().enumerate() {
        let pieces = segment_hashtags(std::slice::from_ref(tok), dict);
        if let (Some(out), Some(given)) = (tags.as_mut(), rec.pos.as_ref()) {
            if pieces.len() == 1 && &pieces[0] == tok {
                out.push(given[i].clone());
            } else {
                out.extend(fallback_pos_tag(&pieces));
            }
        }
        tokens.extend(pieces);
    }
    rec.tokens = tokens;
    rec.pos = tags;
}

/// Cleans, labels, windows and splits a raw corpus.
pub fn prepare(
    raw: Vec<TweetRecord>,
    rules: &LabelRules,
    dict: &Dictionary,
    history_len: usize,
    seed: u64,
) -> Result<PreparedCorpus> {
    let input = raw.len();
    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    let mut kept = Vec::with_capacity(raw.len());
    for mut rec in raw {
        rec.check()?;
        normalize_tokens(&mut rec, dict);
        match filter_tweet(&rec) {
            FilterDecision::Keep => kept.push(rec),
            FilterDecision::Reject(r) => *rejected.entry(r.to_string()).or_default() += 1,
        }
    }
    kept.sort_by(|a, b| {
        (&a.author_id, a.timestamp, &a.id).cmp(&(&b.author_id, b.timestamp, &b.id))
    });
    let duplicates = dedup(&mut kept);
    for rec in &mut kept {
        if rec.location_category.is_some() {
            rec.label = Some(label_tweet(rec, rules)?);
        } else if rec.label.is_none() {
            return Err(Error::Data(format!("record {} has neither a label nor a location category", rec.id)));
        }
        if rec.pos.is_none() {
            rec.pos = Some(fallback_pos_tag(&rec.tokens));
        }
    }
    let histories = build_history(&kept, history_len);
    let split = split_dataset(kept.len(), seed);
    let train_labels: Vec<usize> = split
        .train
        .iter()
        .map(|&i| kept[i].label.expect("labelled above").index())
        .collect();
    let class_weights = class_weights(&train_labels, NUM_CLASSES).ok();
    let mut label_counts = BTreeMap::new();
    for r in &kept {
        *label_counts.entry(r.label.expect("labelled above").to_string()).or_default() += 1;
    }
    let summary = PrepareSummary {
        input,
        rejected,
        duplicates,
        kept: kept.len(),
        label_counts,
        train: split.train.len(),
        dev: split.dev.len(),
        test: split.test.len(),
    };
    Ok(PreparedCorpus {
        records: kept,
        histories,
        split,
        class_weights,
        summary,
    })
}

/// Vocabularies and the record-to-id mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub content: Vocab,
    pub pos: Vocab,
}

impl Encoder {
    /// Content vocabulary from the given records (targets and histories);
    /// the POS vocabulary always holds the fallback tagset.
    pub fn fit(examples: &[ExampleRecord], min_count: usize) -> Self {
        let tweets = || examples.iter().flat_map(|e| std::iter::once(&e.target).chain(&e.history));
        let content = Vocab::build(tweets().flat_map(|r| r.tokens.iter().map(String::as_str)), min_count);
        let mut pos = Vocab::new();
        for t in TAGSET {
            pos.push(t);
        }
        let mut seen: Vec<&str> = tweets()
            .flat_map(|r| r.pos.iter().flatten().map(String::as_str))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            pos.push(t);
        }
        Self { content, pos }
    }

    pub fn encode_tweet(&self, rec: &TweetRecord) -> Result<EncodedTweet> {
        rec.check()?;
        let tokens = if rec.tokens.is_empty() {
            tokenize(&rec.text)
        } else {
            rec.tokens.clone()
        };
        if tokens.is_empty() {
            return Err(Error::Encoding(format!("record {} has no content", rec.id)));
        }
        let tags = match &rec.pos {
            Some(p) if p.len() == tokens.len() => p.clone(),
            _ => fallback_pos_tag(&tokens),
        };
        Ok(EncodedTweet {
            tokens: self.content.encode(&tokens),
            pos: self.pos.encode(&tags),
            time: encode_time(rec.timestamp, rec.utc_offset_minutes),
        })
    }

    pub fn encode(&self, ex: &ExampleRecord) -> Result<EncodedExample> {
        Ok(EncodedExample {
            target: self.encode_tweet(&ex.target)?,
            history: ex.history.iter().map(|h| self.encode_tweet(h)).collect::<Result<_>>()?,
            label: ex.target.label.map(ActivityLabel::index),
        })
    }

    pub fn encode_all(&self, exs: &[ExampleRecord]) -> Result<Vec<EncodedExample>> {
        exs.iter().map(|e| self.encode(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use chrono::{Duration, TimeZone, Utc};

    use super::*;
    use crate::model::UNK;

    fn raw(id: usize, author: &str, text: &str, cat: &str) -> TweetRecord {
        let t = Utc.with_ymd_and_hms(2017, 3, 5, 12, 0, 0).unwrap() + Duration::hours(id as i64);
        let mut r = TweetRecord::new(format!("{id}"), author, t, text);
        r.location_category = Some(cat.into());
        r.location_type = Some("POI".into());
        r
    }

    fn corpus() -> Vec<TweetRecord> {
        let cats = ["hospital", "airport", "cafe", "zoo", "pharmacy", "stadium"];
        let mut v = Vec::new();
        for i in 0..30 {
            v.push(raw(i, ["a", "b", "c"][i % 3], &format!("tweet number {i} at the #GreatPlace"), cats[i % 6]));
        }
        v.push(raw(100, "a", "too short", "zoo"));
        v.push(raw(101, "a", "@x @y @z hey", "zoo"));
        v.push(raw(102, "a", "tweet number 0 at the #GreatPlace", "zoo"));
        let mut city = raw(103, "a", "a perfectly fine tweet", "zoo");
        city.location_type = Some("city".into());
        v.push(city);
        v
    }

    #[test]
    fn prepare_counts_and_labels() {
        let p = prepare(corpus(), &LabelRules::default(), Dictionary::builtin(), 5, 7).unwrap();
        let s = &p.summary;
        assert_eq!(s.input, 34);
        assert_eq!(s.rejected["too_short"], 1);
        assert_eq!(s.rejected["mention_heavy"], 1);
        assert_eq!(s.rejected["not_poi"], 1);
        assert_eq!(s.duplicates, 1);
        assert_eq!(s.kept, 30);
        assert_eq!((s.train, s.dev, s.test), (18, 6, 6));
        assert!(p.records.iter().all(|r| r.tokens.iter().all(|t| !t.contains('#'))));
        assert!(p.records.iter().all(|r| r.pos.as_ref().unwrap().len() == r.tokens.len()));
        let zoo = p.records.iter().find(|r| r.id == "3").unwrap();
        assert_eq!(zoo.label, Some(ActivityLabel::Entertaining));
    }

    #[test]
    fn duplicates_removed_per_author() {
        let mut v = corpus();
        v.push(raw(104, "a", "Tweet number 0  at the #GreatPlace", "zoo"));
        let p = prepare(v, &LabelRules::default(), Dictionary::builtin(), 5, 7).unwrap();
        assert_eq!(p.summary.duplicates, 2);
    }

    #[test]
    fn hashtag_segmentation_keeps_given_tags_aligned() {
        let mut r = raw(0, "a", "", "zoo");
        r.tokens = vec!["at".into(), "#GreatBarrierReef".into(), "today".into()];
        r.pos = Some(vec!["P".into(), "#".into(), "R".into()]);
        normalize_tokens(&mut r, Dictionary::builtin());
        assert_eq!(r.tokens, ["at", "great", "barrier", "reef", "today"]);
        let pos = r.pos.unwrap();
        assert_eq!(pos.len(), 5);
        assert_eq!((pos[0].as_str(), pos[4].as_str()), ("P", "R"));
    }

    #[test]
    fn encoder_maps_unknown_tokens_and_time() {
        let p = prepare(corpus(), &LabelRules::default(), Dictionary::builtin(), 2, 7).unwrap();
        let train = p.examples(&p.split.train);
        let enc = Encoder::fit(&train, 1);
        assert!(enc.pos.len() >= TAGSET.len() + 2);
        let mut ex = p.examples(&p.split.test)[0].clone();
        ex.target.tokens.push("neverseenbefore".into());
        ex.target.pos.as_mut().unwrap().push("N".into());
        let e = enc.encode(&ex).unwrap();
        assert_eq!(*e.target.tokens.last().unwrap(), UNK);
        assert_eq!(e.target.tokens.len(), e.target.pos.len());
        assert!(e.history.len() <= 2);
        assert!(e.label.is_some());
        ex.target.tokens.clear();
        ex.target.text.clear();
        ex.target.pos = None;
        assert!(matches!(enc.encode(&ex), Err(Error::Encoding(_))));
    }
}
