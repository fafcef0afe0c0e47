use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::TweetRecord;
use super::text::is_mention;

pub const MIN_TOKENS: usize = 3;
/// Mention share above which a tweet is dropped, as a fraction `7/10`.
pub const MAX_MENTION_NUM: usize = 7;
pub const MAX_MENTION_DEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooShort,
    MentionHeavy,
    NotPoi,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::TooShort => "too_short",
            RejectReason::MentionHeavy => "mention_heavy",
            RejectReason::NotPoi => "not_poi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Reject(RejectReason),
}

/// Accepts "poi" or "point of interest" in any case. A missing type is
/// accepted.
pub fn is_poi(location_type: Option<&str>) -> bool {
    match location_type {
        None => true,
        Some(t) => {
            let t = t.trim().to_lowercase().replace(['_', '-'], " ");
            t == "poi" || t == "point of interest"
        }
    }
}

/// Checks only the token rules.
pub fn filter_tokens<S: AsRef<str>>(tokens: &[S]) -> FilterDecision {
    let n = tokens.len();
    if n < MIN_TOKENS {
        return FilterDecision::Reject(RejectReason::TooShort);
    }
    let mentions = tokens.iter().filter(|t| is_mention(t.as_ref())).count();
    if mentions * MAX_MENTION_DEN > MAX_MENTION_NUM * n {
        return FilterDecision::Reject(RejectReason::MentionHeavy);
    }
    FilterDecision::Keep
}

pub fn filter_tweet(rec: &TweetRecord) -> FilterDecision {
    match filter_tokens(&rec.tokens) {
        FilterDecision::Keep if !is_poi(rec.location_type.as_deref()) => {
            FilterDecision::Reject(RejectReason::NotPoi)
        }
        d => d,
    }
}

fn normalized_text(rec: &TweetRecord) -> String {
    rec.text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keeps the first of each group of records by one author with the same
/// normalized text (lowercased, whitespace collapsed). Order is preserved;
/// returns the number removed.
pub fn dedup(records: &mut Vec<TweetRecord>) -> usize {
    let before = records.len();
    let mut seen = HashSet::new();
    records.retain(|r| seen.insert((r.author_id.clone(), normalized_text(r))));
    before - records.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(tokens: &[&str]) -> FilterDecision {
        filter_tokens(tokens)
    }

    #[test]
    fn boundaries() {
        assert_eq!(d(&["hi", "there"]), FilterDecision::Reject(RejectReason::TooShort));
        assert_eq!(d(&["a", "b", "c"]), FilterDecision::Keep);
        assert_eq!(d(&["@a", "@b", "@c", "ok"]), FilterDecision::Reject(RejectReason::MentionHeavy));
        assert_eq!(d(&["@a", "@b", "ok", "ok"]), FilterDecision::Keep);
        let seventy = ["@a", "@b", "@c", "@d", "@e", "@f", "@g", "x", "y", "z"];
        assert_eq!(d(&seventy), FilterDecision::Keep);
    }

    #[test]
    fn poi_rule() {
        let mut r = TweetRecord::new("1", "a", "2017-01-01T00:00:00Z".parse().unwrap(), "a b c");
        r.tokens = vec!["a".into(), "b".into(), "c".into()];
        assert_eq!(filter_tweet(&r), FilterDecision::Keep);
        r.location_type = Some("Point_of_Interest".into());
        assert_eq!(filter_tweet(&r), FilterDecision::Keep);
        r.location_type = Some("city".into());
        assert_eq!(filter_tweet(&r), FilterDecision::Reject(RejectReason::NotPoi));
    }

    #[test]
    fn dedup_per_author() {
        let t = "2017-01-01T00:00:00Z".parse().unwrap();
        let mut v = vec![
            TweetRecord::new("1", "a", t, "Hello  World"),
            TweetRecord::new("2", "a", t, "hello world"),
            TweetRecord::new("3", "b", t, "hello world"),
        ];
        assert_eq!(dedup(&mut v), 1);
        let ids: Vec<&str> = v.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["1", "3"]);
    }
}
