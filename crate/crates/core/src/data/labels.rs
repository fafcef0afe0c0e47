//! Activity labels, the location-category map and keyword overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

use super::pos::{coarse_tag, fallback_pos_tag};
use super::record::TweetRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivityLabel {
    Enhancement,
    Traveling,
    Dining,
    Entertaining,
    Shopping,
    Sporting,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 6] = [
        ActivityLabel::Enhancement,
        ActivityLabel::Traveling,
        ActivityLabel::Dining,
        ActivityLabel::Entertaining,
        ActivityLabel::Shopping,
        ActivityLabel::Sporting,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::Index {
            what: "activity labels",
            index: i,
            size: 6,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Enhancement => "Enhancement",
            ActivityLabel::Traveling => "Traveling",
            ActivityLabel::Dining => "Dining",
            ActivityLabel::Entertaining => "Entertaining",
            ActivityLabel::Shopping => "Shopping",
            ActivityLabel::Sporting => "Sporting",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Data(format!("unknown activity label {s:?}")))
    }
}

impl Serialize for ActivityLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ActivityLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Lowercase, `_`/`-` to spaces, whitespace collapsed.
pub fn normalize_category(c: &str) -> String {
    c.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// A keyword rule that takes precedence over the category map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRule {
    pub category: String,
    pub keyword: String,
    /// Required coarse POS tag of the keyword, e.g. `N`.
    pub pos: String,
    pub label: ActivityLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRules {
    pub base_map: BTreeMap<String, ActivityLabel>,
    #[serde(default)]
    pub overrides: Vec<OverrideRule>,
}

/// The location-to-activity table, one row per activity.
pub const CATEGORY_TABLE: [(ActivityLabel, &[&str]); 6] = [
    (
        ActivityLabel::Enhancement,
        &[
            "hospital",
            "library",
            "beauty salon",
            "dentist",
            "doctor",
            "school",
            "spa",
            "university",
            "physiotherapist",
        ],
    ),
    (
        ActivityLabel::Traveling,
        &[
            "airport",
            "bus station",
            "train station",
            "transit station",
            "lodging",
            "subway station",
        ],
    ),
    (
        ActivityLabel::Dining,
        &["bakery", "liquor store", "bar", "restaurant", "meal delivery", "cafe"],
    ),
    (
        ActivityLabel::Entertaining,
        &[
            "amusement park",
            "aquarium",
            "movie theater",
            "museum",
            "zoo",
            "park",
            "casino",
            "night club",
            "art gallery",
        ],
    ),
    (
        ActivityLabel::Shopping,
        &[
            "shopping mall",
            "pharmacy",
            "department store",
            "book store",
            "clothing store",
            "pet store",
            "convenience store",
            "shoe store",
            "electronics store",
        ],
    ),
    (ActivityLabel::Sporting, &["stadium"]),
];

impl Default for LabelRules {
    fn default() -> Self {
        let base_map = CATEGORY_TABLE
            .iter()
            .flat_map(|(label, cats)| cats.iter().map(move |c| (c.to_string(), *label)))
            .collect();
        Self {
            base_map,
            overrides: vec![OverrideRule {
                category: "stadium".into(),
                keyword: "ceremony".into(),
                pos: "N".into(),
                label: ActivityLabel::Enhancement,
            }],
        }
    }
}

impl LabelRules {
    /// Normalizes category keys and checks that overrides refer to known
    /// categories.
    pub fn validate(mut self) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in std::mem::take(&mut self.base_map) {
            let n = normalize_category(&k);
            if let Some(prev) = map.insert(n.clone(), v) {
                if prev != v {
                    return Err(Error::Config(format!("category {n:?} mapped to {prev} and {v}")));
                }
            }
        }
        self.base_map = map;
        for o in &mut self.overrides {
            o.category = normalize_category(&o.category);
            o.keyword = o.keyword.to_lowercase();
            o.pos = coarse_tag(&o.pos).to_string();
            if !self.base_map.contains_key(&o.category) {
                return Err(Error::Config(format!(
                    "override for keyword {:?} names unknown category {:?}",
                    o.keyword, o.category
                )));
            }
        }
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rules: LabelRules = serde_json::from_str(&text)
            .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        rules.validate()
    }
}

/// Applies overrides first, then the category map. POS tags come from the
/// record, or from the fallback tagger when absent.
pub fn label_tweet(rec: &TweetRecord, rules: &LabelRules) -> Result<ActivityLabel> {
    let raw = rec
        .location_category
        .as_deref()
        .ok_or_else(|| Error::Data(format!("record {} has no location category", rec.id)))?;
    let cat = normalize_category(raw);
    let base = *rules
        .base_map
        .get(&cat)
        .ok_or_else(|| Error::UnknownCategory(raw.to_string()))?;
    let relevant: Vec<&OverrideRule> = rules.overrides.iter().filter(|o| o.category == cat).collect();
    if relevant.is_empty() {
        return Ok(base);
    }
    let fallback;
    let tags: &[String] = match &rec.pos {
        Some(p) => p,
        None => {
            fallback = fallback_pos_tag(&rec.tokens);
            &fallback
        }
    };
    for o in relevant {
        let hit = rec
            .tokens
            .iter()
            .zip(tags)
            .any(|(tok, tag)| tok.to_lowercase() == o.keyword && o.pos.chars().eq(std::iter::once(coarse_tag(tag))));
        if hit {
            return Ok(o.label);
        }
    }
    Ok(base)
}
