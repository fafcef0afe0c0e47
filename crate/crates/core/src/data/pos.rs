//! Rule-based POS tagger used when records carry no tags.
//!
//! Tagset: N noun, V verb, A adjective, R adverb, P preposition or
//! conjunction, D determiner, O pronoun, `#` hashtag, `@` mention, U URL,
//! E emoticon.

use super::text::{is_mention, is_url};

pub const TAGSET: [&str; 11] = ["N", "V", "A", "R", "P", "D", "O", "#", "@", "U", "E"];

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some", "any", "every", "each", "no", "all", "both",
];
const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them", "myself", "yourself",
    "itself", "ourselves", "themselves", "mine", "yours", "hers", "ours", "theirs", "who", "what",
    "i'm", "it's", "you're", "we're", "they're", "i've", "i'll", "that's",
];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "to", "from", "with", "by", "for", "of", "about", "into", "over", "under",
    "after", "before", "during", "through", "between", "near", "around", "since", "until",
    "without", "and", "but", "or", "because", "if", "while", "as", "so", "than", "nor", "yet",
];
const ADVERBS: &[&str] = &[
    "very", "really", "just", "now", "then", "here", "there", "always", "never", "often", "still",
    "also", "too", "again", "soon", "already", "today", "tonight", "tomorrow", "yesterday", "not",
    "so", "even", "back", "finally", "almost", "well",
];
const VERBS: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "have", "has", "had", "do", "does", "did",
    "will", "would", "can", "could", "should", "may", "might", "must", "shall", "get", "got", "go",
    "went", "gone", "make", "made", "take", "took", "see", "saw", "seen", "come", "came", "know",
    "knew", "think", "thought", "say", "said", "want", "love", "like", "need", "feel", "let",
    "can't", "don't", "won't", "didn't", "isn't", "eat", "ate", "run", "ran", "buy", "bought",
];
const ADJECTIVES: &[&str] = &[
    "good", "great", "new", "old", "big", "small", "happy", "sad", "nice", "best", "better", "bad",
    "worst", "hot", "cold", "little", "long", "short", "high", "low", "first", "last", "next",
    "early", "late", "free", "full", "real", "sure", "ready", "tired", "busy", "pretty", "cute",
    "amazing", "awesome", "lovely", "friendly", "ugly", "holy", "favorite", "favourite",
];
/// `-ing` and `-ed` words that are not verbs.
const SUFFIX_EXCEPTIONS: &[&str] = &[
    "morning", "evening", "building", "wedding", "ceiling", "thing", "something", "nothing",
    "everything", "anything", "king", "ring", "spring", "string", "wing", "ping", "sibling",
    "pudding", "clothing", "lodging", "bed", "red", "speed", "seed", "hundred", "shed", "sled",
];
const ADJ_SUFFIXES: &[&str] = &["ful", "ous", "ive", "able", "ible", "less", "ish"];

fn is_emoticon(tok: &str) -> bool {
    tok == "<3"
        || (!tok.is_empty() && tok.chars().all(|c| !c.is_alphanumeric()))
        || (tok.starts_with([':', ';', '=']) && tok.len() <= 3)
}

fn tag_one(tok: &str) -> &'static str {
    let t = tok.to_lowercase();
    if is_mention(&t) {
        return "@";
    }
    if t.starts_with('#') && t.len() > 1 {
        return "#";
    }
    if is_url(&t) {
        return "U";
    }
    if is_emoticon(&t) {
        return "E";
    }
    let t = t.as_str();
    let lists: [(&[&str], &str); 6] = [
        (DETERMINERS, "D"),
        (PRONOUNS, "O"),
        (VERBS, "V"),
        (PREPOSITIONS, "P"),
        (ADVERBS, "R"),
        (ADJECTIVES, "A"),
    ];
    for (list, tag) in lists {
        if list.contains(&t) {
            return tag;
        }
    }
    if SUFFIX_EXCEPTIONS.contains(&t) {
        return "N";
    }
    let n = t.chars().count();
    if (t.ends_with("ing") && n > 4) || (t.ends_with("ed") && n > 3) {
        return "V";
    }
    if t.ends_with("ly") && n > 3 {
        return "R";
    }
    if n > 4 && ADJ_SUFFIXES.iter().any(|s| t.ends_with(s)) {
        return "A";
    }
    "N"
}

/// One tag per token.
pub fn fallback_pos_tag<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| tag_one(t.as_ref()).to_string()).collect()
}

/// First letter of a tag, uppercased; `^` (proper noun) counts as `N`.
pub fn coarse_tag(tag: &str) -> char {
    match tag.chars().next() {
        Some('^') => 'N',
        Some(c) => c.to_ascii_uppercase(),
        None => '?',
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn rule_table() {
        let cases = [
            ("@a", "@"),
            ("running", "V"),
            ("landed", "V"),
            ("morning", "N"),
            ("quickly", "R"),
            ("beautiful", "A"),
            ("the", "D"),
            ("we", "O"),
            ("at", "P"),
            ("#zoo", "#"),
            ("https://t.co/x", "U"),
            (":)", "E"),
            ("<3", "E"),
            ("ceremony", "N"),
            ("stadium", "N"),
        ];
        for (tok, tag) in cases {
            assert_eq!(fallback_pos_tag(&[tok]), vec![tag.to_string()], "{tok}");
        }
        assert_eq!(coarse_tag("NNS"), 'N');
        assert_eq!(coarse_tag("^"), 'N');
        assert_eq!(coarse_tag("v"), 'V');
    }

    proptest! {
        #[test]
        fn output_aligned_and_in_tagset(tokens in prop::collection::vec("\\PC{0,8}", 0..12)) {
            let tags = fallback_pos_tag(&tokens);
            prop_assert_eq!(tags.len(), tokens.len());
            prop_assert!(tags.iter().all(|t| TAGSET.contains(&t.as_str())));
        }
    }
}
