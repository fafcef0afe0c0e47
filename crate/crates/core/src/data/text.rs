//! Tweet tokenization and hashtag segmentation.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

const URL_TRAILING: &[char] = &['.', ',', '!', '?', ';', ':', ')', '(', '"', '\'', ']'];

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?x)
            (?P<url>(?:https?://|www\.)\S+)
            | (?P<mention>@\w+)
            | (?P<hashtag>\#\w+)
            | (?P<emoticon><3 | [:;=][-o*']?[)\](\[dDpP/\\|{}@] | [)\](\[][-o*']?[:;=])
            | (?P<number>\d+(?:[.,:]\d+)+)
            | (?P<word>\w+(?:['’]\w+)*)
            "#,
        )
        .expect("token pattern compiles")
    })
}

pub fn is_url(tok: &str) -> bool {
    let l = tok.to_ascii_lowercase();
    l.starts_with("http://") || l.starts_with("https://") || l.starts_with("www.")
}

pub fn is_mention(tok: &str) -> bool {
    tok.len() > 1 && tok.starts_with('@')
}

/// Splits on whitespace and punctuation, keeping URLs, @mentions, #hashtags
/// and emoticons whole. Everything except URLs is lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    token_re()
        .captures_iter(text)
        .filter_map(|c| {
            if let Some(u) = c.name("url") {
                let u = u.as_str().trim_end_matches(URL_TRAILING);
                (!u.is_empty()).then(|| u.to_string())
            } else {
                c.get(0).map(|m| m.as_str().to_lowercase())
            }
        })
        .collect()
}

/// Word list used for hashtag segmentation.
#[derive(Debug, Clone)]
pub struct Dictionary {
    words: HashSet<String>,
    max_len: usize,
}

impl Dictionary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        let max_len = words.iter().map(|w| w.chars().count()).max().unwrap_or(0);
        Self { words, max_len }
    }

    /// The shipped English word list.
    pub fn builtin() -> &'static Dictionary {
        static D: OnceLock<Dictionary> = OnceLock::new();
        D.get_or_init(|| Dictionary::from_words(include_str!("words.txt").lines()))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Greedy longest match from the left. When no word starts at the
    /// current position, the rest of the string is kept as one piece.
    pub fn greedy_split(&self, s: &str) -> Vec<String> {
        let chars: Vec<char> = s.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let hi = chars.len().min(i + self.max_len);
            let found = (i + 1..=hi)
                .rev()
                .find(|&j| self.words.contains(&chars[i..j].iter().collect::<String>()));
            match found {
                Some(j) => {
                    out.push(chars[i..j].iter().collect());
                    i = j;
                }
                None => {
                    out.push(chars[i..].iter().collect());
                    break;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Lower,
    Upper,
    Digit,
    Other,
}

fn class(c: char) -> Class {
    if c.is_numeric() {
        Class::Digit
    } else if c.is_uppercase() {
        Class::Upper
    } else if c.is_alphabetic() {
        Class::Lower
    } else {
        Class::Other
    }
}

/// Pieces at lowercase-to-uppercase and letter/digit boundaries; other
/// characters separate pieces and are dropped.
fn boundary_pieces(body: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut cur = String::new();
    let mut prev = Class::Other;
    for c in body.chars() {
        let k = class(c);
        if k == Class::Other {
            if !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
            prev = k;
            continue;
        }
        let split = !cur.is_empty()
            && ((prev == Class::Lower && k == Class::Upper)
                || ((prev == Class::Digit) != (k == Class::Digit)));
        if split {
            pieces.push(std::mem::take(&mut cur));
        }
        cur.push(c);
        prev = k;
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    pieces
}

/// Replaces every token containing `#` by its segmentation into lowercase
/// dictionary words; other tokens pass through unchanged.
pub fn segment_hashtags<S: AsRef<str>>(tokens: &[S], dict: &Dictionary) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.as_ref();
        if !t.contains('#') {
            out.push(t.to_string());
            continue;
        }
        for piece in boundary_pieces(t) {
            if piece.chars().all(char::is_numeric) {
                out.push(piece);
            } else {
                out.extend(dict.greedy_split(&piece.to_lowercase()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Just Landed in Looondon"), toks(&["just", "landed", "in", "looondon"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("@a @b hi"), toks(&["@a", "@b", "hi"]));
        assert_eq!(
            tokenize("Back at #BaptistHospital, see https://Ex.com/A?b=C. Can't wait :)"),
            toks(&["back", "at", "#baptisthospital", "see", "https://Ex.com/A?b=C", "can't", "wait", ":)"])
        );
        assert_eq!(tokenize("It's 12:07!!! <3"), toks(&["it's", "12:07", "<3"]));
    }

    #[test]
    fn hashtag_examples() {
        let d = Dictionary::builtin();
        assert_eq!(segment_hashtags(&["#GreatBarrierReef"], d), toks(&["great", "barrier", "reef"]));
        assert_eq!(segment_hashtags(&["#911"], d), toks(&["911"]));
        assert_eq!(segment_hashtags(&["#BEmediaday"], d), toks(&["be", "media", "day"]));
        assert_eq!(segment_hashtags(&["#Xyzzq"], d), toks(&["xyzzq"]));
        assert_eq!(segment_hashtags(&["hi", "#"], d), toks(&["hi"]));
        assert_eq!(segment_hashtags(&["#Top10Places"], d), toks(&["top", "10", "places"]));
    }

    #[test]
    fn segmentation_matches_dictionary_oracle() {
        // every piece except an unsegmentable tail is a dictionary word,
        // and the pieces spell the hashtag body
        let d = Dictionary::builtin();
        for tag in ["#BEmediaday", "#GreatBarrierReef", "#sundayfunday", "#coffeetime", "#lovelondon"] {
            let out = segment_hashtags(&[tag], d);
            assert_eq!(out.concat(), tag[1..].to_lowercase());
            for w in &out[..out.len() - 1] {
                assert!(d.contains(w), "{tag}: {w}");
            }
        }
    }

    proptest! {
        #[test]
        fn segmentation_removes_all_hash_signs(tokens in prop::collection::vec("[#a-zA-Z0-9_@]{0,12}", 0..8)) {
            let out = segment_hashtags(&tokens, Dictionary::builtin());
            prop_assert!(out.iter().all(|t| !t.contains('#')));
        }

        #[test]
        fn tokens_outside_urls_are_lowercase(text in "[ a-zA-Z@#.,!?']{0,40}") {
            for t in tokenize(&text) {
                prop_assert_eq!(t.clone(), t.to_lowercase());
            }
        }
    }
}
