use std::collections::HashMap;

use super::record::TweetRecord;

/// For each record, indices of up to `history_len` most recent records by
/// the same author with a strictly earlier timestamp, oldest first.
/// Records sharing a timestamp are ordered by id.
pub fn build_history(records: &[TweetRecord], history_len: usize) -> Vec<Vec<usize>> {
    let mut by_author: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        by_author.entry(&r.author_id).or_default().push(i);
    }
    let mut out = vec![Vec::new(); records.len()];
    for idx in by_author.into_values() {
        let mut idx = idx;
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            ra.timestamp.cmp(&rb.timestamp).then_with(|| ra.id.cmp(&rb.id))
        });
        // `start` is the first position sharing the current timestamp
        let mut start = 0;
        for pos in 0..idx.len() {
            if records[idx[pos]].timestamp != records[idx[start]].timestamp {
                start = pos;
            }
            let lo = start.saturating_sub(history_len);
            out[idx[pos]] = idx[lo..start].to_vec();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    use super::*;

    fn rec(id: usize, author: &str, minute: i64) -> TweetRecord {
        let t = Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).unwrap() + Duration::minutes(minute);
        TweetRecord::new(format!("{id:03}"), author, t, "x")
    }

    #[test]
    fn window_arithmetic() {
        let mut recs: Vec<TweetRecord> = (0..7).map(|i| rec(i, "a", i as i64)).collect();
        recs.push(rec(7, "b", 100));
        recs.reverse();
        let h = build_history(&recs, 5);
        let id = |i: usize| recs[i].id.clone();
        let seventh = recs.iter().position(|r| r.id == "006").unwrap();
        let got: Vec<String> = h[seventh].iter().map(|&i| id(i)).collect();
        assert_eq!(got, ["001", "002", "003", "004", "005"]);
        let first = recs.iter().position(|r| r.id == "000").unwrap();
        assert!(h[first].is_empty());
        assert!(h[0].is_empty());
    }

    #[test]
    fn equal_timestamps_are_not_history() {
        let recs = vec![rec(2, "a", 5), rec(1, "a", 5), rec(0, "a", 0)];
        let h = build_history(&recs, 5);
        assert_eq!(h[0], vec![2]);
        assert_eq!(h[1], vec![2]);
    }

    proptest! {
        #[test]
        fn history_strictly_earlier_same_author(
            spec in prop::collection::vec((0usize..3, 0i64..20), 1..40),
            len in 0usize..6,
        ) {
            let recs: Vec<TweetRecord> = spec
                .iter()
                .enumerate()
                .map(|(i, &(a, m))| rec(i, ["x", "y", "z"][a], m))
                .collect();
            let h = build_history(&recs, len);
            for (i, hist) in h.iter().enumerate() {
                prop_assert!(hist.len() <= len);
                for w in hist.windows(2) {
                    prop_assert!(recs[w[0]].timestamp <= recs[w[1]].timestamp);
                }
                for &j in hist {
                    prop_assert!(j != i);
                    prop_assert_eq!(&recs[j].author_id, &recs[i].author_id);
                    prop_assert!(recs[j].timestamp < recs[i].timestamp);
                }
                let earlier = recs
                    .iter()
                    .filter(|r| r.author_id == recs[i].author_id && r.timestamp < recs[i].timestamp)
                    .count();
                prop_assert_eq!(hist.len(), earlier.min(len));
            }
        }
    }
}
