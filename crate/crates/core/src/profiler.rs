//! Follower-based activity profiles of accounts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::ActivityLabel;
use crate::error::{Error, Result};
use crate::model::{ActivityDistribution, NUM_CLASSES};

/// Tolerance for accepting an input distribution.
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// One predicted tweet distribution of one follower of one account.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub account_id: String,
    pub follower_id: String,
    pub tweet_id: String,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountProfile {
    pub account_id: String,
    pub probabilities: [f64; NUM_CLASSES],
    pub followers: usize,
    pub tweets_per_follower: BTreeMap<String, usize>,
}

/// Running mean; equal inputs give that value back exactly.
fn mean<'a>(items: impl IntoIterator<Item = &'a ActivityDistribution>) -> Option<[f64; NUM_CLASSES]> {
    let mut m = [0.0; NUM_CLASSES];
    let mut k = 0usize;
    for d in items {
        k += 1;
        for (mi, &x) in m.iter_mut().zip(d.probs()) {
            *mi += (x - *mi) / k as f64;
        }
    }
    (k > 0).then_some(m)
}

/// Mean of one follower's tweet distributions.
pub fn follower_profile(tweets: &[ActivityDistribution]) -> Result<ActivityDistribution> {
    mean(tweets)
        .map(ActivityDistribution)
        .ok_or_else(|| Error::Data("follower has no tweet distributions".into()))
}

/// Mean of follower profiles; every follower counts once.
pub fn account_profile(account_id: &str, followers: &[(String, Vec<ActivityDistribution>)]) -> Result<AccountProfile> {
    if followers.is_empty() {
        return Err(Error::Data(format!("account {account_id} has no followers")));
    }
    let profiles = followers
        .iter()
        .map(|(_, t)| follower_profile(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccountProfile {
        account_id: account_id.to_string(),
        probabilities: mean(&profiles).expect("non-empty"),
        followers: followers.len(),
        tweets_per_follower: followers.iter().map(|(f, t)| (f.clone(), t.len())).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub activity: ActivityLabel,
    /// Account id to probability, in report account order.
    pub values: Vec<(String, f64)>,
    pub argmax_account: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub accounts: Vec<AccountProfile>,
    pub rows: Vec<ActivityRow>,
    pub dropped_tweets: usize,
    pub dropped_followers: usize,
    pub dropped_accounts: usize,
}

impl ProfileReport {
    /// Activity by account table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("activity");
        for a in &self.accounts {
            s.push(',');
            s.push_str(&a.account_id);
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(row.activity.name());
            for (_, p) in &row.values {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
        }
        s
    }
}

/// Comparison table over accounts. Ties for the argmax go to the first
/// account in `accounts`.
pub fn profile_report(accounts: Vec<AccountProfile>) -> Result<ProfileReport> {
    if accounts.is_empty() {
        return Err(Error::Data("no account profiles".into()));
    }
    let rows = ActivityLabel::ALL
        .iter()
        .map(|&activity| {
            let i = activity.index();
            let values: Vec<(String, f64)> = accounts
                .iter()
                .map(|a| (a.account_id.clone(), a.probabilities[i]))
                .collect();
            let best = (0..values.len()).fold(0, |b, k| if values[k].1 > values[b].1 { k } else { b });
            ActivityRow {
                activity,
                argmax_account: values[best].0.clone(),
                values,
            }
        })
        .collect();
    Ok(ProfileReport {
        accounts,
        rows,
        dropped_tweets: 0,
        dropped_followers: 0,
        dropped_accounts: 0,
    })
}

/// Groups records by account and follower, drops invalid distributions and
/// followers left without any, then profiles each remaining account.
/// Accounts appear in order of first occurrence.
pub fn profile_records(records: &[DistributionRecord]) -> Result<ProfileReport> {
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<ActivityDistribution>>> = BTreeMap::new();
    let mut dropped_tweets = 0;
    for r in records {
        let acct = grouped.entry(r.account_id.as_str()).or_insert_with(|| {
            order.push(r.account_id.as_str());
            BTreeMap::new()
        });
        let follower = acct.entry(r.follower_id.as_str()).or_default();
        match ActivityDistribution::from_slice(&r.distribution) {
            Ok(d) if d.is_valid(DISTRIBUTION_TOL) => follower.push(d),
            _ => dropped_tweets += 1,
        }
    }
    let mut dropped_followers = 0;
    let mut dropped_accounts = 0;
    let mut profiles = Vec::new();
    for id in order {
        let followers: Vec<(String, Vec<ActivityDistribution>)> = grouped[id]
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(f, t)| (f.to_string(), t.clone()))
            .collect();
        dropped_followers += grouped[id].len() - followers.len();
        if followers.is_empty() {
            dropped_accounts += 1;
            continue;
        }
        profiles.push(account_profile(id, &followers)?);
    }
    let mut report = profile_report(profiles)?;
    report.dropped_tweets = dropped_tweets;
    report.dropped_followers = dropped_followers;
    report.dropped_accounts = dropped_accounts;
    Ok(report)
}
