use chrono::{DateTime, Datelike, Duration, Timelike, Utc};

use crate::model::TimeCode;

/// Weekday (Monday = 0) and quarter of the day of the local time
/// `timestamp + offset`; UTC when no offset is given.
pub fn encode_time(timestamp: DateTime<Utc>, utc_offset_minutes: Option<i32>) -> TimeCode {
    let local = timestamp + Duration::minutes(i64::from(utc_offset_minutes.unwrap_or(0)));
    let day = local.weekday().num_days_from_monday() as u8;
    let period = (local.hour() / 6) as u8;
    TimeCode { day, period }
}
