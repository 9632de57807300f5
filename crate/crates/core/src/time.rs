//! Calendar conventions shared by every stage.
//!
//! A "month" is a fixed 30-day span and weeks are 7-day buckets whose
//! boundaries fall on Monday 00:00 UTC.

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_WEEK: i64 = 7 * SECONDS_PER_DAY;
pub const MONTH_SECONDS: i64 = 30 * SECONDS_PER_DAY;

/// 1970-01-01 was a Thursday; the preceding Monday is three days earlier.
const EPOCH_MONDAY_OFFSET: i64 = 3 * SECONDS_PER_DAY;

/// Week bucket index of a UTC timestamp.
pub fn week_bucket(timestamp: i64) -> i64 {
    (timestamp + EPOCH_MONDAY_OFFSET).div_euclid(SECONDS_PER_WEEK)
}

/// First second of a week bucket.
pub fn week_start(bucket: i64) -> i64 {
    bucket * SECONDS_PER_WEEK - EPOCH_MONDAY_OFFSET
}
