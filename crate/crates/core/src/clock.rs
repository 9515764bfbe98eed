//! Wall-clock helpers for a single configured IANA timezone.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Offset, TimeZone, Weekday};
use chrono_tz::Tz;

use crate::{Error, Result};

pub const SECS_PER_DAY: i64 = 86_400;

/// Converts epoch seconds to local calendar dates and local times of day.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    tz: Tz,
}

impl Default for Clock {
    fn default() -> Self {
        Clock { tz: Tz::UTC }
    }
}

impl Clock {
    pub fn new(tz: Tz) -> Self {
        Clock { tz }
    }

    pub fn parse(name: &str) -> Result<Self> {
        name.parse::<Tz>()
            .map(Clock::new)
            .map_err(|e| Error::config(format!("unknown timezone {name:?}: {e}")))
    }

    pub fn tz(&self) -> Tz {
        self.tz
    }

    fn offset_secs(&self, ts: i64) -> i64 {
        let utc = chrono::DateTime::from_timestamp(ts, 0).unwrap_or_default().naive_utc();
        self.tz.offset_from_utc_datetime(&utc).fix().local_minus_utc() as i64
    }

    /// Seconds since the local epoch: UTC seconds shifted by the zone offset in
    /// force at `ts`. Day arithmetic on this value follows the local calendar.
    pub fn local_secs(&self, ts: i64) -> i64 {
        ts + self.offset_secs(ts)
    }

    pub fn local_datetime(&self, ts: i64) -> NaiveDateTime {
        chrono::DateTime::from_timestamp(self.local_secs(ts), 0)
            .unwrap_or_default()
            .naive_utc()
    }

    pub fn date(&self, ts: i64) -> NaiveDate {
        self.local_datetime(ts).date()
    }

    /// Epoch seconds of a local wall-clock time. Nonexistent times (spring
    /// forward) resolve one hour later; ambiguous ones to the earlier instant.
    pub fn timestamp(&self, local: NaiveDateTime) -> i64 {
        match self.tz.from_local_datetime(&local).earliest() {
            Some(dt) => dt.timestamp(),
            None => self
                .tz
                .from_local_datetime(&(local + Duration::hours(1)))
                .earliest()
                .map(|dt| dt.timestamp() - 3600)
                .unwrap_or_else(|| local.and_utc().timestamp()),
        }
    }

    pub fn day_start(&self, date: NaiveDate) -> i64 {
        self.timestamp(date.and_time(NaiveTime::MIN))
    }
}

/// Day index of a local-epoch second count.
pub fn local_day(local_secs: i64) -> i64 {
    local_secs.div_euclid(SECS_PER_DAY)
}

pub fn date_of_local_day(day: i64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt((day + 719_163) as i32).expect("date in range")
}

pub fn local_day_of_date(date: NaiveDate) -> i64 {
    date.num_days_from_ce() as i64 - 719_163
}

/// Monday = 0 ... Sunday = 6.
pub fn weekday_index(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

pub fn is_weekday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Inclusive date range iterator.
pub fn dates(start: NaiveDate, end: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    start.iter_days().take_while(move |d| *d <= end)
}

/// Length of the intersection of two half-open intervals.
pub fn overlap(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0)
}
