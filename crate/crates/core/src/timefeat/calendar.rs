//! Calendar time features on a proleptic Gregorian UTC calendar.

use std::collections::BTreeSet;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{Timestamp, EPOCH_UNIX, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::error::{Error, Result};

/// Dates treated as holidays by the `holiday` feature.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayTable {
    /// One-off dates, `YYYY-MM-DD`.
    #[serde(default)]
    pub dates: BTreeSet<NaiveDate>,
    /// Dates recurring every year, `MM-DD`.
    #[serde(default)]
    pub annual: BTreeSet<String>,
}

impl HolidayTable {
    fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
            || self
                .annual
                .contains(&format!("{:02}-{:02}", date.month(), date.day()))
    }

    fn is_empty(&self) -> bool {
        self.dates.is_empty() && self.annual.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CalendarKind {
    /// Each calendar year split into `k` runs of as-equal-as-possible day counts.
    NEqualSeasons(u32),
    Month,
    /// Sunday-started week of the month, 0..6.
    WeekOfMonth,
    /// Day of month, 0-based.
    Date,
    /// Sunday = 0.
    DayOfWeek,
    /// 1 on holidays, 0 otherwise.
    Holiday(HolidayTable),
    Hour,
    /// Six-hour blocks of the day.
    FourPerDay,
    AmPm,
    /// 1 on Saturday and Sunday.
    WeekdayWeekend,
    Constant,
}

impl CalendarKind {
    pub fn holiday(table: HolidayTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::config(
                "holiday feature requires a non-empty calendar table",
            ));
        }
        Ok(CalendarKind::Holiday(table))
    }

    pub fn n_equal_seasons(k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::config("n_equal_seasons requires k >= 1"));
        }
        Ok(CalendarKind::NEqualSeasons(k))
    }

    pub fn cardinality(&self) -> usize {
        match self {
            CalendarKind::NEqualSeasons(k) => *k as usize,
            CalendarKind::Month => 12,
            CalendarKind::WeekOfMonth => 6,
            CalendarKind::Date => 31,
            CalendarKind::DayOfWeek => 7,
            CalendarKind::Holiday(_) => 2,
            CalendarKind::Hour => 24,
            CalendarKind::FourPerDay => 4,
            CalendarKind::AmPm => 2,
            CalendarKind::WeekdayWeekend => 2,
            CalendarKind::Constant => 1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            CalendarKind::NEqualSeasons(k) => format!("seasons{k}"),
            CalendarKind::Month => "month".into(),
            CalendarKind::WeekOfMonth => "week_of_month".into(),
            CalendarKind::Date => "date".into(),
            CalendarKind::DayOfWeek => "day_of_week".into(),
            CalendarKind::Holiday(_) => "holiday".into(),
            CalendarKind::Hour => "hour".into(),
            CalendarKind::FourPerDay => "four_per_day".into(),
            CalendarKind::AmPm => "am_pm".into(),
            CalendarKind::WeekdayWeekend => "weekday_weekend".into(),
            CalendarKind::Constant => "constant".into(),
        }
    }

    /// Feature index of `t` (seconds since the epoch, already range-checked).
    pub(crate) fn index(&self, t: Timestamp) -> usize {
        match self {
            CalendarKind::Constant => 0,
            CalendarKind::Hour => (t.rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR) as usize,
            CalendarKind::FourPerDay => {
                (t.rem_euclid(SECONDS_PER_DAY) / (6 * SECONDS_PER_HOUR)) as usize
            }
            CalendarKind::AmPm => {
                (t.rem_euclid(SECONDS_PER_DAY) / (12 * SECONDS_PER_HOUR)) as usize
            }
            _ => {
                let dt = utc(t);
                match self {
                    CalendarKind::NEqualSeasons(k) => {
                        let days = if dt.date_naive().leap_year() {
                            366
                        } else {
                            365
                        };
                        season_of_day(dt.ordinal0() as u64, days, *k as u64)
                    }
                    CalendarKind::Month => dt.month0() as usize,
                    CalendarKind::Date => dt.day0() as usize,
                    CalendarKind::DayOfWeek => dt.weekday().num_days_from_sunday() as usize,
                    CalendarKind::WeekOfMonth => {
                        let first = dt.date_naive().with_day(1).expect("day 1 exists");
                        let offset = first.weekday().num_days_from_sunday();
                        ((dt.day0() + offset) / 7) as usize
                    }
                    CalendarKind::WeekdayWeekend => {
                        usize::from(dt.weekday().num_days_from_monday() >= 5)
                    }
                    CalendarKind::Holiday(table) => usize::from(table.contains(dt.date_naive())),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// First timestamp after `t` at which the feature may change.
    pub(crate) fn next_boundary(&self, t: Timestamp) -> Timestamp {
        match self {
            CalendarKind::Constant => Timestamp::MAX,
            CalendarKind::Hour | CalendarKind::FourPerDay | CalendarKind::AmPm => {
                (t.div_euclid(SECONDS_PER_HOUR) + 1) * SECONDS_PER_HOUR
            }
            _ => (t.div_euclid(SECONDS_PER_DAY) + 1) * SECONDS_PER_DAY,
        }
    }
}

/// Season of a 0-based day-of-year: day `d` is in season `j` iff
/// `floor(j * days / k) <= d < floor((j + 1) * days / k)`.
pub(crate) fn season_of_day(day0: u64, days_in_year: u64, k: u64) -> usize {
    (((day0 + 1) * k).div_ceil(days_in_year) - 1) as usize
}

pub(crate) fn utc(t: Timestamp) -> DateTime<Utc> {
    DateTime::from_timestamp(EPOCH_UNIX + t, 0).expect("timestamp within chrono range")
}
