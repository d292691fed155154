//! Calendar timestamps at year, month or day granularity.
//!
//! Coarse timestamps are canonicalized to the first day of their period for
//! ordering and day arithmetic, so `2010` sorts before `2010-02-01` and
//! `time_difference(2010, 2009) == 365`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed timestamp {text:?}: {reason}")]
pub struct MalformedTimestamp {
    pub text: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Year,
    Month,
    Day,
}

/// A point in time known to the nearest year, month or day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Timestamp {
    year: i32,
    month: Option<u8>,
    day: Option<u8>,
}

impl Timestamp {
    pub fn year(year: i32) -> Result<Self, MalformedTimestamp> {
        Self::checked(year, None, None)
    }

    pub fn month(year: i32, month: u8) -> Result<Self, MalformedTimestamp> {
        Self::checked(year, Some(month), None)
    }

    pub fn day(year: i32, month: u8, day: u8) -> Result<Self, MalformedTimestamp> {
        Self::checked(year, Some(month), Some(day))
    }

    fn checked(year: i32, month: Option<u8>, day: Option<u8>) -> Result<Self, MalformedTimestamp> {
        let ts = Timestamp { year, month, day };
        let fail = |reason| MalformedTimestamp {
            text: ts.to_string(),
            reason,
        };
        if !(0..=9999).contains(&year) {
            return Err(fail("year must have four digits"));
        }
        if let Some(m) = month {
            if !(1..=12).contains(&m) {
                return Err(fail("month out of range"));
            }
        }
        if let Some(d) = day {
            let m = month.ok_or_else(|| fail("day without month"))?;
            if NaiveDate::from_ymd_opt(year, m as u32, d as u32).is_none() {
                return Err(fail("day out of range"));
            }
        }
        Ok(ts)
    }

    pub fn year_value(&self) -> i32 {
        self.year
    }

    pub fn month_value(&self) -> Option<u8> {
        self.month
    }

    pub fn day_value(&self) -> Option<u8> {
        self.day
    }

    pub fn granularity(&self) -> Granularity {
        match (self.month, self.day) {
            (Some(_), Some(_)) => Granularity::Day,
            (Some(_), None) => Granularity::Month,
            _ => Granularity::Year,
        }
    }

    /// First calendar day of the period this timestamp denotes.
    pub fn canonical_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(
            self.year,
            self.month.unwrap_or(1) as u32,
            self.day.unwrap_or(1) as u32,
        )
        .expect("validated on construction")
    }

    /// Days since 0001-01-01 of the canonical date.
    pub fn canonical_day(&self) -> i64 {
        self.canonical_date().num_days_from_ce() as i64
    }

    /// True when `other` agrees with `self` on every field `self` specifies.
    /// A coarser `other` never matches a finer `self`.
    pub fn covers(&self, other: &Timestamp) -> bool {
        if other.granularity() < self.granularity() {
            return false;
        }
        self.year == other.year
            && self.month.is_none_or(|m| other.month == Some(m))
            && self.day.is_none_or(|d| other.day == Some(d))
    }
}

/// Signed day count `canonical(a) - canonical(b)`.
pub fn time_difference(a: &Timestamp, b: &Timestamp) -> i64 {
    a.canonical_day() - b.canonical_day()
}

pub fn parse_timestamp(text: &str) -> Result<Timestamp, MalformedTimestamp> {
    let fail = |reason| MalformedTimestamp {
        text: text.to_string(),
        reason,
    };
    let parts: Vec<&str> = text.split('-').collect();
    let widths: &[usize] = match parts.len() {
        1 => &[4],
        2 => &[4, 2],
        3 => &[4, 2, 2],
        _ => return Err(fail("expected YYYY, YYYY-MM or YYYY-MM-DD")),
    };
    for (part, &w) in parts.iter().zip(widths) {
        if part.len() != w || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(fail("expected YYYY, YYYY-MM or YYYY-MM-DD"));
        }
    }
    let year: i32 = parts[0].parse().map_err(|_| fail("bad year"))?;
    let month = parts.get(1).map(|p| p.parse::<u8>()).transpose().map_err(|_| fail("bad month"))?;
    let day = parts.get(2).map(|p| p.parse::<u8>()).transpose().map_err(|_| fail("bad day"))?;
    Timestamp::checked(year, month, day).map_err(|e| MalformedTimestamp {
        text: text.to_string(),
        reason: e.reason,
    })
}

impl FromStr for Timestamp {
    type Err = MalformedTimestamp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_timestamp(s)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if let Some(m) = self.month {
            write!(f, "-{m:02}")?;
        }
        if let Some(d) = self.day {
            write!(f, "-{d:02}")?;
        }
        Ok(())
    }
}

// Canonical day first; coarser granularity breaks ties so that the order is
// total and consistent with equality.
impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_day()
            .cmp(&other.canonical_day())
            .then(self.granularity().cmp(&other.granularity()))
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_timestamp(&text).map_err(serde::de::Error::custom)
    }
}

/// A closed interval `[begin, end]` with `begin <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeInterval {
    begin: Timestamp,
    end: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("interval begins at {begin} after it ends at {end}")]
pub struct InvertedInterval {
    pub begin: Timestamp,
    pub end: Timestamp,
}

impl TimeInterval {
    pub fn new(begin: Timestamp, end: Timestamp) -> Result<Self, InvertedInterval> {
        if begin > end {
            return Err(InvertedInterval { begin, end });
        }
        Ok(TimeInterval { begin, end })
    }

    pub fn begin(&self) -> Timestamp {
        self.begin
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    #[test]
    fn parses_each_granularity() {
        let d = ts("2010-05-16");
        assert_eq!((d.year_value(), d.month_value(), d.day_value()), (2010, Some(5), Some(16)));
        assert_eq!(d.granularity(), Granularity::Day);
        let m = ts("2009-10");
        assert_eq!((m.year_value(), m.month_value(), m.day_value()), (2009, Some(10), None));
        assert_eq!(m.granularity(), Granularity::Month);
        assert_eq!(ts("1995").granularity(), Granularity::Year);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["2010-13-01", "2010-02-30", "2010-00", "10-01-01", "2010-1-01", "", "2010-01-01-01", "abcd", "2010/01"] {
            assert!(parse_timestamp(bad).is_err(), "{bad} should fail");
        }
        assert!(parse_timestamp("2012-02-29").is_ok());
    }

    #[test]
    fn differences() {
        assert_eq!(time_difference(&ts("2010-01-10"), &ts("2010-01-05")), 5);
        assert_eq!(time_difference(&ts("2010-01-05"), &ts("2010-01-05")), 0);
        assert_eq!(time_difference(&ts("2010"), &ts("2009")), 365);
        assert_eq!(time_difference(&ts("2013"), &ts("2012")), 366);
        assert_eq!(time_difference(&ts("2010-03"), &ts("2010-02-28")), 1);
    }

    #[test]
    fn coarse_sorts_before_finer_in_same_period() {
        assert!(ts("2010") < ts("2010-02-01"));
        assert!(ts("2010") < ts("2010-01"));
        assert!(ts("2010-01") < ts("2010-01-01"));
        assert!(ts("2009-12-31") < ts("2010"));
    }

    #[test]
    fn covers_at_own_granularity() {
        assert!(ts("2012-05").covers(&ts("2012-05-03")));
        assert!(ts("2012").covers(&ts("2012-05-03")));
        assert!(!ts("2012-05").covers(&ts("2012-06-03")));
        assert!(!ts("2012-05-03").covers(&ts("2012-05")));
    }

    #[test]
    fn interval_requires_order() {
        assert!(TimeInterval::new(ts("1995"), ts("2001")).is_ok());
        assert!(TimeInterval::new(ts("2001"), ts("1995")).is_err());
    }

    fn any_timestamp() -> impl Strategy<Value = Timestamp> {
        (1000i32..=2999, 0u8..=12, 0u8..=31).prop_map(|(y, m, d)| {
            if m == 0 {
                Timestamp::year(y).unwrap()
            } else if d == 0 {
                Timestamp::month(y, m).unwrap()
            } else {
                Timestamp::day(y, m, d).unwrap_or_else(|_| Timestamp::month(y, m).unwrap())
            }
        })
    }

    proptest! {
        #[test]
        fn format_round_trips(t in any_timestamp()) {
            prop_assert_eq!(parse_timestamp(&t.to_string()).unwrap(), t);
        }

        #[test]
        fn difference_is_antisymmetric(a in any_timestamp(), b in any_timestamp()) {
            prop_assert_eq!(time_difference(&a, &b), -time_difference(&b, &a));
        }

        #[test]
        fn order_agrees_with_equality(a in any_timestamp(), b in any_timestamp()) {
            prop_assert_eq!(a.cmp(&b) == Ordering::Equal, a == b);
        }
    }
}
