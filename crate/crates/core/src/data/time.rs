//! Weekly time discretization anchored at 1990-01-01.
//!
//! Weeks are 7-day blocks counted from the epoch; the cyclical week of the
//! year is `week % 52`, which drifts by a day or two per year against the
//! calendar.

use chrono::{Datelike, Days, NaiveDate};

use super::{Dataset, SaleRecord};
use crate::error::{Error, Result};

/// Number of cyclical week-of-year categories.
pub const WEEKS_PER_YEAR: u32 = 52;

pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1990, 1, 1).expect("valid epoch")
}

/// Whole weeks elapsed between the epoch and `date`.
pub fn discretize_time(date: NaiveDate) -> Result<u32> {
    let days = (date - epoch()).num_days();
    if days < 0 {
        return Err(Error::BeforeEpoch(date));
    }
    u32::try_from(days / 7).map_err(|_| Error::InvalidArgument(format!("date {date} out of range")))
}

pub fn week_of_year(week: u32) -> u32 {
    week % WEEKS_PER_YEAR
}

/// First day of a week.
pub fn week_start(week: u32) -> NaiveDate {
    epoch() + Days::new(u64::from(week) * 7)
}

/// Calendar year in which the week starts.
pub fn year_of_week(week: u32) -> i32 {
    week_start(week).year()
}

/// The week containing the 15th of the month in which `week` starts.
pub fn mid_month_week(week: u32) -> u32 {
    let start = week_start(week);
    let day = NaiveDate::from_ymd_opt(start.year(), start.month(), 15).expect("15th exists");
    ((day - epoch()).num_days() / 7) as u32
}

/// Moves every sale to the mid-month week of its month, so time dummies
/// fitted on the result are monthly.
pub fn bucket_by_month(dataset: &Dataset) -> Dataset {
    dataset
        .iter()
        .map(|r| {
            let week = mid_month_week(r.week);
            SaleRecord {
                week,
                week_of_year: week_of_year(week),
                ..r.clone()
            }
        })
        .collect()
}

/// Weeks containing the 15th day of each month, restricted to `[first, last]`.
pub fn mid_month_weeks(first: u32, last: u32) -> Vec<u32> {
    if first > last {
        return Vec::new();
    }
    let start = week_start(first);
    let mut year = start.year();
    let mut month = start.month();
    let mut out = Vec::new();
    loop {
        let day = NaiveDate::from_ymd_opt(year, month, 15).expect("15th exists");
        // all dates here are after the epoch
        let week = ((day - epoch()).num_days() / 7) as u32;
        if week > last {
            break;
        }
        if week >= first {
            out.push(week);
        }
        month += 1;
        if month > 12 {
            month = 1;
            year += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn epoch_and_first_week() {
        assert_eq!(discretize_time(d(1990, 1, 1)).unwrap(), 0);
        assert_eq!(discretize_time(d(1990, 1, 7)).unwrap(), 0);
        assert_eq!(discretize_time(d(1990, 1, 8)).unwrap(), 1);
    }

    #[test]
    fn day_count_examples() {
        // 7308 and 11809 elapsed days respectively
        assert_eq!(discretize_time(d(2010, 1, 4)).unwrap(), 1044);
        assert_eq!(discretize_time(d(2022, 5, 2)).unwrap(), 1687);
    }

    #[test]
    fn before_epoch_is_rejected() {
        assert!(matches!(discretize_time(d(1989, 12, 31)), Err(Error::BeforeEpoch(_))));
    }

    #[test]
    fn week_start_inverts() {
        for w in [0, 1, 52, 1044, 1687] {
            assert_eq!(discretize_time(week_start(w)).unwrap(), w);
        }
    }

    #[test]
    fn mid_month_sampling() {
        let weeks = mid_month_weeks(discretize_time(d(2022, 1, 1)).unwrap(), 1687);
        let dates: Vec<_> = weeks.iter().map(|&w| week_start(w)).collect();
        assert_eq!(weeks.len(), 4);
        for (i, date) in dates.iter().enumerate() {
            let fifteenth = d(2022, i as u32 + 1, 15);
            assert!(*date <= fifteenth && fifteenth - *date < chrono::Duration::days(7));
        }
    }

    #[test]
    fn month_buckets() {
        // 2022-05-02 is week 1687; May 15th falls in week 1688
        assert_eq!(mid_month_week(1687), 1688);
        assert_eq!(mid_month_week(1688), 1688);
        let weeks = mid_month_weeks(1000, 1100);
        for w in 1000..=1100 {
            assert!(weeks.contains(&mid_month_week(w)) || mid_month_week(w) < 1000 || mid_month_week(w) > 1100);
            assert!(mid_month_week(w).abs_diff(w) <= 4);
        }
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_date(a in 0u64..20_000, b in 0u64..20_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let wl = discretize_time(epoch() + Days::new(lo)).unwrap();
            let wh = discretize_time(epoch() + Days::new(hi)).unwrap();
            proptest::prop_assert!(wl <= wh);
        }
    }
}
