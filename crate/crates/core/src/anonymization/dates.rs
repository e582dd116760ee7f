//! Parsing, shifting and coarsening of the date surfaces the rule pack finds.
//!
//! A parsed date remembers its written shape so a shifted value is rendered
//! the way the speaker wrote it.

use std::sync::LazyLock;

use chrono::{Datelike, Duration, NaiveDate};
use regex::Regex;

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

static ISO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{4})-(\d{2})-(\d{2})$").unwrap());
static SLASH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,2})/(\d{1,2})/(\d{4})$").unwrap());
static NAMED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:(\d{1,2}) )?([A-Za-z]+) (\d{4})$").unwrap());

/// How a date was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateShape {
    /// `2021-03-12`
    Iso,
    /// `12/03/2021` or `3/12/2021`; padding is kept per field.
    Slash { day_first: bool, pad_day: bool, pad_month: bool },
    /// `12 March 2021`
    DayMonthYear { pad_day: bool },
    /// `March 2021`; the day is taken as the first of the month.
    MonthYear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedDate {
    pub date: NaiveDate,
    pub shape: DateShape,
}

fn month_index(name: &str) -> Option<u32> {
    MONTHS
        .iter()
        .position(|m| m.eq_ignore_ascii_case(name))
        .map(|i| i as u32 + 1)
}

/// Parse one of the supported shapes. `day_first` decides how a slash date
/// is read.
pub fn parse_date(s: &str, day_first: bool) -> Option<ParsedDate> {
    let s = s.trim();
    if let Some(c) = ISO.captures(s) {
        let date = NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?)?;
        return Some(ParsedDate {
            date,
            shape: DateShape::Iso,
        });
    }
    if let Some(c) = SLASH.captures(s) {
        let (d, m) = if day_first { (&c[1], &c[2]) } else { (&c[2], &c[1]) };
        let date = NaiveDate::from_ymd_opt(c[3].parse().ok()?, m.parse().ok()?, d.parse().ok()?)?;
        return Some(ParsedDate {
            date,
            shape: DateShape::Slash {
                day_first,
                pad_day: d.len() == 2,
                pad_month: m.len() == 2,
            },
        });
    }
    if let Some(c) = NAMED.captures(s) {
        let month = month_index(&c[2])?;
        let year = c[3].parse().ok()?;
        return match c.get(1) {
            Some(d) => Some(ParsedDate {
                date: NaiveDate::from_ymd_opt(year, month, d.as_str().parse().ok()?)?,
                shape: DateShape::DayMonthYear {
                    pad_day: d.as_str().len() == 2,
                },
            }),
            None => Some(ParsedDate {
                date: NaiveDate::from_ymd_opt(year, month, 1)?,
                shape: DateShape::MonthYear,
            }),
        };
    }
    None
}

fn pad(n: u32, padded: bool) -> String {
    if padded {
        format!("{n:02}")
    } else {
        n.to_string()
    }
}

fn month_name(d: NaiveDate) -> &'static str {
    MONTHS[d.month0() as usize]
}

pub fn render(date: NaiveDate, shape: DateShape) -> String {
    match shape {
        DateShape::Iso => date.format("%Y-%m-%d").to_string(),
        DateShape::Slash {
            day_first,
            pad_day,
            pad_month,
        } => {
            let d = pad(date.day(), pad_day);
            let m = pad(date.month(), pad_month);
            if day_first {
                format!("{d}/{m}/{}", date.year())
            } else {
                format!("{m}/{d}/{}", date.year())
            }
        }
        DateShape::DayMonthYear { pad_day } => format!("{} {} {}", pad(date.day(), pad_day), month_name(date), date.year()),
        DateShape::MonthYear => format!("{} {}", month_name(date), date.year()),
    }
}

/// Move the date by `days` and render it in its original shape.
pub fn shift(p: ParsedDate, days: i64) -> String {
    render(p.date + Duration::days(days), p.shape)
}

/// Drop precision: level 1 keeps month and year, level 2 and above keep the
/// year. A month-only date starts one level up.
pub fn coarsen(p: ParsedDate, level: usize) -> String {
    let has_day = !matches!(p.shape, DateShape::MonthYear);
    let effective = if has_day { level } else { level + 1 };
    if effective <= 1 {
        format!("{} {}", month_name(p.date), p.date.year())
    } else {
        p.date.year().to_string()
    }
}
