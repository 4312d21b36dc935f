//! Lexical pieces of the prompt grammar: labels, lists and clock times.

use chrono::{DateTime, Datelike, Timelike, Weekday};

use crate::corpus::AppId;

/// Characters that would make a label collide with grammar punctuation.
const RESERVED: &[char] = &[',', '.', '(', ')', '%', ':', ';'];

/// Rewrites a raw category or POI name into a grammar-safe label.
///
/// Whitespace is collapsed, reserved punctuation removed, and the
/// connective words `and`/`or` become `&`/`/`. Returns `None` when nothing
/// is left.
pub fn normalize_label(raw: &str) -> Option<String> {
    let tokens: Vec<String> = raw
        .split_whitespace()
        .filter_map(|tok| {
            let cleaned: String = tok.chars().filter(|c| !RESERVED.contains(c)).collect();
            match cleaned.to_ascii_lowercase().as_str() {
                "" => None,
                "and" => Some("&".to_string()),
                "or" => Some("/".to_string()),
                _ => Some(cleaned),
            }
        })
        .collect();
    (!tokens.is_empty()).then(|| tokens.join(" "))
}

/// A label is safe when normalization leaves it unchanged.
pub fn is_safe_label(label: &str) -> bool {
    normalize_label(label).as_deref() == Some(label)
}

/// `a`, `a and b`, `a, b, and c`
pub(crate) fn join_serial<S: AsRef<str>>(items: &[S]) -> String {
    match items {
        [] => String::new(),
        [a] => a.as_ref().to_string(),
        [a, b] => format!("{} and {}", a.as_ref(), b.as_ref()),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{}, and {}", head.join(", "), last.as_ref())
        }
    }
}

/// `a`, `a and b`, `a, b and c`
pub(crate) fn join_plain<S: AsRef<str>>(items: &[S]) -> String {
    match items {
        [] => String::new(),
        [a] => a.as_ref().to_string(),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{} and {}", head.join(", "), last.as_ref())
        }
    }
}

pub(crate) fn split_serial(s: &str) -> Option<Vec<&str>> {
    let items = if s.contains(", ") {
        let mut parts: Vec<&str> = s.split(", ").collect();
        if parts.len() < 3 {
            return None;
        }
        let last = parts.pop()?.strip_prefix("and ")?;
        parts.push(last);
        parts
    } else if let Some((a, b)) = s.split_once(" and ") {
        vec![a, b]
    } else {
        vec![s]
    };
    items.iter().all(|i| !i.is_empty()).then_some(items)
}

pub(crate) fn split_plain(s: &str) -> Option<Vec<&str>> {
    let items = if s.contains(", ") {
        let mut parts: Vec<&str> = s.split(", ").collect();
        let (a, b) = parts.pop()?.split_once(" and ")?;
        parts.push(a);
        parts.push(b);
        parts
    } else if let Some((a, b)) = s.split_once(" and ") {
        vec![a, b]
    } else {
        vec![s]
    };
    items.iter().all(|i| !i.is_empty()).then_some(items)
}

/// Strict decimal: ASCII digits only, no sign, no whitespace.
pub(crate) fn parse_decimal(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

pub(crate) fn parse_app_id(s: &str) -> Option<AppId> {
    parse_decimal(s).map(AppId)
}

/// Day of week plus hour of day (0-23) at the prediction point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PredictionTime {
    pub weekday: Weekday,
    pub hour: u8,
}

const WEEKDAYS: [(Weekday, &str); 7] = [
    (Weekday::Mon, "Monday"),
    (Weekday::Tue, "Tuesday"),
    (Weekday::Wed, "Wednesday"),
    (Weekday::Thu, "Thursday"),
    (Weekday::Fri, "Friday"),
    (Weekday::Sat, "Saturday"),
    (Weekday::Sun, "Sunday"),
];

impl PredictionTime {
    pub fn new(weekday: Weekday, hour: u8) -> Self {
        assert!(hour < 24, "hour out of range: {hour}");
        Self { weekday, hour }
    }

    /// UTC weekday and hour of a Unix timestamp.
    pub fn from_timestamp(ts: u64) -> Self {
        let dt = DateTime::from_timestamp(ts as i64, 0).expect("timestamp within chrono range");
        Self {
            weekday: dt.weekday(),
            hour: dt.hour() as u8,
        }
    }

    pub fn weekday_name(&self) -> &'static str {
        WEEKDAYS
            .iter()
            .find(|(d, _)| *d == self.weekday)
            .map(|(_, n)| *n)
            .expect("all weekdays named")
    }

    /// `Tuesday 02 PM`: zero-padded 12-hour clock.
    pub fn render(&self) -> String {
        let (h12, meridiem) = match self.hour {
            0 => (12, "AM"),
            1..=11 => (self.hour, "AM"),
            12 => (12, "PM"),
            h => (h - 12, "PM"),
        };
        format!("{} {h12:02} {meridiem}", self.weekday_name())
    }

    /// Parses a leading `Weekday hh AM|PM`; returns the time and the byte
    /// length consumed.
    pub(crate) fn parse_prefix(s: &str) -> Option<(Self, usize)> {
        let mut it = s.splitn(3, ' ');
        let day = it.next()?;
        let hh = it.next()?;
        // The meridiem may be followed directly by a frame suffix.
        let meridiem = it.next()?.get(..2)?;
        let weekday = WEEKDAYS.iter().find(|(_, n)| *n == day)?.0;
        if hh.len() != 2 {
            return None;
        }
        let h12 = parse_decimal(hh)?;
        if !(1..=12).contains(&h12) {
            return None;
        }
        let hour = match (meridiem, h12) {
            ("AM", 12) => 0,
            ("AM", h) => h,
            ("PM", 12) => 12,
            ("PM", h) => h + 12,
            _ => return None,
        };
        let consumed = day.len() + hh.len() + meridiem.len() + 2;
        Some((Self::new(weekday, hour as u8), consumed))
    }
}
