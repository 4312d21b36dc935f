use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ColumnMap, CorpusError, UsageRecord, Vocab};
use crate::templater::normalize_label;

pub const DEFAULT_MAX_REJECT_RATIO: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFormat {
    pub delimiter: u8,
    pub columns: ColumnMap,
    /// Separator between POI labels inside the POI column.
    pub poi_separator: char,
    pub max_reject_ratio: f64,
}

impl Default for LogFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            columns: ColumnMap::default(),
            poi_separator: ';',
            max_reject_ratio: DEFAULT_MAX_REJECT_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<UsageRecord>,
    pub rejects: Vec<Reject>,
    pub lines_read: usize,
}

struct Indices {
    user: usize,
    timestamp: usize,
    app: usize,
    category: usize,
    poi: Option<usize>,
}

impl Indices {
    fn resolve(headers: &csv::StringRecord, columns: &ColumnMap) -> Result<Self, CorpusError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
        };
        Ok(Self {
            user: find(&columns.user)?,
            timestamp: find(&columns.timestamp)?,
            app: find(&columns.app)?,
            category: find(&columns.category)?,
            poi: columns.poi.as_deref().map(find).transpose()?,
        })
    }
}

struct Fields {
    user: String,
    timestamp: u64,
    app: String,
    category: String,
    poi: Option<Vec<String>>,
}

fn extract(row: &csv::StringRecord, idx: &Indices, poi_separator: char) -> Result<Fields, String> {
    let get = |i: usize, what: &str| row.get(i).map(str::trim).ok_or_else(|| format!("missing {what} field"));
    let user = get(idx.user, "user")?;
    if user.is_empty() {
        return Err("empty user id".into());
    }
    let ts_raw = get(idx.timestamp, "timestamp")?;
    let timestamp = ts_raw
        .parse::<u64>()
        .map_err(|_| format!("timestamp {ts_raw:?} is not a non-negative integer"))?;
    let app = get(idx.app, "app")?;
    if app.is_empty() {
        return Err("empty app name".into());
    }
    let category_raw = get(idx.category, "category")?;
    let category = normalize_label(category_raw).ok_or_else(|| format!("unusable category {category_raw:?}"))?;
    let poi = match idx.poi {
        // A short row that simply omits a trailing empty POI column is fine.
        Some(i) => {
            let labels: Vec<String> = row
                .get(i)
                .unwrap_or("")
                .split(poi_separator)
                .filter_map(normalize_label)
                .collect();
            (!labels.is_empty()).then_some(labels)
        }
        None => None,
    };
    Ok(Fields {
        user: user.to_string(),
        timestamp,
        app: app.to_string(),
        category,
        poi,
    })
}

/// Parses a delimiter-separated log with a header row.
///
/// Malformed lines are collected in [`ParsedLog::rejects`]; the call fails
/// only when the reject ratio exceeds `format.max_reject_ratio`.
pub fn parse_log<R: Read>(reader: R, format: &LogFormat, vocab: &mut Vocab) -> Result<ParsedLog, CorpusError> {
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Ok(ParsedLog::default());
    }
    let idx = Indices::resolve(&headers, &format.columns)?;

    let mut out = ParsedLog::default();
    let mut row = csv::StringRecord::new();
    loop {
        let line = csv.position().line() + 1;
        match csv.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                out.lines_read += 1;
                out.rejects.push(Reject {
                    line: e.position().map_or(line, |p| p.line()),
                    reason: e.to_string(),
                });
                continue;
            }
        }
        let line = row.position().map_or(line, |p| p.line());
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        out.lines_read += 1;
        let parsed = extract(&row, &idx, format.poi_separator)
            .and_then(|f| vocab.intern(&f.app, &f.category).map(|ids| (f, ids)));
        match parsed {
            Ok((f, (app_id, category_id))) => {
                if let Some(labels) = &f.poi {
                    for l in labels {
                        vocab.add_poi_label(l);
                    }
                }
                out.records.push(UsageRecord {
                    user_id: f.user,
                    timestamp: f.timestamp,
                    app_id,
                    category_id,
                    poi_labels: f.poi,
                });
            }
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }

    if out.lines_read > 0 {
        let ratio = out.rejects.len() as f64 / out.lines_read as f64;
        if ratio > format.max_reject_ratio {
            let first = &out.rejects[0];
            return Err(CorpusError::TooManyRejects {
                rejected: out.rejects.len(),
                total: out.lines_read,
                ratio: format.max_reject_ratio,
                first_line: first.line,
                first_reason: first.reason.clone(),
            });
        }
    }
    Ok(out)
}
