use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

/// Raw interaction records in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Tab,
    Comma,
}

impl Delimiter {
    fn as_char(self) -> char {
        match self {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub delimiter: Delimiter,
    /// Skip the first line.
    pub header: bool,
    /// Drop records strictly older than this timestamp.
    pub since: Option<i64>,
}

impl InteractionLog {
    pub fn new(records: Vec<Interaction>) -> Self {
        Self { records }
    }

    /// Convenience constructor from `(user, item, timestamp)` triples.
    pub fn from_triples<U: ToString, I: ToString>(rows: impl IntoIterator<Item = (U, I, i64)>) -> Self {
        Self {
            records: rows
                .into_iter()
                .map(|(u, i, t)| Interaction {
                    user: u.to_string(),
                    item: i.to_string(),
                    timestamp: t,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Reads `user<sep>item<sep>timestamp` lines. Blank lines are skipped.
pub fn load_interactions(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<InteractionLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sep = opts.delimiter.as_char();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if i == 0 && opts.header {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        if fields.len() < 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let (user, item) = (fields[0], fields[1]);
        if user.is_empty() || item.is_empty() {
            return Err(parse_err("empty user or item id".into()));
        }
        let timestamp: i64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("unparseable timestamp `{}`", fields[2])))?;
        if opts.since.is_some_and(|s| timestamp < s) {
            continue;
        }
        records.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            timestamp,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(InteractionLog { records })
}

/// Iteratively drops users and items with fewer than `min_count`
/// interactions until every survivor meets the threshold.
pub fn kcore_filter(log: &InteractionLog, min_count: usize) -> Result<InteractionLog> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut keep = vec![true; log.records.len()];
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for (r, _) in log.records.iter().zip(&keep).filter(|(_, k)| **k) {
            *users.entry(&r.user).or_default() += 1;
            *items.entry(&r.item).or_default() += 1;
        }
        let mut changed = false;
        for (r, k) in log.records.iter().zip(keep.iter_mut()) {
            if *k && (users[r.user.as_str()] < min_count || items[r.item.as_str()] < min_count) {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let records: Vec<Interaction> = log
        .records
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    if records.is_empty() {
        return Err(Error::KcoreVanished(min_count));
    }
    Ok(InteractionLog { records })
}
