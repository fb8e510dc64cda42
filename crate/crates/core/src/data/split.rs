use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InteractionLog;
use crate::error::{Error, Result};

/// Padding item id.
pub const PAD: usize = 0;

/// Raw id ↔ dense id maps. Item index 0 is the padding slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    items: Vec<String>,
    users: Vec<String>,
    #[serde(skip)]
    item_index: HashMap<String, usize>,
    #[serde(skip)]
    user_index: HashMap<String, usize>,
}

impl Vocab {
    fn from_parts(items: Vec<String>, users: Vec<String>) -> Self {
        let item_index = items.iter().enumerate().skip(1).map(|(i, s)| (s.clone(), i)).collect();
        let user_index = users.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            items,
            users,
            item_index,
            user_index,
        }
    }

    /// Number of real items (excluding the pad).
    pub fn n_items(&self) -> usize {
        self.items.len().saturating_sub(1)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn item_id(&self, raw: &str) -> Option<usize> {
        self.item_index.get(raw).copied()
    }

    pub fn item_raw(&self, id: usize) -> Option<&str> {
        (id != PAD).then(|| self.items.get(id).map(String::as_str)).flatten()
    }

    pub fn user_id(&self, raw: &str) -> Option<usize> {
        self.user_index.get(raw).copied()
    }

    pub fn user_raw(&self, id: usize) -> Option<&str> {
        self.users.get(id).map(String::as_str)
    }
}

/// One user's leave-one-out split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user: usize,
    pub train: Vec<usize>,
    pub valid: usize,
    pub test: usize,
}

impl UserSequence {
    /// Full chronological history.
    pub fn history(&self) -> Vec<usize> {
        let mut h = self.train.clone();
        h.push(self.valid);
        h.push(self.test);
        h
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub n_items: usize,
    pub users: Vec<UserSequence>,
}

impl SplitDataset {
    /// Builds a split directly from dense per-user histories (ids in `1..=n_items`).
    pub fn from_histories(n_items: usize, histories: &[Vec<usize>]) -> Result<Self> {
        let mut users = Vec::with_capacity(histories.len());
        for (u, h) in histories.iter().enumerate() {
            if h.len() < 3 {
                return Err(Error::TooFewInteractions {
                    user: u.to_string(),
                    count: h.len(),
                });
            }
            if let Some(&id) = h.iter().find(|&&i| i == PAD || i > n_items) {
                return Err(Error::ItemOutOfRange { id, n_items });
            }
            let n = h.len();
            users.push(UserSequence {
                user: u,
                train: h[..n - 2].to_vec(),
                valid: h[n - 2],
                test: h[n - 1],
            });
        }
        Ok(Self { n_items, users })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_actions(&self) -> usize {
        self.users.iter().map(|u| u.train.len() + 2).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct Stored {
    vocab: Vocab,
    split: SplitDataset,
}

/// Writes a prepared dataset as JSON.
pub fn save_dataset(path: impl AsRef<Path>, split: &SplitDataset, vocab: &Vocab) -> Result<()> {
    let path = path.as_ref();
    let stored = Stored {
        vocab: vocab.clone(),
        split: split.clone(),
    };
    let text = serde_json::to_string(&stored).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(SplitDataset, Vocab)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stored: Stored = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let v = stored.vocab;
    Ok((stored.split, Vocab::from_parts(v.items, v.users)))
}

/// Sorts each user's records chronologically (stable on file order),
/// assigns dense ids in first-appearance order and splits off the last two
/// items as validation and test targets.
pub fn build_split(log: &InteractionLog) -> Result<(SplitDataset, Vocab)> {
    let mut items = vec![String::new()];
    let mut users: Vec<String> = Vec::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut per_user: Vec<Vec<(i64, usize)>> = Vec::new();
    for r in &log.records {
        let iid = *item_index.entry(&r.item).or_insert_with(|| {
            items.push(r.item.clone());
            items.len() - 1
        });
        let uid = *user_index.entry(&r.user).or_insert_with(|| {
            users.push(r.user.clone());
            per_user.push(Vec::new());
            users.len() - 1
        });
        per_user[uid].push((r.timestamp, iid));
    }
    let mut histories = Vec::with_capacity(per_user.len());
    for (uid, mut recs) in per_user.into_iter().enumerate() {
        if recs.len() < 3 {
            return Err(Error::TooFewInteractions {
                user: users[uid].clone(),
                count: recs.len(),
            });
        }
        recs.sort_by_key(|&(t, _)| t);
        histories.push(recs.into_iter().map(|(_, i)| i).collect::<Vec<_>>());
    }
    let split = SplitDataset::from_histories(items.len() - 1, &histories)?;
    Ok((split, Vocab::from_parts(items, users)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leave_one_out_on_five_items() {
        let log = InteractionLog::from_triples([
            ("u", "a", 1),
            ("u", "b", 2),
            ("u", "c", 3),
            ("u", "d", 4),
            ("u", "e", 5),
        ]);
        let (split, vocab) = build_split(&log).unwrap();
        let u = &split.users[0];
        let raw = |i: usize| vocab.item_raw(i).unwrap().to_string();
        assert_eq!(u.train.iter().map(|&i| raw(i)).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(raw(u.valid), "d");
        assert_eq!(raw(u.test), "e");
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let log = InteractionLog::from_triples([("u", "z", 5), ("u", "y", 5), ("u", "x", 1), ("u", "w", 9)]);
        let (split, vocab) = build_split(&log).unwrap();
        let h: Vec<_> = split.users[0]
            .history()
            .iter()
            .map(|&i| vocab.item_raw(i).unwrap().to_string())
            .collect();
        assert_eq!(h, ["x", "z", "y", "w"]);
    }

    #[test]
    fn short_user_errors() {
        let log = InteractionLog::from_triples([("u", "a", 1), ("u", "b", 2)]);
        assert!(matches!(
            build_split(&log),
            Err(Error::TooFewInteractions { count: 2, .. })
        ));
    }

    #[test]
    fn vocab_is_bijective() {
        let log = InteractionLog::from_triples([
            ("u", "a", 1),
            ("v", "b", 2),
            ("u", "b", 3),
            ("v", "a", 4),
            ("u", "c", 5),
            ("v", "c", 6),
        ]);
        let (split, vocab) = build_split(&log).unwrap();
        assert_eq!(vocab.n_items(), 3);
        assert_eq!(split.n_items, 3);
        for id in 1..=3 {
            assert_eq!(vocab.item_id(vocab.item_raw(id).unwrap()), Some(id));
        }
        assert_eq!(vocab.item_raw(PAD), None);
        assert_eq!(vocab.user_id("v"), Some(1));
    }

    #[test]
    fn dataset_round_trips_through_json() {
        let log = InteractionLog::from_triples([("u", "a", 1), ("u", "b", 2), ("u", "c", 3)]);
        let (split, vocab) = build_split(&log).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        save_dataset(&p, &split, &vocab).unwrap();
        let (s2, v2) = load_dataset(&p).unwrap();
        assert_eq!(s2, split);
        assert_eq!(v2, vocab);
        assert_eq!(v2.item_id("b"), vocab.item_id("b"));
    }
}
