use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;

use multiround::compute::Rng;
use multiround::data::{build_split, kcore_filter, make_batches, pad_row, InteractionLog, Phase, PAD};
use multiround::synthetic::noisy_cycle_dataset;
use multiround::Error;

fn log_strategy() -> impl Strategy<Value = InteractionLog> {
    prop::collection::vec((0..25usize, 0..15usize, 0..50i64), 1..300).prop_map(|rows| {
        InteractionLog::from_triples(rows.into_iter().map(|(u, i, t)| (format!("u{u}"), format!("i{i}"), t)))
    })
}

fn counts(log: &InteractionLog) -> (HashMap<&str, usize>, HashMap<&str, usize>) {
    let mut users = HashMap::new();
    let mut items = HashMap::new();
    for r in &log.records {
        *users.entry(r.user.as_str()).or_default() += 1;
        *items.entry(r.item.as_str()).or_default() += 1;
    }
    (users, items)
}

proptest! {
    #[test]
    fn kcore_is_an_idempotent_subset_meeting_the_threshold(log in log_strategy(), k in 1usize..6) {
        match kcore_filter(&log, k) {
            Ok(once) => {
                prop_assert_eq!(&kcore_filter(&once, k).unwrap(), &once);
                let (users, items) = counts(&once);
                prop_assert!(users.values().chain(items.values()).all(|&c| c >= k));
                let mut rest = log.records.iter();
                for r in &once.records {
                    prop_assert!(rest.any(|x| x == r), "not an order-preserving subset");
                }
            }
            Err(Error::KcoreVanished(m)) => prop_assert_eq!(m, k),
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }
        if k == 1 {
            prop_assert_eq!(kcore_filter(&log, 1).unwrap(), log);
        }
    }

    #[test]
    fn leave_one_out_reconstructs_each_history(log in log_strategy()) {
        let Ok(filtered) = kcore_filter(&log, 3) else { return Ok(()) };
        let (split, vocab) = build_split(&filtered).unwrap();
        let mut by_user: BTreeMap<&str, Vec<(i64, usize, &str)>> = BTreeMap::new();
        for (pos, r) in filtered.records.iter().enumerate() {
            by_user.entry(&r.user).or_default().push((r.timestamp, pos, &r.item));
        }
        prop_assert_eq!(split.n_users(), by_user.len());
        prop_assert_eq!(split.n_actions(), filtered.len());
        for (user, mut recs) in by_user {
            recs.sort();
            let seq = &split.users[vocab.user_id(user).unwrap()];
            let raw: Vec<&str> = seq.history().iter().map(|&i| vocab.item_raw(i).unwrap()).collect();
            let want: Vec<&str> = recs.iter().map(|r| r.2).collect();
            prop_assert_eq!(raw, want);
            prop_assert!(!seq.train.is_empty());
        }
    }

    #[test]
    fn pad_row_keeps_the_most_recent_items(seq in prop::collection::vec(1..100usize, 0..30), len in 1usize..20) {
        let row = pad_row(&seq, len);
        prop_assert_eq!(row.len(), len);
        let keep = seq.len().min(len);
        prop_assert!(row[..len - keep].iter().all(|&i| i == PAD));
        prop_assert_eq!(&row[len - keep..], &seq[seq.len() - keep..]);
    }

    #[test]
    fn batches_cover_each_user_once(users in 3usize..60, batch in 1usize..17, seed in 0u64..1000) {
        let split = noisy_cycle_dataset(users, 12, (3, 9), 0.3, seed).unwrap();
        for phase in [Phase::Train, Phase::Valid, Phase::Test] {
            let batches = make_batches(&split, phase, 6, batch, Some(&mut Rng::new(seed)));
            let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.users.clone()).collect();
            prop_assert!(batches.iter().all(|b| b.rows() >= 1 && b.rows() <= batch && b.ids.len() == b.rows() * 6));
            seen.sort_unstable();
            let want: Vec<usize> = (0..users)
                .filter(|&u| phase != Phase::Train || split.users[u].train.len() >= 2)
                .collect();
            prop_assert_eq!(seen, want);
        }
    }
}
