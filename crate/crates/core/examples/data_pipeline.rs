//! Loads the bundled interaction file, applies k-core filtering and a
//! leave-one-out split, and prints statistics.

use std::path::Path;

use multiround::data::{build_split, kcore_filter, load_interactions, make_batches, stats, LoadOptions, Phase};

fn main() -> multiround::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini.tsv");
    let log = load_interactions(&path, &LoadOptions::default())?;
    println!("raw:      {:?}", stats(&log));
    let filtered = kcore_filter(&log, 5)?;
    println!("5-core:   {:?}", stats(&filtered));
    let (split, vocab) = build_split(&filtered)?;
    let u = &split.users[0];
    println!(
        "user {}: {} training items, valid {}, test {}",
        vocab.user_raw(u.user).unwrap_or("?"),
        u.train.len(),
        vocab.item_raw(u.valid).unwrap_or("?"),
        vocab.item_raw(u.test).unwrap_or("?")
    );
    let batches = make_batches(&split, Phase::Test, 8, 32, None);
    println!("{} test batches, first row {:?}", batches.len(), batches[0].row(0));
    Ok(())
}
