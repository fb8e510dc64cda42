use crate::error::{Error, Result};

fn check(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("metric cutoff k must be positive".into()));
    }
    if lists.len() != targets.len() {
        return Err(Error::shape(
            "metric",
            format!("{} lists for {} targets", lists.len(), targets.len()),
        ));
    }
    Ok(())
}

/// 1-based position of `target` within the first `k` entries.
pub fn rank_within(list: &[usize], target: usize, k: usize) -> Option<usize> {
    list.iter().take(k).position(|&i| i == target).map(|p| p + 1)
}

/// Fraction of users whose target is among their first `k` items.
pub fn hr_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    check(lists, targets, k)?;
    if lists.is_empty() {
        return Ok(0.0);
    }
    let hits = lists
        .iter()
        .zip(targets)
        .filter(|(l, &t)| rank_within(l, t, k).is_some())
        .count();
    Ok(hits as f64 / lists.len() as f64)
}

/// Mean of `1 / log2(rank + 1)` over users, counting misses as zero.
pub fn ndcg_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    check(lists, targets, k)?;
    if lists.is_empty() {
        return Ok(0.0);
    }
    let gain = lists
        .iter()
        .zip(targets)
        .filter_map(|(l, &t)| rank_within(l, t, k))
        .map(|r| 1.0 / ((r + 1) as f64).log2())
        .fold(0.0, |a, b| a + b);
    Ok(gain / lists.len() as f64)
}
