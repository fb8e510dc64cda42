//! Hit ratio and NDCG on hand-made ranked lists.

use multiround::eval::{hr_at_k, ndcg_at_k};

fn main() -> multiround::Result<()> {
    let lists = vec![vec![3, 1, 7], vec![5, 2, 9], vec![4, 8, 6]];
    let targets = [1, 9, 10];
    for k in 1..=3 {
        println!(
            "k={k}: HR {:.4}  NDCG {:.4}",
            hr_at_k(&lists, &targets, k)?,
            ndcg_at_k(&lists, &targets, k)?
        );
    }
    Ok(())
}
