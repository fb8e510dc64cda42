//! Checks tape gradients of a small dense + layer-norm + softmax network
//! against central differences.

use multiround::compute::{grad_check, Rng, Tensor};

fn main() -> multiround::Result<()> {
    let mut rng = Rng::new(1);
    let mut rand = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())
    };
    let params = vec![rand(&[4, 5])?, rand(&[5, 3])?, rand(&[3])?, rand(&[3])?];
    let mask: Vec<bool> = (0..12).map(|i| i % 3 != 2 || i == 2).collect();
    let report = grad_check(&params, 1e-3, |g, p| {
        let h = g.matmul(p[0], p[1])?;
        let h = g.layer_norm(h, p[2], p[3], 1e-12)?;
        let s = g.masked_softmax(h, &mask)?;
        let t = g.tanh(s);
        Ok(g.sum(t))
    })?;
    println!(
        "checked {} elements, max relative error {:.2e} (parameter {}, element {})",
        report.checked, report.max_rel_error, report.worst.0, report.worst.1
    );
    Ok(())
}
