use multiround::compute::{grad_check, Graph, GruWeights, Rng, Tensor, Var};
use multiround::Error;

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn rand(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

/// Weighted sum with fixed random weights so every output element matters.
fn weighted_sum(g: &mut Graph<f64>, x: Var, seed: u64) -> Var {
    let mut rng = Rng::new(seed);
    let shape = g.shape(x).to_vec();
    let w = g.constant(rand(&mut rng, &shape));
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

fn check<F>(params: &[Tensor<f64>], f: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> multiround::Result<Var>,
{
    let r = grad_check(params, H, f).unwrap();
    assert!(r.checked > 0);
    r.max_rel_error
}

#[test]
fn sum_gives_ones() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::from_f64([2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert!(grads.get(x).data().iter().all(|&v| v == 1.0));
}

#[test]
fn quadratic_gives_twice_x() {
    let mut g = Graph::<f64>::new();
    let xs = [1.5, -0.5, 2.0];
    let x = g.param(Tensor::from_f64([3], &xs).unwrap());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    let grads = g.backward(s).unwrap();
    for (gv, xv) in grads.get(x).data().iter().zip(xs) {
        assert_eq!(*gv, 2.0 * xv);
    }
}

#[test]
fn unreached_parameter_gets_zero_and_non_scalar_errors() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::full([2], 1.0));
    let y = g.param(Tensor::full([3], 1.0));
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert!(!grads.reached(y));
    assert_eq!(grads.get(y).data(), &[0.0; 3]);
    assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn grad_check_trivial_functions() {
    let r = grad_check(&[Tensor::from_f64([1], &[3.0]).unwrap()], 1e-4, |g, p| {
        let sq = g.mul(p[0], p[0])?;
        Ok(g.sum(sq))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);

    let r = grad_check(&[Tensor::from_f64([2], &[3.0, 1.0]).unwrap()], 1e-4, |g, p| {
        let z = g.scale(p[0], 0.0);
        Ok(g.sum(z))
    })
    .unwrap();
    assert_eq!(r.max_rel_error, 0.0);
}

#[test]
fn elementwise_ops() {
    let mut rng = Rng::new(1);
    let a = rand(&mut rng, &[3, 4]);
    let b = rand(&mut rng, &[3, 4]);
    let bias = rand(&mut rng, &[4]);
    let err = check(&[a, b, bias], |g, p| {
        let s = g.add(p[0], p[1])?;
        let d = g.sub(s, p[1])?;
        let m = g.mul(d, p[1])?;
        let m = g.add_bias(m, p[2])?;
        let t = g.tanh(m);
        let sg = g.sigmoid(p[0]);
        let r = g.relu(p[1]);
        let x = g.add(t, sg)?;
        let x = g.add(x, r)?;
        let x = g.affine(x, -1.5, 0.25);
        Ok(weighted_sum(g, x, 11))
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn matmul_variants() {
    let mut rng = Rng::new(2);
    let x = rand(&mut rng, &[2, 3, 4]);
    let w = rand(&mut rng, &[4, 5]);
    let wt = rand(&mut rng, &[6, 4]);
    let err = check(&[x, w, wt], |g, p| {
        let a = g.matmul(p[0], p[1])?;
        let b = g.matmul_nt(p[0], p[2])?;
        let sa = weighted_sum(g, a, 3);
        let sb = weighted_sum(g, b, 4);
        g.add(sa, sb)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn batched_matmul_both_layouts() {
    let mut rng = Rng::new(3);
    let a = rand(&mut rng, &[2, 3, 4]);
    let b = rand(&mut rng, &[2, 4, 5]);
    let bt = rand(&mut rng, &[2, 5, 4]);
    let err = check(&[a, b, bt], |g, p| {
        let x = g.bmm(p[0], p[1], false)?;
        let y = g.bmm(p[0], p[2], true)?;
        let sx = weighted_sum(g, x, 5);
        let sy = weighted_sum(g, y, 6);
        g.add(sx, sy)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn layer_norm_and_dense_composite() {
    let mut rng = Rng::new(4);
    let x = rand(&mut rng, &[3, 5]);
    let w = rand(&mut rng, &[5, 6]);
    let b = rand(&mut rng, &[6]);
    let gamma = rand(&mut rng, &[6]);
    let beta = rand(&mut rng, &[6]);
    let err = check(&[x, w, b, gamma, beta], |g, p| {
        let h = g.matmul(p[0], p[1])?;
        let h = g.add_bias(h, p[2])?;
        let y = g.layer_norm(h, p[3], p[4], 1e-12)?;
        Ok(weighted_sum(g, y, 7))
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn masked_softmax_gradient() {
    let mut rng = Rng::new(5);
    let x = rand(&mut rng, &[2, 3, 4]);
    let mask: Vec<bool> = (0..24).map(|i| i % 4 != 3 || i % 3 == 0).collect();
    let err = check(&[x], |g, p| {
        let y = g.masked_softmax(p[0], &mask)?;
        Ok(weighted_sum(g, y, 8))
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn gather_reshape_concat_slice_select() {
    let mut rng = Rng::new(6);
    let table = rand(&mut rng, &[5, 3]);
    let other = rand(&mut rng, &[2, 2, 3]);
    let err = check(&[table, other], |g, p| {
        let e = g.gather_rows(p[0], &[1, 4, 1, 0], &[2, 2])?;
        let c = g.concat_last(&[e, p[1]])?;
        let s = g.slice_last(c, 2, 3)?;
        let r = g.reshape(s, &[4, 3])?;
        let o = g.reshape(p[1], &[4, 3])?;
        let m = g.select_rows(&[true, false, false, true], r, o)?;
        let mean = g.mean(m);
        let ws = weighted_sum(g, m, 9);
        g.add(mean, ws)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn spectral_filter_gradient_even_and_odd() {
    for (l, seed) in [(8usize, 10u64), (7, 11), (6, 12), (1, 13)] {
        let mut rng = Rng::new(seed);
        let nb = l / 2 + 1;
        let x = rand(&mut rng, &[2, l, 3]);
        let wr = rand(&mut rng, &[nb, 3]);
        let wi = rand(&mut rng, &[nb, 3]);
        let err = check(&[x, wr, wi], |g, p| {
            let y = g.spectral_filter(p[0], p[1], p[2])?;
            Ok(weighted_sum(g, y, 14))
        });
        assert!(err < TOL, "L={l}: {err}");
    }
}

#[test]
fn logistic_loss_gradient() {
    let mut rng = Rng::new(7);
    let s = rand(&mut rng, &[3, 4]).map(|v| 3.0 * v);
    let labels = [1, 0, 0, -1, 1, 0, -1, 0, 1, 0, 0, 0];
    let err = check(&[s], |g, p| g.bce(p[0], &labels));
    assert!(err < TOL, "{err}");
}

#[test]
fn gru_unroll_gradient_with_padding() {
    let mut rng = Rng::new(8);
    let x = rand(&mut rng, &[2, 3, 4]);
    let h0 = rand(&mut rng, &[2, 5]);
    let w_ih = rand(&mut rng, &[4, 15]);
    let w_hh = rand(&mut rng, &[5, 15]);
    let b_ih = rand(&mut rng, &[15]);
    let b_hh = rand(&mut rng, &[15]);
    let active = [false, true, true, true, true, true];
    let err = check(&[x, h0, w_ih, w_hh, b_ih, b_hh], |g, p| {
        let w = GruWeights {
            w_ih: p[2],
            w_hh: p[3],
            b_ih: p[4],
            b_hh: p[5],
        };
        let (_, last) = multiround::compute::gru_unroll(g, p[0], p[1], &w, Some(&active))?;
        Ok(weighted_sum(g, last, 15))
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn dropout_gradient_uses_mask() {
    let mut g = Graph::<f64>::training(Rng::new(9));
    let x = g.param(Tensor::full([1000], 1.0));
    let y = g.dropout(x, 0.3).unwrap();
    let s = g.sum(y);
    let grads = g.backward(s).unwrap();
    let gx = grads.get(x);
    for (gv, yv) in gx.data().iter().zip(g.value(y).data()) {
        assert_eq!(gv, yv);
    }
    let mut e = Graph::<f64>::new();
    let x = e.param(Tensor::full([4], 1.0));
    assert_eq!(e.dropout(x, 0.9).unwrap(), x);
}
