use multiround::backbone::{
    embed_sequence, encode, init_backbone, score_items, top_k, transformer_states, BackboneConfig, BackboneKind,
    ITEM_EMB,
};
use multiround::compute::{dense, grad_check, gru_sequence, layer_norm, Graph, GruWeights, ParamSet, Rng, Tensor};
use multiround::Error;

fn config(kind: BackboneKind, n_items: usize, d: usize, max_len: usize) -> BackboneConfig {
    let mut c = BackboneConfig::new(kind, n_items, d, max_len);
    c.dropout = 0.0;
    c
}

fn forward(cfg: &BackboneConfig, p: &ParamSet<f64>, ids: &[usize], b: usize) -> Tensor<f64> {
    let mut g = Graph::new();
    let bound = p.bind(&mut g, |_| false);
    let l = ids.len() / b;
    let e = embed_sequence(&mut g, bound.get(ITEM_EMB).unwrap(), ids, b, l).unwrap();
    let f = encode(&mut g, &bound, cfg, e, ids).unwrap();
    g.value(f).clone()
}

fn rand(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn embedding_gather_matches_lookup() {
    let mut rng = Rng::new(1);
    let cfg = config(BackboneKind::Gru, 9, 4, 5);
    let p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
    let table = p.get(ITEM_EMB).unwrap();
    let ids: Vec<usize> = (0..10)
        .map(|_| rng.below(10))
        .chain([0, 0, 0, 0, 0, 3, 3, 0, 0, 0])
        .collect();
    let mut g = Graph::new();
    let t = g.constant(table.clone());
    let e = embed_sequence(&mut g, t, &ids, 4, 5).unwrap();
    let e = g.value(e);
    for (pos, &id) in ids.iter().enumerate() {
        assert_eq!(e.row(pos), table.row(id));
    }
    assert!(e.data()[10 * 4..15 * 4].iter().all(|&v| v == 0.0));
    assert_eq!(e.row(15), e.row(16));
    assert!(matches!(
        embed_sequence(&mut g, t, &[10], 1, 1),
        Err(Error::ItemOutOfRange { id: 10, .. })
    ));
}

#[test]
fn transformer_is_causal() {
    let mut rng = Rng::new(2);
    let cfg = config(BackboneKind::Transformer, 12, 8, 6);
    let p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
    let states = |ids: &[usize]| {
        let mut g = Graph::new();
        let bound = p.bind(&mut g, |_| false);
        let e = embed_sequence(&mut g, bound.get(ITEM_EMB).unwrap(), ids, 1, 6).unwrap();
        let x = transformer_states(&mut g, &bound, &cfg, e, ids).unwrap();
        g.value(x).clone()
    };
    let a = states(&[0, 4, 5, 6, 7, 8]);
    let b = states(&[0, 4, 5, 6, 7, 11]);
    for pos in 0..5 {
        assert_eq!(a.row(pos), b.row(pos), "position {pos}");
    }
    assert_ne!(a.row(5), b.row(5));
}

#[test]
fn transformer_single_item_attends_to_itself() {
    let mut rng = Rng::new(3);
    let mut cfg = config(BackboneKind::Transformer, 5, 4, 3);
    cfg.blocks = 1;
    let p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
    let f = forward(&cfg, &p, &[0, 0, 2], 1);

    let get = |n: &str| p.get(n).unwrap().clone();
    let x0: Vec<f64> = get(ITEM_EMB)
        .row(2)
        .iter()
        .zip(get("tf.pos").row(0))
        .map(|(a, b)| a + b)
        .collect();
    let x = Tensor::new([1, 4], x0).unwrap();
    let lin = |x: &Tensor<f64>, n: &str| dense(x, &get(&format!("{n}.w")), get(&format!("{n}.b")).data()).unwrap();
    let att = lin(&lin(&x, "tf.0.v"), "tf.0.o");
    let r = Tensor::new([1, 4], x.data().iter().zip(att.data()).map(|(a, b)| a + b).collect()).unwrap();
    let h = layer_norm(&r, get("tf.0.ln1.g").data(), get("tf.0.ln1.b").data(), 1e-12).unwrap();
    let ff = lin(&lin(&h, "tf.0.ff1").map(|v| v.max(0.0)), "tf.0.ff2");
    let r2 = Tensor::new([1, 4], h.data().iter().zip(ff.data()).map(|(a, b)| a + b).collect()).unwrap();
    let want = layer_norm(&r2, get("tf.0.ln2.g").data(), get("tf.0.ln2.b").data(), 1e-12).unwrap();
    assert!(f.max_abs_diff(&want) < 1e-9);
}

#[test]
fn identical_rows_give_identical_outputs_and_pads_do_not_matter() {
    let mut rng = Rng::new(4);
    for kind in [BackboneKind::Transformer, BackboneKind::Gru] {
        let cfg = config(kind, 10, 8, 6);
        let p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
        let f = forward(&cfg, &p, &[0, 0, 3, 1, 9, 2, 0, 0, 3, 1, 9, 2], 2);
        assert_eq!(f.row(0), f.row(1));
        let short = forward(&cfg, &p, &[3, 1, 9, 2], 1);
        assert!(short.max_abs_diff(&f.reshape([2, 8]).unwrap()) < 1e-12, "{kind}");
    }
}

#[test]
fn empty_rows_are_rejected() {
    let mut rng = Rng::new(5);
    for kind in [BackboneKind::Transformer, BackboneKind::Gru, BackboneKind::FilterMlp] {
        let cfg = config(kind, 4, 4, 3);
        let p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
        let mut g = Graph::new();
        let bound = p.bind(&mut g, |_| false);
        let ids = [1, 2, 3, 0, 0, 0];
        let e = embed_sequence(&mut g, bound.get(ITEM_EMB).unwrap(), &ids, 2, 3).unwrap();
        assert!(matches!(
            encode(&mut g, &bound, &cfg, e, &ids),
            Err(Error::EmptySequence { row: 1 })
        ));
    }
}

#[test]
fn gru_backbone_reference_cases() {
    let mut rng = Rng::new(6);
    let cfg = config(BackboneKind::Gru, 6, 4, 4);
    let mut p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
    let w = GruWeights {
        w_ih: p.get("gru.w_ih").unwrap().clone(),
        w_hh: p.get("gru.w_hh").unwrap().clone(),
        b_ih: p.get("gru.b_ih").unwrap().clone(),
        b_hh: p.get("gru.b_hh").unwrap().clone(),
    };
    let f = forward(&cfg, &p, &[0, 0, 0, 5], 1);
    let x = Tensor::new([1, 4], p.get(ITEM_EMB).unwrap().row(5).to_vec()).unwrap();
    let (_, want) = gru_sequence(&x, &[0.0; 4], &w).unwrap();
    for (a, b) in f.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    *p.get_mut(ITEM_EMB).unwrap() = Tensor::zeros([7, 4]);
    let f = forward(&cfg, &p, &[0, 1, 2, 3], 1);
    assert!(f.data().iter().all(|&v| v == 0.0));
}

fn naive_spectral(x: &[f64], l: usize, d: usize, re: &Tensor<f64>, im: &Tensor<f64>) -> Vec<f64> {
    use std::f64::consts::PI;
    let nb = l / 2 + 1;
    let mut out = vec![0.0; l * d];
    for j in 0..d {
        let mut yr = vec![0.0; nb];
        let mut yi = vec![0.0; nb];
        for k in 0..nb {
            let (mut a, mut b) = (0.0, 0.0);
            for t in 0..l {
                let ang = -2.0 * PI * (k * t) as f64 / l as f64;
                a += x[t * d + j] * ang.cos();
                b += x[t * d + j] * ang.sin();
            }
            let (wr, wi) = (re.data()[k * d + j], im.data()[k * d + j]);
            yr[k] = a * wr - b * wi;
            yi[k] = a * wi + b * wr;
        }
        for t in 0..l {
            let mut s = 0.0;
            for k in 0..nb {
                let c = if k == 0 || (l % 2 == 0 && k == l / 2) { 1.0 } else { 2.0 };
                let ang = 2.0 * PI * (k * t) as f64 / l as f64;
                s += c * (yr[k] * ang.cos() - yi[k] * ang.sin());
            }
            out[t * d + j] = s / l as f64;
        }
    }
    out
}

#[test]
fn filter_mlp_reference_cases() {
    let mut rng = Rng::new(7);
    let mut cfg = config(BackboneKind::FilterMlp, 8, 4, 6);
    cfg.blocks = 1;
    cfg.ffn = false;
    let mut p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
    let ids = [2, 5, 1, 7, 3, 4];
    let table = p.get(ITEM_EMB).unwrap().clone();
    let e: Vec<f64> = ids.iter().flat_map(|&i| table.row(i).to_vec()).collect();
    let last = Tensor::new([1, 4], e[20..24].to_vec()).unwrap();
    let ones = [1.0; 4];
    let zeros = [0.0; 4];

    let f = forward(&cfg, &p, &ids, 1);
    let want = layer_norm(&last.map(|v| 2.0 * v), &ones, &zeros, 1e-12).unwrap();
    assert!(f.max_abs_diff(&want) < 1e-9);

    *p.get_mut("fm.0.filter_re").unwrap() = Tensor::zeros([4, 4]);
    let f = forward(&cfg, &p, &ids, 1);
    let want = layer_norm(&last, &ones, &zeros, 1e-12).unwrap();
    assert!(f.max_abs_diff(&want) < 1e-9);

    let re = rand(&mut rng, &[4, 4]);
    let im = rand(&mut rng, &[4, 4]);
    *p.get_mut("fm.0.filter_re").unwrap() = re.clone();
    *p.get_mut("fm.0.filter_im").unwrap() = im.clone();
    let f = forward(&cfg, &p, &ids, 1);
    let filtered = naive_spectral(&e, 6, 4, &re, &im);
    let sum: Vec<f64> = (0..4).map(|j| e[20 + j] + filtered[20 + j]).collect();
    let want = layer_norm(&Tensor::new([1, 4], sum).unwrap(), &ones, &zeros, 1e-12).unwrap();
    assert!(f.max_abs_diff(&want) < 1e-5);
}

#[test]
fn scoring_cases() {
    let mut table = Tensor::<f64>::zeros([5, 4]);
    for i in 1..5 {
        table.row_mut(i)[i - 1] = 1.0;
    }
    let f = Tensor::new([1, 4], table.row(3).to_vec()).unwrap();
    let s = score_items(&f, &table, &[vec![]]).unwrap();
    assert_eq!(top_k(s.data(), 1), vec![3]);
    assert_eq!(s.data()[0], f64::NEG_INFINITY);
    let s = score_items(&f, &table, &[vec![3]]).unwrap();
    assert_eq!(s.data()[3], f64::NEG_INFINITY);
    assert!(!top_k(s.data(), 4).contains(&3));

    let mut rng = Rng::new(8);
    let table = rand(&mut rng, &[21, 6]);
    let f = rand(&mut rng, &[3, 6]);
    let s = score_items(&f, &table, &[vec![], vec![], vec![]]).unwrap();
    let s2 = score_items(&f.map(|v| 2.5 * v), &table, &[vec![], vec![], vec![]]).unwrap();
    for r in 0..3 {
        for i in 1..21 {
            let dot: f64 = f.row(r).iter().zip(table.row(i)).map(|(a, b)| a * b).sum();
            assert!((s.data()[r * 21 + i] - dot).abs() < 1e-6);
            assert!((s2.data()[r * 21 + i] - 2.5 * dot).abs() < 1e-9);
        }
        assert_eq!(top_k(s.row(r), 5), top_k(s2.row(r), 5));
    }
}

#[test]
fn backbones_pass_gradient_check() {
    for (kind, seed) in [
        (BackboneKind::Transformer, 9),
        (BackboneKind::Gru, 10),
        (BackboneKind::FilterMlp, 12),
    ] {
        let mut rng = Rng::new(seed);
        let cfg = config(kind, 6, 8, 4);
        let mut p = init_backbone::<f64>(&cfg, &mut rng).unwrap();
        // A non-identity filter so that positions actually mix.
        for (name, t) in p.iter_mut() {
            if name.contains("filter") {
                *t = rand(&mut rng, t.shape());
            }
        }
        let ids = [0, 3, 1, 5, 2, 6, 4, 1];
        let w = rand(&mut rng, &[2, 8]);
        let report = grad_check(&p.to_vec(), 1e-3, |g, vars| {
            let bound = p.bound_from(vars);
            let e = embed_sequence(g, bound.get(ITEM_EMB)?, &ids, 2, 4)?;
            let f = encode(g, &bound, &cfg, e, &ids)?;
            let wv = g.constant(w.clone());
            let m = g.mul(f, wv)?;
            Ok(g.sum(m))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{kind}: {report:?}");
    }
}
