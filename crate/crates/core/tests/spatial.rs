use gwt_core::graph::{build_star, StarGraph};
use gwt_core::params::{Bound, ParamStore};
use gwt_core::rng::{seeded, stream_rng, Stream};
use gwt_core::spatial::*;
use gwt_core::tensor::{grad_check_many, AllocCounter, Tape, Tensor};
use proptest::prelude::*;
use rand::RngExt;

type Mat = Vec<Vec<f64>>;

fn rand_mat(rng: &mut impl RngExt, r: usize, c: usize) -> Mat {
    (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

fn to_mat(t: &Tensor) -> Mat {
    let (r, c) = t.dims2().unwrap();
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention of node `u` over `nbrs`: softmax of `ReLU(e_u . e_v)`.
fn attention_row(e: &Mat, u: usize, nbrs: &[usize], n: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    let z: f64 = nbrs.iter().map(|&v| dot(&e[u], &e[v]).max(0.0).exp()).sum();
    for &v in nbrs {
        row[v] = dot(&e[u], &e[v]).max(0.0).exp() / z;
    }
    row
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn dense_adjacency_examples() {
    let mut tape = Tape::new();
    let e = tape.constant(tensor(&vec![vec![0.3, -0.2]; 5]));
    let a = dense_adjacency(&mut tape, e).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));

    let e = tape.constant(Tensor::eye(2));
    let a = dense_adjacency(&mut tape, e).unwrap();
    let row = [0.731_058_578_630_004_9, 0.268_941_421_369_995_1];
    assert!(tape.value(a).data().iter().zip(row.iter().chain(row.iter().rev())).all(|(x, y)| (x - y).abs() < 1e-15));
}

#[test]
fn dense_adjacency_matches_entrywise_attention() {
    let mut rng = seeded(3);
    for n in 1..=8 {
        let e = rand_mat(&mut rng, n, 3);
        let mut tape = Tape::new();
        let ev = tape.constant(tensor(&e));
        let a = dense_adjacency(&mut tape, ev).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let oracle: Mat = (0..n).map(|u| attention_row(&e, u, &all, n)).collect();
        assert!(max_diff(&to_mat(tape.value(a)), &oracle) < 1e-14);
    }
}

#[test]
fn gwnet_adjacency_examples() {
    let mut rng = seeded(4);
    let e1 = rand_mat(&mut rng, 6, 3);
    let mut tape = Tape::new();
    let a1 = tape.constant(tensor(&e1));
    let a2 = tape.constant(tensor(&e1));
    let g = gwnet_adjacency(&mut tape, a1, a2).unwrap();
    let d = dense_adjacency(&mut tape, a1).unwrap();
    assert_eq!(tape.value(g), tape.value(d));

    let z = tape.constant(Tensor::zeros(&[6, 3]));
    let u = gwnet_adjacency(&mut tape, a1, z).unwrap();
    assert!(tape.value(u).data().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));

    let e2 = tape.constant(tensor(&rand_mat(&mut rng, 6, 3)));
    let g = gwnet_adjacency(&mut tape, a1, e2).unwrap();
    let sums = tape.sum(g, 1).unwrap();
    assert!(tape.value(sums).data().iter().all(|&s| (s - 1.0).abs() < 1e-12));

    let bad = tape.constant(Tensor::zeros(&[5, 3]));
    assert!(gwnet_adjacency(&mut tape, a1, bad).is_err());
}

#[test]
fn star_gat_examples() {
    let mut rng = seeded(5);
    let n = 7;
    let star = build_star(n, 2).unwrap();
    let mut tape = Tape::new();
    let e = tape.constant(tensor(&rand_mat(&mut rng, n, 4)));

    let s = star_gat_adjacency(&mut tape, &star, e, None, Direction::Scatter, SelfLoops::Center).unwrap();
    let dense = to_mat(&s.to_dense(&tape));
    for (u, row) in dense.iter().enumerate() {
        let mut expect = vec![0.0; n];
        expect[2] = 1.0;
        assert_eq!(row, &expect, "row {u}");
    }
    assert_eq!(s.csr.nnz(), n);

    let same = tape.constant(tensor(&vec![vec![0.5, 0.1, -0.3, 0.2]; n]));
    let g = star_gat_adjacency(&mut tape, &star, same, None, Direction::Gather, SelfLoops::None).unwrap();
    let dense = to_mat(&g.to_dense(&tape));
    for (u, row) in dense.iter().enumerate() {
        for (v, &w) in row.iter().enumerate() {
            let expect = if u == 2 && v != 2 { 1.0 / (n - 1) as f64 } else { 0.0 };
            assert!((w - expect).abs() < 1e-15);
        }
    }
}

#[test]
fn undirected_star_gat_matches_brute_force() {
    let mut rng = seeded(6);
    for n in 2..=8 {
        let c = rng.random_range(0..n);
        let e = rand_mat(&mut rng, n, 3);
        let star = build_star(n, c).unwrap();
        for loops in [SelfLoops::None, SelfLoops::All] {
            let mut tape = Tape::new();
            let ev = tape.constant(tensor(&e));
            let adj = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Undirected, loops).unwrap();
            let oracle: Mat = (0..n)
                .map(|u| {
                    let mut nbrs: Vec<usize> = if u == c { (0..n).filter(|&v| v != c).collect() } else { vec![c] };
                    if loops == SelfLoops::All {
                        nbrs.push(u);
                    }
                    attention_row(&e, u, &nbrs, n)
                })
                .collect();
            assert!(max_diff(&to_mat(&adj.to_dense(&tape)), &oracle) < 1e-14);
        }
    }
}

#[test]
fn virtual_center_star_uses_center_embedding() {
    let mut rng = seeded(7);
    let n = 5;
    let e = rand_mat(&mut rng, n, 3);
    let ec = rand_mat(&mut rng, 1, 3);
    let mut tape = Tape::new();
    let ev = tape.constant(tensor(&e));
    let cv = tape.constant(tensor(&ec));
    let star = StarGraph::virtual_center(n).unwrap();
    assert!(star_gat_adjacency(&mut tape, &star, ev, None, Direction::Gather, SelfLoops::None).is_err());
    let g = star_gat_adjacency(&mut tape, &star, ev, Some(cv), Direction::Gather, SelfLoops::None).unwrap();
    let dense = to_mat(&g.to_dense(&tape));
    assert_eq!(dense.len(), n + 1);
    let mut all = e.clone();
    all.push(ec[0].clone());
    let expect = attention_row(&all, n, &(0..n).collect::<Vec<_>>(), n + 1);
    assert!(dense[n].iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-15));
    assert!(dense[..n].iter().flatten().all(|&v| v == 0.0));
}

/// Dense materialization of the undirected star attention with self-loops.
fn star_attention(e: &Mat, c: usize) -> Mat {
    let n = e.len();
    (0..n)
        .map(|u| {
            let nbrs: Vec<usize> = if u == c { (0..n).collect() } else { vec![c, u] };
            attention_row(e, u, &nbrs, n)
        })
        .collect()
}

#[test]
fn two_layer_star_matches_dense_materialization() {
    let mut rng = seeded(8);
    let (n, d, din, dout) = (5, 3, 4, 2);
    let e = rand_mat(&mut rng, n, d);
    let x = rand_mat(&mut rng, n, din);
    let t1 = rand_mat(&mut rng, din, dout);
    let t2 = rand_mat(&mut rng, dout, dout);
    let star = build_star(n, 0).unwrap();

    let mut tape = Tape::new();
    let ev = tape.constant(tensor(&e));
    let xv = tape.constant(tensor(&x));
    let t1v = tape.constant(tensor(&t1));
    let t2v = tape.constant(tensor(&t2));
    let adj = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Undirected, SelfLoops::All).unwrap();
    let z = two_layer_star_forward(&mut tape, &adj, xv, t1v, Some(t2v)).unwrap();
    let a = star_attention(&e, 0);
    let oracle = mm(&mm(&mm(&mm(&a, &a), &x), &t1), &t2);
    assert!(max_diff(&to_mat(tape.value(z)), &oracle) < 1e-13);

    let z1 = two_layer_star_forward(&mut tape, &adj, xv, t1v, None).unwrap();
    let oracle = mm(&mm(&mm(&a, &a), &x), &t1);
    assert!(max_diff(&to_mat(tape.value(z1)), &oracle) < 1e-13);

    let zero = tape.constant(Tensor::zeros(&[n, din]));
    let z0 = two_layer_star_forward(&mut tape, &adj, zero, t1v, Some(t2v)).unwrap();
    assert!(tape.value(z0).data().iter().all(|&v| v == 0.0));

    // K = 2 over the same materialized adjacency.
    let av = tape.constant(tensor(&a));
    let k2 = k_layer_subgraph_forward(&mut tape, av, xv, &[t1v, t2v]).unwrap();
    let alt = mm(&mm(&a, &mm(&mm(&a, &x), &t1)), &t2);
    assert!(max_diff(&to_mat(tape.value(k2)), &alt) < 1e-13);
    assert!(tape.value(k2).max_abs_diff(tape.value(z)).unwrap() < 1e-13);
}

#[test]
fn k_layer_forms() {
    let mut rng = seeded(9);
    let n = 4;
    let e = rand_mat(&mut rng, n, 2);
    let x = rand_mat(&mut rng, n, 3);
    let t1 = rand_mat(&mut rng, 3, 3);
    let t2 = rand_mat(&mut rng, 3, 2);
    let mut tape = Tape::new();
    let ev = tape.constant(tensor(&e));
    let xv = tape.constant(tensor(&x));
    let t1v = tape.constant(tensor(&t1));
    let t2v = tape.constant(tensor(&t2));
    let a = dense_adjacency(&mut tape, ev).unwrap();
    let k1 = k_layer_subgraph_forward(&mut tape, a, xv, &[t1v]).unwrap();
    let d1 = dense_agcn_forward(&mut tape, a, xv, t1v).unwrap();
    assert_eq!(tape.value(k1), tape.value(d1));

    let id = tape.constant(Tensor::eye(n));
    let mlp = k_layer_subgraph_forward(&mut tape, id, xv, &[t1v, t2v]).unwrap();
    assert!(max_diff(&to_mat(tape.value(mlp)), &mm(&mm(&x, &t1), &t2)) < 1e-14);
    assert!(k_layer_subgraph_forward(&mut tape, id, xv, &[]).is_err());
    let bad = tape.constant(Tensor::zeros(&[2, 2]));
    assert!(k_layer_subgraph_forward(&mut tape, a, xv, &[bad]).is_err());
}

fn directed_oracle(e: &Mat, x: &Mat, theta: &Mat, c: usize, gather_loop: bool, scatter_loop: bool) -> Mat {
    let n = e.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut nbrs: Vec<usize> = (0..n).filter(|&v| v != c).collect();
    if gather_loop {
        nbrs.push(c);
    }
    l[c] = attention_row(e, c, &nbrs, n);
    let mut u = vec![vec![0.0; n]; n];
    for (v, row) in u.iter_mut().enumerate() {
        if v != c || scatter_loop {
            row[c] = 1.0;
        }
    }
    mm(&u, &mm(&mm(&l, x), theta))
}

#[test]
fn directed_star_matches_dense_materialization() {
    let mut rng = seeded(10);
    let (n, c) = (6, 1);
    let e = rand_mat(&mut rng, n, 3);
    let x = rand_mat(&mut rng, n, 4);
    let theta = rand_mat(&mut rng, 4, 3);
    let star = build_star(n, c).unwrap();
    let run = |scatter: SelfLoops| {
        let mut tape = Tape::new();
        let ev = tape.constant(tensor(&e));
        let xv = tape.constant(tensor(&x));
        let tv = tape.constant(tensor(&theta));
        let g = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Gather, SelfLoops::Center).unwrap();
        let s = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Scatter, scatter).unwrap();
        let z = directed_star_forward(&mut tape, &g, &s, xv, tv).unwrap();
        to_mat(tape.value(z))
    };
    let with = run(SelfLoops::Center);
    assert!(max_diff(&with, &directed_oracle(&e, &x, &theta, c, true, true)) < 1e-13);
    let without = run(SelfLoops::None);
    assert!(max_diff(&without, &directed_oracle(&e, &x, &theta, c, true, false)) < 1e-13);
    for u in 0..n {
        if u == c {
            assert_ne!(with[u], without[u]);
        } else {
            assert_eq!(with[u], without[u]);
        }
    }
}

#[test]
fn directed_star_leaves_share_context() {
    let n = 6;
    let star = build_star(n, 0).unwrap();
    let mut rng = seeded(11);
    let mut tape = Tape::new();
    let ev = tape.constant(tensor(&vec![vec![0.2, 0.4]; n]));
    let xv = tape.constant(tensor(&rand_mat(&mut rng, n, 3)));
    let tv = tape.constant(tensor(&rand_mat(&mut rng, 3, 3)));
    let g = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Gather, SelfLoops::Center).unwrap();
    let s = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Scatter, SelfLoops::Center).unwrap();
    let z = directed_star_forward(&mut tape, &g, &s, xv, tv).unwrap();
    let z = to_mat(tape.value(z));
    for u in 2..n {
        assert_eq!(z[u], z[1]);
    }
}

fn rank1_oracle(e: &Mat, ec: &[f64], x: &Mat, theta: &Mat) -> Mat {
    let n = e.len();
    let softmax = |s: Vec<f64>| {
        let m = s.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
        s.iter().map(|v| (v - m).exp() / z).collect::<Vec<_>>()
    };
    let a_in = softmax((0..n).map(|v| dot(ec, &e[v]).max(0.0)).collect());
    let a_out = softmax((0..n).map(|u| dot(&e[u], ec).max(0.0)).collect());
    let a: Mat = (0..n).map(|u| (0..n).map(|v| a_out[u] * a_in[v]).collect()).collect();
    mm(&mm(&a, x), theta)
}

#[test]
fn gwt_matches_rank1_materialization() {
    let mut rng = seeded(12);
    for n in [2usize, 4, 8, 16, 32] {
        for _ in 0..50 {
            let d = rng.random_range(1..6);
            let din = rng.random_range(1..5);
            let dout = rng.random_range(1..5);
            let e: Mat = rand_mat(&mut rng, n, d).into_iter().map(|r| r.into_iter().map(|v| 3.0 * v).collect()).collect();
            let ec = rand_mat(&mut rng, 1, d);
            let x = rand_mat(&mut rng, n, din);
            let theta = rand_mat(&mut rng, din, dout);
            let mut tape = Tape::new();
            let (ev, cv, xv, tv) =
                (tape.constant(tensor(&e)), tape.constant(tensor(&ec)), tape.constant(tensor(&x)), tape.constant(tensor(&theta)));
            let z = gwt_agcn_forward(&mut tape, ev, cv, xv, tv, OutNorm::NodeDim).unwrap();
            let oracle = rank1_oracle(&e, &ec[0], &x, &theta);
            assert!(max_diff(&to_mat(tape.value(z)), &oracle) < 1e-10, "n = {n}");
        }
    }
}

#[test]
fn gwt_symmetric_embeddings_give_identical_rows() {
    let mut rng = seeded(13);
    let n = 9;
    let mut tape = Tape::new();
    let ev = tape.constant(tensor(&vec![vec![0.7, -0.1, 0.3]; n]));
    let ec = tape.constant(tensor(&vec![vec![0.2, 0.5, 0.1]]));
    let xv = tape.constant(tensor(&rand_mat(&mut rng, n, 4)));
    let tv = tape.constant(tensor(&rand_mat(&mut rng, 4, 2)));
    let (a_in, a_out) = gwt_factors(&mut tape, ev, ec, OutNorm::NodeDim).unwrap();
    assert!(tape.value(a_in).data().iter().chain(tape.value(a_out).data()).all(|&v| (v - 1.0 / n as f64).abs() < 1e-15));
    let z = gwt_agcn_forward(&mut tape, ev, ec, xv, tv, OutNorm::NodeDim).unwrap();
    let z = to_mat(tape.value(z));
    assert!(z.iter().all(|r| r == &z[0]));

    let (_, ones) = gwt_factors(&mut tape, ev, ec, OutNorm::PerRow).unwrap();
    assert!(tape.value(ones).data().iter().all(|&v| v == 1.0));
}

#[test]
fn averaged_center_examples() {
    let e = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    assert_eq!(averaged_center(&e).unwrap().data(), &[2.0, 3.0]);
    let one = Tensor::from_rows(&[[0.25, -1.5, 7.0]]).unwrap();
    assert_eq!(averaged_center(&one).unwrap().data(), one.data());
    let swapped = Tensor::from_rows(&[[3.0, 4.0], [1.0, 2.0]]).unwrap();
    assert_eq!(averaged_center(&swapped).unwrap(), averaged_center(&e).unwrap());
}

#[test]
fn all_zero_scores_give_uniform_weights() {
    let n = 5;
    let mut tape = Tape::new();
    // Opposite-sign embeddings make every score non-positive.
    let ev = tape.constant(tensor(&vec![vec![1.0, 1.0]; n]));
    let ec = tape.constant(tensor(&vec![vec![-1.0, -1.0]]));
    let (a_in, a_out) = gwt_factors(&mut tape, ev, ec, OutNorm::NodeDim).unwrap();
    for v in tape.value(a_in).data().iter().chain(tape.value(a_out).data()) {
        assert!((v - 0.2).abs() < 1e-15);
    }
    let z = tape.constant(Tensor::zeros(&[n, 2]));
    let a = dense_adjacency(&mut tape, z).unwrap();
    assert!(tape.value(a).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
}

fn layer(kind: SpatialKind, n: usize, seed: u64) -> (SpatialLayer, ParamStore) {
    let mut spec = SpatialLayerSpec::new(kind, n, 3, 2, 3);
    spec.center = n / 2;
    let mut store = ParamStore::new();
    let l = SpatialLayer::init(
        spec,
        "s",
        &mut store,
        &mut stream_rng(seed, Stream::Params),
        &mut stream_rng(seed, Stream::CenterEmbedding),
    )
    .unwrap();
    (l, store)
}

#[test]
fn every_variant_has_global_receptive_field() {
    for kind in [SpatialKind::TwoLayerStar, SpatialKind::DirectedStar, SpatialKind::GwtFactored] {
        for n in [2usize, 5, 16] {
            let (l, store) = layer(kind, n, n as u64);
            let mut rng = seeded(14);
            let x = rand_mat(&mut rng, n, 2);
            let run = |x: &Mat| {
                let mut tape = Tape::inference();
                let p = store.bind(&mut tape);
                let xv = tape.constant(tensor(x));
                let z = l.forward(&mut tape, &p, xv).unwrap();
                to_mat(tape.value(z))
            };
            let base = run(&x);
            for v in 0..n {
                let mut xp = x.clone();
                xp[v][0] += 0.5;
                let z = run(&xp);
                for u in 0..n {
                    assert!(z[u].iter().zip(&base[u]).any(|(a, b)| a != b), "{kind}: X[{v}] does not reach Z[{u}]");
                }
            }
        }
    }
}

#[test]
fn gradients_through_every_variant() {
    for kind in SpatialKind::ALL {
        for seed in 0..10u64 {
            let n = 3 + (seed as usize % 6);
            let (l, store) = layer(kind, n, seed);
            let mut rng = seeded(seed + 100);
            let x = tensor(&rand_mat(&mut rng, 2 * n, 2));
            let params: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
            let err = grad_check_many(
                |tape, vars| {
                    let p = Bound::from_vars(vars.to_vec());
                    let xv = tape.constant(x.clone());
                    let z = l.forward(tape, &p, xv)?;
                    let w = tape.constant(Tensor::from_fn(tape.value(z).shape(), |i| ((i * 7 % 5) as f64 - 2.0) / 3.0));
                    let y = tape.mul(z, w)?;
                    tape.sum_all(y)
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn gwt_mae_gradient_check() {
    let n = 8;
    let (l, store) = layer(SpatialKind::GwtFactored, n, 21);
    let mut rng = seeded(22);
    let x = tensor(&rand_mat(&mut rng, n, 2));
    let target = tensor(&rand_mat(&mut rng, n, 3));
    let params: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
    let err = grad_check_many(
        |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let xv = tape.constant(x.clone());
            let z = l.forward(tape, &p, xv)?;
            let y = tape.constant(target.clone());
            let diff = tape.sub(z, y)?;
            let abs = tape.abs(diff)?;
            tape.mean_all(abs)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn factored_layer_never_materializes_n_squared() {
    let n = 4096;
    for (kind, expected) in [(SpatialKind::GwtFactored, 0), (SpatialKind::DenseAgcn, 1)] {
        let (l, store) = layer(kind, n, 1);
        let counter = AllocCounter::new();
        let _scope = counter.install();
        counter.watch_at_least(n * n);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xv = tape.constant(Tensor::full(&[n, 2], 0.5));
        l.forward(&mut tape, &p, xv).unwrap();
        assert_eq!(counter.watched_allocs(), expected, "{kind}");
    }
}

#[test]
fn parameter_counts() {
    let base = |kind| SpatialLayerSpec::new(kind, 10, 4, 3, 5);
    let dense = base(SpatialKind::DenseAgcn).num_params();
    assert_eq!(dense, 10 * 4 + 3 * 5);
    assert_eq!(base(SpatialKind::GwtFactored).num_params(), dense + 4);
    let mut no_t2 = base(SpatialKind::TwoLayerStar);
    let with_t2 = no_t2.num_params();
    no_t2.theta2 = false;
    assert_eq!(with_t2 - no_t2.num_params(), 25);
    for kind in SpatialKind::ALL {
        let (_, store) = layer(kind, 6, 0);
        let mut spec = SpatialLayerSpec::new(kind, 6, 3, 2, 3);
        spec.center = 3;
        assert_eq!(store.num_scalars(), spec.num_params(), "{kind}");
    }
}

#[test]
fn averaged_and_random_centers_share_other_parameters() {
    let mk = |origin| {
        let mut spec = SpatialLayerSpec::new(SpatialKind::GwtFactored, 6, 3, 2, 2);
        spec.center_origin = origin;
        let mut store = ParamStore::<f64>::new();
        let l = SpatialLayer::init(spec, "s", &mut store, &mut stream_rng(5, Stream::Params), &mut stream_rng(5, Stream::CenterEmbedding))
            .unwrap();
        (l, store)
    };
    let (la, sa) = mk(CenterOrigin::Averaged);
    let (_, sr) = mk(CenterOrigin::Random);
    let ec = la.center_embedding().unwrap();
    assert_eq!(sa.get(ec), &averaged_center(sa.get(la.embedding())).unwrap());
    for id in sa.ids().filter(|&id| id != ec) {
        assert_eq!(sa.get(id), sr.get(id));
    }
    assert_ne!(sa.get(ec), sr.get(ec));
}

proptest! {
    #[test]
    fn adjacency_rows_are_stochastic(n in 2usize..12, seed in 0u64..500, scale in 0.1f64..5.0) {
        let mut rng = seeded(seed);
        let e: Mat = rand_mat(&mut rng, n, 3).into_iter().map(|r| r.into_iter().map(|v| v * scale).collect()).collect();
        let e2 = rand_mat(&mut rng, n, 3);
        let mut tape = Tape::new();
        let ev = tape.constant(tensor(&e));
        let e2v = tape.constant(tensor(&e2));
        let d = dense_adjacency(&mut tape, ev).unwrap();
        let g = gwnet_adjacency(&mut tape, ev, e2v).unwrap();
        for a in [d, g] {
            for row in to_mat(tape.value(a)) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
        let star = build_star(n, seed as usize % n).unwrap();
        for dir in [Direction::Gather, Direction::Scatter, Direction::Undirected] {
            let adj = star_gat_adjacency(&mut tape, &star, ev, None, dir, SelfLoops::Center).unwrap();
            for (r, row) in to_mat(&adj.to_dense(&tape)).iter().enumerate() {
                if !adj.csr.row_range(r).is_empty() {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
