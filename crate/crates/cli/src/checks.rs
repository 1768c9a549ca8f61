//! Equivalence and gradient checks against independent dense oracles.

use gwt_core::graph::build_star;
use gwt_core::models::{ModelConfig, ModelKind};
use gwt_core::params::{Bound, ParamStore};
use gwt_core::rng::{stream_rng, Stream};
use gwt_core::spatial::{
    directed_star_forward, gwt_agcn_forward, k_layer_subgraph_forward, star_gat_adjacency, two_layer_star_forward,
    Direction, OutNorm, SelfLoops, SpatialKind, SpatialLayer, SpatialLayerSpec,
};
use gwt_core::tensor::{grad_check_many, Tape, Tensor};
use gwt_core::Result;
use rand::RngExt;
use serde::Serialize;

type Mat = Vec<Vec<f64>>;

fn rand_mat(rng: &mut impl RngExt, r: usize, c: usize, scale: f64) -> Mat {
    (0..r).map(|_| (0..c).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let (k, m) = (b.len(), b[0].len());
    a.iter().map(|row| (0..m).map(|j| (0..k).map(|t| row[t] * b[t][j]).sum()).collect()).collect()
}

fn to_mat(t: &Tensor) -> Mat {
    let (r, c) = t.dims2().expect("matrix");
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

fn max_dev(a: &Mat, b: &Mat) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
    s.iter().map(|v| (v - m).exp() / z).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(a_out a_in) X Theta` with the N x N rank-1 matrix written out.
pub fn rank1_oracle(e: &Mat, ec: &[f64], x: &Mat, theta: &Mat) -> Mat {
    let scores: Vec<f64> = e.iter().map(|row| dot(ec, row).max(0.0)).collect();
    let a_in = softmax(&scores);
    let a_out = softmax(&scores);
    let a: Mat = a_out.iter().map(|&o| a_in.iter().map(|&i| o * i).collect()).collect();
    mm(&mm(&a, x), theta)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Worst {
    pub check: &'static str,
    pub trial: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivReport {
    pub n: usize,
    pub trials: usize,
    pub max_dev_rank1: f64,
    pub max_dev_two_layer_vs_k2: f64,
    pub max_dev_directed_vs_dense: f64,
    pub worst: Worst,
    pub tol: f64,
    pub pass: bool,
}

/// Factored layer versus the materialized rank-1 product, two-layer star
/// versus the K = 2 subgraph form, and directed star versus `U (L X Theta)`
/// with both matrices densified.
pub fn equiv_check(n: usize, trials: usize, tol: f64, seed: u64) -> Result<EquivReport> {
    let mut rng = stream_rng(seed, Stream::Check);
    let mut worst = Worst { check: "rank1", trial: 0, deviation: 0.0 };
    let mut devs = [0.0f64; 3];
    let names = ["rank1", "two-layer-vs-k2", "directed-vs-dense"];
    let star = build_star(n, 0)?;
    for trial in 0..trials {
        let d = rng.random_range(1..6);
        let din = rng.random_range(1..5);
        let dout = rng.random_range(1..5);
        let e = rand_mat(&mut rng, n, d, 2.0);
        let ec = rand_mat(&mut rng, 1, d, 1.0);
        let x = rand_mat(&mut rng, n, din, 1.0);
        let t1 = rand_mat(&mut rng, din, dout, 1.0);
        let t2 = rand_mat(&mut rng, dout, dout, 1.0);

        let mut tape = Tape::inference();
        let ev = tape.constant(Tensor::from_rows(&e)?);
        let cv = tape.constant(Tensor::from_rows(&ec)?);
        let xv = tape.constant(Tensor::from_rows(&x)?);
        let t1v = tape.constant(Tensor::from_rows(&t1)?);
        let t2v = tape.constant(Tensor::from_rows(&t2)?);

        let z = gwt_agcn_forward(&mut tape, ev, cv, xv, t1v, OutNorm::NodeDim)?;
        let dev0 = max_dev(&to_mat(tape.value(z)), &rank1_oracle(&e, &ec[0], &x, &t1));

        let adj = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Undirected, SelfLoops::All)?;
        let z2 = two_layer_star_forward(&mut tape, &adj, xv, t1v, Some(t2v))?;
        let a = tape.constant(adj.to_dense(&tape));
        let k2 = k_layer_subgraph_forward(&mut tape, a, xv, &[t1v, t2v])?;
        let dev1 = tape.value(z2).max_abs_diff(tape.value(k2))?;

        let g = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Gather, SelfLoops::Center)?;
        let s = star_gat_adjacency(&mut tape, &star, ev, None, Direction::Scatter, SelfLoops::Center)?;
        let zd = directed_star_forward(&mut tape, &g, &s, xv, t1v)?;
        let (l, u) = (to_mat(&g.to_dense(&tape)), to_mat(&s.to_dense(&tape)));
        let dev2 = max_dev(&to_mat(tape.value(zd)), &mm(&u, &mm(&mm(&l, &x), &t1)));

        for (k, dev) in [dev0, dev1, dev2].into_iter().enumerate() {
            devs[k] = devs[k].max(dev);
            if dev > worst.deviation || dev.is_nan() {
                worst = Worst { check: names[k], trial, deviation: dev };
            }
        }
    }
    let pass = devs.iter().all(|&d| d < tol);
    Ok(EquivReport {
        n,
        trials,
        max_dev_rank1: devs[0],
        max_dev_two_layer_vs_k2: devs[1],
        max_dev_directed_vs_dense: devs[2],
        worst,
        tol,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradRecord {
    pub target: String,
    pub seed: u64,
    pub n: usize,
    pub max_rel_err: f64,
}

fn rand_tensor(rng: &mut impl RngExt, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| scale * rng.random_range(-1.0..1.0))
}

/// Gradient check of one spatial layer on an `n`-node instance with two
/// stacked graph signals.
pub fn spatial_grad_error(kind: SpatialKind, n: usize, seed: u64, eps: f64) -> Result<f64> {
    let mut spec = SpatialLayerSpec::new(kind, n, 3, 2, 3);
    spec.center = n / 2;
    let mut store = ParamStore::new();
    let layer = SpatialLayer::init(
        spec,
        "s",
        &mut store,
        &mut stream_rng(seed, Stream::Params),
        &mut stream_rng(seed, Stream::CenterEmbedding),
    )?;
    let mut rng = stream_rng(seed, Stream::Check);
    let x = rand_tensor(&mut rng, &[2 * n, 2], 1.0);
    let params: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
    grad_check_many(
        |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let xv = tape.constant(x.clone());
            let z = layer.forward(tape, &p, xv)?;
            let w = tape.constant(Tensor::from_fn(tape.value(z).shape(), |i| ((i * 7 % 5) as f64 - 2.0) / 3.0));
            let y = tape.mul(z, w)?;
            tape.sum_all(y)
        },
        &params,
        eps,
    )
}

/// Small model instance for gradient checks: 4 nodes, short horizons.
pub fn grad_model(model: ModelKind, spatial: SpatialKind) -> ModelConfig {
    let mut cfg = ModelConfig::new(model, spatial, 4, 1, 3, 1, 2);
    match &mut cfg {
        ModelConfig::Agcrn(_) => cfg.set_horizons(3, 2),
        ModelConfig::Gwnet(g) => {
            g.dilations = vec![1, 2];
            cfg.set_horizons(4, 2);
        }
    }
    cfg
}

/// Gradient check over every parameter of a model, at random parameter
/// values (zero biases would put ReLUs exactly on their kinks).
pub fn model_grad_error(cfg: &ModelConfig, seed: u64, eps: f64) -> Result<f64> {
    let (model, store) = cfg.build::<f64>(seed)?;
    let (n, t_in, t_out, d_in, d_out) = cfg.dims();
    let mut rng = stream_rng(seed, Stream::Check);
    let x = rand_tensor(&mut rng, &[2, t_in, n, d_in], 1.0);
    let target = rand_tensor(&mut rng, &[2, t_out, n, d_out], 1.0);
    let params: Vec<Tensor> = store.iter().map(|(_, t)| rand_tensor(&mut rng, t.shape(), 0.5)).collect();
    grad_check_many(
        |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let y = model.forward(tape, &p, &x)?;
            let t = tape.constant(target.clone());
            let d = tape.sub(y, t)?;
            let d = tape.square(d)?;
            tape.mean_all(d)
        },
        &params,
        eps,
    )
}

/// Every spatial kind on `n <= n_max` instances and both models with every
/// spatial kind, `trials` seeds each.
pub fn grad_suite(n_max: usize, trials: u64, eps: f64) -> Result<Vec<GradRecord>> {
    let mut out = Vec::new();
    for kind in SpatialKind::ALL {
        for seed in 0..trials {
            let n = 3 + (seed as usize) % (n_max.max(3) - 2);
            out.push(GradRecord { target: format!("spatial/{kind}"), seed, n, max_rel_err: spatial_grad_error(kind, n, seed, eps)? });
        }
    }
    for model in [ModelKind::AgcrnLite, ModelKind::GwnetLite] {
        for kind in SpatialKind::ALL {
            let cfg = grad_model(model, kind);
            for seed in 0..trials {
                let err = model_grad_error(&cfg, seed, eps)?;
                out.push(GradRecord { target: format!("{model}/{kind}"), seed, n: cfg.dims().0, max_rel_err: err });
            }
        }
    }
    Ok(out)
}
