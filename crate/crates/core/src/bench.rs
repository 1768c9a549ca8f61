//! Wall-clock and allocation benchmarks of a single spatial layer, plus
//! log-log slope fitting over a sweep of node counts.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::rng::{stream_rng, Stream};
use crate::spatial::{SpatialKind, SpatialLayer, SpatialLayerSpec};
use crate::tensor::{AllocCounter, Tape, Tensor};

pub const WARMUP: usize = 2;
pub const MIN_REPS: usize = 5;
pub const MIN_N: usize = 64;
/// Default memory budget for one measurement.
pub const DEFAULT_BUDGET_BYTES: u64 = 3 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub kind: SpatialKind,
    pub n: usize,
    pub d: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub reps: usize,
    pub median_forward_s: f64,
    pub median_backward_s: f64,
    pub peak_floats: usize,
}

/// Upper estimate of the floats live during one forward and backward.
pub fn estimate_floats(kind: SpatialKind, n: usize, d: usize, d_in: usize, d_out: usize) -> u64 {
    let (n, w) = (n as u64, d.max(d_in).max(d_out) as u64);
    let linear = 16 * n * w + 4 * (d_in * d_out) as u64;
    match kind {
        // A, its gradient and the ReLU/softmax scratch of one extra N x N.
        SpatialKind::DenseAgcn => 3 * n * n + linear,
        SpatialKind::GwnetDual => 3 * n * n + 2 * linear,
        _ => 4 * linear,
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 { xs[k / 2] } else { 0.5 * (xs[k / 2 - 1] + xs[k / 2]) }
}

fn build(kind: SpatialKind, n: usize, d: usize, d_in: usize, d_out: usize, seed: u64) -> Result<(SpatialLayer, ParamStore<f64>, Tensor)> {
    let spec = SpatialLayerSpec::new(kind, n, d, d_in, d_out);
    let mut rng = stream_rng(seed, Stream::Bench);
    let mut center_rng = stream_rng(seed, Stream::CenterEmbedding);
    let mut store = ParamStore::new();
    let layer = SpatialLayer::init(spec, "bench", &mut store, &mut rng, &mut center_rng)?;
    let x = crate::params::uniform_init(&mut rng, &[n, d_in], 1);
    Ok((layer, store, x))
}

fn run_once(layer: &SpatialLayer, store: &ParamStore<f64>, x: &Tensor) -> Result<(f64, f64)> {
    let t0 = Instant::now();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let z = layer.forward(&mut tape, &p, xv)?;
    let loss = tape.sum_all(z)?;
    let fwd = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let grads = tape.backward(loss)?;
    let bwd = t1.elapsed().as_secs_f64();
    drop(grads);
    Ok((fwd, bwd))
}

/// Peak floats of one instrumented forward and backward, counting
/// parameters, input, intermediates and gradients.
pub fn measure_peak_floats(kind: SpatialKind, n: usize, d: usize, d_in: usize, d_out: usize, seed: u64) -> Result<usize> {
    let counter = AllocCounter::new();
    let _scope = counter.install();
    let (layer, store, x) = build(kind, n, d, d_in, d_out, seed)?;
    run_once(&layer, &store, &x)?;
    Ok(counter.peak_floats())
}

pub fn time_layer(kind: SpatialKind, n: usize, d: usize, d_in: usize, d_out: usize, reps: usize) -> Result<BenchRecord> {
    time_layer_with_budget(kind, n, d, d_in, d_out, reps, DEFAULT_BUDGET_BYTES, 0)
}

/// Median forward and backward wall time over `reps` runs after
/// [`WARMUP`] discarded ones. Fails with `OutOfMemory` before allocating
/// when the estimate exceeds `budget_bytes`.
#[allow(clippy::too_many_arguments)]
pub fn time_layer_with_budget(
    kind: SpatialKind,
    n: usize,
    d: usize,
    d_in: usize,
    d_out: usize,
    reps: usize,
    budget_bytes: u64,
    seed: u64,
) -> Result<BenchRecord> {
    if n < MIN_N || reps < MIN_REPS || d == 0 || d_in == 0 || d_out == 0 {
        return Err(Error::Invalid(format!("bench needs n >= {MIN_N}, reps >= {MIN_REPS} and positive widths")));
    }
    let needed = estimate_floats(kind, n, d, d_in, d_out) * 8;
    if needed > budget_bytes {
        return Err(Error::OutOfMemory { n, needed_bytes: needed, budget_bytes });
    }
    let peak_floats = measure_peak_floats(kind, n, d, d_in, d_out, seed)?;
    let (layer, store, x) = build(kind, n, d, d_in, d_out, seed)?;
    for _ in 0..WARMUP {
        run_once(&layer, &store, &x)?;
    }
    let (mut fwd, mut bwd) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for _ in 0..reps {
        let (f, b) = run_once(&layer, &store, &x)?;
        fwd.push(f);
        bwd.push(b);
    }
    Ok(BenchRecord {
        kind,
        n,
        d,
        d_in,
        d_out,
        reps,
        median_forward_s: median(fwd),
        median_backward_s: median(bwd),
        peak_floats,
    })
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn fit_loglog_slope(points: &[(usize, f64)]) -> Result<f64> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 || distinct[0] == 0 || distinct[distinct.len() - 1] < 8 * distinct[0] {
        return Err(Error::Invalid(format!("slope fit needs >= 4 distinct n spanning >= 8x, got {distinct:?}")));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Invalid(format!("non-positive time {} at n = {}", p.1, p.0)));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Forward-time slope per kind, over the records of that kind.
pub fn slopes(records: &[BenchRecord]) -> Result<BTreeMap<String, f64>> {
    let mut by_kind: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        by_kind.entry(r.kind.as_str().to_string()).or_default().push((r.n, r.median_forward_s));
    }
    by_kind.into_iter().map(|(k, pts)| Ok((k, fit_loglog_slope(&pts)?))).collect()
}

/// Header `kind,n,d,median_forward_s,median_backward_s,peak_floats`.
pub fn write_records_csv<W: Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["kind", "n", "d", "median_forward_s", "median_backward_s", "peak_floats"])?;
    for r in records {
        wtr.write_record([
            r.kind.as_str().to_string(),
            r.n.to_string(),
            r.d.to_string(),
            format!("{:e}", r.median_forward_s),
            format!("{:e}", r.median_backward_s),
            r.peak_floats.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
