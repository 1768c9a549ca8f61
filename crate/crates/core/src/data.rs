//! Synthetic spatio-temporal series, CSV ingestion, sliding windows,
//! 6:2:2 splitting and z-score normalization.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Weight of the graph-diffusion term.
    pub diffusion_alpha: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    /// Period of the per-node seasonal forcing, in steps.
    pub season_period: f64,
    /// Constant initial frame; `None` starts every node at `sin(phase)`.
    pub initial: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { diffusion_alpha: 0.8, noise_sigma: 0.1, season_period: 24.0, initial: None }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.diffusion_alpha) {
            return Err(Error::Invalid(format!("diffusion_alpha {} outside [0, 1]", self.diffusion_alpha)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Invalid(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma)));
        }
        if !(self.season_period > 0.0 && self.season_period.is_finite()) {
            return Err(Error::Invalid(format!("season_period {} must be positive", self.season_period)));
        }
        Ok(())
    }
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Frames `[T, N, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub frames: Tensor,
    pub interval_desc: String,
    pub norm: Option<Norm>,
}

impl FrameSeries {
    pub fn new(frames: Tensor, interval_desc: impl Into<String>) -> Result<Self> {
        if frames.rank() != 3 {
            return Err(Error::Invalid(format!("frames must be [T, N, D], got {:?}", frames.shape())));
        }
        Ok(FrameSeries { frames, interval_desc: interval_desc.into(), norm: None })
    }

    /// `(T, N, D)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.frames.shape();
        (s[0], s[1], s[2])
    }

    pub fn at(&self, t: usize, node: usize, ch: usize) -> f64 {
        let (_, n, d) = self.dims();
        self.frames.data()[(t * n + node) * d + ch]
    }
}

/// Row-normalized adjacency (with self-loops) of a random geometric graph
/// on the unit square whose radius targets a mean degree of about 6.
pub fn hidden_graph(n: usize, seed: u64) -> Vec<Vec<(usize, f64)>> {
    let mut rng = stream_rng(seed, Stream::Data);
    let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let r2 = 6.0 / ((n - 1) as f64 * PI);
    (0..n)
        .map(|u| {
            let nbrs: Vec<usize> = (0..n)
                .filter(|&v| {
                    let (dx, dy) = (pos[u].0 - pos[v].0, pos[u].1 - pos[v].1);
                    dx * dx + dy * dy <= r2
                })
                .collect();
            let w = 1.0 / nbrs.len() as f64;
            nbrs.into_iter().map(|v| (v, w)).collect()
        })
        .collect()
}

/// `X_{t+1} = a P X_t + (1 - a) sin(2 pi t / period + phi) + eps` over a
/// hidden random geometric graph, one channel.
pub fn generate_synthetic(n: usize, t: usize, seed: u64, cfg: &SyntheticConfig) -> Result<FrameSeries> {
    if n < 4 || t < 48 {
        return Err(Error::Invalid(format!("synthetic data needs n >= 4 and t >= 48, got n={n}, t={t}")));
    }
    cfg.validate()?;
    let p = hidden_graph(n, seed);
    let mut rng = stream_rng(seed, Stream::Data);
    // Skip the draws used for node positions so phases are independent.
    for _ in 0..2 * n {
        rng.random::<f64>();
    }
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let a = cfg.diffusion_alpha;
    let mut data = Vec::with_capacity(t * n);
    let mut x: Vec<f64> = match cfg.initial {
        Some(c) => vec![c; n],
        None => phase.iter().map(|ph| ph.sin()).collect(),
    };
    data.extend_from_slice(&x);
    for step in 0..t - 1 {
        let season = 2.0 * PI * step as f64 / cfg.season_period;
        let next: Vec<f64> = (0..n)
            .map(|u| {
                let diffused: f64 = p[u].iter().map(|&(v, w)| w * x[v]).sum();
                let eps = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                a * diffused + (1.0 - a) * (season + phase[u]).sin() + eps
            })
            .collect();
        data.extend_from_slice(&next);
        x = next;
    }
    FrameSeries::new(Tensor::new(&[t, n, 1], data)?, format!("synthetic, 1 step (period {})", cfg.season_period))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Reads a wide CSV with header `t,node_0,...,node_{N-1}`, one row per step.
pub fn load_csv(path: &Path) -> Result<FrameSeries> {
    read_csv(File::open(path)?, path)
}

pub fn read_csv<R: Read>(r: R, path: &Path) -> Result<FrameSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(BufReader::new(r));
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let n = header.len().saturating_sub(1);
    if header.get(0).map(str::trim) != Some("t") || n == 0 {
        return Err(parse_err(path, 1, "expected header t,node_0,...,node_{N-1}"));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name.trim() != format!("node_{i}") {
            return Err(parse_err(path, 1, format!("column {} should be node_{i}, found {name:?}", i + 1)));
        }
    }
    let mut data = Vec::new();
    let mut steps = 0;
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", n + 1, rec.len())));
        }
        for cell in rec.iter().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| parse_err(path, line, format!("non-numeric cell {cell:?}")))?;
            data.push(v);
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(parse_err(path, 2, "no data rows"));
    }
    FrameSeries::new(Tensor::new(&[steps, n, 1], data)?, "from csv")
}

/// Writes channel 0 in the wide format read by [`load_csv`].
pub fn write_csv(path: &Path, fs: &FrameSeries) -> Result<()> {
    write_csv_to(BufWriter::new(File::create(path)?), fs)
}

pub fn write_csv_to<W: Write>(w: W, fs: &FrameSeries) -> Result<()> {
    let (t, n, _) = fs.dims();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("node_{i}")));
    wtr.write_record(&header)?;
    for step in 0..t {
        let mut row = vec![step.to_string()];
        row.extend((0..n).map(|u| fs.at(step, u, 0).to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn num_windows(t: usize, t_in: usize, t_out: usize) -> Result<usize> {
    if t_in == 0 || t_out == 0 || t < t_in + t_out {
        return Err(Error::Invalid(format!("T = {t} is too short for {t_in} input and {t_out} output steps")));
    }
    Ok(t - t_in - t_out + 1)
}

/// Window-index split: `[0, train_end)`, `[train_end, val_end)`,
/// `[val_end, num_windows)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train_end: usize,
    pub val_end: usize,
    pub num_windows: usize,
}

impl SplitIndex {
    /// 6:2:2 by floor division, remainder to test.
    pub fn ratio_622(num_windows: usize) -> Result<Self> {
        let train_end = num_windows * 6 / 10;
        let val_end = train_end + num_windows * 2 / 10;
        if !(0 < train_end && train_end < val_end && val_end < num_windows) {
            return Err(Error::Invalid(format!("{num_windows} windows are too few for a 6:2:2 split")));
        }
        Ok(SplitIndex { train_end, val_end, num_windows })
    }

    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn val(&self) -> Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self) -> Range<usize> {
        self.val_end..self.num_windows
    }
}

/// Inputs `[B, T_in, N, D]` and raw targets `[B, T_out, N, D]`.
#[derive(Debug, Clone)]
pub struct ForecastBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
}

/// Stride-1 windows over a series with inputs normalized by statistics
/// fitted on the training windows.
#[derive(Debug, Clone)]
pub struct Windows {
    raw: FrameSeries,
    normalized: Vec<f64>,
    pub t_in: usize,
    pub t_out: usize,
    pub split: SplitIndex,
    pub norm: Norm,
}

pub fn make_windows(fs: &FrameSeries, t_in: usize, t_out: usize) -> Result<Windows> {
    let (t, n, d) = fs.dims();
    let w = num_windows(t, t_in, t_out)?;
    let split = SplitIndex::ratio_622(w)?;
    // Step s is an input of the training windows max(0, s-t_in+1)..=min(s, train_end-1).
    let mut sum = vec![0.0; d];
    let mut count = 0.0;
    let multiplicity = |s: usize| -> f64 {
        let lo = s.saturating_sub(t_in - 1);
        let hi = s.min(split.train_end - 1);
        if hi >= lo { (hi - lo + 1) as f64 } else { 0.0 }
    };
    for s in 0..split.train_end - 1 + t_in {
        let m = multiplicity(s);
        for u in 0..n {
            for (c, acc) in sum.iter_mut().enumerate() {
                *acc += m * fs.at(s, u, c);
            }
        }
        count += m * n as f64;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let mut var = vec![0.0; d];
    for s in 0..split.train_end - 1 + t_in {
        let m = multiplicity(s);
        for u in 0..n {
            for (c, acc) in var.iter_mut().enumerate() {
                let e = fs.at(s, u, c) - mean[c];
                *acc += m * e * e;
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    let normalized = fs.frames.data().iter().enumerate().map(|(i, &v)| (v - mean[i % d]) / std[i % d]).collect();
    let norm = Norm { mean, std };
    let mut raw = fs.clone();
    raw.norm = Some(norm.clone());
    Ok(Windows { raw, normalized, t_in, t_out, split, norm })
}

impl Windows {
    pub fn series(&self) -> &FrameSeries {
        &self.raw
    }

    /// `(N, D)`.
    pub fn dims(&self) -> (usize, usize) {
        let (_, n, d) = self.raw.dims();
        (n, d)
    }

    pub fn batch(&self, windows: &[usize]) -> Result<ForecastBatch> {
        let (n, d) = self.dims();
        let frame = n * d;
        let mut inputs = Vec::with_capacity(windows.len() * self.t_in * frame);
        let mut targets = Vec::with_capacity(windows.len() * self.t_out * frame);
        for &w in windows {
            if w >= self.split.num_windows {
                return Err(Error::Invalid(format!("window {w} out of range {}", self.split.num_windows)));
            }
            inputs.extend_from_slice(&self.normalized[w * frame..(w + self.t_in) * frame]);
            let start = w + self.t_in;
            targets.extend_from_slice(&self.raw.frames.data()[start * frame..(start + self.t_out) * frame]);
        }
        let b = windows.len();
        Ok(ForecastBatch {
            inputs: Tensor::new(&[b, self.t_in, n, d], inputs)?,
            targets: Tensor::new(&[b, self.t_out, n, d], targets)?,
        })
    }
}
