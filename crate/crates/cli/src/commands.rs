//! Subcommand implementations. Every output path is relative to --out-dir.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use gwt_core::bench::{self, BenchRecord};
use gwt_core::data::{generate_synthetic, load_csv, make_windows, SyntheticConfig, Windows};
use gwt_core::models::{config_hash, count_params, save_checkpoint, ModelConfig};
use gwt_core::spatial::SpatialKind;
use gwt_core::spectral::verify_order;
use gwt_core::train::{
    init_ablation, perturb_sweep, save_curve, train, AdamConfig, SweepBase, TrainConfig,
};
use gwt_core::Error;
use serde::Serialize;

use crate::args::*;
use crate::checks::{equiv_check, grad_suite};
use crate::config::echo;
use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";

fn prepare<A: Serialize>(common: &Common, args: &A) -> Result<(), CliError> {
    fs::create_dir_all(&common.out_dir)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot create {}: {e}", common.out_dir.display())))?;
    write_text(&common.out_dir.join(RESOLVED_CONFIG), &echo(args)).map_err(CliError::Runtime)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Maps library errors from argument validation to usage errors.
fn classify(e: Error) -> CliError {
    match e {
        Error::Invalid(msg) => CliError::Usage(msg),
        other => CliError::Runtime(other.into()),
    }
}

pub fn spectral_verify(a: &SpectralArgs) -> Result<(), CliError> {
    if !(a.tol >= 0.0) {
        return Err(usage("--tol must be >= 0"));
    }
    prepare(&a.common, a)?;
    let mut reports = Vec::new();
    let mut first_fail = None;
    for n in 3..=a.n_max {
        let r = verify_order(n, a.tol).map_err(|e| CliError::Runtime(e.into()))?;
        println!("n={n} {}", if r.pass { "PASS" } else { "FAIL" });
        if !r.pass && first_fail.is_none() {
            first_fail = Some(n);
        }
        reports.push(r);
    }
    write_json(&a.common.out_dir.join("spectral_report.json"), &reports)?;
    match first_fail {
        Some(n) => Err(CliError::Check(format!("spectral checks failed, first at n = {n}"))),
        None => Ok(()),
    }
}

pub fn equiv(a: &EquivArgs) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(usage("--trials must be >= 1"));
    }
    if a.n < 2 {
        return Err(usage("--n must be >= 2"));
    }
    prepare(&a.common, a)?;
    let r = equiv_check(a.n, a.trials, a.tol, a.common.seed).map_err(classify)?;
    write_json(&a.common.out_dir.join("equiv_report.json"), &r)?;
    println!(
        "rank1 {:.3e}  two-layer-vs-k2 {:.3e}  directed-vs-dense {:.3e}  {}",
        r.max_dev_rank1,
        r.max_dev_two_layer_vs_k2,
        r.max_dev_directed_vs_dense,
        if r.pass { "PASS" } else { "FAIL" }
    );
    if r.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "worst deviation {:e} in {} (trial {}) exceeds {:e}",
            r.worst.deviation, r.worst.check, r.worst.trial, a.tol
        )))
    }
}

#[derive(Serialize)]
struct GradReport<'a> {
    eps: f64,
    tol: f64,
    worst: f64,
    pass: bool,
    records: &'a [crate::checks::GradRecord],
}

pub fn grad_check(a: &GradArgs) -> Result<(), CliError> {
    if a.n_max < 3 || a.n_max > 8 || a.trials == 0 || !(a.eps > 0.0) {
        return Err(usage("grad-check needs 3 <= --n-max <= 8, --trials >= 1 and --eps > 0"));
    }
    prepare(&a.common, a)?;
    let records = grad_suite(a.n_max, a.trials, a.eps).map_err(classify)?;
    let worst = records.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let pass = records.iter().all(|r| r.max_rel_err < a.tol);
    write_json(&a.common.out_dir.join("grad_check.json"), &GradReport { eps: a.eps, tol: a.tol, worst, pass, records: &records })?;
    println!("{} checks, worst relative error {worst:.3e}: {}", records.len(), if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!("worst relative error {worst:e} exceeds {:e}", a.tol)))
    }
}

/// Loads or generates the series and cuts it into windows.
fn load_windows(e: &ExperimentArgs, seed: u64, out_dir: &Path) -> Result<Windows, CliError> {
    let fs = match &e.data {
        Some(path) => load_csv(path).map_err(|err| match err {
            Error::Io(io) => usage(format!("cannot read {}: {io}", path.display())),
            other => CliError::Runtime(other.into()),
        })?,
        None => {
            let cfg = SyntheticConfig {
                diffusion_alpha: e.diffusion_alpha,
                noise_sigma: e.noise_sigma,
                season_period: e.season_period,
                initial: None,
            };
            let fs = generate_synthetic(e.n, e.t, seed, &cfg).map_err(classify)?;
            #[derive(Serialize)]
            struct Echo<'a> {
                n: usize,
                t: usize,
                seed: u64,
                #[serde(flatten)]
                cfg: &'a SyntheticConfig,
            }
            write_json(&out_dir.join("synthetic_config.json"), &Echo { n: e.n, t: e.t, seed, cfg: &cfg })?;
            fs
        }
    };
    make_windows(&fs, e.t_in, e.t_out).map_err(classify)
}

fn train_config(e: &ExperimentArgs, seed: u64) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        epochs: e.epochs,
        batch_size: e.batch_size,
        adam: AdamConfig { lr: e.lr, beta1: e.beta1, beta2: e.beta2, eps: e.adam_eps },
        early_stop_patience: e.patience,
        seed,
    };
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn model_config(e: &ExperimentArgs, data: &Windows, spatial: SpatialKind) -> ModelConfig {
    let (n, d) = data.dims();
    let mut m = ModelConfig::new(e.model, spatial, n, d, e.hidden, d, e.embed_dim);
    m.set_horizons(e.t_in, e.t_out);
    m
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: String,
    spatial: String,
    params: usize,
    epochs_run: usize,
    initial_train_loss: f64,
    initial_val_mae: f64,
    best_epoch: usize,
    best_val_mae: f64,
    test: &'a gwt_core::train::MetricsRecord,
    test_per_horizon: &'a [gwt_core::train::MetricsRecord],
}

pub fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    prepare(&a.common, a)?;
    let out = &a.common.out_dir;
    let data = load_windows(&a.exp, a.common.seed, out)?;
    let mut mc = model_config(&a.exp, &data, a.spatial);
    {
        let s = mc.spatial_mut();
        s.center = a.center;
        s.center_origin = a.center_origin;
        s.theta2 = a.theta2;
    }
    mc.validate().map_err(classify)?;
    let tc = train_config(&a.exp, a.common.seed)?;
    let res = train(&mc, &data, &tc).map_err(|e| CliError::Runtime(e.into()))?;
    save_curve(&out.join("curve.csv"), &res.curve)?;
    let hash = config_hash(&mc)?;
    save_checkpoint(&out.join("checkpoint.bin"), &res.best_params, &hash)?;
    let summary = TrainSummary {
        model: mc.kind().to_string(),
        spatial: a.spatial.to_string(),
        params: count_params(&mc),
        epochs_run: res.curve.len(),
        initial_train_loss: res.initial.train_loss,
        initial_val_mae: res.initial.val_mae,
        best_epoch: res.best_epoch,
        best_val_mae: res.best_val_mae,
        test: &res.test,
        test_per_horizon: &res.test_per_horizon,
    };
    write_json(&out.join("metrics.json"), &summary)?;
    println!(
        "{} epochs, best epoch {} (val MAE {:.6}); test MAE {:.6} RMSE {:.6} MAPE {:.3}%",
        res.curve.len(),
        res.best_epoch,
        res.best_val_mae,
        res.test.mae,
        res.test.rmse,
        res.test.mape
    );
    Ok(())
}

#[derive(Serialize)]
struct Skipped {
    kind: String,
    n: usize,
    reason: String,
}

#[derive(Serialize)]
struct BenchSummary {
    d: usize,
    d_in: usize,
    d_out: usize,
    reps: usize,
    slopes: std::collections::BTreeMap<String, Option<f64>>,
    skipped: Vec<Skipped>,
}

#[cfg(target_os = "linux")]
fn pin_to_current_cpu() {
    // SAFETY: plain libc calls on a zero-initialized cpu_set_t owned here.
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu >= 0 {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_SET(cpu as usize, &mut set);
            if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
                log::warn!("could not pin the benchmark thread");
            }
        }
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_current_cpu() {}

pub fn bench_cmd(a: &BenchArgs) -> Result<(), CliError> {
    if a.kinds.0.is_empty() || a.ns.0.is_empty() {
        return Err(usage("--kinds and --ns must be non-empty"));
    }
    if a.reps < bench::MIN_REPS || a.ns.0.iter().any(|&n| n < bench::MIN_N) {
        return Err(usage(format!("bench needs --reps >= {} and every n >= {}", bench::MIN_REPS, bench::MIN_N)));
    }
    prepare(&a.common, a)?;
    pin_to_current_cpu();
    let budget = a.budget_mb.saturating_mul(1 << 20);
    let mut records: Vec<BenchRecord> = Vec::new();
    let mut skipped = Vec::new();
    for &kind in &a.kinds.0 {
        for &n in &a.ns.0 {
            match bench::time_layer_with_budget(kind, n, a.d, a.d_in, a.d_out, a.reps, budget, a.common.seed) {
                Ok(r) => {
                    println!("{kind} n={n}: forward {:.3e} s, backward {:.3e} s, peak {} floats", r.median_forward_s, r.median_backward_s, r.peak_floats);
                    records.push(r);
                }
                Err(e @ Error::OutOfMemory { .. }) => {
                    log::warn!("{kind} n={n}: {e}");
                    skipped.push(Skipped { kind: kind.to_string(), n, reason: e.to_string() });
                }
                Err(e) => return Err(classify(e)),
            }
        }
    }
    let out = &a.common.out_dir;
    bench::write_records_csv(BufWriter::new(File::create(out.join("bench.csv")).context("creating bench.csv")?), &records)?;
    let mut slopes = std::collections::BTreeMap::new();
    for &kind in &a.kinds.0 {
        let pts: Vec<(usize, f64)> = records.iter().filter(|r| r.kind == kind).map(|r| (r.n, r.median_forward_s)).collect();
        let slope = match bench::fit_loglog_slope(&pts) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("{kind}: no slope: {e}");
                None
            }
        };
        slopes.insert(kind.to_string(), slope);
    }
    for (k, s) in &slopes {
        match s {
            Some(s) => println!("{k}: log-log slope {s:.3}"),
            None => println!("{k}: too few points for a slope"),
        }
    }
    write_json(&out.join("bench_summary.json"), &BenchSummary { d: a.d, d_in: a.d_in, d_out: a.d_out, reps: a.reps, slopes, skipped })?;
    Ok(())
}

fn write_table<W: Write>(w: W, label: &str, rows: &[(String, gwt_core::train::ArmSummary)]) -> Result<()> {
    let mut w = w;
    writeln!(w, "{label},runs,mean_test_mae,std_test_mae")?;
    for (k, s) in rows {
        writeln!(w, "{k},{},{},{}", s.runs, s.mean_test_mae, s.std_test_mae)?;
    }
    w.flush()?;
    Ok(())
}

pub fn perturb_cmd(a: &PerturbArgs) -> Result<(), CliError> {
    if a.seeds.0.is_empty() || a.p_list.0.is_empty() {
        return Err(usage("--seeds and --p-list must be non-empty"));
    }
    prepare(&a.common, a)?;
    let out = &a.common.out_dir;
    let data = load_windows(&a.exp, a.common.seed, out)?;
    let mut mc = model_config(&a.exp, &data, a.spatial);
    mc.spatial_mut().center = a.center;
    mc.spatial_mut().theta2 = a.theta2;
    mc.validate().map_err(classify)?;
    let base = SweepBase { model: mc, data: &data, train: train_config(&a.exp, a.common.seed)? };
    let table = perturb_sweep(&a.p_list.0, &a.seeds.0, &base).map_err(classify)?;
    let rows: Vec<(String, _)> = table.rows.iter().map(|r| (r.p.to_string(), r.summary)).collect();
    write_table(BufWriter::new(File::create(out.join("perturb_sweep.csv")).context("creating perturb_sweep.csv")?), "p", &rows)?;
    write_json(&out.join("perturb_sweep.json"), &table)?;
    for (p, s) in &rows {
        println!("p={p}: test MAE {:.6} +- {:.6} over {} runs", s.mean_test_mae, s.std_test_mae, s.runs);
    }
    Ok(())
}

pub fn ablation_cmd(a: &AblationArgs) -> Result<(), CliError> {
    if a.seeds.0.is_empty() {
        return Err(usage("--seeds must be non-empty"));
    }
    prepare(&a.common, a)?;
    let out = &a.common.out_dir;
    let data = load_windows(&a.exp, a.common.seed, out)?;
    let mc = model_config(&a.exp, &data, SpatialKind::GwtFactored);
    mc.validate().map_err(classify)?;
    let base = SweepBase { model: mc, data: &data, train: train_config(&a.exp, a.common.seed)? };
    let table = init_ablation(&a.seeds.0, &base).map_err(classify)?;
    let rows: Vec<(String, _)> = table.rows.iter().map(|r| (r.origin.to_string(), r.summary)).collect();
    write_table(BufWriter::new(File::create(out.join("init_ablation.csv")).context("creating init_ablation.csv")?), "origin", &rows)?;
    write_json(&out.join("init_ablation.json"), &table)?;
    for (o, s) in &rows {
        println!("{o}: test MAE {:.6} +- {:.6} over {} runs", s.mean_test_mae, s.std_test_mae, s.runs);
    }
    Ok(())
}
