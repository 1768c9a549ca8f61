use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::Windows;
use crate::error::{Error, Result};
use crate::graph::{build_star, perturb_star};
use crate::models::ModelConfig;
use crate::spatial::{CenterOrigin, SpatialKind};

/// Shared inputs of a sweep: one model shape, one dataset, one training
/// recipe. Each run overrides only the seed and the variable under study.
#[derive(Debug, Clone)]
pub struct SweepBase<'a> {
    pub model: ModelConfig,
    pub data: &'a Windows,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub test_mape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub runs: usize,
    pub mean_test_mae: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_test_mae: f64,
}

impl ArmSummary {
    fn of(runs: &[RunResult]) -> Self {
        let k = runs.len() as f64;
        let mean = runs.iter().map(|r| r.test_mae).sum::<f64>() / k;
        let std = if runs.len() > 1 {
            (runs.iter().map(|r| (r.test_mae - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        ArmSummary { runs: runs.len(), mean_test_mae: mean, std_test_mae: std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRow {
    pub p: f64,
    pub summary: ArmSummary,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub origin: CenterOrigin,
    pub summary: ArmSummary,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable<R> {
    pub rows: Vec<R>,
}

fn run(model: &ModelConfig, data: &Windows, cfg: &TrainConfig, seed: u64) -> Result<RunResult> {
    let cfg = TrainConfig { seed, ..*cfg };
    let out = train(model, data, &cfg)?;
    Ok(RunResult {
        seed,
        best_epoch: out.best_epoch,
        best_val_mae: out.best_val_mae,
        test_mae: out.test.mae,
        test_rmse: out.test.rmse,
        test_mape: out.test.mape,
    })
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Invalid("at least one seed is required".into()));
    }
    Ok(())
}

/// Trains one model per (p, seed) on the star with `round(p (N-1))`
/// center-leaf edges rewired; the perturbation draw uses the run seed.
pub fn perturb_sweep(p_list: &[f64], seeds: &[u64], base: &SweepBase) -> Result<SweepTable<PerturbRow>> {
    check_seeds(seeds)?;
    let spec = base.model.spatial();
    if !matches!(spec.kind, SpatialKind::TwoLayerStar | SpatialKind::DirectedStar) {
        return Err(Error::Invalid(format!("perturb-sweep needs a real-center star layer, got {}", spec.kind.as_str())));
    }
    if let Some(p) = p_list.iter().find(|p| !(0.0..=0.5).contains(*p)) {
        return Err(Error::Invalid(format!("perturbation ratio {p} outside [0, 0.5]")));
    }
    let star = build_star(spec.n, spec.center)?;
    let mut rows = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut model = base.model.clone();
            model.spatial_mut().topology = Some(perturb_star(&star, p, seed)?);
            let r = run(&model, base.data, &base.train, seed)?;
            log::info!("p={p} seed={seed}: test MAE {:.6}", r.test_mae);
            runs.push(r);
        }
        rows.push(PerturbRow { p, summary: ArmSummary::of(&runs), runs });
    }
    Ok(SweepTable { rows })
}

/// Averaged versus random center-embedding initialization; both arms share
/// data, seeds and every other setting.
pub fn init_ablation(seeds: &[u64], base: &SweepBase) -> Result<SweepTable<AblationRow>> {
    check_seeds(seeds)?;
    if base.model.spatial().kind != SpatialKind::GwtFactored {
        return Err(Error::Invalid("init-ablation needs the factored (gwt) spatial layer".into()));
    }
    let mut rows = Vec::with_capacity(2);
    for origin in [CenterOrigin::Averaged, CenterOrigin::Random] {
        let mut model = base.model.clone();
        model.spatial_mut().center_origin = origin;
        let runs = seeds.iter().map(|&s| run(&model, base.data, &base.train, s)).collect::<Result<Vec<_>>>()?;
        rows.push(AblationRow { origin, summary: ArmSummary::of(&runs), runs });
    }
    Ok(SweepTable { rows })
}
