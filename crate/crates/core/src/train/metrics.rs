use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Targets with `|y|` below this are left out of MAPE.
pub const MAPE_MIN_ABS_TARGET: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    All,
    /// Zero-based forecast step.
    Step(usize),
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::All => f.write_str("all"),
            Horizon::Step(s) => write!(f, "{}", s + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mae: f64,
    pub rmse: f64,
    /// Percentage; NaN when no target passes the mask.
    pub mape: f64,
    pub horizon: Horizon,
}

/// Mean absolute error as a differentiable scalar.
pub fn mae_loss(tape: &mut Tape<f64>, pred: Var, target: Var) -> Result<Var> {
    let (ps, ts) = (tape.value(pred).shape().to_vec(), tape.value(target).shape().to_vec());
    if ps != ts {
        return shape_err("mae_loss", format!("{ps:?} vs {ts:?}"));
    }
    let e = tape.sub(pred, target)?;
    let a = tape.abs(e)?;
    tape.mean_all(a)
}

fn accumulate(pairs: impl Iterator<Item = (f64, f64)>, horizon: Horizon) -> MetricsRecord {
    let (mut abs, mut sq, mut pct, mut count, mut masked) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (p, y) in pairs {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        count += 1;
        if y.abs() >= MAPE_MIN_ABS_TARGET {
            pct += e.abs() / y.abs();
            masked += 1;
        }
    }
    let mape = if masked == 0 {
        log::warn!("MAPE undefined: no target with |y| >= {MAPE_MIN_ABS_TARGET}");
        f64::NAN
    } else {
        100.0 * pct / masked as f64
    };
    let c = count.max(1) as f64;
    MetricsRecord { mae: abs / c, rmse: (sq / c).sqrt(), mape, horizon }
}

pub fn metrics(pred: &Tensor, target: &Tensor) -> Result<MetricsRecord> {
    if pred.shape() != target.shape() {
        return shape_err("metrics", format!("{:?} vs {:?}", pred.shape(), target.shape()));
    }
    Ok(accumulate(pred.data().iter().copied().zip(target.data().iter().copied()), Horizon::All))
}

/// Metrics of one forecast step of `[B, T_out, N, D]` predictions.
pub fn metrics_at(pred: &Tensor, target: &Tensor, step: usize) -> Result<MetricsRecord> {
    if pred.shape() != target.shape() || pred.rank() != 4 || step >= pred.shape()[1] {
        return shape_err("metrics_at", format!("{:?} vs {:?} at step {step}", pred.shape(), target.shape()));
    }
    let s = pred.shape();
    let (t, frame) = (s[1], s[2] * s[3]);
    let idx = (0..s[0]).flat_map(move |b| {
        let start = (b * t + step) * frame;
        start..start + frame
    });
    let (pd, td) = (pred.data(), target.data());
    Ok(accumulate(idx.map(|i| (pd[i], td[i])), Horizon::Step(step)))
}
