//! Toy forecasting models built around a pluggable spatial layer.

mod agcrn;
mod checkpoint;
mod gwnet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use agcrn::{AgcrnLite, AgcrnLiteConfig};
pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use gwnet::{Activation, GwnetLite, GwnetLiteConfig, KERNEL};

use crate::error::{shape_err, Error, Result};
use crate::params::{uniform_init, Bound, ParamId, ParamStore};
use crate::rng::{stream_rng, Rng64, Stream};
use crate::scalar::Scalar;
use crate::spatial::{SpatialKind, SpatialLayerSpec};
use crate::tensor::{Tape, Tensor, Var};

/// Dense affine map `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.linear(x, p[self.w], Some(p[self.b]))
    }
}

pub(crate) fn linear_params<T: Scalar>(store: &mut ParamStore<T>, rng: &mut Rng64, name: &str, d_in: usize, d_out: usize) -> Linear {
    let w = store.add(format!("{name}.w"), uniform_init(rng, &[d_in, d_out], d_in));
    let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, d_out]));
    Linear { w, b }
}

/// Splits `[B, T, N, D]` into `T` tensors of shape `[B*N, D]`.
pub(crate) fn time_steps<T: Scalar>(inputs: &Tensor<T>, t: usize, n: usize, d: usize) -> Result<(usize, Vec<Tensor<T>>)> {
    let b = match inputs.shape() {
        &[b, tt, nn, dd] if tt == t && nn == n && dd == d && b >= 1 => b,
        s => return shape_err("model_forward", format!("inputs {s:?}, expected [B, {t}, {n}, {d}]")),
    };
    let x = inputs.data();
    let steps = (0..t)
        .map(|ti| {
            let mut data = Vec::with_capacity(b * n * d);
            for bi in 0..b {
                let off = (bi * t + ti) * n * d;
                data.extend_from_slice(&x[off..off + n * d]);
            }
            Tensor::new(&[b * n, d], data)
        })
        .collect::<Result<_>>()?;
    Ok((b, steps))
}

/// Projects `[B*N, C]` to the horizon and lays it out as
/// `[B, T_out, N, D_out]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn readout<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    lin: &Linear,
    h: Var,
    b: usize,
    n: usize,
    t_out: usize,
    d_out: usize,
) -> Result<Var> {
    let y = lin.apply(tape, p, h)?;
    let y = tape.reshape(y, &[b, n, t_out, d_out])?;
    tape.permute(y, &[0, 2, 1, 3])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    AgcrnLite,
    GwnetLite,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::AgcrnLite => "agcrn-lite",
            ModelKind::GwnetLite => "gwnet-lite",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agcrn-lite" | "agcrn" => Ok(ModelKind::AgcrnLite),
            "gwnet-lite" | "gwnet" => Ok(ModelKind::GwnetLite),
            _ => Err(Error::Invalid(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelConfig {
    Agcrn(AgcrnLiteConfig),
    Gwnet(GwnetLiteConfig),
}

impl ModelConfig {
    /// Default-shaped model of either kind, 12 steps in and out.
    pub fn new(model: ModelKind, spatial: SpatialKind, n: usize, d_in: usize, d_hidden: usize, d_out: usize, embed_dim: usize) -> Self {
        match model {
            ModelKind::AgcrnLite => ModelConfig::Agcrn(AgcrnLiteConfig::new(spatial, n, d_in, d_hidden, d_out, embed_dim)),
            ModelKind::GwnetLite => ModelConfig::Gwnet(GwnetLiteConfig::new(spatial, n, d_in, d_hidden, d_out, embed_dim)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Agcrn(_) => ModelKind::AgcrnLite,
            ModelConfig::Gwnet(_) => ModelKind::GwnetLite,
        }
    }

    pub fn spatial(&self) -> &SpatialLayerSpec {
        match self {
            ModelConfig::Agcrn(c) => &c.spatial,
            ModelConfig::Gwnet(c) => &c.spatial,
        }
    }

    pub fn spatial_mut(&mut self) -> &mut SpatialLayerSpec {
        match self {
            ModelConfig::Agcrn(c) => &mut c.spatial,
            ModelConfig::Gwnet(c) => &mut c.spatial,
        }
    }

    /// `(n, t_in, t_out, d_in, d_out)`.
    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        match self {
            ModelConfig::Agcrn(c) => (c.n, c.t_in, c.t_out, c.d_in, c.d_out),
            ModelConfig::Gwnet(c) => (c.n, c.t_in, c.t_out, c.d_in, c.d_out),
        }
    }

    pub fn set_horizons(&mut self, t_in: usize, t_out: usize) {
        match self {
            ModelConfig::Agcrn(c) => (c.t_in, c.t_out) = (t_in, t_out),
            ModelConfig::Gwnet(c) => (c.t_in, c.t_out) = (t_in, t_out),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Agcrn(c) => c.validate(),
            ModelConfig::Gwnet(c) => c.validate(),
        }
    }

    /// Initializes a model and its parameters from `seed`.
    pub fn build<T: Scalar>(&self, seed: u64) -> Result<(Model, ParamStore<T>)> {
        let mut rng = stream_rng(seed, Stream::Params);
        let mut center_rng = stream_rng(seed, Stream::CenterEmbedding);
        let mut store = ParamStore::new();
        let model = match self {
            ModelConfig::Agcrn(c) => Model::Agcrn(AgcrnLite::init(c.clone(), &mut store, &mut rng, &mut center_rng)?),
            ModelConfig::Gwnet(c) => Model::Gwnet(GwnetLite::init(c.clone(), &mut store, &mut rng, &mut center_rng)?),
        };
        Ok((model, store))
    }
}

/// Exact number of trainable scalars of the model `cfg` describes.
pub fn count_params(cfg: &ModelConfig) -> usize {
    match cfg {
        ModelConfig::Agcrn(c) => c.num_params(),
        ModelConfig::Gwnet(c) => c.num_params(),
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Agcrn(AgcrnLite),
    Gwnet(GwnetLite),
}

impl Model {
    /// `[B, T_in, N, d_in]` to `[B, T_out, N, d_out]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, inputs: &Tensor<T>) -> Result<Var> {
        match self {
            Model::Agcrn(m) => m.forward(tape, p, inputs),
            Model::Gwnet(m) => m.forward(tape, p, inputs),
        }
    }
}
