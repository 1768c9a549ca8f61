use serde::{Deserialize, Serialize};

use super::{linear_params, readout, time_steps, Linear};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::Rng64;
use crate::scalar::Scalar;
use crate::spatial::{SpatialKind, SpatialLayer, SpatialLayerSpec};
use crate::tensor::{Tape, Tensor, Var};

/// Recurrent model: a GRU whose gates read the raw input, its spatial
/// aggregation and the hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgcrnLiteConfig {
    pub n: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub embed_dim: usize,
    /// Maps `d_in` to `d_hidden` channels.
    pub spatial: SpatialLayerSpec,
}

impl AgcrnLiteConfig {
    pub fn new(kind: SpatialKind, n: usize, d_in: usize, d_hidden: usize, d_out: usize, embed_dim: usize) -> Self {
        AgcrnLiteConfig {
            n,
            d_in,
            d_hidden,
            d_out,
            t_in: 12,
            t_out: 12,
            embed_dim,
            spatial: SpatialLayerSpec::new(kind, n, embed_dim, d_in, d_hidden),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_hidden == 0 || self.d_in == 0 || self.d_out == 0 || self.t_in == 0 || self.t_out == 0 {
            return Err(Error::Invalid("agcrn-lite widths and horizons must be positive".into()));
        }
        let s = &self.spatial;
        if (s.n, s.d_embed, s.d_in, s.d_out) != (self.n, self.embed_dim, self.d_in, self.d_hidden) {
            return Err(Error::Invalid(format!(
                "spatial layer (n={}, d={}, {}->{}) does not match the model (n={}, d={}, {}->{})",
                s.n, s.d_embed, s.d_in, s.d_out, self.n, self.embed_dim, self.d_in, self.d_hidden
            )));
        }
        s.validate()
    }

    fn gate_in(&self) -> usize {
        self.d_in + 2 * self.d_hidden
    }

    pub fn num_params(&self) -> usize {
        let h = self.d_hidden;
        let lin = |i: usize, o: usize| i * o + o;
        self.spatial.num_params() + lin(self.gate_in(), 2 * h) + lin(self.gate_in(), h) + lin(h, self.t_out * self.d_out)
    }
}

#[derive(Debug, Clone)]
pub struct AgcrnLite {
    cfg: AgcrnLiteConfig,
    spatial: SpatialLayer,
    gate: Linear,
    cand: Linear,
    out: Linear,
}

impl AgcrnLite {
    pub fn init<T: Scalar>(cfg: AgcrnLiteConfig, store: &mut ParamStore<T>, rng: &mut Rng64, center_rng: &mut Rng64) -> Result<Self> {
        cfg.validate()?;
        let spatial = SpatialLayer::init(cfg.spatial.clone(), "spatial", store, rng, center_rng)?;
        let h = cfg.d_hidden;
        let gate = linear_params(store, rng, "gate", cfg.gate_in(), 2 * h);
        let cand = linear_params(store, rng, "cand", cfg.gate_in(), h);
        let out = linear_params(store, rng, "readout", h, cfg.t_out * cfg.d_out);
        Ok(AgcrnLite { cfg, spatial, gate, cand, out })
    }

    pub fn config(&self) -> &AgcrnLiteConfig {
        &self.cfg
    }

    pub fn spatial(&self) -> &SpatialLayer {
        &self.spatial
    }

    /// One GRU update from hidden state `h` given the step input `xt`
    /// (`[B*N, d_in]`).
    pub fn cell<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, xt: Var, h: Var) -> Result<Var> {
        let dh = self.cfg.d_hidden;
        let s = self.spatial.forward(tape, p, xt)?;
        let xh = tape.concat(&[xt, s, h], 1)?;
        let zr = self.gate.apply(tape, p, xh)?;
        let zr = tape.sigmoid(zr)?;
        let z = tape.slice(zr, 1, 0, dh)?;
        let r = tape.slice(zr, 1, dh, dh)?;
        let rh = tape.mul(r, h)?;
        let xc = tape.concat(&[xt, s, rh], 1)?;
        let c = self.cand.apply(tape, p, xc)?;
        let c = tape.tanh(c)?;
        // z * h + (1 - z) * c
        let zh = tape.mul(z, h)?;
        let one_minus_z = tape.scale(z, -1.0)?;
        let one_minus_z = tape.add_scalar(one_minus_z, 1.0)?;
        let zc = tape.mul(one_minus_z, c)?;
        tape.add(zh, zc)
    }

    /// `[B, T_in, N, d_in]` to `[B, T_out, N, d_out]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, inputs: &Tensor<T>) -> Result<Var> {
        let (b, steps) = time_steps(inputs, self.cfg.t_in, self.cfg.n, self.cfg.d_in)?;
        let mut h = tape.constant(Tensor::zeros(&[b * self.cfg.n, self.cfg.d_hidden]));
        for xt in steps {
            let xt = tape.constant(xt);
            h = self.cell(tape, p, xt, h)?;
        }
        readout(tape, p, &self.out, h, b, self.cfg.n, self.cfg.t_out, self.cfg.d_out)
    }
}
