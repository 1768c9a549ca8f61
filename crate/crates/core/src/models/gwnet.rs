use serde::{Deserialize, Serialize};

use super::{linear_params, readout, time_steps, Linear};
use crate::error::{Error, Result};
use crate::params::{uniform_init, Bound, ParamId, ParamStore};
use crate::rng::Rng64;
use crate::scalar::Scalar;
use crate::spatial::{SpatialKind, SpatialLayer, SpatialLayerSpec};
use crate::tensor::{Tape, Tensor, Var};

/// Convolutional model: stacked gated dilated causal convolutions
/// (kernel 2, no padding), each followed by a spatial layer and a residual
/// connection, with skip outputs taken at the last time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwnetLiteConfig {
    pub n: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub embed_dim: usize,
    pub blocks: usize,
    /// Dilations of the layers inside one block.
    pub dilations: Vec<usize>,
    /// Maps `d_hidden` to `d_hidden` channels.
    pub spatial: SpatialLayerSpec,
}

pub const KERNEL: usize = 2;

impl GwnetLiteConfig {
    pub fn new(kind: SpatialKind, n: usize, d_in: usize, d_hidden: usize, d_out: usize, embed_dim: usize) -> Self {
        GwnetLiteConfig {
            n,
            d_in,
            d_hidden,
            d_out,
            t_in: 12,
            t_out: 12,
            embed_dim,
            blocks: 1,
            dilations: vec![1, 2, 4],
            spatial: SpatialLayerSpec::new(kind, n, embed_dim, d_hidden, d_hidden),
        }
    }

    pub fn layer_dilations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.blocks).flat_map(|_| self.dilations.iter().copied())
    }

    /// `sum(dilation * (KERNEL - 1)) + 1`.
    pub fn receptive_field(&self) -> usize {
        self.layer_dilations().map(|d| d * (KERNEL - 1)).sum::<usize>() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_hidden == 0 || self.d_in == 0 || self.d_out == 0 || self.t_out == 0 || self.blocks == 0 {
            return Err(Error::Invalid("gwnet-lite widths, horizons and block count must be positive".into()));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::Invalid(format!("dilations must be non-empty and positive, got {:?}", self.dilations)));
        }
        if self.receptive_field() > self.t_in {
            return Err(Error::Invalid(format!(
                "receptive field {} exceeds t_in = {}",
                self.receptive_field(),
                self.t_in
            )));
        }
        let s = &self.spatial;
        if (s.n, s.d_embed, s.d_in, s.d_out) != (self.n, self.embed_dim, self.d_hidden, self.d_hidden) {
            return Err(Error::Invalid(format!(
                "spatial layer (n={}, d={}, {}->{}) does not match the model (n={}, d={}, {}->{})",
                s.n, s.d_embed, s.d_in, s.d_out, self.n, self.embed_dim, self.d_hidden, self.d_hidden
            )));
        }
        s.validate()
    }

    pub fn num_params(&self) -> usize {
        let c = self.d_hidden;
        let lin = |i: usize, o: usize| i * o + o;
        let per_layer = 2 * (KERNEL * c * c + c) + self.spatial.num_params() + lin(c, c);
        lin(self.d_in, c) + self.layer_dilations().count() * per_layer + lin(c, c) + lin(c, self.t_out * self.d_out)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    dilation: usize,
    filter: [ParamId; KERNEL],
    filter_b: ParamId,
    gate: [ParamId; KERNEL],
    gate_b: ParamId,
    spatial: SpatialLayer,
    skip: Linear,
}

/// One recorded activation: rows are time-major blocks of `B*N`, the
/// first belonging to absolute input time `start`.
#[derive(Debug, Clone, Copy)]
pub struct Activation {
    pub start: usize,
    pub value: Var,
}

#[derive(Debug, Clone)]
pub struct GwnetLite {
    cfg: GwnetLiteConfig,
    start: Linear,
    layers: Vec<ConvLayer>,
    end1: Linear,
    end2: Linear,
}

impl GwnetLite {
    pub fn init<T: Scalar>(cfg: GwnetLiteConfig, store: &mut ParamStore<T>, rng: &mut Rng64, center_rng: &mut Rng64) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.d_hidden;
        let start = linear_params(store, rng, "start", cfg.d_in, c);
        let mut layers = Vec::new();
        for (l, dilation) in cfg.layer_dilations().enumerate() {
            let mut taps = |name: &str| -> [ParamId; KERNEL] {
                std::array::from_fn(|k| store.add(format!("layer{l}.{name}{k}"), uniform_init(rng, &[c, c], KERNEL * c)))
            };
            let filter = taps("filter");
            let gate = taps("gate");
            let filter_b = store.add(format!("layer{l}.filter_b"), Tensor::zeros(&[1, c]));
            let gate_b = store.add(format!("layer{l}.gate_b"), Tensor::zeros(&[1, c]));
            let spatial = SpatialLayer::init(cfg.spatial.clone(), &format!("layer{l}.spatial"), store, rng, center_rng)?;
            let skip = linear_params(store, rng, &format!("layer{l}.skip"), c, c);
            layers.push(ConvLayer { dilation, filter, filter_b, gate, gate_b, spatial, skip });
        }
        let end1 = linear_params(store, rng, "end1", c, c);
        let end2 = linear_params(store, rng, "end2", c, cfg.t_out * cfg.d_out);
        Ok(GwnetLite { cfg, start, layers, end1, end2 })
    }

    pub fn config(&self) -> &GwnetLiteConfig {
        &self.cfg
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, inputs: &Tensor<T>) -> Result<Var> {
        self.forward_traced(tape, p, inputs).map(|(y, _)| y)
    }

    /// Forward pass that also returns every gated-convolution output and
    /// every residual output, for causality checks.
    pub fn forward_traced<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        inputs: &Tensor<T>,
    ) -> Result<(Var, Vec<Activation>)> {
        let cfg = &self.cfg;
        let (b, steps) = time_steps(inputs, cfg.t_in, cfg.n, cfg.d_in)?;
        let rows = b * cfg.n;
        let c = cfg.d_hidden;
        let refs: Vec<&Tensor<T>> = steps.iter().collect();
        let x = tape.constant(Tensor::concat(&refs, 0)?);
        let mut h = self.start.apply(tape, p, x)?;
        let mut len = cfg.t_in;
        let mut start_time = 0;
        let mut skip: Option<Var> = None;
        let mut trace = Vec::new();
        for layer in &self.layers {
            let d = layer.dilation;
            let out_len = len - d;
            let past = tape.slice(h, 0, 0, out_len * rows)?;
            let now = tape.slice(h, 0, d * rows, out_len * rows)?;
            let conv = |tape: &mut Tape<T>, w: &[ParamId; KERNEL], bias: ParamId| -> Result<Var> {
                let a = tape.matmul(past, p[w[0]])?;
                let bb = tape.matmul(now, p[w[1]])?;
                let s = tape.add(a, bb)?;
                let bias = tape.broadcast_rows(p[bias], out_len * rows)?;
                tape.add(s, bias)
            };
            let f = conv(tape, &layer.filter, layer.filter_b)?;
            let g = conv(tape, &layer.gate, layer.gate_b)?;
            let f = tape.tanh(f)?;
            let g = tape.sigmoid(g)?;
            let gated = tape.mul(f, g)?;
            start_time += d;
            trace.push(Activation { start: start_time, value: gated });

            let last = tape.slice(gated, 0, (out_len - 1) * rows, rows)?;
            let s = layer.skip.apply(tape, p, last)?;
            skip = Some(match skip {
                Some(acc) => tape.add(acc, s)?,
                None => s,
            });

            let spatial = layer.spatial.forward(tape, p, gated)?;
            h = tape.add(spatial, now)?;
            trace.push(Activation { start: start_time, value: h });
            len = out_len;
        }
        debug_assert_eq!(tape.value(h).shape(), [len * rows, c]);
        let s = tape.relu(skip.expect("at least one layer"))?;
        let s = self.end1.apply(tape, p, s)?;
        let s = tape.relu(s)?;
        let y = readout(tape, p, &self.end2, s, b, cfg.n, cfg.t_out, cfg.d_out)?;
        Ok((y, trace))
    }
}

