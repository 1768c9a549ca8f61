use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ops::{self, Direction, OutNorm, SelfLoops, SparseAdjacency};
use crate::error::{shape_err, Error, Result};
use crate::graph::{build_star, EdgeList};
use crate::params::{uniform_init, Bound, ParamId, ParamStore};
use crate::rng::Rng64;
use crate::scalar::Scalar;
use crate::tensor::{Csr, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpatialKind {
    DenseAgcn,
    GwnetDual,
    TwoLayerStar,
    DirectedStar,
    GwtFactored,
}

impl SpatialKind {
    pub const ALL: [SpatialKind; 5] = [
        SpatialKind::DenseAgcn,
        SpatialKind::GwnetDual,
        SpatialKind::TwoLayerStar,
        SpatialKind::DirectedStar,
        SpatialKind::GwtFactored,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpatialKind::DenseAgcn => "dense",
            SpatialKind::GwnetDual => "gwnet",
            SpatialKind::TwoLayerStar => "two-layer-star",
            SpatialKind::DirectedStar => "directed-star",
            SpatialKind::GwtFactored => "gwt",
        }
    }

    pub fn uses_star(self) -> bool {
        matches!(self, SpatialKind::TwoLayerStar | SpatialKind::DirectedStar)
    }
}

impl fmt::Display for SpatialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpatialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dense" | "dense-agcn" => SpatialKind::DenseAgcn,
            "gwnet" | "gwnet-dual" => SpatialKind::GwnetDual,
            "two-layer-star" | "star2" => SpatialKind::TwoLayerStar,
            "directed-star" | "directed" => SpatialKind::DirectedStar,
            "gwt" | "gwt-agcn" => SpatialKind::GwtFactored,
            _ => return Err(Error::Invalid(format!("unknown spatial kind {s:?}"))),
        })
    }
}

/// How the factored layer's center embedding is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CenterOrigin {
    /// Row mean of `E`.
    #[default]
    Averaged,
    /// Independent uniform draw.
    Random,
    /// Copy of one node's embedding.
    Real(usize),
}

impl FromStr for CenterOrigin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "averaged" => Ok(CenterOrigin::Averaged),
            "random" => Ok(CenterOrigin::Random),
            _ => s
                .strip_prefix("real:")
                .and_then(|i| i.parse().ok())
                .map(CenterOrigin::Real)
                .ok_or_else(|| Error::Invalid(format!("unknown center origin {s:?}"))),
        }
    }
}

impl fmt::Display for CenterOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CenterOrigin::Averaged => f.write_str("averaged"),
            CenterOrigin::Random => f.write_str("random"),
            CenterOrigin::Real(i) => write!(f, "real:{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Self-loops of the undirected attention used by the two-layer star.
    pub undirected: SelfLoops,
    pub gather: SelfLoops,
    pub scatter: SelfLoops,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { undirected: SelfLoops::All, gather: SelfLoops::Center, scatter: SelfLoops::Center }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialLayerSpec {
    pub kind: SpatialKind,
    pub n: usize,
    pub d_embed: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Real center node of the star kinds.
    pub center: usize,
    /// Second weight matrix of the two-layer star.
    pub theta2: bool,
    pub center_origin: CenterOrigin,
    pub loops: LoopConfig,
    pub out_norm: OutNorm,
    /// Replaces the star for the star kinds, e.g. a perturbed tree.
    pub topology: Option<EdgeList>,
}

impl SpatialLayerSpec {
    pub fn new(kind: SpatialKind, n: usize, d_embed: usize, d_in: usize, d_out: usize) -> Self {
        SpatialLayerSpec {
            kind,
            n,
            d_embed,
            d_in,
            d_out,
            center: 0,
            theta2: true,
            center_origin: CenterOrigin::Averaged,
            loops: LoopConfig::default(),
            out_norm: OutNorm::NodeDim,
            topology: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d_embed == 0 || self.d_in == 0 || self.d_out == 0 {
            return Err(Error::Invalid(format!(
                "spatial layer needs n >= 2 and positive widths (n={}, d={}, in={}, out={})",
                self.n, self.d_embed, self.d_in, self.d_out
            )));
        }
        if self.kind.uses_star() && self.center >= self.n {
            return Err(Error::Invalid(format!("center {} out of range for n = {}", self.center, self.n)));
        }
        if let Some(g) = &self.topology {
            if g.n() != self.n {
                return Err(Error::Invalid(format!("topology has {} nodes, layer has {}", g.n(), self.n)));
            }
        }
        Ok(())
    }

    /// Exact number of trainable scalars.
    pub fn num_params(&self) -> usize {
        let theta = self.d_in * self.d_out;
        let emb = self.n * self.d_embed;
        match self.kind {
            SpatialKind::DenseAgcn | SpatialKind::DirectedStar => emb + theta,
            SpatialKind::GwnetDual => 2 * emb + theta,
            SpatialKind::TwoLayerStar => emb + theta + if self.theta2 { self.d_out * self.d_out } else { 0 },
            SpatialKind::GwtFactored => emb + self.d_embed + theta,
        }
    }

    fn topology_graph(&self) -> Result<EdgeList> {
        match &self.topology {
            Some(g) => Ok(g.clone()),
            None => Ok(build_star(self.n, self.center)?.to_edge_list()),
        }
    }
}

#[derive(Debug, Clone)]
enum Patterns {
    None,
    Undirected(Arc<Csr>),
    Directed { gather: Arc<Csr>, scatter: Arc<Csr> },
}

/// A spatial layer whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct SpatialLayer {
    spec: SpatialLayerSpec,
    theta: ParamId,
    theta2: Option<ParamId>,
    emb: ParamId,
    emb2: Option<ParamId>,
    center: Option<ParamId>,
    patterns: Patterns,
}

impl SpatialLayer {
    /// Registers the layer's parameters under `prefix`. Weights and
    /// embeddings come from `rng`; a random center embedding comes from
    /// `center_rng` so the choice of origin never shifts other draws.
    pub fn init<T: Scalar>(
        spec: SpatialLayerSpec,
        prefix: &str,
        store: &mut ParamStore<T>,
        rng: &mut Rng64,
        center_rng: &mut Rng64,
    ) -> Result<Self> {
        spec.validate()?;
        let (n, d) = (spec.n, spec.d_embed);
        let emb = store.add(format!("{prefix}.E"), uniform_init(rng, &[n, d], d));
        let emb2 = (spec.kind == SpatialKind::GwnetDual).then(|| store.add(format!("{prefix}.E2"), uniform_init(rng, &[n, d], d)));
        let theta = store.add(format!("{prefix}.theta"), uniform_init(rng, &[spec.d_in, spec.d_out], spec.d_in));
        let theta2 = (spec.kind == SpatialKind::TwoLayerStar && spec.theta2)
            .then(|| store.add(format!("{prefix}.theta2"), uniform_init(rng, &[spec.d_out, spec.d_out], spec.d_out)));
        let center = if spec.kind == SpatialKind::GwtFactored {
            let e_c = match spec.center_origin {
                CenterOrigin::Averaged => ops::averaged_center(store.get(emb))?,
                CenterOrigin::Random => uniform_init(center_rng, &[1, d], d),
                CenterOrigin::Real(i) => {
                    if i >= n {
                        return Err(Error::Invalid(format!("center node {i} out of range for n = {n}")));
                    }
                    store.get(emb).slice_axis(0, i, 1)?
                }
            };
            Some(store.add(format!("{prefix}.e_c"), e_c))
        } else {
            None
        };
        let patterns = match spec.kind {
            SpatialKind::TwoLayerStar => Patterns::Undirected(ops::graph_pattern(
                &spec.topology_graph()?,
                spec.center,
                Direction::Undirected,
                spec.loops.undirected,
            )?),
            SpatialKind::DirectedStar => {
                let g = spec.topology_graph()?;
                Patterns::Directed {
                    gather: ops::graph_pattern(&g, spec.center, Direction::Gather, spec.loops.gather)?,
                    scatter: ops::graph_pattern(&g, spec.center, Direction::Scatter, spec.loops.scatter)?,
                }
            }
            _ => Patterns::None,
        };
        Ok(SpatialLayer { spec, theta, theta2, emb, emb2, center, patterns })
    }

    pub fn spec(&self) -> &SpatialLayerSpec {
        &self.spec
    }

    pub fn embedding(&self) -> ParamId {
        self.emb
    }

    pub fn center_embedding(&self) -> Option<ParamId> {
        self.center
    }

    pub fn theta(&self) -> ParamId {
        self.theta
    }

    /// Maps `[B*N, d_in]` to `[B*N, d_out]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let (rows, cols) = tape.value(x).dims2()?;
        if cols != self.spec.d_in || rows % self.spec.n != 0 {
            return shape_err(
                "spatial_forward",
                format!("input {:?} for n = {}, d_in = {}", [rows, cols], self.spec.n, self.spec.d_in),
            );
        }
        let e = p[self.emb];
        let theta = p[self.theta];
        match (&self.spec.kind, &self.patterns) {
            (SpatialKind::DenseAgcn, _) => {
                let a = ops::dense_adjacency(tape, e)?;
                ops::dense_agcn_forward(tape, a, x, theta)
            }
            (SpatialKind::GwnetDual, _) => {
                let e2 = p[self.emb2.expect("dual embeddings registered")];
                let a = ops::gwnet_adjacency(tape, e, e2)?;
                ops::dense_agcn_forward(tape, a, x, theta)
            }
            (SpatialKind::TwoLayerStar, Patterns::Undirected(csr)) => {
                let weights = ops::gat_weights(tape, csr, e)?;
                let adj = SparseAdjacency { csr: csr.clone(), weights };
                ops::two_layer_star_forward(tape, &adj, x, theta, self.theta2.map(|t| p[t]))
            }
            (SpatialKind::DirectedStar, Patterns::Directed { gather, scatter }) => {
                let wg = ops::gat_weights(tape, gather, e)?;
                let ws = ops::gat_weights(tape, scatter, e)?;
                let g = SparseAdjacency { csr: gather.clone(), weights: wg };
                let s = SparseAdjacency { csr: scatter.clone(), weights: ws };
                ops::directed_star_forward(tape, &g, &s, x, theta)
            }
            (SpatialKind::GwtFactored, _) => {
                let e_c = p[self.center.expect("center embedding registered")];
                ops::gwt_agcn_forward(tape, e, e_c, x, theta, self.spec.out_norm)
            }
            _ => unreachable!("patterns are built to match the kind"),
        }
    }
}
