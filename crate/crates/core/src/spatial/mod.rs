//! Spatial aggregation variants: dense adaptive adjacency, dual-embedding
//! adjacency, attention over a star (undirected, or as a gather/scatter
//! pair) and the rank-1 factored layer.

mod layer;
mod ops;

pub use layer::{CenterOrigin, LoopConfig, SpatialKind, SpatialLayer, SpatialLayerSpec};
pub use ops::{
    averaged_center, dense_adjacency, dense_agcn_forward, directed_star_forward, gat_weights, graph_pattern,
    gwnet_adjacency, gwt_agcn_forward, gwt_factors, k_layer_subgraph_forward, star_gat_adjacency, star_pattern,
    two_layer_star_forward, Direction, OutNorm, SelfLoops, SparseAdjacency,
};
