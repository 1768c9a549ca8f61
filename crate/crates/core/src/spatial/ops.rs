//! Functional forms of the spatial aggregations, expressed on a tape.
//!
//! Feature inputs are batched as `[B*N, D]`: `B` consecutive blocks of `N`
//! node rows. Adjacencies and attention weights are shared across blocks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::graph::{Center, EdgeList, StarGraph};
use crate::scalar::Scalar;
use crate::tensor::{Csr, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Each parent receives from its children (leaves into the center).
    Gather,
    /// Each child receives from its parent (center out to the leaves).
    Scatter,
    /// Each node receives from all of its neighbors.
    Undirected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfLoops {
    None,
    Center,
    All,
}

/// Normalization of the `N x 1` scatter factor of the factored layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutNorm {
    /// Softmax over the `N` nodes.
    #[default]
    NodeDim,
    /// Softmax over each singleton row, i.e. all ones.
    PerRow,
}

/// In-neighbor pattern of `g` with BFS parents taken from `root`.
pub fn graph_pattern(g: &EdgeList, root: usize, dir: Direction, loops: SelfLoops) -> Result<Arc<Csr>> {
    let n = g.n();
    if root >= n {
        return Err(Error::Invalid(format!("root {root} out of range for n = {n}")));
    }
    let mut rows: Vec<Vec<usize>> = match dir {
        Direction::Undirected => g.adjacency(),
        Direction::Gather | Direction::Scatter => {
            let parents = g.bfs_parents(root);
            let mut rows = vec![Vec::new(); n];
            for (v, p) in parents.iter().enumerate() {
                if let Some(p) = *p {
                    match dir {
                        Direction::Gather => rows[p].push(v),
                        _ => rows[v].push(p),
                    }
                }
            }
            rows
        }
    };
    for (u, row) in rows.iter_mut().enumerate() {
        if loops == SelfLoops::All || (loops == SelfLoops::Center && u == root) {
            row.push(u);
        }
        row.sort_unstable();
    }
    Ok(Arc::new(Csr::from_rows(n, &rows)?))
}

/// Pattern of a star. A virtual center becomes an extra node with index
/// `n`, so the pattern is `(n+1) x (n+1)`.
pub fn star_pattern(star: &StarGraph, dir: Direction, loops: SelfLoops) -> Result<Arc<Csr>> {
    match star.center() {
        Center::Node(c) => graph_pattern(&star.to_edge_list(), c, dir, loops),
        Center::Virtual => {
            let n = star.n();
            let g = EdgeList::new(n + 1, (0..n).map(|v| (n, v)))?;
            graph_pattern(&g, n, dir, loops)
        }
    }
}

/// Row-softmax of `ReLU(E E^T)`.
pub fn dense_adjacency<T: Scalar>(tape: &mut Tape<T>, e: Var) -> Result<Var> {
    tape.adaptive_adjacency(e, e)
}

/// Row-softmax of `ReLU(E1 E2^T)`.
pub fn gwnet_adjacency<T: Scalar>(tape: &mut Tape<T>, e1: Var, e2: Var) -> Result<Var> {
    if tape.value(e1).shape() != tape.value(e2).shape() {
        return shape_err(
            "gwnet_adjacency",
            format!("{:?} vs {:?}", tape.value(e1).shape(), tape.value(e2).shape()),
        );
    }
    tape.adaptive_adjacency(e1, e2)
}

/// Attention weights on a sparse pattern: per-row softmax of
/// `ReLU(e_u . e_v)` over the stored entries, shape `[nnz, 1]`.
pub fn gat_weights<T: Scalar>(tape: &mut Tape<T>, csr: &Arc<Csr>, emb: Var) -> Result<Var> {
    let s = tape.edge_dot(csr, emb, emb)?;
    let s = tape.relu(s)?;
    tape.segment_softmax(csr, s)
}

/// Sparse attention weights together with their pattern.
#[derive(Debug, Clone)]
pub struct SparseAdjacency {
    pub csr: Arc<Csr>,
    pub weights: Var,
}

impl SparseAdjacency {
    /// Materializes the weights as a dense `rows x cols` tensor.
    pub fn to_dense<T: Scalar>(&self, tape: &Tape<T>) -> Tensor<T> {
        let (r, c) = (self.csr.n_rows(), self.csr.n_cols());
        let w = tape.value(self.weights).data();
        let mut out = Tensor::zeros(&[r, c]);
        for e in 0..self.csr.nnz() {
            out.data_mut()[self.csr.row_of(e) * c + self.csr.cols()[e]] = w[e];
        }
        out
    }
}

/// Attention over the in-neighborhoods of a star. For a virtual center
/// `e_c` is appended to `E` as node `n`.
pub fn star_gat_adjacency<T: Scalar>(
    tape: &mut Tape<T>,
    star: &StarGraph,
    e: Var,
    e_c: Option<Var>,
    dir: Direction,
    loops: SelfLoops,
) -> Result<SparseAdjacency> {
    let csr = star_pattern(star, dir, loops)?;
    let emb = match (star.center(), e_c) {
        (Center::Virtual, Some(c)) => tape.concat(&[e, c], 0)?,
        (Center::Virtual, None) => {
            return Err(Error::Invalid("a virtual-center star needs a center embedding".into()));
        }
        (Center::Node(_), _) => e,
    };
    let weights = gat_weights(tape, &csr, emb)?;
    Ok(SparseAdjacency { csr, weights })
}

/// `A (A X Theta1) Theta2`, or `A (A X Theta)` when `theta2` is `None`.
pub fn two_layer_star_forward<T: Scalar>(
    tape: &mut Tape<T>,
    adj: &SparseAdjacency,
    x: Var,
    theta1: Var,
    theta2: Option<Var>,
) -> Result<Var> {
    let h = tape.spmm(&adj.csr, adj.weights, x)?;
    let h = tape.matmul(h, theta1)?;
    let z = tape.spmm(&adj.csr, adj.weights, h)?;
    match theta2 {
        Some(t2) => tape.matmul(z, t2),
        None => Ok(z),
    }
}

/// `U (L X Theta)`: gather into the center, then scatter back out.
pub fn directed_star_forward<T: Scalar>(
    tape: &mut Tape<T>,
    gather: &SparseAdjacency,
    scatter: &SparseAdjacency,
    x: Var,
    theta: Var,
) -> Result<Var> {
    let h = tape.spmm(&gather.csr, gather.weights, x)?;
    let h = tape.matmul(h, theta)?;
    tape.spmm(&scatter.csr, scatter.weights, h)
}

/// The two attention factors of the factored layer: `a_in` (`1 x N`, a
/// softmax of `ReLU(e_c E^T)` over nodes) and `a_out` (`N x 1`, from
/// `ReLU(E e_c^T)` normalized per `norm`).
pub fn gwt_factors<T: Scalar>(tape: &mut Tape<T>, e: Var, e_c: Var, norm: OutNorm) -> Result<(Var, Var)> {
    let (n, d) = tape.value(e).dims2()?;
    if tape.value(e_c).shape() != [1, d] {
        return shape_err("gwt_agcn", format!("E {:?} with e_c {:?}", [n, d], tape.value(e_c).shape()));
    }
    let s_in = tape.matmul_nt(e_c, e)?;
    let s_in = tape.relu(s_in)?;
    let a_in = tape.softmax(s_in, 1)?;
    let s_out = tape.matmul_nt(e, e_c)?;
    let s_out = tape.relu(s_out)?;
    let axis = match norm {
        OutNorm::NodeDim => 0,
        OutNorm::PerRow => 1,
    };
    let a_out = tape.softmax(s_out, axis)?;
    Ok((a_in, a_out))
}

/// `a_out (a_in X) Theta` without ever forming the `N x N` product.
pub fn gwt_agcn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    e: Var,
    e_c: Var,
    x: Var,
    theta: Var,
    norm: OutNorm,
) -> Result<Var> {
    let (a_in, a_out) = gwt_factors(tape, e, e_c, norm)?;
    let context = tape.block_matmul(a_in, x)?;
    let context = tape.matmul(context, theta)?;
    tape.block_matmul(a_out, context)
}

/// `A (... (A (A X Theta1) Theta2) ...) Theta_K` for a dense `A`.
pub fn k_layer_subgraph_forward<T: Scalar>(tape: &mut Tape<T>, adj: Var, x: Var, thetas: &[Var]) -> Result<Var> {
    if thetas.is_empty() {
        return Err(Error::Invalid("k-layer aggregation needs at least one weight matrix".into()));
    }
    let mut h = x;
    for &theta in thetas {
        h = tape.block_matmul(adj, h)?;
        h = tape.matmul(h, theta)?;
    }
    Ok(h)
}

/// Dense single layer `A X Theta`.
pub fn dense_agcn_forward<T: Scalar>(tape: &mut Tape<T>, adj: Var, x: Var, theta: Var) -> Result<Var> {
    k_layer_subgraph_forward(tape, adj, x, &[theta])
}

/// Column-wise mean of the rows of `E`, shape `[1, d]`.
pub fn averaged_center<T: Scalar>(e: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d) = e.dims2()?;
    if n == 0 {
        return Err(Error::Invalid("averaged center of an empty embedding table".into()));
    }
    let inv = T::one() / T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(e.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv);
    Tensor::new(&[1, d], mean)
}
