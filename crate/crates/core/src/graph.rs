//! Star spanning trees, explicit edge lists and the leaf-rewiring
//! perturbation.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::io::{Read, Write};

use rand::seq::index;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Center {
    Node(usize),
    /// Synthesized center that is not one of the `n` nodes.
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StarGraph {
    n: usize,
    center: Center,
}

impl StarGraph {
    pub fn virtual_center(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("a star needs n >= 2 nodes, got {n}")));
        }
        Ok(StarGraph { n, center: Center::Virtual })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> Center {
        self.center
    }

    pub fn center_node(&self) -> Option<usize> {
        match self.center {
            Center::Node(c) => Some(c),
            Center::Virtual => None,
        }
    }

    /// Explicit edges. A virtual center has no edges among the real nodes.
    pub fn to_edge_list(&self) -> EdgeList {
        let edges = match self.center {
            Center::Node(c) => (0..self.n).filter(|&v| v != c).map(|v| ordered(c, v)).collect(),
            Center::Virtual => BTreeSet::new(),
        };
        EdgeList { n: self.n, edges }
    }
}

pub fn build_star(n: usize, center: usize) -> Result<StarGraph> {
    if n < 2 {
        return Err(Error::Invalid(format!("a star needs n >= 2 nodes, got {n}")));
    }
    if center >= n {
        return Err(Error::Invalid(format!("center {center} out of range for n = {n}")));
    }
    Ok(StarGraph { n, center: Center::Node(center) })
}

pub fn star_sparsity(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Invalid(format!("sparsity needs n >= 2, got {n}")));
    }
    Ok(1.0 - 2.0 / n as f64)
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v { (u, v) } else { (v, u) }
}

/// Undirected simple graph; pairs are stored with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeList {
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for (u, v) in pairs {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!("edge ({u},{v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::Invalid(format!("self-loop ({u},{v})")));
            }
            if !edges.insert(ordered(u, v)) {
                return Err(Error::Invalid(format!("duplicate edge ({u},{v})")));
            }
        }
        Ok(EdgeList { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&ordered(u, v))
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        adj
    }

    pub fn degree(&self, u: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == u || b == u).count()
    }

    /// BFS parent of every node in a traversal from `root`; `None` for the
    /// root and for unreachable nodes.
    pub fn bfs_parents(&self, root: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut parent = vec![None; self.n];
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["u", "v"])?;
        for (u, v) in self.edges() {
            wtr.write_record([u.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the `u,v` format; `n` is one past the largest endpoint unless
    /// given.
    pub fn read_csv<R: Read>(r: R, n: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().map(str::trim).collect::<Vec<_>>() != ["u", "v"] {
            return Err(Error::Parse { path: "<edges>".into(), line: 1, msg: "expected header u,v".into() });
        }
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<usize> {
                rec.get(k).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse {
                    path: "<edges>".into(),
                    line: i + 2,
                    msg: format!("bad endpoint in {:?}", rec),
                })
            };
            pairs.push((parse(0)?, parse(1)?));
        }
        let n = n.unwrap_or_else(|| pairs.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
        EdgeList::new(n, pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diameter {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Diameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diameter::Finite(d) => write!(f, "{d}"),
            Diameter::Infinite => f.write_str("INFINITE"),
        }
    }
}

/// Exact diameter by BFS from every node.
pub fn diameter(g: &EdgeList) -> Diameter {
    let adj = g.adjacency();
    let mut best = 0;
    let mut dist = vec![usize::MAX; g.n];
    let mut queue = VecDeque::new();
    for s in 0..g.n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    best = best.max(dist[v]);
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        if reached < g.n {
            return Diameter::Infinite;
        }
    }
    Diameter::Finite(best)
}

pub fn is_connected(g: &EdgeList) -> bool {
    g.n == 0 || g.bfs_parents(0).iter().enumerate().all(|(v, p)| v == 0 || p.is_some())
}

pub fn is_spanning_tree(g: &EdgeList) -> bool {
    g.n >= 1 && g.len() == g.n - 1 && is_connected(g)
}

/// Number of center edges removed at ratio `p`, rounded half-up.
pub fn perturbed_edge_count(n: usize, p: f64) -> usize {
    (p * (n - 1) as f64 + 0.5).floor() as usize
}

/// Removes `M = round(p (n-1))` center-leaf edges chosen uniformly and
/// reattaches each detached leaf, in ascending order, to a uniformly chosen
/// leaf that kept its center edge.
pub fn perturb_star(g: &StarGraph, p: f64, seed: u64) -> Result<EdgeList> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("perturbation ratio {p} outside [0, 1]")));
    }
    let c = g.center_node().ok_or_else(|| Error::Invalid("cannot perturb a virtual-center star".into()))?;
    let n = g.n;
    let m = perturbed_edge_count(n, p);
    if m >= n - 1 {
        return Err(Error::Invalid(format!("removing {m} of {} center edges leaves no attached leaf", n - 1)));
    }
    let leaves: Vec<usize> = (0..n).filter(|&v| v != c).collect();
    let mut rng = stream_rng(seed, Stream::Perturb);
    let mut removed: Vec<usize> = index::sample(&mut rng, leaves.len(), m).into_iter().map(|i| leaves[i]).collect();
    removed.sort_unstable();
    let attached: Vec<usize> = leaves.iter().copied().filter(|v| removed.binary_search(v).is_err()).collect();

    let mut edges: BTreeSet<(usize, usize)> = attached.iter().map(|&v| ordered(c, v)).collect();
    for &leaf in &removed {
        // A detached leaf has no edges yet and targets are never detached,
        // so the new pair is always fresh.
        let target = attached[rng.random_range(0..attached.len())];
        edges.insert(ordered(leaf, target));
    }
    Ok(EdgeList { n, edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_examples() {
        let s = build_star(4, 0).unwrap().to_edge_list();
        assert_eq!(s.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (0, 3)]);
        let p = build_star(3, 1).unwrap().to_edge_list();
        assert_eq!(diameter(&p), Diameter::Finite(2));
        let e = build_star(2, 0).unwrap().to_edge_list();
        assert_eq!(e.len(), 1);
        assert_eq!(diameter(&e), Diameter::Finite(1));
        assert!(build_star(1, 0).is_err());
        assert!(build_star(4, 4).is_err());
    }

    #[test]
    fn sparsity_values() {
        assert_eq!(star_sparsity(2).unwrap(), 0.0);
        assert!((star_sparsity(883).unwrap() - 0.997_734_994_337_485_8).abs() < 1e-15);
        assert!((star_sparsity(8600).unwrap() - 0.999_767_441_860_465_1).abs() < 1e-15);
        assert!(star_sparsity(1).is_err());
    }

    #[test]
    fn diameter_cases() {
        let path = EdgeList::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(diameter(&path), Diameter::Finite(3));
        let split = EdgeList::new(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(diameter(&split), Diameter::Infinite);
        assert_eq!(diameter(&build_star(10, 3).unwrap().to_edge_list()), Diameter::Finite(2));
    }

    #[test]
    fn spanning_tree_cases() {
        let star = build_star(5, 0).unwrap().to_edge_list();
        assert!(is_spanning_tree(&star));
        let mut extra: Vec<_> = star.edges().collect();
        extra.push((1, 2));
        assert!(!is_spanning_tree(&EdgeList::new(5, extra).unwrap()));
        let fewer: Vec<_> = star.edges().skip(1).collect();
        assert!(!is_spanning_tree(&EdgeList::new(5, fewer).unwrap()));
    }

    #[test]
    fn edge_list_rejects_bad_pairs() {
        assert!(EdgeList::new(3, [(0, 3)]).is_err());
        assert!(EdgeList::new(3, [(1, 1)]).is_err());
        assert!(EdgeList::new(3, [(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = perturb_star(&build_star(12, 0).unwrap(), 0.3, 9).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"u,v\n"));
        assert_eq!(EdgeList::read_csv(buf.as_slice(), Some(12)).unwrap(), g);
    }

    #[test]
    fn perturb_errors() {
        let g = build_star(5, 0).unwrap();
        assert!(perturb_star(&g, -0.1, 0).is_err());
        assert!(perturb_star(&g, 1.0, 0).is_err());
        assert!(perturb_star(&StarGraph::virtual_center(5).unwrap(), 0.2, 0).is_err());
    }
}
