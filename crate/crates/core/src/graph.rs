//! Undirected, unweighted communication graphs and their Laplacians.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, symmetric_eigenvalues, Matrix};

/// Undirected graph on nodes `0..n`. Edges are stored once each, as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphLiteral", into = "GraphLiteral")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphLiteral {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphLiteral> for Graph {
    type Error = Error;

    fn try_from(lit: GraphLiteral) -> Result<Self> {
        Graph::new(lit.n, lit.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for GraphLiteral {
    fn from(g: Graph) -> Self {
        GraphLiteral {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            list.push(key);
        }
        Ok(Self { n, edges: list })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, std::iter::empty())
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
    }

    /// The four-node pendulum network: edges 1-2, 1-3, 1-4, 2-3 (0-based below).
    pub fn pendulum_example() -> Self {
        Self::new(4, [(0, 1), (0, 2), (0, 3), (1, 2)]).expect("static graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Unordered edges, each listed once.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn degree(&self) -> Matrix {
        let mut d = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            d[(i, i)] += 1.0;
            d[(j, j)] += 1.0;
        }
        d
    }

    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(i, j)| {
            if i == node {
                Some(j)
            } else if j == node {
                Some(i)
            } else {
                None
            }
        })
    }

    /// Relabel nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n
            )));
        }
        Self::new(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
    }
}

/// `L = D - A`.
pub fn laplacian(g: &Graph) -> Matrix {
    g.degree() - g.adjacency()
}

/// `L ⊗ I_m`, the Laplacian acting on stacked m-vectors.
pub fn laplacian_kron(g: &Graph, m: usize) -> Matrix {
    kron(&laplacian(g), &Matrix::identity(m, m))
}

/// Breadth-first reachability from node 0.
pub fn is_connected(g: &Graph) -> bool {
    let mut visited = vec![false; g.n];
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(v) = queue.pop_front() {
        for w in g.neighbours(v) {
            if !visited[w] {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    visited.into_iter().all(|v| v)
}

pub fn laplacian_spectrum(g: &Graph) -> Vec<f64> {
    symmetric_eigenvalues(&laplacian(g))
}

/// Second-smallest Laplacian eigenvalue (algebraic connectivity); 0 for a single node.
pub fn fiedler_value(g: &Graph) -> f64 {
    let ev = laplacian_spectrum(g);
    let v = ev.get(1).copied().unwrap_or(0.0);
    // Jacobi leaves ~1e-15 residue on exact zeros.
    if v.abs() < 1e-10 {
        0.0
    } else {
        v
    }
}
