//! Graph Laplacians of the relay network and their generalized inverse.
//!
//! For a connected undirected graph the Laplacian `L` has nullspace
//! `span(1)`, and its Moore-Penrose inverse `L†` satisfies
//!
//! ```text
//! L† 1 = 0,        L L† = I - (1/n) 1 1ᵀ
//! ```
//!
//! `L†` is built from the symmetric eigendecomposition of `L` with the
//! null mode dropped.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Eigenvalues below this fraction of the spectral radius are treated as null.
pub const NULL_EIGEN_RELATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("graph not connected")]
    NotConnected,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Relay network topology.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Chain `0 - 1 - ... - (n-1)`; drone `i` couples to `i-1` and `i+1`.
    Path,
    Complete,
    /// Undirected, unweighted, 0-indexed edges. Duplicates are merged.
    Custom(Vec<(usize, usize)>),
}

/// A graph Laplacian together with its generalized inverse.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    laplacian: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
}

impl LaplacianPair {
    pub fn build(topology: &Topology, n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let edges: Vec<(usize, usize)> = match topology {
            Topology::Path => (1..n).map(|i| (i - 1, i)).collect(),
            Topology::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
            Topology::Custom(edges) => edges.clone(),
        };
        Self::from_edges(n, &edges)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut unique = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            unique.insert((a.min(b), a.max(b)));
        }
        if !is_connected(n, &unique) {
            return Err(GraphError::NotConnected);
        }

        let mut laplacian = DMatrix::zeros(n, n);
        for &(a, b) in &unique {
            laplacian[(a, a)] += 1.0;
            laplacian[(b, b)] += 1.0;
            laplacian[(a, b)] -= 1.0;
            laplacian[(b, a)] -= 1.0;
        }
        let pseudo_inverse = pseudo_inverse(&laplacian);
        Ok(Self {
            laplacian,
            pseudo_inverse,
        })
    }

    /// Assembles a pair without any checks. Used to inject faults into the
    /// identity checks.
    pub fn from_raw_parts(laplacian: DMatrix<f64>, pseudo_inverse: DMatrix<f64>) -> Self {
        assert_eq!(laplacian.shape(), pseudo_inverse.shape());
        Self {
            laplacian,
            pseudo_inverse,
        }
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pseudo_inverse
    }

    /// `L v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.laplacian * v
    }

    /// `L† v`
    pub fn apply_pinv(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.pseudo_inverse * v
    }

    /// `vᵀ L† v`
    pub fn pinv_quadratic(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.apply_pinv(v))
    }

    /// Residuals of the two generalized-inverse identities:
    /// `(‖L† 1‖, ‖L L† - (I - 11ᵀ/n)‖_F)`.
    pub fn identity_residuals(&self) -> (f64, f64) {
        let n = self.n();
        let ones = DVector::from_element(n, 1.0);
        let null_residual = self.apply_pinv(&ones).norm();
        let projector = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let proj_residual = (&self.laplacian * &self.pseudo_inverse - projector).norm();
        (null_residual, proj_residual)
    }
}

fn is_connected(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn pseudo_inverse(laplacian: &DMatrix<f64>) -> DMatrix<f64> {
    let n = laplacian.nrows();
    let eigen = SymmetricEigen::new(laplacian.clone());
    let scale = eigen.eigenvalues.amax();
    let threshold = NULL_EIGEN_RELATIVE_TOL * scale;
    let mut pinv = DMatrix::zeros(n, n);
    for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda.abs() < threshold {
            continue;
        }
        let v = eigen.eigenvectors.column(k);
        pinv += (v * v.transpose()) / lambda;
    }
    // The range of L† is 1⊥; double-centering strips null-mode leakage left
    // by eigenvector rounding, then symmetrize.
    let row_means = pinv.column_mean();
    let col_means = pinv.row_mean();
    let grand = pinv.mean();
    let centered = DMatrix::from_fn(n, n, |i, j| {
        pinv[(i, j)] - row_means[i] - col_means[j] + grand
    });
    (&centered + centered.transpose()) * 0.5
}

/// Parses a plain-text edge list: one `i j` pair per line, 0-indexed.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: &str| GraphError::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 2 {
            return Err(parse_err("expected two node indices"));
        }
        let a = fields[0]
            .parse::<usize>()
            .map_err(|e| parse_err(&e.to_string()))?;
        let b = fields[1]
            .parse::<usize>()
            .map_err(|e| parse_err(&e.to_string()))?;
        edges.push((a, b));
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn path_two_nodes() {
        let pair = LaplacianPair::build(&Topology::Path, 2).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(pair.laplacian(), &expected);
    }

    #[test]
    fn path_three_nodes() {
        let pair = LaplacianPair::build(&Topology::Path, 3).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(pair.laplacian(), &expected);
    }

    #[test]
    fn path_two_pseudo_inverse() {
        // L has eigenvalues {0, 2}; the nonzero mode is (1,-1)/√2, so
        // L† = (1/2) · (1/2)[[1,-1],[-1,1]].
        let pair = LaplacianPair::build(&Topology::Path, 2).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert_abs_diff_eq!(pair.pseudo_inverse(), &expected, epsilon = 1e-14);
    }

    #[test]
    fn rejects_small_and_disconnected() {
        assert_eq!(
            LaplacianPair::build(&Topology::Path, 1).unwrap_err(),
            GraphError::TooFewNodes(1)
        );
        let err = LaplacianPair::build(&Topology::Custom(vec![(0, 1), (2, 3)]), 4).unwrap_err();
        assert_eq!(err, GraphError::NotConnected);
        assert_eq!(err.to_string(), "graph not connected");
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            LaplacianPair::from_edges(3, &[(0, 1), (1, 3)]),
            Err(GraphError::NodeOutOfRange(1, 3, 3))
        ));
        assert!(matches!(
            LaplacianPair::from_edges(3, &[(0, 1), (1, 1), (1, 2)]),
            Err(GraphError::SelfLoop(1))
        ));
    }

    #[test]
    fn duplicate_edges_are_merged() {
        let a = LaplacianPair::from_edges(3, &[(0, 1), (1, 0), (1, 2)]).unwrap();
        let b = LaplacianPair::build(&Topology::Path, 3).unwrap();
        assert_eq!(a.laplacian(), b.laplacian());
    }

    #[test]
    fn edge_list_parsing() {
        let edges = parse_edge_list("# ring\n0 1\n1 2\n\n2 0\n").unwrap();
        assert_eq!(edges, vec![(0, 1), (1, 2), (2, 0)]);
        assert!(matches!(
            parse_edge_list("0 1\n1\n"),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(parse_edge_list("0 x\n").is_err());
    }

    #[test]
    fn identities_hold_for_builtin_topologies() {
        for topology in [Topology::Path, Topology::Complete] {
            for n in [2, 3, 10, 50] {
                let pair = LaplacianPair::build(&topology, n).unwrap();
                let (null_res, proj_res) = pair.identity_residuals();
                assert!(null_res <= 1e-10, "{topology:?} n={n}: {null_res}");
                assert!(proj_res <= 1e-8, "{topology:?} n={n}: {proj_res}");
                let l = pair.laplacian();
                assert_eq!(l, &l.transpose());
                for i in 0..n {
                    assert_eq!(l.row(i).sum(), 0.0);
                }
            }
        }
    }

    #[test]
    fn corrupted_pseudo_inverse_breaks_identity() {
        let pair = LaplacianPair::build(&Topology::Path, 4).unwrap();
        let mut bad = pair.pseudo_inverse().clone();
        bad[(0, 1)] = -bad[(0, 1)];
        let corrupted = LaplacianPair::from_raw_parts(pair.laplacian().clone(), bad);
        let (_, proj_res) = corrupted.identity_residuals();
        assert!(proj_res > 1e-3);
    }
}
