//! Finite-volume Hamiltonians `A_Ω` and `A_Ω − αV`.
//!
//! Off-diagonal couplings are always `−1` between nearest neighbours that are
//! both inside the domain; couplings to outside sites are dropped. Only the
//! diagonal differs between the unperturbed and the perturbed operator, so the
//! lattice graph is shared behind an `Arc`.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::domain::{LatticeDomain, Site};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug)]
struct Graph {
    lattice_dim: usize,
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    /// `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    adj_ptr: Vec<usize>,
    adj: Vec<usize>,
    /// Maximal runs of sites sharing the first coordinate.
    slices: Vec<Range<usize>>,
}

impl Graph {
    fn build(lattice_dim: usize, sites: Vec<Site>) -> Graph {
        let index: HashMap<Site, usize> = sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let mut adj_lists: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
        let mut edges = Vec::new();
        let mut nb = vec![0i64; lattice_dim];
        for (i, s) in sites.iter().enumerate() {
            for axis in 0..lattice_dim {
                for step in [-1, 1] {
                    nb.copy_from_slice(s);
                    nb[axis] += step;
                    if let Some(&j) = index.get(&nb) {
                        adj_lists[i].push(j);
                        if i < j {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
        edges.sort_unstable();
        let mut adj_ptr = Vec::with_capacity(sites.len() + 1);
        let mut adj = Vec::new();
        adj_ptr.push(0);
        for mut list in adj_lists {
            list.sort_unstable();
            adj.extend(list);
            adj_ptr.push(adj.len());
        }
        let mut slices = Vec::new();
        let mut start = 0;
        for i in 1..=sites.len() {
            if i == sites.len() || sites[i][0] != sites[start][0] {
                if i > start {
                    slices.push(start..i);
                }
                start = i;
            }
        }
        Graph {
            lattice_dim,
            sites,
            index,
            edges,
            adj_ptr,
            adj,
            slices,
        }
    }
}

/// Symmetric matrix with `−1` nearest-neighbour couplings and a real diagonal.
#[derive(Debug, Clone)]
pub struct SparseSymmetricOperator {
    graph: Arc<Graph>,
    diagonal: Vec<f64>,
}

impl SparseSymmetricOperator {
    /// Operator on explicit sites (must be lexicographically sorted) with a given diagonal.
    pub fn from_sites(lattice_dim: usize, sites: Vec<Site>, diagonal: Vec<f64>) -> Result<Self> {
        if sites.len() != diagonal.len() {
            return Err(Error::DimensionMismatch {
                expected: sites.len(),
                got: diagonal.len(),
            });
        }
        if let Some(bad) = sites.iter().find(|s| s.len() != lattice_dim) {
            return Err(Error::DimensionMismatch {
                expected: lattice_dim,
                got: bad.len(),
            });
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "sites",
                "must be strictly lexicographically increasing",
            ));
        }
        Ok(SparseSymmetricOperator {
            graph: Arc::new(Graph::build(lattice_dim, sites)),
            diagonal,
        })
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn lattice_dim(&self) -> usize {
        self.graph.lattice_dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.graph.sites
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        self.graph.index.get(site).copied()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Coupled pairs `(i, j)`, `i < j`; each carries the entry `−1`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.graph.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.graph.adj[self.graph.adj_ptr[i]..self.graph.adj_ptr[i + 1]]
    }

    pub(crate) fn slices(&self) -> &[Range<usize>] {
        &self.graph.slices
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonal[i]
        } else if self.neighbors(i).binary_search(&j).is_ok() {
            -1.0
        } else {
            0.0
        }
    }

    /// Same graph, diagonal replaced by `diagonal[i] + delta[i]`.
    pub fn with_diagonal_shift(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: delta.len(),
            });
        }
        Ok(SparseSymmetricOperator {
            graph: Arc::clone(&self.graph),
            diagonal: self
                .diagonal
                .iter()
                .zip(delta)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `self − alpha·diag(potential)`.
    pub fn perturbed(&self, potential: &[f64], alpha: f64) -> Result<Self> {
        let delta: Vec<f64> = potential.iter().map(|v| -alpha * v).collect();
        self.with_diagonal_shift(&delta)
    }

    /// True when every coupling joins consecutive rows.
    pub fn is_tridiagonal(&self) -> bool {
        self.graph.edges.iter().all(|&(i, j)| j == i + 1)
    }

    /// Diagonal and first off-diagonal, when the matrix is tridiagonal.
    pub fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.is_tridiagonal() {
            return None;
        }
        let mut off = vec![0.0; self.len().saturating_sub(1)];
        for &(i, _) in self.edges() {
            off[i] = -1.0;
        }
        Some((self.diagonal.clone(), off))
    }

    /// Maximal absolute row sum, an upper bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.len())
            .map(|i| self.diagonal[i].abs() + self.neighbors(i).len() as f64)
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for &(i, j) in self.edges() {
            m[(i, j)] = -1.0;
            m[(j, i)] = -1.0;
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }

    /// `V` evaluated on every site, in row order.
    pub fn potential(&self, model: &ModelSpec) -> Vec<f64> {
        self.sites().iter().map(|s| model.evaluate_v(s)).collect()
    }
}

/// `A_Ω`: diagonal `2d + f(n)`, `−1` between neighbours inside the domain.
pub fn assemble(domain: &LatticeDomain, model: &ModelSpec) -> Result<SparseSymmetricOperator> {
    if domain.dimension() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: domain.dimension(),
        });
    }
    let sites = domain.enumerate_sites()?;
    let two_d = 2.0 * model.d as f64;
    let diagonal = sites.iter().map(|s| two_d + model.background(s)).collect();
    SparseSymmetricOperator::from_sites(model.d, sites, diagonal)
}

/// `A_Ω − αV`.
pub fn assemble_perturbed(
    domain: &LatticeDomain,
    model: &ModelSpec,
    alpha: f64,
) -> Result<SparseSymmetricOperator> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must be >= 0, got {alpha}"),
        ));
    }
    let base = assemble(domain, model)?;
    let v = base.potential(model);
    base.perturbed(&v, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_path_of_three() {
        let dom = LatticeDomain::ball(1.5, 1).unwrap();
        let op = assemble(&dom, &ModelSpec::free(1, 1.0, 2.0).unwrap()).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        assert_eq!(op.to_dense(), expected);
        assert!(op.is_tridiagonal());
    }

    #[test]
    fn isolated_site_d2() {
        let dom = LatticeDomain::ball(0.5, 2).unwrap();
        let op = assemble(&dom, &ModelSpec::free(2, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(op.to_dense(), DMatrix::from_element(1, 1, 4.0));
    }

    #[test]
    fn period_two_diagonal() {
        let dom = LatticeDomain::ball(1.5, 1).unwrap();
        let model = ModelSpec::period_two([0.0, 3.0], 1.0, 2.0).unwrap();
        let op = assemble(&dom, &model).unwrap();
        // f(n) = cell[n mod 2]
        let oracle: Vec<f64> = [-1i64, 0, 1]
            .iter()
            .map(|n| 2.0 + [0.0, 3.0][n.rem_euclid(2) as usize])
            .collect();
        assert_eq!(op.diagonal(), &oracle[..]);
        assert_eq!(op.diagonal(), &[5.0, 2.0, 5.0]);
    }

    #[test]
    fn annulus_drops_missing_links() {
        let dom = LatticeDomain::annulus(1.0, 2.0, 1).unwrap();
        let op = assemble(&dom, &ModelSpec::free(1, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(op.edges(), &[(0, 1), (2, 3)]);
        let (_, off) = op.tridiagonal().unwrap();
        assert_eq!(off, vec![-1.0, 0.0, -1.0]);
    }

    #[test]
    fn perturbation_is_diagonal() {
        let dom = LatticeDomain::ball(4.5, 2).unwrap();
        let model = ModelSpec::checkerboard(2.0, 1.5, 1.5).unwrap();
        let a = assemble(&dom, &model).unwrap();
        let b = assemble_perturbed(&dom, &model, 7.0).unwrap();
        let diff = a.to_dense() - b.to_dense();
        for i in 0..a.len() {
            for j in 0..a.len() {
                if i == j {
                    let v = model.evaluate_v(&a.sites()[i]);
                    assert!((diff[(i, i)] - 7.0 * v).abs() < 1e-12);
                    assert!(diff[(i, i)] >= 0.0);
                } else {
                    assert_eq!(diff[(i, j)], 0.0);
                }
            }
        }
        let zero = assemble_perturbed(&dom, &model, 0.0).unwrap();
        assert_eq!(zero.to_dense(), a.to_dense());
        assert!(assemble_perturbed(&dom, &model, -1.0).is_err());
    }

    #[test]
    fn single_site_shift() {
        let dom = LatticeDomain::ball(2.5, 1).unwrap();
        let model = ModelSpec::free(1, 1.0, 2.0).unwrap();
        let a = assemble(&dom, &model).unwrap();
        let b = assemble_perturbed(&dom, &model, 8.0).unwrap();
        let i = a.index_of(&[2]).unwrap();
        assert_eq!(a.diagonal()[i] - b.diagonal()[i], 8.0 / 4.0);
    }

    #[test]
    fn dimension_mismatch() {
        let dom = LatticeDomain::ball(2.5, 2).unwrap();
        assert!(matches!(
            assemble(&dom, &ModelSpec::free(1, 1.0, 2.0).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn slices_follow_first_coordinate() {
        let dom = LatticeDomain::ball(2.5, 2).unwrap();
        let op = assemble(&dom, &ModelSpec::free(2, 1.0, 2.0).unwrap()).unwrap();
        let sizes: Vec<usize> = op.slices().iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 5, 5, 5, 3]);
    }
}
