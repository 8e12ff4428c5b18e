//! Symmetric positive-definite sparse solver: reverse Cuthill-McKee ordering
//! followed by an envelope (skyline) Cholesky factorization.
//!
//! The sparsity pattern is fixed at construction; values are cleared and
//! re-accumulated for every Newton step.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    /// First stored column of each (permuted) row.
    first: Vec<usize>,
    /// Start of each row in `values`; row `i` holds columns `first[i]..=i`.
    offset: Vec<usize>,
    values: Vec<f64>,
    factored: bool,
}

impl SkylineCholesky {
    /// Builds the ordering and envelope for a symmetric pattern given as
    /// adjacency lists (diagonal implied, self-loops ignored).
    pub fn new(adjacency: &[Vec<usize>]) -> Self {
        let n = adjacency.len();
        let perm = reverse_cuthill_mckee(adjacency);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, nbrs) in adjacency.iter().enumerate() {
            let i = inv[old];
            for &o in nbrs {
                let j = inv[o];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            offset.push(total);
            total += i - first[i] + 1;
        }
        offset.push(total);
        SkylineCholesky {
            n,
            perm,
            inv,
            first,
            offset,
            values: vec![0.0; total],
            factored: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored lower-triangle entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`), original indices.
    /// Panics if the entry lies outside the declared pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = (self.inv[i], self.inv[j]);
        let (row, col) = if a >= b { (a, b) } else { (b, a) };
        assert!(
            col >= self.first[row],
            "entry ({i}, {j}) outside sparsity pattern"
        );
        self.values[self.offset[row] + col - self.first[row]] += v;
    }

    /// In-place `L Lᵀ` factorization.
    pub fn factor(&mut self) -> Result<()> {
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let (head, tail) = self.values.split_at_mut(oi);
                let row_j = &head[oj + k0 - fj..oj + j - fj];
                let row_i = &tail[k0 - fi..j - fi];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let djj = head[oj + j - fj];
                tail[j - fi] = (tail[j - fi] - dot) / djj;
            }
            let row = &mut self.values[oi..oi + i - fi + 1];
            let (off, diag) = row.split_at_mut(i - fi);
            let d = diag[0] - off.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite at pivot {i} (value {d:e})"
                )));
            }
            diag[0] = d.sqrt();
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place using the current factorization.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "solve called before factor");
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i] + i - fi + 1];
            let dot: f64 = row[..i - fi]
                .iter()
                .zip(&y[fi..i])
                .map(|(a, b)| a * b)
                .sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i] + i - fi + 1];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}

/// Reverse Cuthill-McKee ordering; returns `perm[new] = old`. Handles
/// disconnected patterns component by component. Deterministic: ties are
/// broken by vertex index.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        let start = pseudo_peripheral(adjacency, &degree, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&w| w != v && !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            nbrs.dedup();
            for w in nbrs {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adjacency: &[Vec<usize>], start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; adjacency.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(adjacency: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let level = bfs_levels(adjacency, current);
        let far = level
            .iter()
            .filter(|&&l| l != usize::MAX)
            .max()
            .copied()
            .unwrap_or(0);
        if far <= ecc && current != seed {
            break;
        }
        ecc = far;
        let next = (0..adjacency.len())
            .filter(|&v| level[v] == far)
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
        let mut adj = vec![Vec::new(); n];
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = 2.0 + shift;
            if i + 1 < n {
                adj[i].push(i + 1);
                adj[i + 1].push(i);
                dense[i][i + 1] = -1.0;
                dense[i + 1][i] = -1.0;
            }
        }
        (adj, dense)
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 12;
        let (adj, dense) = laplacian_1d(n, 0.1);
        let mut chol = SkylineCholesky::new(&adj);
        for i in 0..n {
            for j in 0..=i {
                if dense[i][j] != 0.0 {
                    chol.add(i, j, dense[i][j]);
                }
            }
        }
        chol.factor().unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| dense[i][j] * x_true[j]).sum())
            .collect();
        chol.solve(&mut b);
        for (x, t) in b.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let (adj, _) = laplacian_1d(3, 0.0);
        let mut chol = SkylineCholesky::new(&adj);
        chol.add(0, 0, -1.0);
        assert!(chol.factor().is_err());
    }

    #[test]
    fn rcm_is_a_permutation() {
        // Two components: a star and a path.
        let mut adj = vec![Vec::new(); 7];
        for leaf in 1..4 {
            adj[0].push(leaf);
            adj[leaf].push(0);
        }
        adj[4].push(5);
        adj[5].extend([4, 6]);
        adj[6].push(5);
        let mut p = reverse_cuthill_mckee(&adj);
        p.sort();
        assert_eq!(p, (0..7).collect::<Vec<_>>());
    }
}
