//! Sparse symmetric assembly and an envelope (skyline) Cholesky factorization
//! under a reverse Cuthill-McKee ordering.

use std::collections::{BTreeMap, VecDeque};

/// Symmetric matrix stored as its lower triangle in per-row maps.
#[derive(Clone, Debug)]
pub struct SymmetricBuilder {
    n: usize,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl SymmetricBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![BTreeMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Add `v` at `(i, j)` and, implicitly, at `(j, i)`. Off-diagonal entries
    /// should be added once per unordered pair.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        *self.rows[r].entry(c).or_insert(0.0) += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.rows[r].get(&c).copied().unwrap_or(0.0)
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (r, row) in self.rows.iter().enumerate() {
            for (&c, &v) in row {
                y[r] += v * x[c];
                if c != r {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row.keys() {
                if c != r {
                    adj[r].push(c);
                    adj[c].push(r);
                }
            }
        }
        adj
    }

    /// Factor `P A P^T = L L^T`; `None` if a pivot is not positive.
    pub fn cholesky(&self) -> Option<EnvelopeCholesky> {
        EnvelopeCholesky::factor(self)
    }
}

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !seen[v])
            .min_by_key(|&v| deg[v])
            .expect("unvisited vertex remains");
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| (deg[w], w));
            next.dedup();
            for w in next {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor stored row-wise from the first nonzero column of each row.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    fn factor(a: &SymmetricBuilder) -> Option<Self> {
        let n = a.n;
        let perm = reverse_cuthill_mckee(&a.adjacency());
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in a.rows.iter().enumerate() {
            for (&c, &v) in row {
                let (i, j) = (inv[r], inv[c]);
                let (i, j) = if i >= j { (i, j) } else { (j, i) };
                entries[i].push((j, v));
            }
        }
        let first: Vec<usize> = (0..n)
            .map(|i| entries[i].iter().map(|e| e.0).min().unwrap_or(i).min(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0;
        for i in 0..n {
            start.push(len);
            len += i - first[i] + 1;
        }
        start.push(len);
        let mut data = vec![0.0; len];
        for i in 0..n {
            for &(j, v) in &entries[i] {
                data[start[i] + j - first[i]] += v;
            }
        }
        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut s = data[start[i] + j - first[i]];
                let ri = start[i] - first[i];
                let rj = start[j] - first[j];
                for k in lo..j {
                    s -= data[ri + k] * data[rj + k];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    data[ri + i] = s.sqrt();
                } else {
                    data[ri + j] = s / data[rj + j];
                }
            }
        }
        Some(Self {
            perm,
            first,
            start,
            data,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let ri = self.start[i] - self.first[i];
            let mut s = y[i];
            for k in self.first[i]..i {
                s -= self.data[ri + k] * y[k];
            }
            y[i] = s / self.data[ri + i];
        }
        for i in (0..n).rev() {
            let ri = self.start[i] - self.first[i];
            y[i] /= self.data[ri + i];
            let yi = y[i];
            for k in self.first[i]..i {
                y[k] -= self.data[ri + k] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
