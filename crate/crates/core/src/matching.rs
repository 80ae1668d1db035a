//! Base-station side: the pair-utility matrix and maximum-weight one-to-one
//! matching of cellular links (rows) to D2D links (columns).
//!
//! A zero entry means "no edge". Matchings never contain zero-weight pairs,
//! and among weight-optimal matchings the lexicographically smallest pair set
//! is returned, where a row matched to any column sorts before the same row
//! left unmatched.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::arg("ragged weight matrix"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::arg(format!("weights must be finite and >= 0, got {bad}")));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.cols + n]
    }

    /// Panics on a negative or non-finite weight.
    pub fn set(&mut self, m: usize, n: usize, w: f64) {
        assert!(w.is_finite() && w >= 0.0, "invalid weight {w}");
        self.data[m * self.cols + n] = w;
    }

    pub fn scaled(&self, k: f64) -> Self {
        assert!(k > 0.0 && k.is_finite());
        Self {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.0).count()
    }

    /// Plain CSV grid, one matrix row per line, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for m in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|n| self.get(m, n).to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(m, n)` pairs sorted by `m`.
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: f64,
}

impl Matching {
    pub fn empty() -> Self {
        Self {
            pairs: Vec::new(),
            total_weight: 0.0,
        }
    }
}

/// Sum of the matched weights in ascending pair order.
fn canonical_weight(u: &WeightMatrix, pairs: &[(usize, usize)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted.iter().fold(0.0, |acc, &(m, n)| acc + u.get(m, n))
}

fn tie_tolerance(w: f64) -> f64 {
    1e-9 * w.abs().max(1.0)
}

fn finish(u: &WeightMatrix, mut pairs: Vec<(usize, usize)>) -> Matching {
    pairs.sort_unstable();
    Matching {
        total_weight: canonical_weight(u, &pairs),
        pairs,
    }
}

/// Minimum-cost perfect assignment on a square matrix (row-major `n x n`),
/// shortest augmenting paths with vertex potentials. Returns the column
/// assigned to each row.
fn hungarian_min(cost: &[f64], n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-weight matching restricted to the given rows and columns.
fn max_weight_sub(u: &WeightMatrix, rows: &[usize], cols: &[usize]) -> Vec<(usize, usize)> {
    let dim = rows.len().max(cols.len());
    if dim == 0 || rows.is_empty() || cols.is_empty() {
        return Vec::new();
    }
    let mut cost = vec![0.0; dim * dim];
    for (i, &m) in rows.iter().enumerate() {
        for (j, &n) in cols.iter().enumerate() {
            cost[i * dim + j] = -u.get(m, n);
        }
    }
    hungarian_min(&cost, dim)
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < rows.len() && j < cols.len())
        .map(|(i, j)| (rows[i], cols[j]))
        .filter(|&(m, n)| u.get(m, n) > 0.0)
        .collect()
}

/// Kuhn–Munkres maximum-weight matching with the lexicographic tie rule.
pub fn km_match(u: &WeightMatrix) -> Matching {
    let all_rows: Vec<usize> = (0..u.rows()).collect();
    let all_cols: Vec<usize> = (0..u.cols()).collect();
    let optimum = canonical_weight(u, &max_weight_sub(u, &all_rows, &all_cols));
    let tol = tie_tolerance(optimum);

    // Fix rows in order, each to the smallest column that still admits an
    // optimal completion; a row with no such column stays unmatched.
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut used_cols = vec![false; u.cols()];
    for m in 0..u.rows() {
        let rest_rows: Vec<usize> = (m + 1..u.rows()).collect();
        let mut chosen = None;
        for n in 0..u.cols() {
            if used_cols[n] || u.get(m, n) <= 0.0 {
                continue;
            }
            let rest_cols: Vec<usize> = (0..u.cols()).filter(|&c| c != n && !used_cols[c]).collect();
            let tail = max_weight_sub(u, &rest_rows, &rest_cols);
            let mut candidate = fixed.clone();
            candidate.push((m, n));
            candidate.extend(tail);
            if canonical_weight(u, &candidate) >= optimum - tol {
                chosen = Some(n);
                break;
            }
        }
        if let Some(n) = chosen {
            fixed.push((m, n));
            used_cols[n] = true;
        }
    }
    finish(u, fixed)
}

/// Exhaustive matching oracle; requires `min(M, N) <= 8`.
pub fn brute_force_match(u: &WeightMatrix) -> Result<Matching> {
    if u.rows().min(u.cols()) > 8 {
        return Err(Error::arg(format!(
            "brute-force matching limited to min(M, N) <= 8, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    // Enumerate over the smaller side; `transposed` maps back to (m, n).
    let transposed = u.rows() > u.cols();
    let (outer, inner) = if transposed {
        (u.cols(), u.rows())
    } else {
        (u.rows(), u.cols())
    };
    let weight = |a: usize, b: usize| if transposed { u.get(b, a) } else { u.get(a, b) };
    let to_pair = |a: usize, b: usize| if transposed { (b, a) } else { (a, b) };

    let mut all: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![false; inner];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        a: usize,
        outer: usize,
        inner: usize,
        weight: &dyn Fn(usize, usize) -> f64,
        to_pair: &dyn Fn(usize, usize) -> (usize, usize),
        used: &mut [bool],
        stack: &mut Vec<(usize, usize)>,
        all: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if a == outer {
            all.push(stack.clone());
            return;
        }
        for b in 0..inner {
            if !used[b] && weight(a, b) > 0.0 {
                used[b] = true;
                stack.push(to_pair(a, b));
                rec(a + 1, outer, inner, weight, to_pair, used, stack, all);
                stack.pop();
                used[b] = false;
            }
        }
        rec(a + 1, outer, inner, weight, to_pair, used, stack, all);
    }
    rec(0, outer, inner, &weight, &to_pair, &mut used, &mut stack, &mut all);

    let mut sets: Vec<(f64, Vec<(usize, usize)>)> = all
        .into_iter()
        .map(|mut s| {
            s.sort_unstable();
            (canonical_weight(u, &s), s)
        })
        .collect();
    let best = sets.iter().map(|(w, _)| *w).fold(0.0, f64::max);
    let tol = tie_tolerance(best);
    sets.retain(|(w, _)| *w >= best - tol);
    let chosen = sets
        .into_iter()
        .map(|(_, s)| s)
        .min_by(|a, b| lex_cmp(a, b))
        .unwrap_or_default();
    Ok(finish(u, chosen))
}

/// Order on sorted pair lists: compare row by row; a row matched to a column
/// sorts before the same row unmatched.
fn lex_cmp(a: &[(usize, usize)], b: &[(usize, usize)]) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    // a strict prefix leaves later rows unmatched, so it sorts after
    b.len().cmp(&a.len())
}

/// Sum of matched utilities.
pub fn system_wsee(u: &WeightMatrix, matching: &Matching) -> Result<f64> {
    let mut rows = vec![false; u.rows()];
    let mut cols = vec![false; u.cols()];
    for &(m, n) in &matching.pairs {
        if m >= u.rows() || n >= u.cols() {
            return Err(Error::arg(format!(
                "pair ({m}, {n}) outside a {}x{} matrix",
                u.rows(),
                u.cols()
            )));
        }
        if std::mem::replace(&mut rows[m], true) || std::mem::replace(&mut cols[n], true) {
            return Err(Error::arg(format!("pair ({m}, {n}) breaks one-to-one matching")));
        }
    }
    Ok(canonical_weight(u, &matching.pairs))
}
