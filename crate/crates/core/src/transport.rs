//! Optimal-permutation solvers: exact linear assignment on the kernel
//! discrepancy cost and a local-search heuristic for the smoothness Ansatz.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram, regularized_solve, KernelSpec, PointSet};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A bijection of 0..n-1. `map[n]` is the source row matched to slot n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &i in &map {
            if i >= n || seen[i] {
                return Err(Error::InvalidParam("not a permutation".into()));
            }
            seen[i] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, n: usize) -> usize {
        self.map[n]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (n, &i) in self.map.iter().enumerate() {
            inv[i] = n;
        }
        Permutation { map: inv }
    }

    /// Row n of the result is row map[n] of the input.
    pub fn apply_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (n, &i) in self.map.iter().enumerate() {
            out.set_row(n, &m.row(i));
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(n, &i)| n == i)
    }
}

/// Square cost matrix for the assignment problem; cost[n][m] = d(X^m, P^n).
#[derive(Debug, Clone)]
pub struct AssignmentCost {
    cost: DMatrix<f64>,
}

impl AssignmentCost {
    pub fn new(cost: DMatrix<f64>) -> Result<Self> {
        if !cost.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("assignment cost"));
        }
        Ok(AssignmentCost { cost })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn n(&self) -> usize {
        self.cost.nrows()
    }
}

/// cost[n][m] = d_k(X^m, P^n), so that lap_solve minimizes
/// sum_n d_k(X^{sigma(n)}, P^n).
pub fn mmd_cost(spec: &KernelSpec, x: &PointSet, p: &PointSet) -> Result<AssignmentCost> {
    if x.len() != p.len() {
        return Err(Error::size(x.len(), p.len(), "mmd_cost sizes"));
    }
    if x.dim() != p.dim() {
        return Err(Error::dim(x.dim(), p.dim(), "mmd_cost dimensions"));
    }
    let n = x.len();
    // d_k(x, p) = k(x,x) + k(p,p) - 2 k(x,p); the self terms are one kernel
    // evaluation per point, the cross terms one Gram product
    let k_xp = gram(spec, x, p)?;
    let xr = x.rows();
    let pr = p.rows();
    let self_x: Vec<f64> = xr
        .iter()
        .map(|r| spec.eval(r.as_slice(), r.as_slice()))
        .collect::<Result<_>>()?;
    let self_p: Vec<f64> = pr
        .iter()
        .map(|r| spec.eval(r.as_slice(), r.as_slice()))
        .collect::<Result<_>>()?;
    let cost = DMatrix::from_fn(n, n, |ni, m| {
        (self_x[m] + self_p[ni] - 2.0 * k_xp.entries()[(m, ni)]).max(0.0)
    });
    AssignmentCost::new(cost)
}

/// Exact minimum-cost assignment via shortest augmenting paths with
/// potentials (Jonker-Volgenant class, O(N^3)). For N <= 32 the result is
/// post-processed to the lexicographically smallest optimal permutation;
/// above that the (deterministic) solver output is returned as is.
pub fn lap_solve(cost: &AssignmentCost) -> Result<(Permutation, f64)> {
    let n = cost.n();
    if cost.cost.nrows() != cost.cost.ncols() {
        return Err(Error::size(
            cost.cost.nrows(),
            cost.cost.ncols(),
            "lap_solve cost",
        ));
    }
    if n == 0 {
        return Err(Error::Empty("lap_solve cost"));
    }
    let mut assign = lap_min(&cost.cost);
    let total: f64 = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| cost.cost[(r, c)])
        .sum();

    if n <= 32 {
        assign = lexicographic_refine(&cost.cost, &assign, total);
    }
    let total: f64 = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| cost.cost[(r, c)])
        .sum();
    Ok((Permutation::new(assign)?, total))
}

/// Dense shortest-augmenting-path assignment with lazy potential updates:
/// each Dijkstra round touches only the still-unassigned columns, and the
/// per-round price changes are applied once at the end of the row via the
/// cumulative path length. Returns row -> column.
fn lap_min(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // row-major copy: the scan walks rows, DMatrix stores columns
    let mut c = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = cost[(i, j)];
        }
    }
    // 1-indexed arrays with a virtual column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row assigned to column j
    let mut way = vec![0usize; n + 1];

    // rows whose cheapest columns are adjacent compete locally, which keeps
    // augmenting paths short; processing rows sorted by argmin column is
    // measurably faster than input order and cannot change the optimum
    let mut order: Vec<usize> = (1..=n).collect();
    let amin: Vec<usize> = (0..n)
        .map(|i| {
            let row = &c[i * n..(i + 1) * n];
            let mut best = 0usize;
            for (j, &val) in row.iter().enumerate() {
                if val < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    order.sort_by_key(|&i| amin[i - 1]);

    // minv is stored shifted by the cumulative path length at write time
    let mut minv = vec![0.0f64; n + 1];
    let mut unassigned: Vec<usize> = Vec::with_capacity(n);
    let mut visited: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
    for &i in &order {
        p[0] = i;
        let mut j0 = 0usize;
        let mut dist = 0.0f64; // cumulative shortest-path length
        unassigned.clear();
        unassigned.extend(1..=n);
        for j in 1..=n {
            minv[j] = f64::INFINITY;
        }
        visited.clear();
        loop {
            visited.push((j0, dist));
            let i0 = p[j0];
            // u[i0] and v[j] (j unassigned) are unchanged within this row's
            // search, so the raw potentials stay valid until the final sweep
            let ui0 = u[i0];
            let row = &c[(i0 - 1) * n..i0 * n];
            let mut best = f64::INFINITY;
            let mut best_pos = 0usize;
            for (pos, &j) in unassigned.iter().enumerate() {
                let cur = row[j - 1] - ui0 - v[j] + dist;
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < best {
                    best = minv[j];
                    best_pos = pos;
                }
            }
            dist = best;
            let j1 = unassigned.swap_remove(best_pos);
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        for &(j, d_at) in &visited {
            u[p[j]] += dist - d_at;
            v[j] -= dist - d_at;
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
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}


/// Among optimal assignments, pick the lexicographically smallest: fix rows
/// in order to the smallest column that still attains the optimum, re-solving
/// the remaining subproblem after every change.
fn lexicographic_refine(cost: &DMatrix<f64>, assign: &[usize], optimum: f64) -> Vec<usize> {
    let n = cost.nrows();
    let tol = 1e-9 * (1.0 + optimum.abs());
    let mut out: Vec<usize> = assign.to_vec();
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let mut cols: Vec<usize> = free_cols.clone();
        cols.sort_unstable();
        let mut chosen = out[row];
        for &c in &cols {
            if c >= chosen {
                break;
            }
            let rest_rows: Vec<usize> = ((row + 1)..n).collect();
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let sub_total = if rest_rows.is_empty() {
                0.0
            } else {
                let sub = DMatrix::from_fn(rest_rows.len(), rest_cols.len(), |i, j| {
                    cost[(rest_rows[i], rest_cols[j])]
                });
                let sub_assign = lap_min(&sub);
                sub_assign
                    .iter()
                    .enumerate()
                    .map(|(r, &cc)| sub[(r, cc)])
                    .sum()
            };
            if fixed_cost + cost[(row, c)] + sub_total <= optimum + tol {
                chosen = c;
                break;
            }
        }
        if chosen != out[row] {
            out[row] = chosen;
            let rest_rows: Vec<usize> = ((row + 1)..n).collect();
            let rest_cols: Vec<usize> =
                free_cols.iter().copied().filter(|&x| x != chosen).collect();
            if !rest_rows.is_empty() {
                let sub = DMatrix::from_fn(rest_rows.len(), rest_cols.len(), |i, j| {
                    cost[(rest_rows[i], rest_cols[j])]
                });
                let sub_assign = lap_min(&sub);
                for (r, &cc) in sub_assign.iter().enumerate() {
                    out[row + 1 + r] = rest_cols[cc];
                }
            }
        }
        fixed_cost += cost[(row, chosen)];
        free_cols.retain(|&x| x != chosen);
    }
    out
}

/// Linear operator B with ||B X^sigma||_F^2 equal to the smoothness Ansatz
/// objective: B stacks the decoder gradient at every training point, applied
/// to the ridge-inverted Gram.
pub struct SmoothnessOperator {
    b: DMatrix<f64>,
    n: usize,
}

impl SmoothnessOperator {
    pub fn build(spec: &KernelSpec, p: &PointSet) -> Result<SmoothnessOperator> {
        let n = p.len();
        let dp = p.dim();
        let g = gram(spec, p, p)?;
        // K^{-1} with the spec's ridge
        let kinv = regularized_solve(&g, &DMatrix::identity(n, n), spec.regularization)?;
        let rows = p.rows();
        let mut w = DMatrix::zeros(n * dp, n);
        for i in 0..n {
            for m in 0..n {
                let grad = spec.grad_wrt_second(&rows[m], &rows[i])?;
                for d in 0..dp {
                    w[(i * dp + d, m)] = grad[d];
                }
            }
        }
        Ok(SmoothnessOperator { b: w * kinv, n })
    }

    pub fn objective(&self, x_sigma: &DMatrix<f64>) -> Result<f64> {
        if x_sigma.nrows() != self.n {
            return Err(Error::size(self.n, x_sigma.nrows(), "sp objective rows"));
        }
        Ok((&self.b * x_sigma).norm_squared())
    }
}

/// Squared Frobenius norm of the stacked decoder gradient at the training
/// points: the empirical Dirichlet energy of p -> decoded x.
pub fn sp_objective(spec: &KernelSpec, p: &PointSet, x_sigma: &DMatrix<f64>) -> Result<f64> {
    SmoothnessOperator::build(spec, p)?.objective(x_sigma)
}

/// Minimizes the smoothness Ansatz over permutations of the rows of `x`.
/// Exhaustive for small N when the budget covers N!, otherwise greedy 2-swap
/// local search with seeded random restarts. `budget` counts objective
/// evaluations; budget 0 returns the identity.
pub fn sp_solve(
    spec: &KernelSpec,
    p: &PointSet,
    x: &PointSet,
    budget: usize,
    seed: u64,
) -> Result<(Permutation, f64)> {
    let n = p.len();
    if x.len() != n {
        return Err(Error::size(n, x.len(), "sp_solve sizes"));
    }
    let op = SmoothnessOperator::build(spec, p)?;
    let xm = x.matrix();
    let identity = Permutation::identity(n);
    let id_obj = op.objective(xm)?;
    if budget == 0 || n <= 1 {
        return Ok((identity, id_obj));
    }

    let factorial = |k: usize| -> Option<usize> {
        let mut f: usize = 1;
        for i in 2..=k {
            f = f.checked_mul(i)?;
        }
        Some(f)
    };
    if n <= 8 {
        if let Some(nf) = factorial(n) {
            if nf <= budget {
                return exhaustive_sp(&op, xm, n);
            }
        }
    }

    // Local search. Precompute columns of B once; maintain Y = B X^sigma and
    // evaluate a candidate swap (a,b) through the rank-one update
    // Y + (B_a - B_b)(x_{s(b)} - x_{s(a)})^T without forming it.
    let b = &op.b;
    let restarts = 1 + (budget / (n * n * 4)).min(15);
    let evals_per_restart = budget / restarts.max(1);

    let run_restart = |r: usize| -> (Vec<usize>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut perm: Vec<usize> = (0..n).collect();
        if r > 0 {
            perm.shuffle(&mut rng);
        }
        let xs = Permutation { map: perm.clone() }.apply_rows(xm);
        let mut y = b * &xs;
        let mut obj = y.norm_squared();
        let mut evals = 0usize;
        let mut improved = true;
        while improved && evals < evals_per_restart {
            improved = false;
            'sweep: for a in 0..n {
                for bb in (a + 1)..n {
                    if evals >= evals_per_restart {
                        break 'sweep;
                    }
                    evals += 1;
                    // u = B_a - B_b (column), v = x_{perm[bb]} - x_{perm[a]}
                    let u = b.column(a) - b.column(bb);
                    let xa = xm.row(perm[a]);
                    let xb = xm.row(perm[bb]);
                    let v = xb - xa;
                    // ||Y + u v^T||^2 = ||Y||^2 + 2 u^T Y v + ||u||^2 ||v||^2
                    let yv = &y * v.transpose();
                    let cross: f64 = u.dot(&yv.column(0));
                    let cand = obj + 2.0 * cross + u.norm_squared() * v.norm_squared();
                    if cand < obj - 1e-12 * (1.0 + obj) {
                        // commit
                        y += &u * v;
                        obj = cand;
                        perm.swap(a, bb);
                        improved = true;
                    }
                }
            }
        }
        // recompute exactly to shed accumulated rank-one drift
        let xs = Permutation { map: perm.clone() }.apply_rows(xm);
        let obj = (b * &xs).norm_squared();
        (perm, obj)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<(Vec<usize>, f64)> = (0..restarts).into_par_iter().map(run_restart).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(Vec<usize>, f64)> = (0..restarts).map(run_restart).collect();

    let mut best_perm = identity.map.clone();
    let mut best_obj = id_obj;
    for (perm, obj) in results {
        if obj < best_obj - 1e-15 * (1.0 + best_obj)
            || (obj <= best_obj && perm < best_perm)
        {
            best_obj = obj;
            best_perm = perm;
        }
    }
    Ok((Permutation::new(best_perm)?, best_obj))
}

fn exhaustive_sp(
    op: &SmoothnessOperator,
    xm: &DMatrix<f64>,
    n: usize,
) -> Result<(Permutation, f64)> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_obj = f64::INFINITY;
    loop {
        let xs = Permutation { map: perm.clone() }.apply_rows(xm);
        let obj = op.objective(&xs)?;
        if obj < best_obj {
            best_obj = obj;
            best = perm.clone();
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok((Permutation::new(best)?, best_obj))
}

/// Lexicographic next permutation; false when wrapped around.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
