//! Sparse symmetric matrices and a direct LDLᵀ solver.
//!
//! Matrices are stored as full-pattern CSR (both triangles, sorted columns,
//! diagonal always present). The factorization orders unknowns by nested
//! dissection on the matrix graph and then runs an up-looking LDLᵀ over the
//! elimination tree. Every factorization and solve bumps a per-thread counter,
//! see [`solver_calls`].

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::scalar::Real;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
    static SOLVES: Cell<usize> = const { Cell::new(0) };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct SolverCalls {
    pub factorizations: usize,
    pub solves: usize,
}

impl SolverCalls {
    pub fn total(&self) -> usize {
        self.factorizations + self.solves
    }

    pub fn since(&self, earlier: SolverCalls) -> SolverCalls {
        SolverCalls {
            factorizations: self.factorizations - earlier.factorizations,
            solves: self.solves - earlier.solves,
        }
    }
}

/// Factorizations and solves performed on the current thread so far.
pub fn solver_calls() -> SolverCalls {
    SolverCalls {
        factorizations: FACTORIZATIONS.with(Cell::get),
        solves: SOLVES.with(Cell::get),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCsr<T> {
    n: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<T>,
}

/// Triplet accumulator. Duplicates are summed in insertion order, so assembly
/// is deterministic for a fixed insertion sequence.
#[derive(Debug, Clone)]
pub struct SymmetricBuilder<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> SymmetricBuilder<T> {
    pub fn new(n: usize) -> Self {
        let entries = (0..n).map(|i| (i, i, T::zero())).collect();
        Self { n, entries }
    }

    /// Adds `w` at (i, j) and (j, i).
    pub fn add_pair(&mut self, i: usize, j: usize, w: T) {
        debug_assert!(i != j);
        self.entries.push((i, j, w));
        self.entries.push((j, i, w));
    }

    pub fn add_diagonal(&mut self, i: usize, w: T) {
        self.entries.push((i, i, w));
    }

    pub fn build(mut self) -> SymmetricCsr<T> {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut ptr = vec![0usize; self.n + 1];
        let mut idx = Vec::with_capacity(self.entries.len());
        let mut val: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *val.last_mut().expect("entry exists") += v;
            } else {
                idx.push(j);
                val.push(v);
                ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            ptr[i + 1] += ptr[i];
        }
        SymmetricCsr { n: self.n, ptr, idx, val }
    }
}

impl<T: Real> SymmetricCsr<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.idx[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.ptr[i]..self.ptr[i + 1];
        match self.idx[r.clone()].binary_search(&j) {
            Ok(k) => self.val[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).fold(T::zero(), |acc, (_, v)| acc + v)).collect()
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// `alpha * self + diag(d)`, same pattern.
    pub fn scaled_plus_diagonal(&self, alpha: T, d: &[T]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in out.ptr[i]..out.ptr[i + 1] {
                out.val[k] *= alpha;
                if out.idx[k] == i {
                    out.val[k] += d[i];
                }
            }
        }
        out
    }

    /// Replaces the rows and columns of `pinned` by identity rows.
    pub fn pinned(&self, pinned: &[usize]) -> Self {
        let mut is_pinned = vec![false; self.n];
        for &p in pinned {
            is_pinned[p] = true;
        }
        let mut out = self.clone();
        for i in 0..self.n {
            for k in out.ptr[i]..out.ptr[i + 1] {
                let j = out.idx[k];
                if is_pinned[i] || is_pinned[j] {
                    out.val[k] = if i == j { T::one() } else { T::zero() };
                }
            }
        }
        out
    }

    fn graph(&self) -> (&[usize], &[usize]) {
        (&self.ptr, &self.idx)
    }
}

/// Fill-reducing order by recursive BFS-level nested dissection.
/// `perm[k]` is the original index eliminated at step `k`.
pub fn nested_dissection(n: usize, ptr: &[usize], idx: &[usize]) -> Vec<usize> {
    const LEAF: usize = 48;
    enum Work {
        Split(Vec<usize>),
        Emit(Vec<usize>),
    }

    let mut order = Vec::with_capacity(n);
    let mut stamp = vec![usize::MAX; n];
    let mut level = vec![usize::MAX; n];
    let mut next_stamp = 0usize;
    let mut stack = vec![Work::Split((0..n).collect())];

    let bfs = |start: usize, s: usize, stamp: &[usize], level: &mut [usize], nodes: &[usize]| -> Vec<usize> {
        for &v in nodes {
            level[v] = usize::MAX;
        }
        let mut queue = vec![start];
        level[start] = 0;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &w in &idx[ptr[u]..ptr[u + 1]] {
                if stamp[w] == s && level[w] == usize::MAX {
                    level[w] = level[u] + 1;
                    queue.push(w);
                }
            }
        }
        queue
    };

    while let Some(work) = stack.pop() {
        let nodes = match work {
            Work::Emit(v) => {
                order.extend(v);
                continue;
            }
            Work::Split(v) => v,
        };
        if nodes.len() <= LEAF {
            order.extend(nodes);
            continue;
        }
        let s = next_stamp;
        next_stamp += 1;
        for &v in &nodes {
            stamp[v] = s;
        }

        let reach = bfs(nodes[0], s, &stamp, &mut level, &nodes);
        if reach.len() < nodes.len() {
            // split off connected components; unreached nodes still have level MAX
            let mut comps = vec![reach];
            for &v in &nodes {
                if level[v] == usize::MAX {
                    comps.push(bfs(v, s, &stamp, &mut level, &[]));
                }
            }
            for c in comps.into_iter().rev() {
                stack.push(Work::Split(c));
            }
            continue;
        }

        let far = *reach.last().expect("non-empty");
        let order_from_far = bfs(far, s, &stamp, &mut level, &nodes);
        let depth = level[*order_from_far.last().expect("non-empty")];
        if depth < 2 {
            order.extend(nodes);
            continue;
        }
        let mut counts = vec![0usize; depth + 1];
        for &v in &nodes {
            counts[level[v]] += 1;
        }
        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (l, &c) in counts.iter().enumerate() {
            acc += c;
            if acc >= half {
                mid = l.clamp(1, depth - 1);
                break;
            }
        }
        let mut part_a = Vec::new();
        let mut part_b = Vec::new();
        let mut sep = Vec::new();
        for &v in &nodes {
            let l = level[v];
            if l < mid {
                part_a.push(v);
            } else if l > mid {
                part_b.push(v);
            } else if idx[ptr[v]..ptr[v + 1]]
                .iter()
                .any(|&w| stamp[w] == s && level[w] == mid + 1)
            {
                sep.push(v);
            } else {
                part_a.push(v);
            }
        }
        stack.push(Work::Emit(sep));
        stack.push(Work::Split(part_b));
        stack.push(Work::Split(part_a));
    }
    order
}

/// `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> LdlFactor<T> {
    pub fn new(a: &SymmetricCsr<T>) -> Result<Self> {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let n = a.dim();
        let (ptr, idx) = a.graph();
        let perm = nested_dissection(n, ptr, idx);
        let mut pinv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }

        // elimination tree and column counts
        let none = usize::MAX;
        let mut parent = vec![none; n];
        let mut flag = vec![none; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (c, _) in a.row(perm[k]) {
                let mut i = pinv[c];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == none {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        let total = lp[n];
        let mut li = vec![0usize; total];
        let mut lx = vec![T::zero(); total];
        let mut d = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|x| *x = 0);
        flag.iter_mut().for_each(|x| *x = none);

        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (c, v) in a.row(perm[k]) {
                let mut i = pinv[c];
                if i > k {
                    continue;
                }
                y[i] += v;
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = T::zero();
            while top < n {
                let i = pattern[top];
                top += 1;
                let yi = y[i];
                y[i] = T::zero();
                let end = lp[i] + lnz[i];
                for p in lp[i]..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                lnz[i] += 1;
            }
            if d[k] == T::zero() || !d[k].is_finite() {
                return Err(Error::Solver(format!("zero or non-finite pivot at row {}", perm[k])));
            }
        }
        Ok(Self { n, perm, lp, li, lx, d })
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    fn solve_raw(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = (0..n).map(|k| b[self.perm[k]]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * x[self.li[p]];
            }
            x[j] = acc;
        }
        let mut out = vec![T::zero(); n];
        for k in 0..n {
            out[self.perm[k]] = x[k];
        }
        out
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        SOLVES.with(|c| c.set(c.get() + 1));
        self.solve_raw(b)
    }
}

/// A factored matrix with residual-checked solves.
#[derive(Debug, Clone)]
pub struct SparseSolver<T> {
    matrix: SymmetricCsr<T>,
    factor: LdlFactor<T>,
    tolerance: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats<T> {
    pub relative_residual: T,
    pub refinement_steps: usize,
}

impl<T: Real> SparseSolver<T> {
    pub fn new(matrix: SymmetricCsr<T>, tolerance: T) -> Result<Self> {
        let factor = LdlFactor::new(&matrix)?;
        Ok(Self {
            matrix,
            factor,
            tolerance,
        })
    }

    pub fn matrix(&self) -> &SymmetricCsr<T> {
        &self.matrix
    }

    /// Solves `A x = b`, refining up to three times while the relative residual
    /// exceeds the tolerance.
    pub fn solve(&self, b: &[T]) -> Result<(Vec<T>, SolveStats<T>)> {
        let mut x = self.factor.solve(b);
        let bnorm = norm(b);
        let residual = |x: &[T]| -> Vec<T> {
            let ax = self.matrix.mul_vec(x);
            b.iter().zip(ax).map(|(&bi, axi)| bi - axi).collect()
        };
        let mut r = residual(&x);
        let scale = if bnorm > T::zero() { bnorm } else { T::one() };
        let mut rel = norm(&r) / scale;
        let mut steps = 0;
        while rel > self.tolerance && steps < 3 {
            let dx = self.factor.solve_raw(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            r = residual(&x);
            let next = norm(&r) / scale;
            steps += 1;
            if !(next < rel) {
                rel = next;
                break;
            }
            rel = next;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite solution".into()));
        }
        Ok((
            x,
            SolveStats {
                relative_residual: rel,
                refinement_steps: steps,
            },
        ))
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}
