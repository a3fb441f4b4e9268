//! Up-looking sparse Cholesky factorization with a fill-reducing ordering.

use crate::error::SolverError;
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;

/// `P A Pᵀ = L Lᵀ` with `L` stored by columns, diagonal entry first.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[k]` is the original index of pivot `k`.
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

/// Sparse column vector in pivot order, indices ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn dot(&self, o: &SparseVec) -> f64 {
        let (mut a, mut b, mut s) = (0, 0, 0.0);
        while a < self.idx.len() && b < o.idx.len() {
            match self.idx[a].cmp(&o.idx[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    s += self.val[a] * o.val[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        s
    }
}

pub fn amd_ordering(a: &CsrMatrix) -> Result<Vec<usize>, SolverError> {
    let n = a.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (p, _, _) = amd::order(n, a.row_ptr(), a.col_idx(), &amd::Control::default())
        .map_err(|s| SolverError::Ordering(format!("{s:?}")))?;
    Ok(p)
}

impl SparseCholesky {
    /// Orders with AMD, then factors.
    pub fn factor(a: &CsrMatrix) -> Result<Self, SolverError> {
        let perm = amd_ordering(a)?;
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self, SolverError> {
        let n = a.n();
        if perm.len() != n {
            return Err(SolverError::Dimension(format!("ordering has {} entries for n = {n}", perm.len())));
        }
        let mut pinv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }

        // upper triangle of P A Pᵀ by columns
        let mut cp = vec![0usize; n + 1];
        for i in 0..n {
            let ci = pinv[i];
            for &j in a.row(i).0 {
                if pinv[j] <= ci {
                    cp[ci + 1] += 1;
                }
            }
        }
        for k in 0..n {
            cp[k + 1] += cp[k];
        }
        let mut fill = cp.clone();
        let mut ci_rows = vec![0usize; cp[n]];
        let mut ci_vals = vec![0.0; cp[n]];
        for i in 0..n {
            let c = pinv[i];
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let r = pinv[j];
                if r <= c {
                    ci_rows[fill[c]] = r;
                    ci_vals[fill[c]] = v;
                    fill[c] += 1;
                }
            }
        }
        let col = |k: usize| cp[k]..cp[k + 1];

        // elimination tree
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for p in col(k) {
                let mut i = ci_rows[p];
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // column counts from row patterns
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &ci_rows[col(k)], &parent, &mut mark, &mut stack);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + counts[k];
        }
        let mut li = vec![0usize; lp[n]];
        let mut lx = vec![0.0; lp[n]];

        // numeric
        let mut next = lp.clone();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = NONE);
        for k in 0..n {
            let top = ereach(k, &ci_rows[col(k)], &parent, &mut mark, &mut stack);
            for p in col(k) {
                x[ci_rows[p]] += ci_vals[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                for p in lp[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(SolverError::NotPositiveDefinite {
                    column: perm[k],
                    pivot: d,
                });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            pinv,
            parent,
            lp,
            li,
            lx,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        self.lsolve(&mut y);
        self.ltsolve(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    fn lsolve(&self, x: &mut [f64]) {
        for j in 0..self.n {
            x[j] /= self.lx[self.lp[j]];
            let xj = x[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
    }

    fn ltsolve(&self, x: &mut [f64]) {
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s / self.lx[self.lp[j]];
        }
    }

    /// `L⁻¹ P e_i` for original index `i`; its pattern is the elimination
    /// tree path from the pivot of `i` to the root.
    pub fn forward_unit(&self, i: usize) -> SparseVec {
        let mut path = Vec::new();
        let mut k = self.pinv[i];
        while k != NONE {
            path.push(k);
            k = self.parent[k];
        }
        let mut dense_pos = vec![NONE; self.n];
        for (a, &k) in path.iter().enumerate() {
            dense_pos[k] = a;
        }
        let mut val = vec![0.0; path.len()];
        val[0] = 1.0;
        for a in 0..path.len() {
            let j = path[a];
            val[a] /= self.lx[self.lp[j]];
            let xj = val[a];
            if xj == 0.0 {
                continue;
            }
            for p in self.lp[j] + 1..self.lp[j + 1] {
                let b = dense_pos[self.li[p]];
                if b != NONE {
                    val[b] -= self.lx[p] * xj;
                }
            }
        }
        SparseVec { idx: path, val }
    }
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), written to
/// `stack[top..]` in topological order.
fn ereach(k: usize, col_rows: &[usize], parent: &[usize], mark: &mut [usize], stack: &mut [usize]) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &start in col_rows {
        let mut i = start;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}
