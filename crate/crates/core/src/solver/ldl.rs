//! Sparse LDL' factorization of symmetric quasi-definite matrices.
//!
//! Up-looking factorization over an elimination tree, with dynamic diagonal
//! regularization keyed to the expected sign of each pivot (the KKT systems
//! factored here have a known positive/negative block structure, so LDL'
//! with 1x1 pivots exists for any symmetric permutation). A reverse
//! Cuthill-McKee ordering is compared against the natural order by predicted
//! fill and the cheaper of the two is used.

/// Symmetric matrix in upper-triangular CSC form (diagonal included).
#[derive(Debug, Clone)]
pub struct SymCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymCsc {
    /// Builds from upper-triangle triplets (i <= j required). Duplicates are
    /// summed. Returns the matrix and, for each input triplet, the index of
    /// its final slot in `values` (used to refresh values in place).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> (SymCsc, Vec<usize>) {
        let mut col_entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (row, triplet idx)
        for (k, &(i, j, _)) in triplets.iter().enumerate() {
            assert!(i <= j && j < n, "triplet ({i},{j}) not in upper triangle");
            col_entries[j].push((i, k));
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        let mut slots = vec![0usize; triplets.len()];
        colptr.push(0);
        for entries in col_entries.iter_mut() {
            entries.sort_by_key(|&(r, _)| r);
            let mut last_row = usize::MAX;
            for &(r, k) in entries.iter() {
                if r == last_row {
                    let slot = values.len() - 1;
                    values[slot] += triplets[k].2;
                    slots[k] = slot;
                } else {
                    rowidx.push(r);
                    values.push(triplets[k].2);
                    slots[k] = values.len() - 1;
                    last_row = r;
                }
            }
            colptr.push(rowidx.len());
        }
        (
            SymCsc {
                n,
                colptr,
                rowidx,
                values,
            },
            slots,
        )
    }

    /// Symmetric permutation: returns B = P A P' in upper CSC, with
    /// `perm[new] = old`, plus the mapping from A's storage slots to B's.
    pub fn permute(&self, perm: &[usize]) -> (SymCsc, Vec<usize>) {
        let n = self.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.values.len());
        for j in 0..n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowidx[p];
                let (a, b) = (inv[i], inv[j]);
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                triplets.push((a, b, self.values[p]));
            }
        }
        SymCsc::from_triplets(n, &triplets)
    }
}

/// Elimination tree and column counts for the upper CSC pattern.
fn symbolic(a: &SymCsc) -> (Vec<isize>, Vec<usize>) {
    let n = a.n;
    let mut parent = vec![-1isize; n];
    let mut flag = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let mut i = a.rowidx[p];
            while i < k && flag[i] != k {
                if parent[i] == -1 {
                    parent[i] = k as isize;
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i] as usize;
            }
        }
    }
    (parent, lnz)
}

/// Predicted nonzeros of L for a given ordering of `a`.
fn predicted_fill(a: &SymCsc, perm: &[usize]) -> usize {
    let (permuted, _) = a.permute(perm);
    let (_, lnz) = symbolic(&permuted);
    lnz.iter().sum()
}

/// Reverse Cuthill-McKee ordering on the adjacency of the pattern.
fn rcm_order(a: &SymCsc) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for p in a.colptr[j]..a.colptr[j + 1] {
            let i = a.rowidx[p];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nbrs in adj.iter_mut() {
        nbrs.sort_unstable();
        nbrs.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|v| v.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.sort_by_key(|&v| (degree[v], v));
    let mut queue = std::collections::VecDeque::new();
    for &start in &nodes {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Picks the ordering (natural or RCM) with the smaller predicted fill.
pub fn choose_ordering(a: &SymCsc) -> Vec<usize> {
    let natural: Vec<usize> = (0..a.n).collect();
    let rcm = rcm_order(a);
    if predicted_fill(a, &rcm) < predicted_fill(a, &natural) {
        rcm
    } else {
        natural
    }
}

/// LDL' factorization workspace; reusable across value updates that keep the
/// sparsity pattern fixed.
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    permuted: SymCsc,
    /// Slot mapping: original storage slot -> permuted storage slot.
    slot_map: Vec<usize>,
    parent: Vec<isize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    /// Expected pivot signs in permuted order (+1 / -1).
    signs: Vec<i8>,
    /// Diagonal bumps applied during the last numeric factorization.
    pub regularizations: usize,
    // scratch
    y: Vec<f64>,
    pattern: Vec<usize>,
    pattern_tmp: Vec<usize>,
    flag: Vec<usize>,
    lnz_used: Vec<usize>,
    work: Vec<f64>,
}

impl LdlFactor {
    /// Symbolic setup. `signs[i]` gives the expected pivot sign of original
    /// index `i`; `reg_eps` is the dynamic regularization floor.
    pub fn new(a: &SymCsc, signs_original: &[i8]) -> LdlFactor {
        let perm = choose_ordering(a);
        let (permuted, slot_map_perm) = a.permute(&perm);
        let (parent, lnz) = symbolic(&permuted);
        let mut lp = Vec::with_capacity(a.n + 1);
        lp.push(0usize);
        for &c in &lnz {
            lp.push(lp.last().unwrap() + c);
        }
        let total = *lp.last().unwrap();
        let signs = perm.iter().map(|&old| signs_original[old]).collect();
        LdlFactor {
            n: a.n,
            perm,
            permuted,
            slot_map: slot_map_perm,
            parent,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; a.n],
            signs,
            regularizations: 0,
            y: vec![0.0; a.n],
            pattern: vec![0; a.n],
            pattern_tmp: vec![0; a.n],
            flag: vec![usize::MAX; a.n],
            lnz_used: vec![0; a.n],
            work: vec![0.0; a.n],
        }
    }

    /// Refreshes the permuted values from the original matrix (same pattern)
    /// and refactors.
    pub fn refactor(&mut self, a: &SymCsc, reg_eps: f64) {
        for v in self.permuted.values.iter_mut() {
            *v = 0.0;
        }
        // permute() enumerated A's storage slots column by column when it
        // built its triplets, so slot_map is indexed by that same order.
        for (k, &v) in a.values.iter().enumerate() {
            self.permuted.values[self.slot_map[k]] += v;
        }
        self.factor(reg_eps);
    }

    fn factor(&mut self, reg_eps: f64) {
        let n = self.n;
        let a = &self.permuted;
        self.regularizations = 0;
        for i in 0..n {
            self.lnz_used[i] = 0;
            self.flag[i] = usize::MAX;
            self.y[i] = 0.0;
        }
        for k in 0..n {
            // find pattern of row k of L
            let mut top = n;
            self.flag[k] = k;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let mut i = a.rowidx[p];
                debug_assert!(i <= k);
                self.y[i] += a.values[p];
                let mut len = 0usize;
                while self.flag[i] != k {
                    self.pattern_tmp[len] = i;
                    len += 1;
                    self.flag[i] = k;
                    i = self.parent[i] as usize;
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    self.pattern[top] = self.pattern_tmp[len];
                }
            }
            let mut dk = self.y[k];
            self.y[k] = 0.0;
            for idx in top..n {
                let i = self.pattern[idx];
                let yi = self.y[i];
                self.y[i] = 0.0;
                let start = self.lp[i];
                let used = self.lnz_used[i];
                for p in start..start + used {
                    self.y[self.li[p]] -= self.lx[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                self.li[start + used] = k;
                self.lx[start + used] = lki;
                self.lnz_used[i] += 1;
            }
            // dynamic regularization toward the expected sign
            if self.signs[k] >= 0 {
                if dk < reg_eps {
                    dk = reg_eps;
                    self.regularizations += 1;
                }
            } else if dk > -reg_eps {
                dk = -reg_eps;
                self.regularizations += 1;
            }
            self.d[k] = dk;
        }
    }

    /// Solves A x = b in place (b holds x on return).
    pub fn solve(&mut self, b: &mut [f64]) {
        let n = self.n;
        // permute rhs
        for i in 0..n {
            self.work[i] = b[self.perm[i]];
        }
        // L z = b
        for j in 0..n {
            let v = self.work[j];
            if v != 0.0 {
                for p in self.lp[j]..self.lp[j + 1] {
                    self.work[self.li[p]] -= self.lx[p] * v;
                }
            }
        }
        // D
        for j in 0..n {
            self.work[j] /= self.d[j];
        }
        // L' x = z
        for j in (0..n).rev() {
            let mut v = self.work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                v -= self.lx[p] * self.work[self.li[p]];
            }
            self.work[j] = v;
        }
        // unpermute
        for i in 0..n {
            b[self.perm[i]] = self.work[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            x.swap(col, piv);
            let d = m[col][col];
            for r in col + 1..n {
                let f = m[r][col] / d;
                if f != 0.0 {
                    for c in col..n {
                        let upper = m[col][c];
                        m[r][c] -= f * upper;
                    }
                    x[r] -= f * x[col];
                }
            }
        }
        for r in (0..n).rev() {
            let mut v = x[r];
            for c in r + 1..n {
                v -= m[r][c] * x[c];
            }
            x[r] = v / m[r][r];
        }
        x
    }

    #[test]
    fn matches_dense_on_quasi_definite_kkt() {
        // [[P + sigma I, A'], [A, -rho^-1 I]] for a small random-ish P, A
        let p = [2.0, 0.5, 1.0];
        let a_rows = [[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]];
        let n = 3;
        let m = 2;
        let dim = n + m;
        let mut triplets = Vec::new();
        let mut dense = vec![vec![0.0; dim]; dim];
        for i in 0..n {
            triplets.push((i, i, p[i] + 1e-6));
            dense[i][i] = p[i] + 1e-6;
        }
        for (r, row) in a_rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((c, n + r, v));
                    dense[c][n + r] = v;
                    dense[n + r][c] = v;
                }
            }
            triplets.push((n + r, n + r, -0.5));
            dense[n + r][n + r] = -0.5;
        }
        let (sym, _slots) = SymCsc::from_triplets(dim, &triplets);
        let mut signs = vec![1i8; n];
        signs.extend(vec![-1i8; m]);
        let mut f = LdlFactor::new(&sym, &signs);
        f.refactor(&sym, 1e-13);
        assert_eq!(f.regularizations, 0);
        let b = vec![1.0, -2.0, 3.0, 0.5, -0.25];
        let mut x = b.clone();
        f.solve(&mut x);
        let expect = dense_solve(&dense, &b);
        for (xi, ei) in x.iter().zip(&expect) {
            assert!((xi - ei).abs() < 1e-10, "{x:?} vs {expect:?}");
        }
    }

    #[test]
    fn value_refresh_reuses_pattern() {
        let triplets = vec![(0, 0, 4.0), (0, 1, 1.0), (1, 1, -2.0)];
        let (mut sym, slots) = SymCsc::from_triplets(2, &triplets);
        let mut f = LdlFactor::new(&sym, &[1, -1]);
        f.refactor(&sym, 1e-13);
        let mut x = vec![1.0, 1.0];
        f.solve(&mut x);
        // A = [[4, 1], [1, -2]]; solve [[4,1],[1,-2]] x = [1,1] -> x = (1/3, -1/3)
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((x[1] + 1.0 / 3.0).abs() < 1e-12);
        // change values, same pattern
        sym.values[slots[0]] = 9.0;
        f.refactor(&sym, 1e-13);
        let mut x = vec![1.0, 1.0];
        f.solve(&mut x);
        // [[9,1],[1,-2]] x = [1,1] -> x = (3/19, -8/19)
        assert!((x[0] - 3.0 / 19.0).abs() < 1e-12, "{x:?}");
        assert!((x[1] + 8.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn regularization_rescues_zero_pivot() {
        let triplets = vec![(0, 0, 0.0), (0, 1, 1.0), (1, 1, 0.0)];
        let (sym, _) = SymCsc::from_triplets(2, &triplets);
        let mut f = LdlFactor::new(&sym, &[1, -1]);
        f.refactor(&sym, 1e-7);
        assert!(f.regularizations > 0);
        let mut x = vec![1.0, 1.0];
        f.solve(&mut x); // must not panic or produce NaN
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
