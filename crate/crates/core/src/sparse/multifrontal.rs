//! Multifrontal LU on the supernodal elimination tree of `A + Aᵀ`.
//!
//! The symbolic phase (elimination tree, postorder, supernodes and their row
//! structures) depends only on the sparsity pattern and the fill-reducing
//! order, so it is computed once and reused across factorizations. Each
//! supernode is factored as a dense frontal matrix: threshold partial
//! pivoting within its fully summed rows, a dense Schur complement passed to
//! the parent, and pivots that stay tiny against their column perturbed.
//! Perturbed factors are only approximate; solves are meant to be polished
//! by iterative refinement.

use nalgebra::DMatrix;

use super::csr::SparseMatrix;
use super::ordering::Ordering;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Child supernodes are merged into their parent while the merged node has
/// at most this many columns, trading a few explicit zeros for larger dense
/// kernels.
const RELAX_COLUMNS: usize = 16;

/// Smallest pivot accepted, relative to the largest entry of its front column.
const PIVOT_PERTURBATION: f64 = 1.5e-8;

/// Pattern-only analysis shared by all matrices with the same structure.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    /// Elimination position -> original index.
    perm: Vec<usize>,
    /// Original index -> elimination position.
    iperm: Vec<usize>,
    /// Supernode `s` owns positions `start[s]..start[s + 1]`.
    start: Vec<usize>,
    /// Off-diagonal row structure of each supernode, ascending positions.
    rows: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Symbolic {
    /// Analyzes the pattern of `a` eliminated in the given order. The order
    /// is refined to a postorder of the elimination tree, which has the same
    /// fill.
    pub fn analyze(a: &SparseMatrix, ordering: &Ordering) -> Result<Self> {
        let n = a.dim();
        if ordering.len() != n {
            return Err(Error::Dimension(format!(
                "ordering of length {} for a {n}x{n} matrix",
                ordering.len()
            )));
        }
        let first = ordering.perm();
        let adj = symmetric_adjacency(a, first);
        let parent = elimination_tree(&adj);
        let post = postorder(&parent);

        let perm: Vec<usize> = post.iter().map(|&v| first[v]).collect();
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        let adj = symmetric_adjacency(a, &perm);
        let parent = elimination_tree(&adj);

        let structs = column_structures(&adj, &parent);
        let mut child_count = vec![0usize; n];
        for &p in &parent {
            if p != NONE {
                child_count[p] += 1;
            }
        }

        // Fundamental supernodes: a chain j-1 -> j with identical structure.
        let mut start = vec![0];
        for j in 1..n {
            let chain = parent[j - 1] == j
                && child_count[j] == 1
                && structs[j - 1].len() == structs[j].len() + 1;
            if !chain {
                start.push(j);
            }
        }
        start.push(n);
        let ns = start.len() - 1;
        let mut owner = vec![0; n];
        for s in 0..ns {
            owner[start[s]..start[s + 1]].fill(s);
        }
        let sn_parent = |s: usize, start: &[usize], owner: &[usize]| {
            let p = parent[start[s + 1] - 1];
            if p == NONE { NONE } else { owner[p] }
        };

        // Relaxed amalgamation of a supernode into the one that follows it.
        let mut merged_start = vec![0];
        let mut merged_rows = Vec::new();
        let mut width = 0;
        for s in 0..ns {
            width += start[s + 1] - start[s];
            let p = sn_parent(s, &start, &owner);
            if p == s + 1 && width + (start[p + 1] - start[p]) <= RELAX_COLUMNS {
                continue;
            }
            merged_start.push(start[s + 1]);
            merged_rows.push(structs[start[s + 1] - 1].clone());
            width = 0;
        }
        let start = merged_start;
        let ns = start.len() - 1;
        for s in 0..ns {
            owner[start[s]..start[s + 1]].fill(s);
        }
        let mut children = vec![Vec::new(); ns];
        for s in 0..ns {
            let p = sn_parent(s, &start, &owner);
            if p != NONE {
                children[p].push(s);
            }
        }
        Ok(Self {
            n,
            perm,
            iperm,
            start,
            rows: merged_rows,
            children,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn supernodes(&self) -> usize {
        self.start.len() - 1
    }

    /// Entries stored in the dense `L` and `U` panels.
    pub fn factor_entries(&self) -> usize {
        (0..self.supernodes())
            .map(|s| {
                let k = self.start[s + 1] - self.start[s];
                let m = k + self.rows[s].len();
                2 * m * k - k * k
            })
            .sum()
    }
}

/// Neighbor lists of the graph of `A + Aᵀ` in elimination positions.
fn symmetric_adjacency(a: &SparseMatrix, perm: &[usize]) -> Vec<Vec<usize>> {
    let n = a.dim();
    let mut iperm = vec![0; n];
    for (k, &p) in perm.iter().enumerate() {
        iperm[p] = k;
    }
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        let pi = iperm[i];
        for &j in a.row(i).0 {
            let pj = iperm[j];
            if pi != pj {
                adj[pi].push(pj);
                adj[pj].push(pi);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Liu's algorithm with path compression.
fn elimination_tree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &i in adj[k].iter().take_while(|&&i| i < k) {
            let mut r = i;
            while ancestor[r] != NONE && ancestor[r] != k {
                let next = ancestor[r];
                ancestor[r] = k;
                r = next;
            }
            if ancestor[r] == NONE {
                ancestor[r] = k;
                parent[r] = k;
            }
        }
    }
    parent
}

/// Vertices in postorder; children are visited in increasing order.
fn postorder(parent: &[usize]) -> Vec<usize> {
    let n = parent.len();
    let mut children = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (v, &p) in parent.iter().enumerate() {
        if p == NONE {
            roots.push(v);
        } else {
            children[p].push(v);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in roots {
        stack.push((root, 0));
        while let Some(top) = stack.last_mut() {
            let (v, next) = *top;
            if next < children[v].len() {
                top.1 += 1;
                stack.push((children[v][next], 0));
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }
    order
}

/// Row structure of each column of `L` below the diagonal, ascending.
fn column_structures(adj: &[Vec<usize>], parent: &[usize]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut children = vec![Vec::new(); n];
    for (v, &p) in parent.iter().enumerate() {
        if p != NONE {
            children[p].push(v);
        }
    }
    let mut mark = vec![NONE; n];
    let mut structs: Vec<Vec<usize>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut s: Vec<usize> = Vec::new();
        mark[j] = j;
        for &i in adj[j].iter().filter(|&&i| i > j) {
            mark[i] = j;
            s.push(i);
        }
        for &c in &children[j] {
            for &i in &structs[c] {
                if mark[i] != j {
                    mark[i] = j;
                    s.push(i);
                }
            }
        }
        s.sort_unstable();
        structs.push(s);
    }
    structs
}

/// Dense factors of one front: `L` is `m × k` with a unit diagonal, `U` is
/// `k × m`, and `swaps[p]` is the local row exchanged with row `p`.
#[derive(Debug, Clone)]
struct Front {
    l: DMatrix<f64>,
    u: DMatrix<f64>,
    swaps: Vec<usize>,
}

/// Numeric factors `P A Q = L U` for a matrix with the analyzed pattern.
#[derive(Debug, Clone)]
pub struct Multifrontal<'a> {
    symbolic: &'a Symbolic,
    fronts: Vec<Front>,
    perturbed: usize,
}

impl<'a> Multifrontal<'a> {
    /// Factors `a`. A diagonal entry of a front is kept as pivot if it is
    /// within `threshold` of the largest fully summed entry of its column.
    pub fn factor(a: &SparseMatrix, symbolic: &'a Symbolic, threshold: f64) -> Result<Self> {
        let sym = symbolic;
        if a.dim() != sym.n {
            return Err(Error::Dimension(format!(
                "{0}x{0} matrix for a symbolic analysis of size {1}",
                a.dim(),
                sym.n
            )));
        }
        let at = a.transpose();
        let ns = sym.supernodes();
        let mut pos = vec![NONE; sym.n];
        let mut updates: Vec<Option<DMatrix<f64>>> = vec![None; ns];
        let mut fronts = Vec::with_capacity(ns);
        let mut perturbed = 0;

        for s in 0..ns {
            let (lo, hi) = (sym.start[s], sym.start[s + 1]);
            let k = hi - lo;
            let rows = &sym.rows[s];
            let m = k + rows.len();
            for (t, j) in (lo..hi).chain(rows.iter().copied()).enumerate() {
                pos[j] = t;
            }
            let mut f = DMatrix::<f64>::zeros(m, m);
            for j in lo..hi {
                let (idx, vals) = at.row(sym.perm[j]);
                for (&i, &v) in idx.iter().zip(vals) {
                    let i = sym.iperm[i];
                    if i >= lo {
                        f[(pos[i], j - lo)] += v;
                    }
                }
                let (idx, vals) = a.row(sym.perm[j]);
                for (&c, &v) in idx.iter().zip(vals) {
                    let c = sym.iperm[c];
                    if c >= hi {
                        f[(j - lo, pos[c])] += v;
                    }
                }
            }
            for &c in &sym.children[s] {
                let block = updates[c].take().expect("children precede parents");
                let map: Vec<usize> = sym.rows[c].iter().map(|&g| pos[g]).collect();
                for (jj, &pj) in map.iter().enumerate() {
                    for (ii, &pi) in map.iter().enumerate() {
                        f[(pi, pj)] += block[(ii, jj)];
                    }
                }
            }

            let mut swaps = Vec::with_capacity(k);
            for p in 0..k {
                let mut r = p;
                let mut best = f[(p, p)].abs();
                for q in p + 1..k {
                    if f[(q, p)].abs() > best {
                        best = f[(q, p)].abs();
                        r = q;
                    }
                }
                if f[(p, p)].abs() >= threshold * best {
                    r = p;
                }
                if r != p {
                    f.swap_rows(p, r);
                }
                swaps.push(r);
                let colmax = (p..m).map(|q| f[(q, p)].abs()).fold(0.0, f64::max);
                if !(colmax > 0.0 && colmax.is_finite()) {
                    return Err(Error::SingularPivot {
                        step: lo + p,
                        column: sym.perm[lo + p],
                    });
                }
                if f[(p, p)].abs() < PIVOT_PERTURBATION * colmax {
                    let sign = if f[(p, p)] < 0.0 { -1.0 } else { 1.0 };
                    f[(p, p)] = sign * PIVOT_PERTURBATION * colmax;
                    perturbed += 1;
                }
                let pivot = f[(p, p)];
                for q in p + 1..m {
                    f[(q, p)] /= pivot;
                }
                for c in p + 1..k {
                    let upc = f[(p, c)];
                    if upc != 0.0 {
                        for q in p + 1..m {
                            let lqp = f[(q, p)];
                            f[(q, c)] -= lqp * upc;
                        }
                    }
                }
            }
            for c in k..m {
                for p in 0..k {
                    let upc = f[(p, c)];
                    if upc != 0.0 {
                        for q in p + 1..k {
                            let lqp = f[(q, p)];
                            f[(q, c)] -= lqp * upc;
                        }
                    }
                }
            }
            let r = m - k;
            if r > 0 {
                let l21 = f.view((k, 0), (r, k)).clone_owned();
                let u12 = f.view((0, k), (k, r)).clone_owned();
                let mut schur = f.view((k, k), (r, r)).clone_owned();
                schur.gemm(-1.0, &l21, &u12, 1.0);
                updates[s] = Some(schur);
            }
            fronts.push(Front {
                l: f.columns(0, k).clone_owned(),
                u: f.rows(0, k).clone_owned(),
                swaps,
            });
            for j in (lo..hi).chain(rows.iter().copied()) {
                pos[j] = NONE;
            }
        }
        Ok(Self {
            symbolic,
            fronts,
            perturbed,
        })
    }

    /// Number of pivots that were perturbed.
    pub fn perturbed(&self) -> usize {
        self.perturbed
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let sym = self.symbolic;
        if b.len() != sym.n {
            return Err(Error::Dimension(format!(
                "right-hand side of length {} for a {1}x{1} system",
                b.len(),
                sym.n
            )));
        }
        let mut y: Vec<f64> = sym.perm.iter().map(|&p| b[p]).collect();
        for (s, front) in self.fronts.iter().enumerate() {
            let (lo, hi) = (sym.start[s], sym.start[s + 1]);
            let k = hi - lo;
            for (p, &r) in front.swaps.iter().enumerate() {
                y.swap(lo + p, lo + r);
            }
            for p in 0..k {
                let yp = y[lo + p];
                if yp == 0.0 {
                    continue;
                }
                let col = front.l.column(p);
                for q in p + 1..k {
                    y[lo + q] -= col[q] * yp;
                }
                for (t, &g) in sym.rows[s].iter().enumerate() {
                    y[g] -= col[k + t] * yp;
                }
            }
        }
        for (s, front) in self.fronts.iter().enumerate().rev() {
            let (lo, hi) = (sym.start[s], sym.start[s + 1]);
            let k = hi - lo;
            for p in (0..k).rev() {
                let mut v = y[lo + p];
                for c in p + 1..k {
                    v -= front.u[(p, c)] * y[lo + c];
                }
                for (t, &g) in sym.rows[s].iter().enumerate() {
                    v -= front.u[(p, k + t)] * y[g];
                }
                y[lo + p] = v / front.u[(p, p)];
            }
        }
        let mut x = vec![0.0; sym.n];
        for (k, &p) in sym.perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(x)
    }
}
