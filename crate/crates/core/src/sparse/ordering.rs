//! Fill-reducing column orderings.

use super::csr::SparseMatrix;
use crate::error::{Error, Result};

/// Below this size a subgraph is ordered as-is instead of bisected further.
const LEAF_SIZE: usize = 48;

/// Elimination order: `perm()[k]` is the original index eliminated at step `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    perm: Vec<usize>,
}

impl Ordering {
    pub fn natural(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::Dimension(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Nested dissection on the graph of `A + Aᵀ`, using breadth-first level
    /// sets as vertex separators.
    pub fn nested_dissection(a: &SparseMatrix) -> Self {
        let graph = Graph::symmetrized(a, a.dim());
        Self {
            perm: dissect(&graph),
        }
    }

    /// Nested dissection for a system with several unknowns per node, where
    /// index `i` belongs to node `i % nodes`. Nodes are ordered on the
    /// merged graph; within a node, indices are eliminated in increasing
    /// order.
    pub fn nested_dissection_interleaved(a: &SparseMatrix, nodes: usize) -> Result<Self> {
        let n = a.dim();
        if nodes == 0 || !n.is_multiple_of(nodes) {
            return Err(Error::Dimension(format!(
                "{n} unknowns cannot be split evenly over {nodes} nodes"
            )));
        }
        let graph = Graph::symmetrized(a, nodes);
        let mut perm = Vec::with_capacity(n);
        for v in dissect(&graph) {
            perm.extend((v..n).step_by(nodes));
        }
        Ok(Self { perm })
    }
}

fn dissect(graph: &Graph) -> Vec<usize> {
    let n = graph.ptr.len() - 1;
    let mut ws = Workspace {
        member: vec![0; n],
        seen: vec![0; n],
        level: vec![0; n],
        stamp: 0,
    };
    let mut out = Vec::with_capacity(n);
    let mut stack = vec![Task::Split((0..n).collect())];
    while let Some(task) = stack.pop() {
        match task {
            Task::Emit(vs) => out.extend(vs),
            Task::Split(vs) => split(graph, vs, &mut ws, &mut stack),
        }
    }
    out
}

struct Graph {
    ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    /// Graph of `A + Aᵀ` with index `i` mapped to vertex `i % n`.
    fn symmetrized(a: &SparseMatrix, n: usize) -> Self {
        let mut deg = vec![0usize; n + 1];
        for row in 0..a.dim() {
            let i = row % n;
            for &j in a.row(row).0 {
                let j = j % n;
                if i != j {
                    deg[i + 1] += 1;
                    deg[j + 1] += 1;
                }
            }
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut next = deg.clone();
        let mut adj = vec![0usize; deg[n]];
        for row in 0..a.dim() {
            let i = row % n;
            for &j in a.row(row).0 {
                let j = j % n;
                if i != j {
                    adj[next[i]] = j;
                    next[i] += 1;
                    adj[next[j]] = i;
                    next[j] += 1;
                }
            }
        }
        // dedupe each list
        let mut ptr = Vec::with_capacity(n + 1);
        let mut compact = Vec::with_capacity(adj.len());
        ptr.push(0);
        for i in 0..n {
            let list = &mut adj[deg[i]..deg[i + 1]];
            list.sort_unstable();
            let start = compact.len();
            for &j in list.iter() {
                if compact.len() == start || *compact.last().unwrap() != j {
                    compact.push(j);
                }
            }
            ptr.push(compact.len());
        }
        Self { ptr, adj: compact }
    }

    fn neighbours(&self, v: usize) -> &[usize] {
        &self.adj[self.ptr[v]..self.ptr[v + 1]]
    }
}

struct Workspace {
    member: Vec<usize>,
    seen: Vec<usize>,
    level: Vec<usize>,
    stamp: usize,
}

enum Task {
    Split(Vec<usize>),
    Emit(Vec<usize>),
}

/// Breadth-first search from `start` restricted to vertices whose
/// `member` mark equals `group`. Returns the visit order; levels are left in
/// `ws.level`.
fn bfs(graph: &Graph, start: usize, group: usize, ws: &mut Workspace) -> Vec<usize> {
    ws.stamp += 1;
    let seen = ws.stamp;
    let mut order = vec![start];
    ws.seen[start] = seen;
    ws.level[start] = 0;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &w in graph.neighbours(v) {
            if ws.member[w] == group && ws.seen[w] != seen {
                ws.seen[w] = seen;
                ws.level[w] = ws.level[v] + 1;
                order.push(w);
            }
        }
    }
    order
}

fn split(graph: &Graph, verts: Vec<usize>, ws: &mut Workspace, stack: &mut Vec<Task>) {
    if verts.len() <= LEAF_SIZE {
        stack.push(Task::Emit(verts));
        return;
    }
    ws.stamp += 1;
    let group = ws.stamp;
    for &v in &verts {
        ws.member[v] = group;
    }

    let mut order = bfs(graph, verts[0], group, ws);
    if order.len() < verts.len() {
        // disconnected: order the component and the remainder independently
        let seen = ws.stamp;
        let rest: Vec<usize> = verts.into_iter().filter(|&v| ws.seen[v] != seen).collect();
        stack.push(Task::Split(rest));
        stack.push(Task::Split(order));
        return;
    }
    // two sweeps towards a pseudo-peripheral start vertex
    for _ in 0..2 {
        let far = *order.last().unwrap();
        order = bfs(graph, far, group, ws);
    }

    let depth = ws.level[*order.last().unwrap()] + 1;
    if depth < 3 {
        stack.push(Task::Emit(verts));
        return;
    }
    let mut count = vec![0usize; depth];
    for &v in &order {
        count[ws.level[v]] += 1;
    }
    let total = order.len();
    let mut below = 0;
    let mut best = (usize::MAX, 1);
    for (m, &c) in count.iter().enumerate().take(depth - 1).skip(1) {
        below += count[m - 1];
        let above = total - below - c;
        let imbalance = below.abs_diff(above);
        if imbalance < best.0 {
            best = (imbalance, m);
        }
    }
    let m = best.1;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut sep = Vec::new();
    for &v in &order {
        match ws.level[v].cmp(&m) {
            std::cmp::Ordering::Less => lower.push(v),
            std::cmp::Ordering::Equal => sep.push(v),
            std::cmp::Ordering::Greater => upper.push(v),
        }
    }
    stack.push(Task::Emit(sep));
    stack.push(Task::Split(upper));
    stack.push(Task::Split(lower));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::csr::Triplets;

    fn laplacian_2d(n: usize) -> SparseMatrix {
        let mut t = Triplets::new(n * n);
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                t.push(k, k, 4.0);
                if i > 0 {
                    t.push(k, k - 1, -1.0);
                }
                if i + 1 < n {
                    t.push(k, k + 1, -1.0);
                }
                if j > 0 {
                    t.push(k, k - n, -1.0);
                }
                if j + 1 < n {
                    t.push(k, k + n, -1.0);
                }
            }
        }
        t.finalize().unwrap()
    }

    #[test]
    fn nested_dissection_is_a_permutation() {
        let a = laplacian_2d(30);
        let ord = Ordering::nested_dissection(&a);
        assert!(Ordering::from_perm(ord.perm().to_vec()).is_ok());
        assert_eq!(ord.len(), 900);
    }

    #[test]
    fn handles_disconnected_graphs() {
        let a = SparseMatrix::identity(200);
        let ord = Ordering::nested_dissection(&a);
        assert!(Ordering::from_perm(ord.perm().to_vec()).is_ok());
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(Ordering::from_perm(vec![0, 0, 1]).is_err());
        assert!(Ordering::from_perm(vec![0, 3, 1]).is_err());
    }
}
