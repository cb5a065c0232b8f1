//! Minimum-weight in-trees.
//!
//! An in-tree rooted at `r` gives every other vertex exactly one outgoing
//! edge such that all paths lead to `r`. Its minimum weight over the chain's
//! resistance graph is the stochastic potential of `r`.

/// Minimum in-tree weight by Chu–Liu/Edmonds contraction on the reversed
/// graph. `edges` are `(from, to, weight)`; self-loops are ignored. Returns
/// `None` when some vertex cannot reach `root`.
pub fn min_in_arborescence(num_vertices: usize, edges: &[(usize, usize, f64)], root: usize) -> Option<f64> {
    let reversed: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v, w)| (v, u, w)).collect();
    min_out_arborescence(num_vertices, reversed, root)
}

const NONE: usize = usize::MAX;

fn min_out_arborescence(mut n: usize, mut edges: Vec<(usize, usize, f64)>, mut root: usize) -> Option<f64> {
    let mut total = 0.0;
    loop {
        let mut best_in = vec![f64::INFINITY; n];
        let mut parent = vec![NONE; n];
        for &(u, v, w) in &edges {
            if u != v && w < best_in[v] {
                best_in[v] = w;
                parent[v] = u;
            }
        }
        if (0..n).any(|v| v != root && parent[v] == NONE) {
            return None;
        }
        best_in[root] = 0.0;

        let mut comp = vec![NONE; n];
        let mut seen = vec![NONE; n];
        let mut cycles = 0;
        for v in 0..n {
            total += best_in[v];
            let mut x = v;
            while seen[x] != v && comp[x] == NONE && x != root {
                seen[x] = v;
                x = parent[x];
            }
            if x != root && comp[x] == NONE {
                let mut y = parent[x];
                while y != x {
                    comp[y] = cycles;
                    y = parent[y];
                }
                comp[x] = cycles;
                cycles += 1;
            }
        }
        if cycles == 0 {
            return Some(total);
        }
        let mut next = cycles;
        for c in comp.iter_mut() {
            if *c == NONE {
                *c = next;
                next += 1;
            }
        }
        edges = edges
            .into_iter()
            .filter_map(|(u, v, w)| (comp[u] != comp[v]).then_some((comp[u], comp[v], w - best_in[v])))
            .collect();
        n = next;
        root = comp[root];
    }
}

/// Minimum in-tree weight by exhaustive branch-and-bound over one outgoing
/// edge per vertex. Exponential; meant for graphs of a few dozen vertices.
pub fn exhaustive_min_in_tree(num_vertices: usize, edges: &[(usize, usize, f64)], root: usize) -> Option<f64> {
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_vertices];
    for &(u, v, w) in edges {
        if u != v {
            out[u].push((v, w));
        }
    }
    for list in &mut out {
        list.sort_by(|a, b| a.1.total_cmp(&b.1));
    }
    let order: Vec<usize> = (0..num_vertices).filter(|&v| v != root).collect();
    if order.iter().any(|&v| out[v].is_empty()) {
        return None;
    }
    // Suffix sums of the cheapest outgoing edge, for bounding.
    let mut tail = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        tail[k] = tail[k + 1] + out[order[k]][0].1;
    }
    let mut search = Search { out: &out, order: &order, tail: &tail, root, choice: vec![NONE; num_vertices], best: f64::INFINITY };
    search.go(0, 0.0);
    search.best.is_finite().then_some(search.best)
}

struct Search<'a> {
    out: &'a [Vec<(usize, f64)>],
    order: &'a [usize],
    tail: &'a [f64],
    root: usize,
    choice: Vec<usize>,
    best: f64,
}

impl Search<'_> {
    fn go(&mut self, k: usize, partial: f64) {
        if k == self.order.len() {
            self.best = self.best.min(partial);
            return;
        }
        if partial + self.tail[k] >= self.best {
            return;
        }
        let v = self.order[k];
        for &(u, w) in &self.out[v] {
            if partial + w + self.tail[k + 1] >= self.best {
                break;
            }
            if self.closes_cycle(v, u) {
                continue;
            }
            self.choice[v] = u;
            self.go(k + 1, partial + w);
            self.choice[v] = NONE;
        }
    }

    fn closes_cycle(&self, v: usize, mut u: usize) -> bool {
        while u != self.root && self.choice[u] != NONE {
            if u == v {
                return true;
            }
            u = self.choice[u];
        }
        u == v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_cycle_with_chord() {
        // 1 -> 0 costs 5, the path 1 -> 2 -> 0 costs 1 + 1.
        let edges = vec![(1, 0, 5.0), (1, 2, 1.0), (2, 0, 1.0), (2, 1, 0.0), (0, 1, 3.0)];
        assert_eq!(min_in_arborescence(3, &edges, 0), Some(2.0));
        assert_eq!(exhaustive_min_in_tree(3, &edges, 0), Some(2.0));
        assert_eq!(min_in_arborescence(3, &edges, 1), Some(3.0));
        assert_eq!(exhaustive_min_in_tree(3, &edges, 1), Some(3.0));
    }

    #[test]
    fn unreachable_root_has_no_tree() {
        let edges = vec![(0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0)];
        assert_eq!(min_in_arborescence(3, &edges, 2), None);
        assert_eq!(exhaustive_min_in_tree(3, &edges, 2), None);
        assert_eq!(min_in_arborescence(3, &edges, 0), Some(2.0));
    }

    fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (2usize..7).prop_flat_map(|n| {
            let edge = (0..n, 0..n, 0u32..6).prop_map(|(u, v, w)| (u, v, w as f64 * 0.5));
            (Just(n), proptest::collection::vec(edge, 0..(n * n + 4)))
        })
    }

    proptest! {
        #[test]
        fn contraction_matches_exhaustive((n, edges) in graph(), root in 0usize..7) {
            let root = root % n;
            let a = min_in_arborescence(n, &edges, root);
            let b = exhaustive_min_in_tree(n, &edges, root);
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
