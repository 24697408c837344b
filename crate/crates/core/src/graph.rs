//! Directed-graph helpers shared by the automaton and model-checking code.

/// Strongly connected components of a graph given as adjacency lists.
///
/// Iterative Tarjan; components come out in reverse topological order
/// (every edge leaving a component points into an earlier one).
pub fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0;
    // (node, position in its adjacency list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(top) = call.last_mut() {
            let v = top.0;
            if let Some(&w) = adj[v].get(top.1) {
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Nodes reachable from `sources` (including them).
pub fn forward_reachable(
    adj: &[Vec<usize>],
    sources: impl IntoIterator<Item = usize>,
) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut work: Vec<usize> = Vec::new();
    for s in sources {
        if !seen[s] {
            seen[s] = true;
            work.push(s);
        }
    }
    while let Some(v) = work.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                work.push(w);
            }
        }
    }
    seen
}

/// Nodes that can reach some node marked in `targets`.
pub fn backward_reachable(adj: &[Vec<usize>], targets: &[bool]) -> Vec<bool> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (v, succ) in adj.iter().enumerate() {
        for &w in succ {
            rev[w].push(v);
        }
    }
    forward_reachable(&rev, (0..adj.len()).filter(|&v| targets[v]))
}
