//! Hopcroft–Karp maximum bipartite matching on an implicit square graph.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;

/// A perfect matching `row -> column` using only edges where `allowed(row,
/// col)` holds, or `None` if there is none.
pub(crate) fn perfect(n: usize, allowed: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let adj: Vec<Vec<usize>> = (0..n).map(|r| (0..n).filter(|&c| allowed(r, c)).collect()).collect();
    let mut match_row = vec![NONE; n];
    let mut match_col = vec![NONE; n];
    let mut dist = vec![0usize; n];
    let mut matched = 0;

    loop {
        // BFS layering from free rows.
        let mut queue = VecDeque::new();
        for r in 0..n {
            if match_row[r] == NONE {
                dist[r] = 0;
                queue.push_back(r);
            } else {
                dist[r] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(r) = queue.pop_front() {
            for &c in &adj[r] {
                let next = match_col[c];
                if next == NONE {
                    found = true;
                } else if dist[next] == usize::MAX {
                    dist[next] = dist[r] + 1;
                    queue.push_back(next);
                }
            }
        }
        if !found {
            break;
        }
        for r in 0..n {
            if match_row[r] == NONE && augment(r, &adj, &mut match_row, &mut match_col, &mut dist) {
                matched += 1;
            }
        }
    }
    (matched == n).then_some(match_row)
}

fn augment(r: usize, adj: &[Vec<usize>], match_row: &mut [usize], match_col: &mut [usize], dist: &mut [usize]) -> bool {
    for &c in &adj[r] {
        let next = match_col[c];
        if next == NONE || (dist[next] == dist[r] + 1 && augment(next, adj, match_row, match_col, dist)) {
            match_row[r] = c;
            match_col[c] = r;
            return true;
        }
    }
    dist[r] = usize::MAX;
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_perfect_matching() {
        // rows 0,1 both like column 0; row 1 also likes 1.
        let m = perfect(2, |r, c| c == 0 || (r == 1 && c == 1)).unwrap();
        assert_eq!(m, vec![0, 1]);
    }

    #[test]
    fn reports_infeasible() {
        assert!(perfect(2, |_, c| c == 0).is_none());
        assert_eq!(perfect(0, |_, _| false), Some(vec![]));
    }
}
