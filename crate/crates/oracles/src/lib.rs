//! Brute-force reference implementations. Each one trades speed for being
//! easy to check by eye, and none of them shares code with `rankmst`.

use rand::Rng;

/// Tie-corrected Kendall τ from all `n(n-1)/2` pairs.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                ties_x += 1;
            }
            if dy == 0.0 {
                ties_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n.saturating_sub(1)) / 2) as i64;
    let denom = (((n0 - ties_x) * (n0 - ties_y)) as f64).sqrt();
    (denom > 0.0).then(|| (concordant - discordant) as f64 / denom)
}

/// Average rank: one plus the number of smaller values plus half the other
/// equal values.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Textbook two-pass Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..x.len() {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Decode a Prüfer sequence over `n` labels into tree edges `(i, j)`, `i < j`.
pub fn prufer_to_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Every labelled spanning tree of `K_n` (`n^(n-2)` of them), `n >= 2`.
pub fn all_spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let seq: Vec<usize> = (0..len)
                .map(|_| {
                    let d = code % n;
                    code /= n;
                    d
                })
                .collect();
            prufer_to_edges(&seq, n)
        })
        .collect()
}

pub fn tree_weight(w: &[Vec<f64>], edges: &[(usize, usize)]) -> f64 {
    edges.iter().map(|&(i, j)| w[i][j]).sum()
}

/// Smallest total weight over all spanning trees.
pub fn min_spanning_weight(w: &[Vec<f64>]) -> f64 {
    all_spanning_trees(w.len()).iter().map(|t| tree_weight(w, t)).fold(f64::INFINITY, f64::min)
}

/// Uniformly random labelled tree via a random Prüfer sequence.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    prufer_to_edges(&seq, n)
}

fn neighbours(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    adj
}

/// The unique path from `s` to `t`, both included, by depth-first search.
pub fn tree_path(n: usize, edges: &[(usize, usize)], s: usize, t: usize) -> Vec<usize> {
    let adj = neighbours(n, edges);
    let mut parent = vec![usize::MAX; n];
    parent[s] = s;
    let mut stack = vec![s];
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if parent[u] == usize::MAX {
                parent[u] = v;
                stack.push(u);
            }
        }
    }
    let mut path = vec![t];
    let mut v = t;
    while v != s {
        v = parent[v];
        path.push(v);
    }
    path
}

/// Betweenness by walking every pair's path; normalised by `(n-1)(n-2)/2`.
pub fn betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut count = vec![0u64; n];
    for s in 0..n {
        for t in s + 1..n {
            let path = tree_path(n, edges, s, t);
            for &v in &path[1..path.len() - 1] {
                count[v] += 1;
            }
        }
    }
    if n < 3 {
        return vec![0.0; n];
    }
    let norm = ((n - 1) * (n - 2) / 2) as f64;
    count.into_iter().map(|c| c as f64 / norm).collect()
}

/// Hop distances from `s` by breadth-first search.
pub fn bfs(n: usize, edges: &[(usize, usize)], s: usize) -> Vec<usize> {
    let adj = neighbours(n, edges);
    let mut dist = vec![usize::MAX; n];
    dist[s] = 0;
    let mut queue = std::collections::VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

pub fn average_shortest_path(n: usize, edges: &[(usize, usize)]) -> f64 {
    let mut total = 0usize;
    for s in 0..n {
        for t in s + 1..n {
            total += bfs(n, edges, s)[t];
        }
    }
    total as f64 / (n * (n - 1) / 2) as f64
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

pub fn quadratic_form(s: &[Vec<f64>], w: &[f64]) -> f64 {
    (0..w.len()).map(|i| w[i] * (0..w.len()).map(|j| s[i][j] * w[j]).sum::<f64>()).sum()
}

/// Accelerated projected gradient on `min wᵀΣw` over the simplex.
pub fn min_variance_projected_gradient(s: &[Vec<f64>], iterations: usize) -> Vec<f64> {
    let n = s.len();
    let lipschitz = 2.0 * jacobi_eigenvalues(s).last().copied().unwrap_or(1.0);
    let step = 1.0 / lipschitz;
    let mut w = vec![1.0 / n as f64; n];
    let mut y = w.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n).map(|i| 2.0 * (0..n).map(|j| s[i][j] * y[j]).sum::<f64>()).collect();
        let next = project_to_simplex(&(0..n).map(|i| y[i] - step * grad[i]).collect::<Vec<_>>());
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - w[i])).collect();
        w = next;
        t = t_next;
    }
    w
}

/// Largest violation of the long-only minimum-variance optimality
/// conditions, in absolute units of `Σw`.
pub fn kkt_violation(s: &[Vec<f64>], w: &[f64]) -> f64 {
    let n = w.len();
    let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[i][j] * w[j]).sum()).collect();
    let nu: f64 = (0..n).map(|i| w[i] * g[i]).sum();
    let mut worst = (w.iter().sum::<f64>() - 1.0).abs();
    for i in 0..n {
        worst = worst.max(-w[i]);
        if w[i] > 0.0 {
            worst = worst.max((g[i] - nu).abs());
        } else {
            worst = worst.max(nu - g[i]);
        }
    }
    worst
}
