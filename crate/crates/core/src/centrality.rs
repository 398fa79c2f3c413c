//! Node and sector centralities and tree-shape measures.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::{Sector, SectorMap};
use crate::mst::Tree;

#[derive(Debug, thiserror::Error)]
pub enum CentralityError {
    #[error("ticker {0:?} has no sector")]
    UnmappedTicker(String),

    #[error("all sector centralities are zero")]
    ZeroTotal,

    #[error("degenerate degree distribution")]
    DegenerateDegrees,

    #[error("need at least {required} nodes, got {actual}")]
    TooSmall { required: usize, actual: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityKind {
    Degree,
    Betweenness,
}

impl CentralityKind {
    pub fn name(self) -> &'static str {
        match self {
            CentralityKind::Degree => "degree",
            CentralityKind::Betweenness => "betweenness",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector {
    pub kind: CentralityKind,
    pub tickers: Vec<String>,
    pub values: Vec<f64>,
}

/// Unweighted degree divided by `p - 1`.
pub fn degree_centrality(tree: &Tree) -> CentralityVector {
    let norm = (tree.n_nodes() - 1) as f64;
    CentralityVector {
        kind: CentralityKind::Degree,
        tickers: tree.tickers().to_vec(),
        values: tree.degrees().into_iter().map(|d| d as f64 / norm).collect(),
    }
}

/// Parent links and a preorder from a root, iteratively.
fn rooted_order(adj: &[Vec<usize>], root: usize) -> (Vec<usize>, Vec<usize>) {
    let p = adj.len();
    let mut parent = vec![usize::MAX; p];
    let mut order = Vec::with_capacity(p);
    let mut stack = vec![root];
    parent[root] = root;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in &adj[v] {
            if parent[w] == usize::MAX {
                parent[w] = v;
                stack.push(w);
            }
        }
    }
    (parent, order)
}

/// Number of unordered pairs `{s, t}`, both distinct from `v`, whose tree path
/// runs through `v`.
pub fn paths_through(tree: &Tree) -> Vec<u64> {
    let p = tree.n_nodes();
    let adj = tree.adjacency();
    let (parent, order) = rooted_order(&adj, 0);
    let mut size = vec![1u64; p];
    for &v in order.iter().rev() {
        if parent[v] != v {
            size[parent[v]] += size[v];
        }
    }
    let others = (p - 1) as u64;
    (0..p)
        .map(|v| {
            let mut squares: u64 = adj[v].iter().filter(|&&w| parent[w] == v).map(|&w| size[w] * size[w]).sum();
            if parent[v] != v {
                let up = p as u64 - size[v];
                squares += up * up;
            }
            (others * others - squares) / 2
        })
        .collect()
}

/// Share of node pairs whose unique path crosses each node, normalised by
/// `(p - 1)(p - 2) / 2`. All zeros when `p < 3`.
pub fn betweenness_centrality(tree: &Tree) -> CentralityVector {
    let p = tree.n_nodes();
    let values = if p < 3 {
        vec![0.0; p]
    } else {
        let norm = ((p - 1) * (p - 2) / 2) as f64;
        paths_through(tree).into_iter().map(|c| c as f64 / norm).collect()
    };
    CentralityVector { kind: CentralityKind::Betweenness, tickers: tree.tickers().to_vec(), values }
}

/// Mean node centrality per sector, rescaled to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorCentrality {
    pub kind: CentralityKind,
    pub values: BTreeMap<Sector, f64>,
}

pub fn sector_centrality(cv: &CentralityVector, sectors: &SectorMap) -> Result<SectorCentrality, CentralityError> {
    let mut acc: BTreeMap<Sector, (f64, usize)> = BTreeMap::new();
    for (t, &c) in cv.tickers.iter().zip(&cv.values) {
        let s = sectors.get(t).ok_or_else(|| CentralityError::UnmappedTicker(t.clone()))?;
        let e = acc.entry(s).or_default();
        e.0 += c;
        e.1 += 1;
    }
    let raw: BTreeMap<Sector, f64> = acc.into_iter().map(|(s, (sum, n))| (s, sum / n as f64)).collect();
    let total: f64 = raw.values().sum();
    if !(total > 0.0) {
        return Err(CentralityError::ZeroTotal);
    }
    Ok(SectorCentrality { kind: cv.kind, values: raw.into_iter().map(|(s, v)| (s, v / total)).collect() })
}

/// Share of nodes with degree one.
pub fn leaf_fraction(tree: &Tree) -> f64 {
    let leaves = tree.degrees().into_iter().filter(|&d| d == 1).count();
    leaves as f64 / tree.n_nodes() as f64
}

fn hop_distances(adj: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Mean hop count over unordered node pairs.
pub fn average_shortest_path(tree: &Tree) -> f64 {
    let p = tree.n_nodes();
    let adj = tree.adjacency();
    let total: usize = (0..p).map(|s| hop_distances(&adj, s)[s + 1..].iter().sum::<usize>()).sum();
    total as f64 / (p * (p - 1) / 2) as f64
}

/// Highest-degree node; the lowest index wins ties.
pub fn tree_center(tree: &Tree) -> usize {
    let deg = tree.degrees();
    let mut best = 0;
    for (i, &d) in deg.iter().enumerate() {
        if d > deg[best] {
            best = i;
        }
    }
    best
}

/// Mean hop distance from every node (the center included) to the center.
pub fn mean_occupation_layer(tree: &Tree) -> f64 {
    let adj = tree.adjacency();
    let dist = hop_distances(&adj, tree_center(tree));
    dist.iter().sum::<usize>() as f64 / tree.n_nodes() as f64
}

/// Discrete maximum-likelihood power-law exponent of the degree sequence with
/// `k_min = 1`: `1 + m / sum ln(k / (k_min - 1/2))`.
pub fn powerlaw_exponent_mle(degrees: &[usize], k_min: usize) -> Result<f64, CentralityError> {
    let tail: Vec<usize> = degrees.iter().copied().filter(|&k| k >= k_min).collect();
    if tail.is_empty() || tail.iter().all(|&k| k == tail[0]) {
        return Err(CentralityError::DegenerateDegrees);
    }
    let shift = k_min as f64 - 0.5;
    let log_sum: f64 = tail.iter().map(|&k| (k as f64 / shift).ln()).sum();
    Ok(1.0 + tail.len() as f64 / log_sum)
}

pub fn degree_powerlaw_exponent(tree: &Tree) -> Result<f64, CentralityError> {
    if tree.n_nodes() < 3 {
        return Err(CentralityError::TooSmall { required: 3, actual: tree.n_nodes() });
    }
    powerlaw_exponent_mle(&tree.degrees(), 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub leaf_fraction: f64,
    pub average_shortest_path: f64,
    pub mean_occupation_layer: f64,
    pub powerlaw_exponent: f64,
}

pub fn topology_summary(tree: &Tree) -> Result<TopologySummary, CentralityError> {
    Ok(TopologySummary {
        leaf_fraction: leaf_fraction(tree),
        average_shortest_path: average_shortest_path(tree),
        mean_occupation_layer: mean_occupation_layer(tree),
        powerlaw_exponent: degree_powerlaw_exponent(tree)?,
    })
}

/// One row of `window_start,method,sector_or_node,metric,value`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralityRow {
    pub window_start: NaiveDate,
    pub method: String,
    pub sector_or_node: String,
    pub metric: String,
    pub value: f64,
}

/// Sector-level, node-level and topology rows for one tree.
pub fn tree_rows(
    window_start: NaiveDate,
    method: &str,
    tree: &Tree,
    sectors: &SectorMap,
) -> Result<Vec<CentralityRow>, CentralityError> {
    let mut rows = Vec::new();
    let mut push = |who: &str, metric: &str, value: f64| {
        rows.push(CentralityRow {
            window_start,
            method: method.to_owned(),
            sector_or_node: who.to_owned(),
            metric: metric.to_owned(),
            value,
        })
    };
    for cv in [degree_centrality(tree), betweenness_centrality(tree)] {
        let node_metric = format!("node_{}", cv.kind.name());
        for (t, v) in cv.tickers.iter().zip(&cv.values) {
            push(t, &node_metric, *v);
        }
        match sector_centrality(&cv, sectors) {
            Ok(sc) => {
                let metric = format!("sector_{}", cv.kind.name());
                for (s, v) in &sc.values {
                    push(s.name(), &metric, *v);
                }
            }
            // betweenness is identically zero on two-node trees
            Err(CentralityError::ZeroTotal) => {}
            Err(e) => return Err(e),
        }
    }
    push("tree", "leaf_fraction", leaf_fraction(tree));
    push("tree", "average_shortest_path", average_shortest_path(tree));
    push("tree", "mean_occupation_layer", mean_occupation_layer(tree));
    if let Ok(alpha) = degree_powerlaw_exponent(tree) {
        push("tree", "powerlaw_exponent", alpha);
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[CentralityRow], sink: W) -> Result<(), CentralityError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["window_start", "method", "sector_or_node", "metric", "value"])?;
    for r in rows {
        w.write_record([
            r.window_start.to_string(),
            r.method.clone(),
            r.sector_or_node.clone(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("n{i:02}")).collect()
    }

    fn star(p: usize) -> Tree {
        let pairs: Vec<_> = (1..p).map(|j| (0, j)).collect();
        Tree::from_pairs(names(p), &pairs).unwrap()
    }

    fn path(p: usize) -> Tree {
        let pairs: Vec<_> = (1..p).map(|j| (j - 1, j)).collect();
        Tree::from_pairs(names(p), &pairs).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn degree_examples() {
        let s = degree_centrality(&star(5));
        assert_eq!(s.values[0], 1.0);
        assert!(s.values[1..].iter().all(|&v| v == 0.25));
        assert_eq!(degree_centrality(&path(3)).values, vec![0.5, 1.0, 0.5]);
        let deg_sum: usize = path(7).degrees().iter().sum();
        assert_eq!(deg_sum, 12);
    }

    #[test]
    fn betweenness_examples() {
        let b = betweenness_centrality(&star(5));
        assert_eq!(b.values[0], 1.0);
        assert!(b.values[1..].iter().all(|&v| v == 0.0));
        assert_eq!(betweenness_centrality(&path(3)).values, vec![0.0, 1.0, 0.0]);
        assert_eq!(betweenness_centrality(&path(2)).values, vec![0.0, 0.0]);
        // path of 5: middle node separates {0,1} from {3,4} and splits pairs
        assert_eq!(paths_through(&path(5)), vec![0, 3, 4, 3, 0]);
    }

    fn sector_map(pairs: &[(&str, Sector)]) -> SectorMap {
        SectorMap::new(pairs.iter().map(|(t, s)| (t.to_string(), *s)).collect())
    }

    #[test]
    fn sector_centrality_examples() {
        let tree = path(3);
        let one = sector_map(&[("n00", Sector::Energy), ("n01", Sector::Energy), ("n02", Sector::Energy)]);
        let sc = sector_centrality(&degree_centrality(&tree), &one).unwrap();
        assert_eq!(sc.values, BTreeMap::from([(Sector::Energy, 1.0)]));

        // star on 4 nodes, hub 0. degrees / 3 = [1, 1/3, 1/3, 1/3]
        // A = {0, 1}: mean 2/3; B = {2}: 1/3; C = {3}: 1/3  ->  total 4/3
        let tree = star(4);
        let map = sector_map(&[
            ("n00", Sector::Energy),
            ("n01", Sector::Energy),
            ("n02", Sector::Utilities),
            ("n03", Sector::Financials),
        ]);
        let sc = sector_centrality(&degree_centrality(&tree), &map).unwrap();
        assert!(close(sc.values[&Sector::Energy], 0.5));
        assert!(close(sc.values[&Sector::Utilities], 0.25));
        assert!(close(sc.values[&Sector::Financials], 0.25));

        let two = sector_map(&[("n00", Sector::Energy), ("n01", Sector::Energy), ("n02", Sector::Utilities)]);
        let sc = sector_centrality(&degree_centrality(&path(3)), &sector_map(&[
            ("n00", Sector::Energy),
            ("n01", Sector::Utilities),
            ("n02", Sector::Energy),
        ]))
        .unwrap();
        // equal means would give 1/2 each; here Energy mean 0.5, Utilities 1.0
        assert!(close(sc.values[&Sector::Energy], 1.0 / 3.0));
        let missing = sector_centrality(&degree_centrality(&star(4)), &two);
        assert!(matches!(missing, Err(CentralityError::UnmappedTicker(_))));
    }

    #[test]
    fn node_normalisation_cancels_at_sector_level() {
        let tree = Tree::from_pairs(names(6), &[(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)]).unwrap();
        let map = sector_map(&[
            ("n00", Sector::Energy),
            ("n01", Sector::Energy),
            ("n02", Sector::Utilities),
            ("n03", Sector::Financials),
            ("n04", Sector::Utilities),
            ("n05", Sector::Financials),
        ]);
        for cv in [degree_centrality(&tree), betweenness_centrality(&tree)] {
            let mut raw = cv.clone();
            raw.values.iter_mut().for_each(|v| *v *= 17.0);
            let a = sector_centrality(&cv, &map).unwrap();
            let b = sector_centrality(&raw, &map).unwrap();
            for (s, v) in &a.values {
                assert!(close(*v, b.values[s]));
            }
        }
    }

    #[test]
    fn leaf_fraction_examples() {
        assert!(close(leaf_fraction(&path(6)), 2.0 / 6.0));
        assert!(close(leaf_fraction(&star(6)), 5.0 / 6.0));
        assert_eq!(leaf_fraction(&path(2)), 1.0);
    }

    #[test]
    fn shortest_path_examples() {
        assert!(close(average_shortest_path(&path(3)), 4.0 / 3.0));
        let p = 7usize;
        let pairs = (p * (p - 1) / 2) as f64;
        let expected = ((p - 1) as f64 + 2.0 * ((p - 1) * (p - 2) / 2) as f64) / pairs;
        assert!(close(average_shortest_path(&star(p)), expected));
    }

    #[test]
    fn occupation_layer_examples() {
        assert!(close(mean_occupation_layer(&star(6)), 5.0 / 6.0));
        assert!(close(mean_occupation_layer(&path(3)), 2.0 / 3.0));
        // n01 and n02 both have degree 3; n01 is first
        let tree = Tree::from_pairs(names(7), &[(0, 1), (1, 2), (1, 3), (2, 4), (2, 5), (5, 6)]).unwrap();
        assert_eq!(tree_center(&tree), 1);
        // distances from n01: 1,0,1,1,2,2,3
        assert!(close(mean_occupation_layer(&tree), 10.0 / 7.0));
    }

    #[test]
    fn powerlaw_examples() {
        let alpha = degree_powerlaw_exponent(&star(11)).unwrap();
        let expected = 1.0 + 11.0 / (10.0 * 2f64.ln() + 20f64.ln());
        assert!(close(alpha, expected));

        // path on 6 nodes: degrees 1,2,2,2,2,1
        let alpha = degree_powerlaw_exponent(&path(6)).unwrap();
        let expected = 1.0 + 6.0 / (2.0 * 2f64.ln() + 4.0 * 4f64.ln());
        assert!(close(alpha, expected));

        let doubled: Vec<usize> = star(11).degrees().repeat(2);
        assert!(close(powerlaw_exponent_mle(&doubled, 1).unwrap(), degree_powerlaw_exponent(&star(11)).unwrap()));
        assert!(matches!(powerlaw_exponent_mle(&[2, 2, 2], 1), Err(CentralityError::DegenerateDegrees)));
        assert!(degree_powerlaw_exponent(&path(2)).is_err());
    }

    #[test]
    fn rows_for_a_tree() {
        let tree = star(4);
        let map = sector_map(&[
            ("n00", Sector::Energy),
            ("n01", Sector::Energy),
            ("n02", Sector::Utilities),
            ("n03", Sector::Financials),
        ]);
        let day = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        let rows = tree_rows(day, "pearson", &tree, &map).unwrap();
        let sector_sum: f64 = rows.iter().filter(|r| r.metric == "sector_degree").map(|r| r.value).sum();
        assert!(close(sector_sum, 1.0));
        assert!(rows.iter().any(|r| r.metric == "mean_occupation_layer"));
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("window_start,method,sector_or_node,metric,value\n"));
    }
}
