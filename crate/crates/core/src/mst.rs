//! Kruskal minimum spanning trees over the distance graph and the
//! correlation matrices they induce.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, DistanceMatrix};
use crate::matrix::LabeledMatrix;

#[derive(Debug, thiserror::Error)]
pub enum MstError {
    #[error("need at least 2 nodes, got {0}")]
    TooSmall(usize),

    #[error("non-finite distance {value} between nodes {i} and {j}")]
    NonFinite { i: usize, j: usize, value: f64 },

    #[error("distance and correlation matrices have different tickers")]
    TickerMismatch,

    #[error("tree ticker {0:?} is absent from the correlation matrix")]
    AbsentTicker(String),

    #[error("not a spanning tree: {0}")]
    NotATree(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Disjoint-set forest with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Merge the sets holding `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// One tree edge, `i < j` index into the tree's tickers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub correlation: f64,
}

impl TreeEdge {
    pub fn key(&self) -> (usize, usize) {
        (self.i, self.j)
    }
}

/// A spanning tree over `tickers` with exactly `p - 1` edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    tickers: Vec<String>,
    edges: Vec<TreeEdge>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    source: String,
    target: String,
    distance: f64,
    correlation: f64,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    tickers: Vec<String>,
    edges: Vec<EdgeDoc>,
    #[serde(default)]
    adjacency: BTreeMap<String, Vec<String>>,
}

impl Tree {
    /// Validate and canonicalise (`i < j`) an edge list.
    pub fn new(tickers: Vec<String>, edges: Vec<TreeEdge>) -> Result<Self, MstError> {
        let p = tickers.len();
        if p < 2 {
            return Err(MstError::TooSmall(p));
        }
        if edges.len() != p - 1 {
            return Err(MstError::NotATree(format!("{} edges for {p} nodes", edges.len())));
        }
        let mut dsu = DisjointSet::new(p);
        let mut canonical = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i >= p || e.j >= p || e.i == e.j {
                return Err(MstError::NotATree(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !(e.distance.is_finite() && e.correlation.is_finite()) {
                return Err(MstError::NonFinite { i: e.i, j: e.j, value: e.distance });
            }
            if !dsu.union(e.i, e.j) {
                return Err(MstError::NotATree(format!("edge ({}, {}) closes a cycle", e.i, e.j)));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            canonical.push(TreeEdge { i, j, ..e });
        }
        Ok(Self { tickers, edges: canonical })
    }

    /// Tree from bare index pairs with zero weights, mostly for tests.
    pub fn from_pairs(tickers: Vec<String>, pairs: &[(usize, usize)]) -> Result<Self, MstError> {
        let edges = pairs.iter().map(|&(i, j)| TreeEdge { i, j, distance: 0.0, correlation: 0.0 }).collect();
        Self::new(tickers, edges)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.tickers.len()
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(TreeEdge::key).collect()
    }

    pub fn total_distance(&self) -> f64 {
        self.edges.iter().map(|e| e.distance).sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }

    /// Neighbour lists in ascending index order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), MstError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["source", "target", "distance", "correlation"])?;
        for e in &self.edges {
            w.write_record([
                self.tickers[e.i].clone(),
                self.tickers[e.j].clone(),
                e.distance.to_string(),
                e.correlation.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MstError> {
        let adjacency = self
            .adjacency()
            .into_iter()
            .enumerate()
            .map(|(i, nb)| (self.tickers[i].clone(), nb.into_iter().map(|j| self.tickers[j].clone()).collect()))
            .collect();
        let doc = TreeDoc {
            tickers: self.tickers.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    source: self.tickers[e.i].clone(),
                    target: self.tickers[e.j].clone(),
                    distance: e.distance,
                    correlation: e.correlation,
                })
                .collect(),
            adjacency,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self, MstError> {
        let doc: TreeDoc = serde_json::from_str(s)?;
        let index: HashMap<&str, usize> = doc.tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let lookup = |t: &str| index.get(t).copied().ok_or_else(|| MstError::NotATree(format!("unknown ticker {t:?}")));
        let edges = doc
            .edges
            .iter()
            .map(|e| {
                Ok(TreeEdge {
                    i: lookup(&e.source)?,
                    j: lookup(&e.target)?,
                    distance: e.distance,
                    correlation: e.correlation,
                })
            })
            .collect::<Result<Vec<_>, MstError>>()?;
        Self::new(doc.tickers.clone(), edges)
    }
}

/// Kruskal on a dense symmetric weight matrix. Ties in weight are broken by
/// `(i, j)` so the result is reproducible. Returns `(i, j)` pairs, `i < j`,
/// in the order they were accepted.
pub fn spanning_tree_edges(weights: &Array2<f64>) -> Result<Vec<(usize, usize)>, MstError> {
    let p = weights.nrows();
    if p < 2 {
        return Err(MstError::TooSmall(p));
    }
    let mut candidates = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            let w = weights[[i, j]];
            if !w.is_finite() {
                return Err(MstError::NonFinite { i, j, value: w });
            }
            candidates.push((w, i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut dsu = DisjointSet::new(p);
    let mut out = Vec::with_capacity(p - 1);
    for (_, i, j) in candidates {
        if dsu.union(i, j) {
            out.push((i, j));
            if out.len() == p - 1 {
                break;
            }
        }
    }
    Ok(out)
}

/// Minimum spanning tree of the distance graph; each edge also carries its
/// correlation from `c`.
pub fn kruskal_mst(d: &DistanceMatrix, c: &CorrelationMatrix) -> Result<Tree, MstError> {
    if d.tickers() != c.tickers() {
        return Err(MstError::TickerMismatch);
    }
    let edges = spanning_tree_edges(d.values())?
        .into_iter()
        .map(|(i, j)| TreeEdge { i, j, distance: d.get(i, j), correlation: c.get(i, j) })
        .collect();
    Tree::new(d.tickers().to_vec(), edges)
}

/// Correlation matrix keeping only tree edges, with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCorrelation {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl LabeledMatrix for FilteredCorrelation {
    fn tickers(&self) -> &[String] {
        &self.tickers
    }

    fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Zero every off-diagonal entry that is not a tree edge. Tree edges keep the
/// value from `c`. The output uses `c`'s ticker order.
pub fn mst_filter(tree: &Tree, c: &CorrelationMatrix) -> Result<FilteredCorrelation, MstError> {
    let index: HashMap<&str, usize> = c.tickers().iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let map = tree
        .tickers()
        .iter()
        .map(|t| index.get(t.as_str()).copied().ok_or_else(|| MstError::AbsentTicker(t.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    if map.len() != c.dim() {
        return Err(MstError::TickerMismatch);
    }
    let p = c.dim();
    let mut values = Array2::eye(p);
    for e in tree.edges() {
        let (a, b) = (map[e.i], map[e.j]);
        let v = c.get(a, b);
        values[[a, b]] = v;
        values[[b, a]] = v;
    }
    Ok(FilteredCorrelation { tickers: c.tickers().to_vec(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{to_distance, Method};
    use ndarray::array;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("n{i}")).collect()
    }

    fn corr(values: Array2<f64>) -> CorrelationMatrix {
        let p = values.nrows();
        CorrelationMatrix::new(Method::Pearson, names(p), values).unwrap()
    }

    #[test]
    fn two_nodes() {
        let c = corr(array![[1.0, 0.3], [0.3, 1.0]]);
        let t = kruskal_mst(&to_distance(&c).unwrap(), &c).unwrap();
        assert_eq!(t.edge_set(), BTreeSet::from([(0, 1)]));
        assert_eq!(t.edges()[0].correlation, 0.3);
        assert_eq!(mst_filter(&t, &c).unwrap().values(), c.values());
    }

    #[test]
    fn triangle_takes_two_smallest() {
        let d = DistanceMatrix::from_values(names(3), array![[0.0, 0.1, 0.2], [0.1, 0.0, 0.3], [0.2, 0.3, 0.0]])
            .unwrap();
        let c = corr(Array2::eye(3));
        let t = kruskal_mst(&d, &c).unwrap();
        assert_eq!(t.edge_set(), BTreeSet::from([(0, 1), (0, 2)]));
        assert!((t.total_distance() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ties_break_lexicographically() {
        let d = DistanceMatrix::from_values(names(3), Array2::<f64>::ones((3, 3)) - Array2::<f64>::eye(3)).unwrap();
        let t = kruskal_mst(&d, &corr(Array2::eye(3))).unwrap();
        assert_eq!(t.edge_set(), BTreeSet::from([(0, 1), (0, 2)]));
    }

    #[test]
    fn non_finite_rejected() {
        let mut w = Array2::zeros((3, 3));
        w[[0, 2]] = f64::NAN;
        assert!(matches!(spanning_tree_edges(&w), Err(MstError::NonFinite { i: 0, j: 2, .. })));
    }

    #[test]
    fn filter_star() {
        let c = corr(array![
            [1.0, 0.5, 0.4, 0.3],
            [0.5, 1.0, 0.2, 0.1],
            [0.4, 0.2, 1.0, 0.05],
            [0.3, 0.1, 0.05, 1.0]
        ]);
        let t = kruskal_mst(&to_distance(&c).unwrap(), &c).unwrap();
        assert_eq!(t.edge_set(), BTreeSet::from([(0, 1), (0, 2), (0, 3)]));
        let f = mst_filter(&t, &c).unwrap();
        let off: Vec<f64> = f
            .values()
            .indexed_iter()
            .filter(|((i, j), v)| i != j && **v != 0.0)
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(off.len(), 6);
        let edge_sum: f64 = t.edges().iter().map(|e| e.correlation).sum();
        assert!((off.iter().sum::<f64>() - 2.0 * edge_sum).abs() < 1e-15);
        assert!((0..4).all(|i| f.values()[[i, i]] == 1.0));
    }

    #[test]
    fn filter_rejects_foreign_ticker() {
        let c = corr(array![[1.0, 0.3], [0.3, 1.0]]);
        let t = Tree::from_pairs(vec!["x".into(), "n1".into()], &[(0, 1)]).unwrap();
        assert!(matches!(mst_filter(&t, &c), Err(MstError::AbsentTicker(ref s)) if s == "x"));
    }

    #[test]
    fn tree_validation() {
        assert!(Tree::from_pairs(names(3), &[(0, 1)]).is_err());
        assert!(Tree::from_pairs(names(3), &[(0, 1), (1, 0)]).is_err());
        assert!(Tree::from_pairs(names(3), &[(0, 0), (1, 2)]).is_err());
        let t = Tree::from_pairs(names(3), &[(2, 1), (1, 0)]).unwrap();
        assert_eq!(t.edge_set(), BTreeSet::from([(1, 2), (0, 1)]));
    }

    #[test]
    fn json_round_trip() {
        let c = corr(array![[1.0, 0.5, 0.4], [0.5, 1.0, 0.2], [0.4, 0.2, 1.0]]);
        let t = kruskal_mst(&to_distance(&c).unwrap(), &c).unwrap();
        let json = t.to_json().unwrap();
        assert!(json.contains("\"adjacency\""));
        assert_eq!(Tree::from_json(&json).unwrap(), t);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("source,target,distance,correlation\nn0,n1,"));
    }

    #[test]
    fn disjoint_set_basics() {
        let mut s = DisjointSet::new(4);
        assert!(s.union(0, 1));
        assert!(s.union(2, 3));
        assert!(!s.union(1, 0));
        assert_ne!(s.find(0), s.find(2));
        assert!(s.union(1, 3));
        assert_eq!(s.find(0), s.find(2));
    }
}
