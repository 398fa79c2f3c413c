//! How trees and correlation matrices change across windows and methods.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;

use crate::matrix::LabeledMatrix;
use crate::mst::Tree;
use crate::stats::Summary;

#[derive(Debug, thiserror::Error)]
pub enum StabilityError {
    #[error("trees or matrices are over different ticker universes")]
    UniverseMismatch,

    #[error("matrix entries sum to zero; cannot normalise")]
    ZeroTotal,

    #[error("sequence is empty")]
    Empty,

    #[error("{trees} trees but {starts} window starts")]
    LengthMismatch { trees: usize, starts: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Fraction of edges not shared by two trees on the same universe:
/// `1 - |E1 ∩ E2| / (p - 1)`.
pub fn edge_difference(t1: &Tree, t2: &Tree) -> Result<f64, StabilityError> {
    if t1.tickers() != t2.tickers() {
        return Err(StabilityError::UniverseMismatch);
    }
    let a = t1.edge_set();
    let shared = t2.edges().iter().filter(|e| a.contains(&e.key())).count();
    let m = (t1.n_nodes() - 1) as f64;
    Ok(1.0 - shared as f64 / m)
}

/// Chronological trees over one universe, one per window.
#[derive(Debug, Clone)]
pub struct TreeSequence {
    trees: Vec<Tree>,
    starts: Vec<NaiveDate>,
}

impl TreeSequence {
    pub fn new(trees: Vec<Tree>, starts: Vec<NaiveDate>) -> Result<Self, StabilityError> {
        if trees.len() != starts.len() {
            return Err(StabilityError::LengthMismatch { trees: trees.len(), starts: starts.len() });
        }
        if let Some(first) = trees.first() {
            if trees.iter().any(|t| t.tickers() != first.tickers()) {
                return Err(StabilityError::UniverseMismatch);
            }
        }
        Ok(Self { trees, starts })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn starts(&self) -> &[NaiveDate] {
        &self.starts
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Edge difference between each tree and its predecessor.
    pub fn adjacent_differences(&self) -> Vec<f64> {
        self.trees
            .windows(2)
            .map(|w| edge_difference(&w[0], &w[1]).expect("universe checked on construction"))
            .collect()
    }
}

fn running_intersections(seq: &TreeSequence) -> Vec<BTreeSet<(usize, usize)>> {
    let mut out: Vec<BTreeSet<(usize, usize)>> = Vec::with_capacity(seq.len());
    for tree in seq.trees() {
        let next = match out.last() {
            None => tree.edge_set(),
            Some(prev) => {
                let cur = tree.edge_set();
                prev.intersection(&cur).copied().collect()
            }
        };
        out.push(next);
    }
    out
}

/// Multi-step survival ratio: share of the first tree's edges present in
/// every tree up to `t`. The first value is 1.
pub fn survival_ratio(seq: &TreeSequence) -> Vec<f64> {
    let Some(first) = seq.trees().first() else {
        return Vec::new();
    };
    let m = (first.n_nodes() - 1) as f64;
    running_intersections(seq).iter().map(|s| s.len() as f64 / m).collect()
}

/// Edges present in every tree of the sequence.
pub fn persistent_edges(seq: &TreeSequence) -> BTreeSet<(usize, usize)> {
    running_intersections(seq).pop().unwrap_or_default()
}

fn normalising_total<M: LabeledMatrix + ?Sized>(m: &M) -> Result<f64, StabilityError> {
    let total: f64 = m.values().iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(StabilityError::ZeroTotal);
    }
    Ok(total)
}

fn normalised_gaps<X, Y>(cx: &X, cy: &Y) -> Result<ndarray::Array2<f64>, StabilityError>
where
    X: LabeledMatrix + ?Sized,
    Y: LabeledMatrix + ?Sized,
{
    if cx.tickers() != cy.tickers() {
        return Err(StabilityError::UniverseMismatch);
    }
    let mx = normalising_total(cx)?;
    let my = normalising_total(cy)?;
    let mut out = cx.values() / mx;
    ndarray::Zip::from(&mut out).and(cy.values()).for_each(|a, &b| *a = (*a - b / my).abs());
    Ok(out)
}

/// Per-node absolute normalised difference,
/// `d_i = sum_{j != i} |Cx_ij / Mx - Cy_ij / My|`, where `M` is the sum of
/// every entry including the diagonal.
pub fn node_difference<X, Y>(cx: &X, cy: &Y) -> Result<Vec<f64>, StabilityError>
where
    X: LabeledMatrix + ?Sized,
    Y: LabeledMatrix + ?Sized,
{
    let gaps = normalised_gaps(cx, cy)?;
    Ok(gaps
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum())
        .collect())
}

/// `sum_{i,j} |Cx_ij / Mx - Cy_ij / My|` over every entry.
pub fn matrix_difference<X, Y>(cx: &X, cy: &Y) -> Result<f64, StabilityError>
where
    X: LabeledMatrix + ?Sized,
    Y: LabeledMatrix + ?Sized,
{
    Ok(normalised_gaps(cx, cy)?.sum())
}

/// The same sum restricted to `j > i`.
pub fn upper_triangle_difference<X, Y>(cx: &X, cy: &Y) -> Result<f64, StabilityError>
where
    X: LabeledMatrix + ?Sized,
    Y: LabeledMatrix + ?Sized,
{
    let gaps = normalised_gaps(cx, cy)?;
    Ok(gaps.indexed_iter().filter(|((i, j), _)| j > i).map(|(_, v)| v).sum())
}

/// Edge and how many trees of a sequence contain it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeCount {
    pub source: String,
    pub target: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub starts: Vec<NaiveDate>,
    /// `adjacent[k]` compares window `k + 1` with window `k`.
    pub adjacent: Vec<f64>,
    pub adjacent_summary: Summary,
    pub survival: Vec<f64>,
    pub persistent: Vec<(String, String)>,
    /// Every edge seen in the sequence, most frequent first.
    pub edge_counts: Vec<EdgeCount>,
}

pub fn stability_report(seq: &TreeSequence) -> Result<StabilityReport, StabilityError> {
    let first = seq.trees().first().ok_or(StabilityError::Empty)?;
    let tickers = first.tickers();
    let adjacent = seq.adjacent_differences();
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in seq.trees() {
        for e in t.edges() {
            *counts.entry(e.key()).or_default() += 1;
        }
    }
    let mut edge_counts: Vec<EdgeCount> = counts
        .into_iter()
        .map(|((i, j), count)| EdgeCount { source: tickers[i].clone(), target: tickers[j].clone(), count })
        .collect();
    edge_counts.sort_by(|a, b| b.count.cmp(&a.count));
    Ok(StabilityReport {
        starts: seq.starts().to_vec(),
        adjacent_summary: Summary::of(&adjacent),
        adjacent,
        survival: survival_ratio(seq),
        persistent: persistent_edges(seq)
            .into_iter()
            .map(|(i, j)| (tickers[i].clone(), tickers[j].clone()))
            .collect(),
        edge_counts,
    })
}

/// One row of the tidy `window_start,method_pair,metric,value` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TidyRow {
    pub window_start: NaiveDate,
    pub method_pair: String,
    pub metric: String,
    pub value: f64,
}

impl StabilityReport {
    /// Adjacent differences are dated by the later window.
    pub fn tidy_rows(&self, label: &str) -> Vec<TidyRow> {
        let mut rows = Vec::new();
        for (k, v) in self.adjacent.iter().enumerate() {
            rows.push(TidyRow {
                window_start: self.starts[k + 1],
                method_pair: label.to_owned(),
                metric: "edge_difference".into(),
                value: *v,
            });
        }
        for (k, v) in self.survival.iter().enumerate() {
            rows.push(TidyRow {
                window_start: self.starts[k],
                method_pair: label.to_owned(),
                metric: "survival_ratio".into(),
                value: *v,
            });
        }
        rows
    }
}

pub fn write_tidy_csv<W: Write>(rows: &[TidyRow], sink: W) -> Result<(), StabilityError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["window_start", "method_pair", "metric", "value"])?;
    for r in rows {
        w.write_record([r.window_start.to_string(), r.method_pair.clone(), r.metric.clone(), r.value.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{CorrelationMatrix, Method};
    use ndarray::{array, Array2};

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("n{i}")).collect()
    }

    fn tree(pairs: &[(usize, usize)]) -> Tree {
        Tree::from_pairs(names(pairs.len() + 1), pairs).unwrap()
    }

    fn day(k: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(k)
    }

    fn seq(trees: Vec<Tree>) -> TreeSequence {
        let starts = (0..trees.len() as u64).map(day).collect();
        TreeSequence::new(trees, starts).unwrap()
    }

    #[test]
    fn edge_difference_cases() {
        let path = tree(&[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(edge_difference(&path, &path).unwrap(), 0.0);
        let other = tree(&[(0, 2), (0, 3), (1, 3)]);
        assert_eq!(edge_difference(&path, &other).unwrap(), 1.0);
        let two_shared = tree(&[(0, 1), (1, 2), (0, 3)]);
        assert!((edge_difference(&path, &two_shared).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let small = tree(&[(0, 1)]);
        assert!(matches!(edge_difference(&path, &small), Err(StabilityError::UniverseMismatch)));
    }

    #[test]
    fn survival_examples() {
        let a = tree(&[(0, 1), (1, 2), (2, 3)]);
        let s = seq(vec![a.clone(), a.clone(), a.clone()]);
        assert_eq!(survival_ratio(&s), vec![1.0, 1.0, 1.0]);
        assert_eq!(persistent_edges(&s).len(), 3);

        let disjoint = tree(&[(0, 2), (0, 3), (1, 3)]);
        let s = seq(vec![a.clone(), disjoint, a.clone()]);
        assert_eq!(survival_ratio(&s), vec![1.0, 0.0, 0.0]);

        // running intersections of size 3, 2, 1
        let b = tree(&[(0, 1), (1, 2), (1, 3)]);
        let c = tree(&[(0, 1), (0, 2), (1, 3)]);
        let s = seq(vec![a.clone(), b, c]);
        let sr = survival_ratio(&s);
        assert_eq!(sr[0], 1.0);
        assert!((sr[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((sr[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(persistent_edges(&s), BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn single_tree_persistent_set() {
        let a = tree(&[(0, 1), (1, 2)]);
        assert_eq!(persistent_edges(&seq(vec![a.clone()])), a.edge_set());
        assert!(survival_ratio(&seq(vec![])).is_empty());
    }

    struct Raw(Vec<String>, Array2<f64>);

    impl Raw {
        fn new(t: Vec<String>, v: Array2<f64>) -> Self {
            Raw(t, v)
        }
    }

    impl LabeledMatrix for Raw {
        fn tickers(&self) -> &[String] {
            &self.0
        }
        fn values(&self) -> &Array2<f64> {
            &self.1
        }
    }

    fn cm(values: Array2<f64>) -> CorrelationMatrix {
        let p = values.nrows();
        CorrelationMatrix::new(Method::Pearson, names(p), values).unwrap()
    }

    #[test]
    fn node_difference_identity_and_scaling() {
        let x = cm(array![[1.0, 0.5, 0.2], [0.5, 1.0, 0.1], [0.2, 0.1, 1.0]]);
        assert_eq!(node_difference(&x, &x).unwrap(), vec![0.0; 3]);
        assert_eq!(matrix_difference(&x, &x).unwrap(), 0.0);
        // a doubled matrix normalises to the same thing
        let doubled = Raw::new(names(3), x.values() * 2.0);
        assert!(node_difference(&x, &doubled).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn hand_computed_matrix_difference() {
        // Mx = 3 + 2(0.5) = 4, My = 3 + 2(-0.5) = 2 on the (0,1) pair only
        let x = cm(array![[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let y = cm(array![[1.0, -0.5, 0.0], [-0.5, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        // diagonal: |1/4 - 1/2| * 3 = 0.75; (0,1),(1,0): |0.125 + 0.25| * 2 = 0.75
        assert!((matrix_difference(&x, &y).unwrap() - 1.5).abs() < 1e-15);
        assert!((upper_triangle_difference(&x, &y).unwrap() - 0.375).abs() < 1e-15);
        let nd = node_difference(&x, &y).unwrap();
        assert!((nd[0] - 0.375).abs() < 1e-15);
        assert!((nd[1] - 0.375).abs() < 1e-15);
        assert_eq!(nd[2], 0.0);
    }

    #[test]
    fn zero_total_is_an_error() {
        let z = Raw::new(names(2), array![[1.0, -1.0], [-1.0, 1.0]]);
        let x = cm(Array2::eye(2));
        assert!(matches!(matrix_difference(&x, &z), Err(StabilityError::ZeroTotal)));
    }

    #[test]
    fn report_and_tidy_rows() {
        let a = tree(&[(0, 1), (1, 2), (2, 3)]);
        let b = tree(&[(0, 1), (1, 2), (1, 3)]);
        let s = seq(vec![a.clone(), b, a]);
        let r = stability_report(&s).unwrap();
        assert_eq!(r.adjacent.len(), 2);
        assert_eq!(r.persistent, vec![("n0".to_owned(), "n1".to_owned()), ("n1".to_owned(), "n2".to_owned())]);
        assert_eq!(r.edge_counts[0].count, 3);
        let rows = r.tidy_rows("pearson");
        assert_eq!(rows.len(), 2 + 3);
        assert_eq!(rows[0].window_start, day(1));
        let mut buf = Vec::new();
        write_tidy_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("window_start,method_pair,metric,value\n"));
    }
}
