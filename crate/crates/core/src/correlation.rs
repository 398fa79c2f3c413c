//! Pearson, Spearman and Kendall τ-b correlation matrices, the distance
//! transform used for tree construction, and the largest eigenvalue.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::PanelView;
use crate::matrix::{from_rows, same_tickers, to_rows, LabeledMatrix};
use crate::stats::average_ranks;

/// Symmetry tolerance for a valid correlation matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Round-off allowed beyond [-1, 1] before the distance transform rejects an entry.
pub const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CorrelationError {
    #[error("column {ticker:?} has zero variance")]
    ZeroVariance { ticker: String },

    #[error("need at least 2 observations, got {0}")]
    TooFewRows(usize),

    #[error("correlation {value} at ({i}, {j}) is outside [-1, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },

    #[error("ticker lists differ")]
    TickerMismatch,

    #[error("invalid correlation matrix: {0}")]
    Invalid(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pearson,
    Spearman,
    #[serde(alias = "kendall")]
    KendallTauB,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pearson, Method::Spearman, Method::KendallTauB];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pearson => "pearson",
            Method::Spearman => "spearman",
            Method::KendallTauB => "kendall_tau_b",
        }
    }

    pub fn compute(self, window: &PanelView<'_>) -> Result<CorrelationMatrix, CorrelationError> {
        match self {
            Method::Pearson => pearson(window),
            Method::Spearman => spearman(window),
            Method::KendallTauB => kendall_tau_b(window),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pearson" => Ok(Method::Pearson),
            "spearman" => Ok(Method::Spearman),
            "kendall" | "kendall_tau_b" | "tau" | "kendall-tau-b" => Ok(Method::KendallTauB),
            other => Err(format!("unknown correlation method {other:?}")),
        }
    }
}

/// Symmetric correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    method: Method,
    tickers: Vec<String>,
    values: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct CorrelationDoc {
    method: Method,
    tickers: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn new(method: Method, tickers: Vec<String>, values: Array2<f64>) -> Result<Self, CorrelationError> {
        let p = tickers.len();
        if values.dim() != (p, p) {
            return Err(CorrelationError::Invalid(format!("{p} tickers but values are {:?}", values.dim())));
        }
        for i in 0..p {
            if values[[i, i]] != 1.0 {
                return Err(CorrelationError::Invalid(format!("diagonal entry {i} is {}", values[[i, i]])));
            }
            for j in 0..i {
                let (a, b) = (values[[i, j]], values[[j, i]]);
                if !(a.abs() <= 1.0) {
                    return Err(CorrelationError::OutOfRange { i, j, value: a });
                }
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(CorrelationError::Invalid(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { method, tickers, values })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn to_json(&self) -> Result<String, CorrelationError> {
        let doc = CorrelationDoc { method: self.method, tickers: self.tickers.clone(), values: to_rows(&self.values) };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self, CorrelationError> {
        let doc: CorrelationDoc = serde_json::from_str(s)?;
        let values = from_rows(&doc.values).ok_or_else(|| CorrelationError::Invalid("matrix is not square".into()))?;
        Self::new(doc.method, doc.tickers, values)
    }
}

impl LabeledMatrix for CorrelationMatrix {
    fn tickers(&self) -> &[String] {
        &self.tickers
    }

    fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

fn check_constant_columns(returns: ArrayView2<'_, f64>, tickers: &[String]) -> Result<(), CorrelationError> {
    if returns.nrows() < 2 {
        return Err(CorrelationError::TooFewRows(returns.nrows()));
    }
    for (i, col) in returns.axis_iter(Axis(1)).enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(CorrelationError::ZeroVariance { ticker: tickers[i].clone() });
        }
    }
    Ok(())
}

/// Pearson correlation of every column pair of `returns`.
fn pearson_values(returns: ArrayView2<'_, f64>, tickers: &[String]) -> Result<Array2<f64>, CorrelationError> {
    check_constant_columns(returns, tickers)?;
    let p = returns.ncols();
    let means = returns.mean_axis(Axis(0)).expect("at least two rows");
    let centered = &returns - &means.insert_axis(Axis(0));
    let gram = centered.t().dot(&centered);
    let mut out = Array2::eye(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let c = (gram[[i, j]] / (gram[[i, i]] * gram[[j, j]]).sqrt()).clamp(-1.0, 1.0);
            out[[i, j]] = c;
            out[[j, i]] = c;
        }
    }
    Ok(out)
}

pub fn pearson(window: &PanelView<'_>) -> Result<CorrelationMatrix, CorrelationError> {
    let values = pearson_values(window.returns, window.tickers)?;
    Ok(CorrelationMatrix { method: Method::Pearson, tickers: window.tickers.to_vec(), values })
}

/// Replace every column by its average ranks (1-based).
pub fn rank_columns(returns: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(returns.raw_dim());
    for (i, col) in returns.axis_iter(Axis(1)).enumerate() {
        let ranks = average_ranks(&col.to_vec());
        out.column_mut(i).assign(&ArrayView1::from(&ranks));
    }
    out
}

/// Pearson correlation of the column-wise average ranks.
pub fn spearman(window: &PanelView<'_>) -> Result<CorrelationMatrix, CorrelationError> {
    let ranked = rank_columns(window.returns);
    let values = pearson_values(ranked.view(), window.tickers)?;
    Ok(CorrelationMatrix { method: Method::Spearman, tickers: window.tickers.to_vec(), values })
}

/// Sizes of the groups of tied values in one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieGroups {
    pub sizes: Vec<usize>,
}

impl TieGroups {
    pub fn of(xs: &[f64]) -> Self {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut sizes = Vec::new();
        let mut lo = 0;
        while lo < sorted.len() {
            let hi = lo + sorted[lo..].iter().take_while(|&&v| v == sorted[lo]).count();
            if hi - lo >= 2 {
                sizes.push(hi - lo);
            }
            lo = hi;
        }
        Self { sizes }
    }

    /// Number of tied pairs, `sum t (t - 1) / 2`.
    pub fn tied_pairs(&self) -> u64 {
        self.sizes.iter().map(|&t| (t as u64) * (t as u64 - 1) / 2).sum()
    }
}

/// One column prepared for τ-b: dense integer ranks and a rank-sorted order.
struct RankedColumn {
    dense: Vec<u32>,
    order: Vec<u32>,
    tied_pairs: u64,
}

impl RankedColumn {
    fn new(col: ArrayView1<'_, f64>) -> Self {
        let xs = col.to_vec();
        let mut order: Vec<u32> = (0..xs.len() as u32).collect();
        order.sort_by(|&a, &b| xs[a as usize].total_cmp(&xs[b as usize]));
        let mut dense = vec![0u32; xs.len()];
        let mut rank = 0u32;
        let mut tied_pairs = 0u64;
        let mut run = 0u64;
        for k in 0..order.len() {
            if k > 0 && xs[order[k] as usize] != xs[order[k - 1] as usize] {
                rank += 1;
                tied_pairs += run * (run.saturating_sub(1)) / 2;
                run = 0;
            }
            run += 1;
            dense[order[k] as usize] = rank;
        }
        tied_pairs += run * (run.saturating_sub(1)) / 2;
        Self { dense, order, tied_pairs }
    }
}

/// Pair counts entering the τ-b formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallCounts {
    /// n(n - 1) / 2
    pub total: u64,
    /// pairs tied in x
    pub tied_x: u64,
    /// pairs tied in y
    pub tied_y: u64,
    /// pairs tied in both
    pub tied_xy: u64,
    pub concordant: u64,
    pub discordant: u64,
}

impl KendallCounts {
    /// `None` when either variable is constant.
    pub fn tau_b(&self) -> Option<f64> {
        let dx = self.total - self.tied_x;
        let dy = self.total - self.tied_y;
        if dx == 0 || dy == 0 {
            return None;
        }
        let num = self.concordant as f64 - self.discordant as f64;
        Some((num / ((dx as f64) * (dy as f64)).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Count strict inversions of `ys` by bottom-up merge sort; `ys` ends sorted.
fn count_inversions(ys: &mut [u32], buf: &mut Vec<u32>) -> u64 {
    let n = ys.len();
    buf.clear();
    buf.resize(n, 0);
    let mut inversions = 0u64;
    let mut width = 1;
    let mut src_is_ys = true;
    while width < n {
        {
            let (src, dst): (&[u32], &mut [u32]) =
                if src_is_ys { (&*ys, buf.as_mut_slice()) } else { (buf.as_slice(), &mut *ys) };
            let mut lo = 0;
            while lo < n {
                let mid = (lo + width).min(n);
                let hi = (lo + 2 * width).min(n);
                let (mut a, mut b, mut k) = (lo, mid, lo);
                while a < mid && b < hi {
                    if src[b] < src[a] {
                        // src[b] is smaller than every remaining left element
                        inversions += (mid - a) as u64;
                        dst[k] = src[b];
                        b += 1;
                    } else {
                        dst[k] = src[a];
                        a += 1;
                    }
                    k += 1;
                }
                dst[k..k + (mid - a)].copy_from_slice(&src[a..mid]);
                k += mid - a;
                dst[k..k + (hi - b)].copy_from_slice(&src[b..hi]);
                lo = hi;
            }
        }
        src_is_ys = !src_is_ys;
        width *= 2;
    }
    if !src_is_ys {
        ys.copy_from_slice(buf);
    }
    inversions
}

struct Scratch {
    pairs: Vec<(u32, u32)>,
    ys: Vec<u32>,
    buf: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { pairs: Vec::with_capacity(n), ys: Vec::with_capacity(n), buf: Vec::with_capacity(n) }
    }
}

fn pair_counts(x: &RankedColumn, y: &RankedColumn, scratch: &mut Scratch) -> KendallCounts {
    let n = x.dense.len() as u64;
    let pairs = &mut scratch.pairs;
    pairs.clear();
    pairs.extend(x.order.iter().map(|&k| (x.dense[k as usize], y.dense[k as usize])));
    // order is sorted by x; sort each x-tie run by y
    let mut lo = 0;
    let mut tied_xy = 0u64;
    while lo < pairs.len() {
        let hi = lo + pairs[lo..].iter().take_while(|p| p.0 == pairs[lo].0).count();
        if hi - lo > 1 {
            pairs[lo..hi].sort_unstable();
            let mut a = lo;
            while a < hi {
                let b = a + pairs[a..hi].iter().take_while(|p| p.1 == pairs[a].1).count();
                let run = (b - a) as u64;
                tied_xy += run * (run - 1) / 2;
                a = b;
            }
        }
        lo = hi;
    }
    scratch.ys.clear();
    scratch.ys.extend(pairs.iter().map(|p| p.1));
    let discordant = count_inversions(&mut scratch.ys, &mut scratch.buf);
    let total = n * n.saturating_sub(1) / 2;
    let concordant = total + tied_xy - x.tied_pairs - y.tied_pairs - discordant;
    KendallCounts { total, tied_x: x.tied_pairs, tied_y: y.tied_pairs, tied_xy, concordant, discordant }
}

/// Concordant/discordant/tie counts of two paired samples in O(n log n).
pub fn kendall_counts(xs: &[f64], ys: &[f64]) -> KendallCounts {
    assert_eq!(xs.len(), ys.len(), "paired samples must have equal length");
    let x = RankedColumn::new(ArrayView1::from(xs));
    let y = RankedColumn::new(ArrayView1::from(ys));
    pair_counts(&x, &y, &mut Scratch::new(xs.len()))
}

/// Kendall τ-b of two paired samples; `None` if either is constant.
pub fn kendall_tau_b_pair(xs: &[f64], ys: &[f64]) -> Option<f64> {
    kendall_counts(xs, ys).tau_b()
}

pub fn kendall_tau_b(window: &PanelView<'_>) -> Result<CorrelationMatrix, CorrelationError> {
    let returns = window.returns;
    check_constant_columns(returns, window.tickers)?;
    let n = returns.nrows();
    let p = returns.ncols();
    let columns: Vec<RankedColumn> = returns.axis_iter(Axis(1)).map(RankedColumn::new).collect();
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut scratch = Scratch::new(n);
            ((i + 1)..p)
                .map(|j| {
                    pair_counts(&columns[i], &columns[j], &mut scratch)
                        .tau_b()
                        .expect("constant columns rejected above")
                })
                .collect()
        })
        .collect();
    let mut values = Array2::eye(p);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, tau) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            values[[i, j]] = tau;
            values[[j, i]] = tau;
        }
    }
    Ok(CorrelationMatrix { method: Method::KendallTauB, tickers: window.tickers.to_vec(), values })
}

/// Distances `sqrt(2 (1 - C_ij))`, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl LabeledMatrix for DistanceMatrix {
    fn tickers(&self) -> &[String] {
        &self.tickers
    }

    fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

impl DistanceMatrix {
    /// Wrap raw distances; used for trees over arbitrary weighted graphs.
    pub fn from_values(tickers: Vec<String>, values: Array2<f64>) -> Result<Self, CorrelationError> {
        let p = tickers.len();
        if values.dim() != (p, p) {
            return Err(CorrelationError::Invalid(format!("{p} tickers but values are {:?}", values.dim())));
        }
        Ok(Self { tickers, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

pub fn to_distance(c: &CorrelationMatrix) -> Result<DistanceMatrix, CorrelationError> {
    let p = c.dim();
    let mut values = Array2::zeros((p, p));
    for i in 0..p {
        for j in (i + 1)..p {
            let v = c.values[[i, j]];
            if !(v.abs() <= 1.0 + RANGE_SLACK) {
                return Err(CorrelationError::OutOfRange { i, j, value: v });
            }
            let d = (2.0 * (1.0 - v.clamp(-1.0, 1.0))).sqrt();
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix { tickers: c.tickers.clone(), values })
}

/// Largest eigenvalue of a symmetric matrix.
pub fn largest_eigenvalue<M: LabeledMatrix + ?Sized>(c: &M) -> f64 {
    let v = c.values();
    let p = v.nrows();
    if p == 0 {
        return f64::NAN;
    }
    let m = DMatrix::from_fn(p, p, |i, j| v[[i, j]]);
    m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `(Cx_ij, Cy_ij)` for every `i < j`, row-major.
pub fn coefficient_scatter(
    cx: &CorrelationMatrix,
    cy: &CorrelationMatrix,
) -> Result<Vec<(f64, f64)>, CorrelationError> {
    if !same_tickers(&cx.tickers, &cy.tickers) {
        return Err(CorrelationError::TickerMismatch);
    }
    let p = cx.dim();
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            out.push((cx.values[[i, j]], cy.values[[i, j]]));
        }
    }
    Ok(out)
}
