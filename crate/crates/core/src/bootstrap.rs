//! Circular block bootstrap and replicate-to-replicate robustness statistics.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{to_distance, CorrelationError, Method};
use crate::ingest::{PanelView, ReturnPanel};
use crate::matrix::LabeledMatrix;
use crate::mst::{kruskal_mst, MstError, Tree};
use crate::stability::{edge_difference, StabilityError};
use crate::stats::Summary;

pub const DEFAULT_PAIR_BUDGET: usize = 50_000;

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("invalid bootstrap spec: {0}")]
    InvalidSpec(String),

    #[error("panel has {actual} rows, spec expects {expected}")]
    SourceLength { expected: usize, actual: usize },

    #[error("need at least 2 replicates, got {0}")]
    TooFewReplicates(usize),

    #[error("pair budget must be at least 1")]
    ZeroBudget,

    #[error("replicates cover different tickers")]
    TickerMismatch,

    #[error("correlation error: {0}")]
    Correlation(#[from] CorrelationError),

    #[error("mst error: {0}")]
    Mst(#[from] MstError),

    #[error("stability error: {0}")]
    Stability(#[from] StabilityError),

    #[error("panel error: {0}")]
    Panel(#[from] crate::ingest::IngestError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub output_len: usize,
    pub source_len: usize,
    pub block_len: usize,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { replicates: 1000, output_len: 504, source_len: 1008, block_len: 20, seed: 0 }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.replicates < 2 {
            return Err(BootstrapError::InvalidSpec(format!("replicates = {} < 2", self.replicates)));
        }
        if self.block_len < 1 {
            return Err(BootstrapError::InvalidSpec("block length must be at least 1".into()));
        }
        if self.source_len < 1 || self.output_len < 1 {
            return Err(BootstrapError::InvalidSpec("source and output lengths must be positive".into()));
        }
        Ok(())
    }

    /// Generator for one replicate: the master seed with the replicate index
    /// as stream, so replicates can be drawn in any order.
    pub fn rng(&self, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        rng
    }

    pub fn block_starts(&self, replicate: usize) -> Vec<usize> {
        let mut rng = self.rng(replicate);
        let blocks = self.output_len.div_ceil(self.block_len);
        (0..blocks).map(|_| rng.random_range(0..self.source_len)).collect()
    }

    pub fn row_indices(&self, replicate: usize) -> Vec<usize> {
        rows_from_starts(&self.block_starts(replicate), self.block_len, self.source_len, self.output_len)
    }
}

/// Concatenate wrapped blocks and truncate.
pub fn rows_from_starts(starts: &[usize], block_len: usize, source_len: usize, output_len: usize) -> Vec<usize> {
    starts
        .iter()
        .flat_map(|&s| (0..block_len).map(move |k| (s + k) % source_len))
        .take(output_len)
        .collect()
}

/// Build a replicate from row indices; dates are the first `len` source dates.
pub fn resample(panel: &PanelView<'_>, rows: &[usize]) -> Result<ReturnPanel, BootstrapError> {
    let values = panel.returns.select(ndarray::Axis(0), rows);
    Ok(ReturnPanel::new(panel.dates[..rows.len()].to_vec(), panel.tickers.to_vec(), values)?)
}

fn check_source(panel: &PanelView<'_>, spec: &BootstrapSpec) -> Result<(), BootstrapError> {
    spec.validate()?;
    if panel.n_days() != spec.source_len {
        return Err(BootstrapError::SourceLength { expected: spec.source_len, actual: panel.n_days() });
    }
    if spec.output_len > spec.source_len {
        return Err(BootstrapError::InvalidSpec("output is longer than the source".into()));
    }
    Ok(())
}

pub fn circular_bootstrap(panel: &PanelView<'_>, spec: &BootstrapSpec) -> Result<Vec<ReturnPanel>, BootstrapError> {
    check_source(panel, spec)?;
    (0..spec.replicates).into_par_iter().map(|r| resample(panel, &spec.row_indices(r))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    MstWeighted,
    MstUnweighted,
    Full,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::MstWeighted, Layer::MstUnweighted, Layer::Full];

    pub fn name(self) -> &'static str {
        match self {
            Layer::MstWeighted => "mst_weighted",
            Layer::MstUnweighted => "mst_unweighted",
            Layer::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub method: Method,
    pub layer: Layer,
    pub mean: f64,
    pub sd: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessTable {
    pub fn get(&self, method: Method, layer: Layer) -> Option<&RobustnessRow> {
        self.rows.iter().find(|r| r.method == method && r.layer == layer)
    }

    pub fn extend(&mut self, other: RobustnessTable) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), BootstrapError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["method", "layer", "mean", "sd"])?;
        for r in &self.rows {
            w.write_record([r.method.name(), r.layer.name(), &r.mean.to_string(), &r.sd.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// What a replicate contributes to pairwise comparisons: the correlation
/// matrix divided by its entry sum, its tree and the tree-filtered entry sum.
struct Fingerprint {
    full: ndarray::Array2<f64>,
    tree: Tree,
    edges: BTreeMap<(usize, usize), f64>,
    filtered_total: f64,
}

impl Fingerprint {
    fn of(panel: &ReturnPanel, method: Method) -> Result<Self, BootstrapError> {
        let c = method.compute(&panel.view())?;
        let tree = kruskal_mst(&to_distance(&c)?, &c)?;
        let total = c.values().sum();
        if total == 0.0 {
            return Err(StabilityError::ZeroTotal.into());
        }
        let edges: BTreeMap<(usize, usize), f64> = tree.edges().iter().map(|e| (e.key(), e.correlation)).collect();
        let filtered_total = c.dim() as f64 + 2.0 * edges.values().sum::<f64>();
        if filtered_total == 0.0 {
            return Err(StabilityError::ZeroTotal.into());
        }
        Ok(Self { full: c.values() / total, tree, edges, filtered_total })
    }
}

fn full_difference(a: &Fingerprint, b: &Fingerprint) -> f64 {
    a.full.iter().zip(b.full.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Entry-sum-normalised difference of two tree-filtered matrices, touching
/// only the diagonal and the union of both edge sets.
fn filtered_difference(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (ma, mb) = (a.filtered_total, b.filtered_total);
    let p = a.full.nrows() as f64;
    let mut sum = p * (1.0 / ma - 1.0 / mb).abs();
    // walk the sorted union so the result does not depend on argument order
    let keys: std::collections::BTreeSet<&(usize, usize)> = a.edges.keys().chain(b.edges.keys()).collect();
    for k in keys {
        let va = a.edges.get(k).copied().unwrap_or(0.0);
        let vb = b.edges.get(k).copied().unwrap_or(0.0);
        sum += 2.0 * (va / ma - vb / mb).abs();
    }
    sum
}

/// Unordered replicate pairs: all of them when they fit in the budget,
/// otherwise a seeded uniform sample without replacement.
pub fn replicate_pairs(n: usize, budget: usize, seed: u64) -> Result<Vec<(usize, usize)>, BootstrapError> {
    if budget < 1 {
        return Err(BootstrapError::ZeroBudget);
    }
    if n < 2 {
        return Err(BootstrapError::TooFewReplicates(n));
    }
    let total = n * (n - 1) / 2;
    let decode = |k: usize| {
        // row a holds pairs (a, a+1 .. n-1)
        let mut a = 0;
        let mut k = k;
        while k >= n - 1 - a {
            k -= n - 1 - a;
            a += 1;
        }
        (a, a + 1 + k)
    };
    if total <= budget {
        return Ok((0..total).map(decode).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut picked = index::sample(&mut rng, total, budget).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(decode).collect())
}

fn summarise(mut values: Vec<f64>) -> (f64, f64) {
    // sorting first makes the sums independent of pair order
    values.sort_by(f64::total_cmp);
    let s = Summary::of(&values);
    (s.mean, s.sd)
}

/// Mean and s.d. of replicate-pair differences for one method, one row per
/// layer.
pub fn robustness_table(
    replicates: &[ReturnPanel],
    method: Method,
    pair_budget: usize,
    seed: u64,
) -> Result<RobustnessTable, BootstrapError> {
    if replicates.len() < 2 {
        return Err(BootstrapError::TooFewReplicates(replicates.len()));
    }
    let tickers = replicates[0].tickers();
    if replicates.iter().any(|r| r.tickers() != tickers) {
        return Err(BootstrapError::TickerMismatch);
    }
    let prints = replicates
        .par_iter()
        .map(|r| Fingerprint::of(r, method))
        .collect::<Result<Vec<_>, _>>()?;
    table_from_prints(&prints, method, pair_budget, seed)
}

/// Same table as `robustness_table(&circular_bootstrap(panel, spec)?, ..)`
/// with the pair seed taken from `spec`, but each replicate is drawn on
/// demand and dropped once its fingerprint is taken.
pub fn bootstrap_robustness(
    panel: &PanelView<'_>,
    spec: &BootstrapSpec,
    method: Method,
    pair_budget: usize,
) -> Result<RobustnessTable, BootstrapError> {
    check_source(panel, spec)?;
    let prints = (0..spec.replicates)
        .into_par_iter()
        .map(|r| Fingerprint::of(&resample(panel, &spec.row_indices(r))?, method))
        .collect::<Result<Vec<_>, _>>()?;
    table_from_prints(&prints, method, pair_budget, spec.seed)
}

fn table_from_prints(
    prints: &[Fingerprint],
    method: Method,
    pair_budget: usize,
    seed: u64,
) -> Result<RobustnessTable, BootstrapError> {
    let pairs = replicate_pairs(prints.len(), pair_budget, seed)?;
    let diffs = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (x, y) = (&prints[a], &prints[b]);
            Ok([filtered_difference(x, y), edge_difference(&x.tree, &y.tree)?, full_difference(x, y)])
        })
        .collect::<Result<Vec<_>, BootstrapError>>()?;
    let rows = Layer::ALL
        .iter()
        .enumerate()
        .map(|(k, &layer)| {
            let (mean, sd) = summarise(diffs.iter().map(|d| d[k]).collect());
            RobustnessRow { method, layer, mean, sd, pairs: pairs.len() }
        })
        .collect();
    Ok(RobustnessTable { rows })
}
