//! Distance from normality and rank-preserving quantile normalisation.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{PanelView, ReturnPanel};
use crate::stats::{average_ranks, mean, normal_cdf, normal_quantile, sample_sd, spearman_rho};

pub const DEFAULT_QUANTILES: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum GaussianityError {
    #[error("series has {0} values, need at least 2")]
    TooShort(usize),

    #[error("series is constant")]
    ZeroVariance,

    #[error("column {0:?} is constant")]
    ConstantColumn(String),

    #[error("need at least 2 quantiles, got {0}")]
    TooFewQuantiles(usize),

    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("no KS record for {ticker} at {window_start}")]
    Unmatched { window_start: NaiveDate, ticker: String },

    #[error("panel error: {0}")]
    Panel(#[from] crate::ingest::IngestError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

/// Kolmogorov-Smirnov distance between the empirical distribution of `xs`
/// and a normal with the sample mean and (n - 1) standard deviation.
pub fn ks_distance_gaussian(xs: &[f64]) -> Result<f64, GaussianityError> {
    if xs.len() < 2 {
        return Err(GaussianityError::TooShort(xs.len()));
    }
    if is_constant(xs) {
        return Err(GaussianityError::ZeroVariance);
    }
    let mu = mean(xs);
    let sigma = sample_sd(xs);
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf((x - mu) / sigma);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(d)
}

/// Per-ticker KS distance for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsRecord {
    pub window_start: NaiveDate,
    pub ticker: String,
    pub ks_distance: f64,
}

pub fn ks_records(window: &PanelView<'_>) -> Result<Vec<KsRecord>, GaussianityError> {
    let start = window.start_date().ok_or(GaussianityError::TooShort(0))?;
    (0..window.n_assets())
        .into_par_iter()
        .map(|i| {
            let xs = window.column(i).to_vec();
            let ks_distance = ks_distance_gaussian(&xs).map_err(|e| match e {
                GaussianityError::ZeroVariance => GaussianityError::ConstantColumn(window.tickers[i].clone()),
                other => other,
            })?;
            Ok(KsRecord { window_start: start, ticker: window.tickers[i].clone(), ks_distance })
        })
        .collect()
}

pub fn write_ks_csv<W: Write>(records: &[KsRecord], sink: W) -> Result<(), GaussianityError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["window_start", "ticker", "ks_distance"])?;
    for r in records {
        w.write_record([r.window_start.to_string(), r.ticker.clone(), r.ks_distance.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Standard-normal images of the midpoint probability grid `(k - 1/2) / q`.
#[derive(Debug, Clone)]
pub struct QuantileGrid {
    z: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(n_quantiles: usize) -> Result<Self, GaussianityError> {
        if n_quantiles < 2 {
            return Err(GaussianityError::TooFewQuantiles(n_quantiles));
        }
        let q = n_quantiles as f64;
        let z = (1..=n_quantiles).map(|k| normal_quantile((k as f64 - 0.5) / q)).collect();
        Ok(Self { z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Normal image of probability `u`, interpolated linearly between grid
    /// points and held at the end points outside the grid.
    pub fn map(&self, u: f64) -> f64 {
        let q = self.z.len();
        // grid point k sits at position k - 1 (zero based)
        let pos = u * q as f64 - 0.5;
        if pos <= 0.0 {
            return self.z[0];
        }
        if pos >= (q - 1) as f64 {
            return self.z[q - 1];
        }
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        self.z[lo] + frac * (self.z[lo + 1] - self.z[lo])
    }

    /// Replace each value by the grid image of its empirical quantile
    /// `(rank - 1/2) / n`; ties share the average rank.
    pub fn normalize(&self, xs: &[f64]) -> Result<Vec<f64>, GaussianityError> {
        if xs.len() < 2 {
            return Err(GaussianityError::TooShort(xs.len()));
        }
        if is_constant(xs) {
            return Err(GaussianityError::ZeroVariance);
        }
        let n = xs.len() as f64;
        Ok(average_ranks(xs).into_iter().map(|r| self.map((r - 0.5) / n)).collect())
    }
}

/// Map every column of a window onto normal quantiles independently.
pub fn quantile_normalize(window: &PanelView<'_>, n_quantiles: usize) -> Result<ReturnPanel, GaussianityError> {
    let grid = QuantileGrid::new(n_quantiles)?;
    let columns = (0..window.n_assets())
        .into_par_iter()
        .map(|i| {
            grid.normalize(&window.column(i).to_vec()).map_err(|e| match e {
                GaussianityError::ZeroVariance => GaussianityError::ConstantColumn(window.tickers[i].clone()),
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = Array2::from_shape_fn(window.returns.dim(), |(t, i)| columns[i][t]);
    Ok(ReturnPanel::new(window.dates.to_vec(), window.tickers.to_vec(), values)?)
}

/// Spearman correlation of pooled (node difference, KS distance) points.
/// Every node-difference key must have a KS record.
pub fn node_ks_correlation(
    node_diffs: &BTreeMap<(NaiveDate, String), f64>,
    ks: &[KsRecord],
) -> Result<f64, GaussianityError> {
    let lookup: BTreeMap<(NaiveDate, &str), f64> =
        ks.iter().map(|r| ((r.window_start, r.ticker.as_str()), r.ks_distance)).collect();
    let mut xs = Vec::with_capacity(node_diffs.len());
    let mut ys = Vec::with_capacity(node_diffs.len());
    for ((start, ticker), &d) in node_diffs {
        let k = lookup.get(&(*start, ticker.as_str())).ok_or_else(|| GaussianityError::Unmatched {
            window_start: *start,
            ticker: ticker.clone(),
        })?;
        xs.push(d);
        ys.push(*k);
    }
    pooled_spearman(&xs, &ys)
}

pub fn pooled_spearman(xs: &[f64], ys: &[f64]) -> Result<f64, GaussianityError> {
    if xs.len() < 3 {
        return Err(GaussianityError::TooFewPoints(xs.len()));
    }
    spearman_rho(xs, ys).ok_or(GaussianityError::ZeroVariance)
}

/// One line of the node-difference versus KS summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeKsRow {
    pub country: String,
    pub layer: String,
    pub method_pair: String,
    pub spearman_rho: f64,
}

pub fn write_node_ks_csv<W: Write>(rows: &[NodeKsRow], sink: W) -> Result<(), GaussianityError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["country", "layer", "method_pair", "spearman_rho"])?;
    for r in rows {
        w.write_record([r.country.clone(), r.layer.clone(), r.method_pair.clone(), r.spearman_rho.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
