//! Long-only minimum-variance portfolios on shrunk covariance matrices.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ingest::PanelView;
use crate::matrix::LabeledMatrix;
use crate::stats::{mean, sample_sd, sample_variance};

pub const DEFAULT_ALPHA: f64 = 0.9;
pub const TRADING_DAYS: f64 = 252.0;
pub const KKT_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum PortfolioError {
    #[error("variance for {ticker} is {value}")]
    NegativeVariance { ticker: String, value: f64 },

    #[error("expected {expected} variances, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("ticker sets differ")]
    TickerMismatch,

    #[error("shrinkage intensity {0} is outside (0, 1]")]
    InvalidAlpha(f64),

    #[error("covariance trace {0} is not positive")]
    NonPositiveTrace(f64),

    #[error("covariance restricted to {size} assets is not positive definite")]
    NotPositiveDefinite { size: usize },

    #[error("solver stopped after {iterations} iterations with KKT residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("portfolio return series has zero standard deviation")]
    ZeroSd,

    #[error("need at least 2 days, got {0}")]
    TooShort(usize),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Asset covariance in squared-return units.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl LabeledMatrix for CovarianceMatrix {
    fn tickers(&self) -> &[String] {
        &self.tickers
    }

    fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Per-column (n - 1) sample variances of a window.
pub fn sample_variances(window: &PanelView<'_>) -> Vec<f64> {
    (0..window.n_assets()).map(|i| sample_variance(&window.column(i).to_vec())).collect()
}

/// `Σ_ij = σ_i σ_j C_ij`.
pub fn covariance_from_correlation<M: LabeledMatrix + ?Sized>(
    c: &M,
    variances: &[f64],
) -> Result<CovarianceMatrix, PortfolioError> {
    let p = c.dim();
    if variances.len() != p {
        return Err(PortfolioError::LengthMismatch { expected: p, actual: variances.len() });
    }
    if let Some(i) = variances.iter().position(|v| !(*v >= 0.0)) {
        return Err(PortfolioError::NegativeVariance { ticker: c.tickers()[i].clone(), value: variances[i] });
    }
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let cv = c.values();
    let values = Array2::from_shape_fn((p, p), |(i, j)| sd[i] * sd[j] * cv[[i, j]]);
    Ok(CovarianceMatrix { tickers: c.tickers().to_vec(), values })
}

/// Diagonal target of the shrinkage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkageTarget {
    /// `(1 - α) tr(Σ) / p · I`
    #[default]
    ScaledIdentity,
    /// `(1 - α) tr(Σ) · I`
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkCovariance {
    tickers: Vec<String>,
    values: Array2<f64>,
    alpha: f64,
    target: ShrinkageTarget,
    loading: f64,
    extra_loading: f64,
}

impl ShrunkCovariance {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn target(&self) -> ShrinkageTarget {
        self.target
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        to_nalgebra(&self.values).symmetric_eigenvalues().min()
    }

    /// Diagonal loading the target adds, `(1 - α) λ`.
    pub fn loading(&self) -> f64 {
        self.loading
    }

    /// Loading added on top of the target by [`Self::with_spectral_floor`].
    pub fn extra_loading(&self) -> f64 {
        self.extra_loading
    }

    /// Raise the spectrum so the smallest eigenvalue is at least the target
    /// loading. A no-op when the input covariance was positive semidefinite;
    /// tree-filtered correlations usually are not.
    pub fn with_spectral_floor(mut self) -> Self {
        let lowest = self.smallest_eigenvalue();
        if lowest < self.loading * (1.0 - 1e-9) {
            let extra = self.loading - lowest;
            self.values.diag_mut().mapv_inplace(|v| v + extra);
            self.extra_loading += extra;
        }
        self
    }
}

impl LabeledMatrix for ShrunkCovariance {
    fn tickers(&self) -> &[String] {
        &self.tickers
    }

    fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// `α Σ + (1 - α) λ I` with `λ` set by the target.
pub fn shrink(
    sigma: &CovarianceMatrix,
    alpha: f64,
    target: ShrinkageTarget,
) -> Result<ShrunkCovariance, PortfolioError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PortfolioError::InvalidAlpha(alpha));
    }
    let trace = sigma.values.diag().sum();
    if !(trace > 0.0) {
        return Err(PortfolioError::NonPositiveTrace(trace));
    }
    let p = sigma.dim();
    let load = match target {
        ShrinkageTarget::ScaledIdentity => (1.0 - alpha) * trace / p as f64,
        ShrinkageTarget::Trace => (1.0 - alpha) * trace,
    };
    let mut values = sigma.values.mapv(|v| alpha * v);
    values.diag_mut().mapv_inplace(|v| v + load);
    Ok(ShrunkCovariance { tickers: sigma.tickers.clone(), values, alpha, target, loading: load, extra_loading: 0.0 })
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
}

/// Worst violation of the optimality conditions of
/// `min wᵀΣw, 1ᵀw = 1, w ≥ 0`, relative to the objective.
pub fn kkt_residual(sigma: &Array2<f64>, w: &[f64]) -> f64 {
    let wv = ndarray::ArrayView1::from(w);
    let g = sigma.dot(&wv);
    let nu = wv.dot(&g);
    let scale = nu.abs().max(f64::MIN_POSITIVE);
    let mut worst = (w.iter().sum::<f64>() - 1.0).abs();
    for (i, &wi) in w.iter().enumerate() {
        worst = worst.max(-wi);
        let gap = (g[i] - nu) / scale;
        worst = worst.max(if wi > 0.0 { gap.abs() } else { -gap });
    }
    worst
}

/// Minimiser of `wᵀΣw` on the free set, zero elsewhere.
fn equality_solution(sigma: &DMatrix<f64>, free: &[usize]) -> Result<Vec<f64>, PortfolioError> {
    let k = free.len();
    let sub = DMatrix::from_fn(k, k, |a, b| sigma[(free[a], free[b])]);
    let chol = sub.cholesky().ok_or(PortfolioError::NotPositiveDefinite { size: k })?;
    let x = chol.solve(&DVector::from_element(k, 1.0));
    let total = x.sum();
    let mut w = vec![0.0; sigma.nrows()];
    for (a, &i) in free.iter().enumerate() {
        w[i] = x[a] / total;
    }
    Ok(w)
}

/// Long-only minimum-variance weights by a primal active-set method.
pub fn min_variance_weights(sigma: &ShrunkCovariance) -> Result<PortfolioWeights, PortfolioError> {
    let weights = solve_min_variance(&sigma.values)?;
    Ok(PortfolioWeights { tickers: sigma.tickers.clone(), weights })
}

pub fn solve_min_variance(sigma: &Array2<f64>) -> Result<Vec<f64>, PortfolioError> {
    let p = sigma.nrows();
    let s = to_nalgebra(sigma);
    let mut w = vec![1.0 / p as f64; p];
    let mut free: Vec<bool> = vec![true; p];
    let max_iter = 20 * p + 100;
    for _ in 0..max_iter {
        let idx: Vec<usize> = (0..p).filter(|&i| free[i]).collect();
        let target = equality_solution(&s, &idx)?;
        if idx.iter().all(|&i| target[i] >= 0.0) {
            w = target;
            let g = &s * DVector::from_column_slice(&w);
            let nu = w.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
            let release = (0..p)
                .filter(|&i| !free[i])
                .map(|i| (i, (g[i] - nu) / nu))
                .filter(|&(_, m)| m < -1e-14)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((i, _)) => free[i] = true,
                None => break,
            }
        } else {
            let mut step = 1.0;
            let mut blocking = usize::MAX;
            for &i in &idx {
                if target[i] < 0.0 {
                    let t = w[i] / (w[i] - target[i]);
                    if t < step || blocking == usize::MAX {
                        step = t.min(step);
                        blocking = i;
                    }
                }
            }
            for i in 0..p {
                w[i] += step * (target[i] - w[i]);
            }
            w[blocking] = 0.0;
            free[blocking] = false;
        }
    }
    for v in &mut w {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let residual = kkt_residual(sigma, &w);
    if residual > KKT_TOL {
        return Err(PortfolioError::NoConvergence { iterations: max_iter, residual, best: w });
    }
    Ok(w)
}

pub fn portfolio_variance(sigma: &Array2<f64>, w: &[f64]) -> f64 {
    let wv = ndarray::ArrayView1::from(w);
    wv.dot(&sigma.dot(&wv))
}

/// Daily portfolio returns over a window.
pub fn portfolio_returns(w: &PortfolioWeights, window: &PanelView<'_>) -> Result<Vec<f64>, PortfolioError> {
    if w.tickers.as_slice() != window.tickers {
        return Err(PortfolioError::TickerMismatch);
    }
    let wv = ndarray::ArrayView1::from(&w.weights[..]);
    Ok(window.returns.dot(&wv).to_vec())
}

/// Annualised Sharpe ratio with zero risk-free rate.
pub fn sharpe_ratio(daily: &[f64]) -> Result<f64, PortfolioError> {
    if daily.len() < 2 {
        return Err(PortfolioError::TooShort(daily.len()));
    }
    let m = mean(daily);
    let sd = sample_sd(daily);
    if sd == 0.0 || sd <= 16.0 * f64::EPSILON * m.abs() {
        return Err(PortfolioError::ZeroSd);
    }
    Ok(m / sd * TRADING_DAYS.sqrt())
}

pub fn sharpe_out_of_sample(w: &PortfolioWeights, next_window: &PanelView<'_>) -> Result<f64, PortfolioError> {
    sharpe_ratio(&portfolio_returns(w, next_window)?)
}

/// L1 distance between two weight vectors.
pub fn turnover(now: &PortfolioWeights, prev: &PortfolioWeights) -> Result<f64, PortfolioError> {
    if now.tickers != prev.tickers {
        return Err(PortfolioError::TickerMismatch);
    }
    Ok(now.weights.iter().zip(&prev.weights).map(|(a, b)| (a - b).abs()).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub window_start: NaiveDate,
    pub method: String,
    pub sharpe: Option<f64>,
    pub turnover: Option<f64>,
}

pub fn write_weights_csv<W: Write>(
    rows: &[(NaiveDate, String, PortfolioWeights)],
    sink: W,
) -> Result<(), PortfolioError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["window_start", "method", "ticker", "weight"])?;
    for (start, method, pw) in rows {
        for (t, v) in pw.tickers.iter().zip(&pw.weights) {
            w.write_record([start.to_string(), method.clone(), t.clone(), v.to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], sink: W) -> Result<(), PortfolioError> {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["window_start", "method", "sharpe", "turnover"])?;
    for r in rows {
        w.write_record([r.window_start.to_string(), r.method.clone(), cell(r.sharpe), cell(r.turnover)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
