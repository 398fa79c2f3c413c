//! Seeded synthetic markets: a sector factor Gaussian copula with
//! heavy-tailed marginals and occasional joint outlier days.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::ingest::{IngestError, PriceTable, ReturnPanel, Sector, SectorMap};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub n_sectors: usize,
    /// Loading of every asset on the market factor.
    pub market_loading: f64,
    /// Loading on the asset's own sector factor.
    pub sector_loading: f64,
    /// Degrees of freedom of the Student-t marginals; `None` keeps them normal.
    pub dof: Option<f64>,
    /// Daily scale applied to the unit marginals.
    pub scale: f64,
    /// Expected outlier days per 100 days.
    pub outlier_rate: f64,
    /// Exact number of outlier days, one drawn uniformly inside each of this
    /// many equal strata of the sample. Overrides `outlier_rate`.
    pub outlier_count: Option<usize>,
    /// Assets hit together on an outlier day.
    pub outlier_assets: usize,
    /// Size of an outlier move, in multiples of `scale`.
    pub outlier_size: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for MarketSpec {
    fn default() -> Self {
        Self {
            n_assets: 50,
            n_days: 1008,
            n_sectors: 5,
            market_loading: 0.45,
            sector_loading: 0.45,
            dof: Some(3.0),
            scale: 0.01,
            outlier_rate: 1.0,
            outlier_count: None,
            outlier_assets: 6,
            outlier_size: 25.0,
            start: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub returns: ReturnPanel,
    pub sectors: SectorMap,
    /// Row indices of the injected outlier days.
    pub outlier_days: Vec<usize>,
}

/// `n` consecutive weekdays from `start` (inclusive if it is a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

pub fn tickers(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(3);
    (0..n).map(|i| format!("S{i:0width$}")).collect()
}

pub fn generate(spec: &MarketSpec) -> Result<SyntheticMarket, IngestError> {
    let (p, n) = (spec.n_assets, spec.n_days);
    let k = spec.n_sectors.clamp(1, Sector::ALL.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = spec.market_loading;
    let b = spec.sector_loading;
    let idio = (1.0 - a * a - b * b).max(0.0).sqrt();
    let sector_of: Vec<usize> = (0..p).map(|i| i % k).collect();
    let marginal = spec.dof.map(|v| StudentsT::new(0.0, 1.0, v).expect("positive degrees of freedom"));

    let mut values = Array2::zeros((n, p));
    let mut factors = vec![0.0; k];
    for t in 0..n {
        let market: f64 = rng.sample(StandardNormal);
        factors.iter_mut().for_each(|f| *f = rng.sample(StandardNormal));
        for i in 0..p {
            let e: f64 = rng.sample(StandardNormal);
            let z = a * market + b * factors[sector_of[i]] + idio * e;
            let x = match &marginal {
                Some(dist) => dist.inverse_cdf(normal_cdf(z).clamp(1e-12, 1.0 - 1e-12)),
                None => z,
            };
            values[[t, i]] = spec.scale * x;
        }
    }

    let m = spec.outlier_assets.min(p);
    let outlier_days: Vec<usize> = match spec.outlier_count {
        Some(k) if k > 0 && n > 0 => {
            let k = k.min(n);
            (0..k).map(|s| rng.random_range(s * n / k..(s + 1) * n / k)).collect()
        }
        Some(_) => Vec::new(),
        None => {
            let prob = (spec.outlier_rate / 100.0).clamp(0.0, 1.0);
            (0..n).filter(|_| rng.random::<f64>() < prob).collect()
        }
    };
    if m > 0 {
        for &t in &outlier_days {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for i in rand::seq::index::sample(&mut rng, p, m) {
                let jitter = 1.0 + 0.2 * rng.random::<f64>();
                values[[t, i]] = sign * spec.outlier_size * spec.scale * jitter;
            }
        }
    }

    let names = tickers(p);
    let sectors = SectorMap::new(
        names.iter().enumerate().map(|(i, t)| (t.clone(), Sector::ALL[sector_of[i]])).collect::<BTreeMap<_, _>>(),
    );
    let returns = ReturnPanel::new(business_days(spec.start, n), names, values)?;
    Ok(SyntheticMarket { returns, sectors, outlier_days })
}

/// Prices starting at 100 whose log returns are the panel. The first row is
/// the business day before the first return.
pub fn prices_from_returns(returns: &ReturnPanel) -> Result<PriceTable, IngestError> {
    let first = returns.dates()[0];
    let mut prev = first.pred_opt().expect("date in range");
    while matches!(prev.weekday(), Weekday::Sat | Weekday::Sun) {
        prev = prev.pred_opt().expect("date in range");
    }
    let mut dates = vec![prev];
    dates.extend_from_slice(returns.dates());
    let (n, p) = returns.returns().dim();
    let mut prices = Array2::zeros((n + 1, p));
    for i in 0..p {
        let mut log_price = 100f64.ln();
        prices[[0, i]] = 100.0;
        for t in 0..n {
            log_price += returns.returns()[[t, i]];
            prices[[t + 1, i]] = log_price.exp();
        }
    }
    PriceTable::from_prices(dates, returns.tickers().to_vec(), prices)
}
