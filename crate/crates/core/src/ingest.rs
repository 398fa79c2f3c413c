//! Price loading, cleaning, log returns and rolling windows.
//!
//! Price CSV layout: a `date` column with ISO-8601 dates followed by one
//! column per ticker. Empty cells are missing values. Sector CSV layout:
//! `ticker,sector`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("duplicate ticker {ticker:?} in header column {column}")]
    DuplicateTicker { ticker: String, column: usize },

    #[error("row {row}: unparseable date {value:?}")]
    UnparseableDate { row: usize, value: String },

    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },

    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount { row: usize, expected: usize, found: usize },

    #[error("row {row}, column {column}: unparseable value {value:?}")]
    UnparseableValue { row: usize, column: usize, value: String },

    #[error("row {row}: unknown sector {value:?}")]
    UnknownSector { row: usize, value: String },

    #[error("ticker {0:?} has no sector assignment")]
    UnmappedTicker(String),

    #[error("dates are not strictly increasing at position {0}")]
    UnorderedDates(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("missing-data threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),

    #[error("no assets remain after cleaning")]
    NoAssetsRemain,

    #[error("price table still has {0} missing values")]
    HasMissing(usize),

    #[error("need at least {required} rows, got {actual}")]
    InsufficientRows { required: usize, actual: usize },

    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice { ticker: String, date: NaiveDate, value: f64 },

    #[error("non-finite return for {ticker} at row {row}")]
    NonFiniteReturn { ticker: String, row: usize },

    #[error("invalid window spec: {0}")]
    InvalidWindow(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_tickers(tickers: &[String]) -> Result<(), IngestError> {
    let mut seen = HashSet::with_capacity(tickers.len());
    for (column, t) in tickers.iter().enumerate() {
        if !seen.insert(t.as_str()) {
            return Err(IngestError::DuplicateTicker { ticker: t.clone(), column: column + 1 });
        }
    }
    Ok(())
}

fn check_dates(dates: &[NaiveDate]) -> Result<(), IngestError> {
    match dates.windows(2).position(|w| w[0] >= w[1]) {
        Some(pos) => Err(IngestError::UnorderedDates(pos + 1)),
        None => Ok(()),
    }
}

/// Adjusted close prices with a missing-value mask.
///
/// Missing cells hold `NaN` in `prices`; everything else is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: Array2<f64>,
    missing: Array2<bool>,
}

impl PriceTable {
    /// Build a table from raw cells; `None` marks a missing value.
    pub fn from_cells(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        cells: Array2<Option<f64>>,
    ) -> Result<Self, IngestError> {
        if cells.dim() != (dates.len(), tickers.len()) {
            return Err(IngestError::Shape(format!(
                "{} dates x {} tickers but {:?} cells",
                dates.len(),
                tickers.len(),
                cells.dim()
            )));
        }
        check_dates(&dates)?;
        check_tickers(&tickers)?;
        for ((t, i), v) in cells.indexed_iter() {
            if let Some(v) = *v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(IngestError::NonPositivePrice {
                        ticker: tickers[i].clone(),
                        date: dates[t],
                        value: v,
                    });
                }
            }
        }
        let missing = cells.mapv(|c| c.is_none());
        let prices = cells.mapv(|c| c.unwrap_or(f64::NAN));
        Ok(Self { dates, tickers, prices, missing })
    }

    /// Build a table with no missing values.
    pub fn from_prices(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        prices: Array2<f64>,
    ) -> Result<Self, IngestError> {
        Self::from_cells(dates, tickers, prices.mapv(Some))
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn missing(&self) -> &Array2<bool> {
        &self.missing
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Write in the input price format; missing cells are left empty.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["date".to_owned()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut record = vec![date.format(DATE_FORMAT).to_string()];
            for i in 0..self.tickers.len() {
                record.push(if self.missing[[t, i]] { String::new() } else { self.prices[[t, i]].to_string() });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a price CSV. Cells that are empty or do not parse to a finite,
/// strictly positive number become missing entries. Rows are sorted by date.
pub fn load_prices<R: Read>(source: R) -> Result<PriceTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let mut fields = header.iter().map(str::trim);
    match fields.next() {
        Some(first) if first.eq_ignore_ascii_case("date") => {}
        Some(first) => {
            return Err(IngestError::MalformedHeader(format!(
                "first column must be `date`, found {first:?}"
            )))
        }
        None => return Err(IngestError::MalformedHeader("empty header".into())),
    }
    let tickers: Vec<String> = fields.map(str::to_owned).collect();
    if tickers.is_empty() {
        return Err(IngestError::MalformedHeader("no ticker columns".into()));
    }
    if let Some(column) = tickers.iter().position(String::is_empty) {
        return Err(IngestError::MalformedHeader(format!("empty ticker name in column {}", column + 1)));
    }
    check_tickers(&tickers)?;

    let p = tickers.len();
    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = idx + 2;
        if record.len() != p + 1 {
            return Err(IngestError::FieldCount { row, expected: p + 1, found: record.len() });
        }
        let raw_date = record[0].trim();
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT)
            .map_err(|_| IngestError::UnparseableDate { row, value: raw_date.to_owned() })?;
        let values = record
            .iter()
            .skip(1)
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() {
                    return None;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Some(v),
                    _ => {
                        log::debug!("row {row}: treating {cell:?} as missing");
                        None
                    }
                }
            })
            .collect();
        rows.push((date, values));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(pos) = rows.windows(2).position(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate { row: pos + 3, date: rows[pos].0 });
    }

    let n = rows.len();
    let mut cells = Array2::from_elem((n, p), None);
    let mut dates = Vec::with_capacity(n);
    for (t, (date, values)) in rows.into_iter().enumerate() {
        dates.push(date);
        for (i, v) in values.into_iter().enumerate() {
            cells[[t, i]] = v;
        }
    }
    PriceTable::from_cells(dates, tickers, cells)
}

/// Drop all-missing dates, drop assets missing more than `max_missing_frac`
/// of the remaining dates, then forward-fill and back-fill what is left.
pub fn clean_prices(table: &PriceTable, max_missing_frac: f64) -> Result<PriceTable, IngestError> {
    if !(0.0..1.0).contains(&max_missing_frac) {
        return Err(IngestError::InvalidThreshold(max_missing_frac));
    }
    let kept_rows: Vec<usize> = (0..table.n_dates())
        .filter(|&t| !table.missing.row(t).iter().all(|&m| m))
        .collect();
    let n = kept_rows.len();
    if n == 0 {
        return Err(IngestError::NoAssetsRemain);
    }

    let mut kept_cols = Vec::new();
    for (i, ticker) in table.tickers.iter().enumerate() {
        let gaps = kept_rows.iter().filter(|&&t| table.missing[[t, i]]).count();
        let frac = gaps as f64 / n as f64;
        if frac > max_missing_frac {
            log::warn!("dropping {ticker}: {:.1}% missing", 100.0 * frac);
        } else {
            kept_cols.push(i);
        }
    }
    if kept_cols.is_empty() {
        return Err(IngestError::NoAssetsRemain);
    }

    let mut prices = Array2::zeros((n, kept_cols.len()));
    for (c, &i) in kept_cols.iter().enumerate() {
        let column: Vec<Option<f64>> = kept_rows
            .iter()
            .map(|&t| (!table.missing[[t, i]]).then(|| table.prices[[t, i]]))
            .collect();
        // a kept column has at most max_missing_frac < 1 gaps, so a value exists
        let first = column.iter().flatten().next().copied().ok_or(IngestError::NoAssetsRemain)?;
        let mut last = first;
        for (t, v) in column.into_iter().enumerate() {
            if let Some(v) = v {
                last = v;
            }
            prices[[t, c]] = last;
        }
    }
    let dates = kept_rows.iter().map(|&t| table.dates[t]).collect();
    let tickers = kept_cols.iter().map(|&i| table.tickers[i].clone()).collect();
    PriceTable::from_prices(dates, tickers, prices)
}

/// Daily log returns `ln(P[t+1] / P[t])`, dated by the later day.
pub fn log_returns(table: &PriceTable) -> Result<ReturnPanel, IngestError> {
    let gaps = table.missing_count();
    if gaps > 0 {
        return Err(IngestError::HasMissing(gaps));
    }
    let n = table.n_dates();
    if n < 2 {
        return Err(IngestError::InsufficientRows { required: 2, actual: n });
    }
    for ((t, i), &v) in table.prices.indexed_iter() {
        if !(v > 0.0) {
            return Err(IngestError::NonPositivePrice {
                ticker: table.tickers[i].clone(),
                date: table.dates[t],
                value: v,
            });
        }
    }
    let upper = table.prices.slice(s![1.., ..]);
    let lower = table.prices.slice(s![..-1, ..]);
    let mut returns = Array2::zeros((n - 1, table.n_assets()));
    ndarray::Zip::from(&mut returns)
        .and(&upper)
        .and(&lower)
        .for_each(|r, &hi, &lo| *r = (hi / lo).ln());
    ReturnPanel::new(table.dates[1..].to_vec(), table.tickers.clone(), returns)
}

/// Date-indexed matrix of log returns, rows are days and columns assets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    returns: Array2<f64>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: Array2<f64>) -> Result<Self, IngestError> {
        if returns.dim() != (dates.len(), tickers.len()) {
            return Err(IngestError::Shape(format!(
                "{} dates x {} tickers but returns are {:?}",
                dates.len(),
                tickers.len(),
                returns.dim()
            )));
        }
        check_dates(&dates)?;
        check_tickers(&tickers)?;
        if let Some(((row, i), _)) = returns.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(IngestError::NonFiniteReturn { ticker: tickers[i].clone(), row });
        }
        Ok(Self { dates, tickers, returns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn view(&self) -> PanelView<'_> {
        PanelView { dates: &self.dates, tickers: &self.tickers, returns: self.returns.view() }
    }

    /// Rows `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> PanelView<'_> {
        let end = start + len;
        PanelView {
            dates: &self.dates[start..end],
            tickers: &self.tickers,
            returns: self.returns.slice(s![start..end, ..]),
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, tickers: &[String]) -> Result<ReturnPanel, IngestError> {
        let idx = tickers
            .iter()
            .map(|t| {
                self.tickers
                    .iter()
                    .position(|x| x == t)
                    .ok_or_else(|| IngestError::Shape(format!("ticker {t:?} not in panel")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let returns = self.returns.select(Axis(1), &idx);
        ReturnPanel::new(self.dates.clone(), tickers.to_vec(), returns)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["date".to_owned()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut record = vec![date.format(DATE_FORMAT).to_string()];
            record.extend(self.returns.row(t).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a panel written by [`ReturnPanel::write_csv`]. Every cell must be
    /// present and finite.
    pub fn read_csv<R: Read>(source: R) -> Result<ReturnPanel, IngestError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let header = reader.headers()?.clone();
        if header.get(0).map(str::trim) != Some("date") {
            return Err(IngestError::MalformedHeader("first column must be `date`".into()));
        }
        let tickers: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_owned()).collect();
        let p = tickers.len();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let row = idx + 2;
            let raw = record[0].trim();
            dates.push(
                NaiveDate::parse_from_str(raw, DATE_FORMAT)
                    .map_err(|_| IngestError::UnparseableDate { row, value: raw.to_owned() })?,
            );
            for (column, cell) in record.iter().enumerate().skip(1) {
                let v = cell.trim().parse::<f64>().map_err(|_| IngestError::UnparseableValue {
                    row,
                    column,
                    value: cell.to_owned(),
                })?;
                values.push(v);
            }
        }
        let returns = Array2::from_shape_vec((dates.len(), p), values)
            .map_err(|e| IngestError::Shape(e.to_string()))?;
        ReturnPanel::new(dates, tickers, returns)
    }
}

/// Borrowed rows of a [`ReturnPanel`].
#[derive(Debug, Clone, Copy)]
pub struct PanelView<'a> {
    pub dates: &'a [NaiveDate],
    pub tickers: &'a [String],
    pub returns: ArrayView2<'a, f64>,
}

impl<'a> PanelView<'a> {
    pub fn n_days(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn column(&self, i: usize) -> ArrayView1<'a, f64> {
        self.returns.index_axis_move(Axis(1), i)
    }

    pub fn start_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn to_owned(&self) -> ReturnPanel {
        ReturnPanel {
            dates: self.dates.to_vec(),
            tickers: self.tickers.to_vec(),
            returns: self.returns.to_owned(),
        }
    }
}

/// Rolling window length and stride, in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { length: 504, step: 30 }
    }
}

impl WindowSpec {
    pub fn new(length: usize, step: usize) -> Self {
        Self { length, step }
    }

    pub fn validate(&self, panel_len: usize) -> Result<(), IngestError> {
        if self.length < 2 {
            return Err(IngestError::InvalidWindow(format!("length {} < 2", self.length)));
        }
        if self.step < 1 {
            return Err(IngestError::InvalidWindow("step must be at least 1".into()));
        }
        if self.length > panel_len {
            return Err(IngestError::InvalidWindow(format!(
                "window of {} days exceeds panel of {panel_len} days",
                self.length
            )));
        }
        Ok(())
    }

    /// Number of full windows that fit in `panel_len` rows.
    pub fn count(&self, panel_len: usize) -> usize {
        if self.length > panel_len || self.step == 0 {
            0
        } else {
            (panel_len - self.length) / self.step + 1
        }
    }

    /// Start rows of every full window.
    pub fn starts(&self, panel_len: usize) -> Vec<usize> {
        (0..self.count(panel_len)).map(|k| k * self.step).collect()
    }
}

/// Full windows starting at `0, step, 2*step, ...`; a trailing partial window
/// is discarded.
pub fn windows(panel: &ReturnPanel, spec: WindowSpec) -> Result<Vec<(usize, PanelView<'_>)>, IngestError> {
    spec.validate(panel.n_days())?;
    Ok(spec
        .starts(panel.n_days())
        .into_iter()
        .map(|start| (start, panel.slice(start, spec.length)))
        .collect())
}

/// The eleven GICS sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Sector {
    Technology,
    RealEstate,
    Materials,
    Communications,
    Energy,
    Financials,
    Utilities,
    Industrials,
    ConsumerDiscretionary,
    Healthcare,
    ConsumerStaples,
}

impl Sector {
    pub const ALL: [Sector; 11] = [
        Sector::Technology,
        Sector::RealEstate,
        Sector::Materials,
        Sector::Communications,
        Sector::Energy,
        Sector::Financials,
        Sector::Utilities,
        Sector::Industrials,
        Sector::ConsumerDiscretionary,
        Sector::Healthcare,
        Sector::ConsumerStaples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sector::Technology => "Technology",
            Sector::RealEstate => "Real Estate",
            Sector::Materials => "Materials",
            Sector::Communications => "Communications",
            Sector::Energy => "Energy",
            Sector::Financials => "Financials",
            Sector::Utilities => "Utilities",
            Sector::Industrials => "Industrials",
            Sector::ConsumerDiscretionary => "Consumer Discretionary",
            Sector::Healthcare => "Healthcare",
            Sector::ConsumerStaples => "Consumer Staples",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let sector = match key.as_str() {
            "technology" | "informationtechnology" | "it" => Sector::Technology,
            "realestate" => Sector::RealEstate,
            "materials" | "basicmaterials" => Sector::Materials,
            "communications" | "communicationservices" | "telecommunications" => Sector::Communications,
            "energy" => Sector::Energy,
            "financials" | "financial" => Sector::Financials,
            "utilities" => Sector::Utilities,
            "industrials" => Sector::Industrials,
            "consumerdiscretionary" => Sector::ConsumerDiscretionary,
            "healthcare" => Sector::Healthcare,
            "consumerstaples" => Sector::ConsumerStaples,
            _ => return Err(format!("unknown sector {s:?}")),
        };
        Ok(sector)
    }
}

impl TryFrom<String> for Sector {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Sector> for String {
    fn from(s: Sector) -> Self {
        s.name().to_owned()
    }
}

/// Ticker to sector assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMap {
    entries: BTreeMap<String, Sector>,
}

impl SectorMap {
    pub fn new(entries: BTreeMap<String, Sector>) -> Self {
        Self { entries }
    }

    pub fn get(&self, ticker: &str) -> Option<Sector> {
        self.entries.get(ticker).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Sector)> {
        self.entries.iter().map(|(t, s)| (t.as_str(), *s))
    }

    /// Restrict to the analysed universe. Every ticker must be mapped;
    /// entries for other tickers are dropped with a warning.
    pub fn restrict_to(&self, tickers: &[String]) -> Result<SectorMap, IngestError> {
        let mut entries = BTreeMap::new();
        for t in tickers {
            let sector = self.get(t).ok_or_else(|| IngestError::UnmappedTicker(t.clone()))?;
            entries.insert(t.clone(), sector);
        }
        for t in self.entries.keys().filter(|t| !entries.contains_key(*t)) {
            log::warn!("ignoring sector entry for {t}: not in the analysed universe");
        }
        Ok(SectorMap { entries })
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["ticker", "sector"])?;
        for (t, s) in &self.entries {
            w.write_record([t.as_str(), s.name()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a `ticker,sector` CSV.
pub fn load_sectors<R: Read>(source: R) -> Result<SectorMap, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() != 2 || !names[0].eq_ignore_ascii_case("ticker") || !names[1].eq_ignore_ascii_case("sector") {
        return Err(IngestError::MalformedHeader(format!("expected `ticker,sector`, found {names:?}")));
    }
    let mut entries = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 2;
        let ticker = record[0].trim().to_owned();
        let raw = record[1].trim();
        let sector: Sector = raw.parse().map_err(|_| IngestError::UnknownSector { row, value: raw.to_owned() })?;
        if entries.insert(ticker.clone(), sector).is_some() {
            return Err(IngestError::DuplicateTicker { ticker, column: row });
        }
    }
    Ok(SectorMap { entries })
}
