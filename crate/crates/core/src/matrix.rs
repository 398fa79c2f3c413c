//! Square matrices labelled by ticker.

use std::io::Write;

use ndarray::Array2;

/// A p x p matrix whose rows and columns are indexed by the same tickers.
pub trait LabeledMatrix {
    fn tickers(&self) -> &[String];
    fn values(&self) -> &Array2<f64>;

    fn dim(&self) -> usize {
        self.tickers().len()
    }

    /// Write as CSV with a ticker header row and a leading ticker column.
    fn write_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error>
    where
        Self: Sized,
    {
        write_labeled_csv(self.tickers(), self.values(), sink)
    }
}

pub fn write_labeled_csv<W: Write>(tickers: &[String], values: &Array2<f64>, sink: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![String::new()];
    header.extend(tickers.iter().cloned());
    w.write_record(&header)?;
    for (i, t) in tickers.iter().enumerate() {
        let mut record = vec![t.clone()];
        record.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn same_tickers(a: &[String], b: &[String]) -> bool {
    a == b
}

/// Row-major nested vectors, the layout used by the JSON documents.
pub(crate) fn to_rows(values: &Array2<f64>) -> Vec<Vec<f64>> {
    values.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Option<Array2<f64>> {
    let p = rows.len();
    if rows.iter().any(|r| r.len() != p) {
        return None;
    }
    Array2::from_shape_vec((p, p), rows.iter().flatten().copied().collect()).ok()
}
