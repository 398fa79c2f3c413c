//! Run summary and comparison with published reference values.

use std::collections::BTreeMap;

use rankmst::bootstrap::Layer;
use rankmst::gaussianity::NodeKsRow;
use rankmst::stats::Summary;
use rankmst::{Method, RobustnessTable};
use serde_json::{json, Map, Value};

use crate::config::{Country, RunConfig};
use crate::error::CliError;
use crate::stages::pair_label;
use crate::store::Store;

const TABLE_FILES: [(&str, &str); 5] = [
    ("stability", "stability/summary.csv"),
    ("node_ks_correlation", "gaussianity/node_ks_correlation.csv"),
    ("portfolio", "portfolio/summary.csv"),
    ("robustness", "bootstrap/robustness.csv"),
    ("largest_eigenvalue", "correlation/largest_eigenvalue.csv"),
];

const P: Method = Method::Pearson;
const S: Method = Method::Spearman;
const T: Method = Method::KendallTauB;

/// Spearman correlation between node difference and KS distance:
/// (layer, first method, second method, value).
pub fn node_ks_reference(country: Country) -> [(&'static str, Method, Method, f64); 6] {
    let (full, mst) = match country {
        Country::US => ([0.221, 0.244, -0.114], [-0.005, -0.005, -0.016]),
        Country::UK => ([0.409, 0.415, -0.104], [0.000, -0.008, -0.006]),
        Country::DE => ([0.331, 0.352, -0.075], [-0.013, 0.008, 0.021]),
    };
    [
        ("full", P, S, full[0]),
        ("full", P, T, full[1]),
        ("full", S, T, full[2]),
        ("mst", P, S, mst[0]),
        ("mst", P, T, mst[1]),
        ("mst", S, T, mst[2]),
    ]
}

/// Bootstrap robustness (method, layer, mean, sd).
pub fn robustness_reference(country: Country) -> Vec<(Method, Layer, f64, f64)> {
    let rows: [[f64; 6]; 3] = match country {
        Country::US => [
            [0.835, 0.218, 0.722, 0.056, 0.234, 0.094],
            [0.830, 0.209, 0.721, 0.053, 0.175, 0.074],
            [0.824, 0.210, 0.720, 0.053, 0.174, 0.071],
        ],
        Country::UK => [
            [0.896, 0.214, 0.750, 0.054, 0.296, 0.137],
            [0.904, 0.220, 0.749, 0.056, 0.247, 0.123],
            [0.890, 0.220, 0.747, 0.056, 0.248, 0.123],
        ],
        Country::DE => [
            [0.732, 0.249, 0.690, 0.064, 0.226, 0.101],
            [0.700, 0.235, 0.690, 0.063, 0.128, 0.058],
            [0.665, 0.231, 0.684, 0.062, 0.121, 0.048],
        ],
    };
    let mut out = Vec::new();
    for (method, r) in [P, S, T].into_iter().zip(rows) {
        for (k, layer) in [Layer::MstWeighted, Layer::MstUnweighted, Layer::Full].into_iter().enumerate() {
            out.push((method, layer, r[2 * k], r[2 * k + 1]));
        }
    }
    out
}

/// Mean and s.d. of the adjacent-window edge difference; published for DE only.
pub fn edge_difference_reference(country: Country) -> Vec<(Method, f64, f64)> {
    match country {
        Country::DE => vec![(P, 0.138, 0.089), (S, 0.131, 0.080), (T, 0.128, 0.077)],
        Country::US | Country::UK => Vec::new(),
    }
}

/// Edges present in every window's tree.
pub fn persistent_reference(country: Country) -> [(Method, usize); 3] {
    let [p, s, t] = match country {
        Country::US => [4, 7, 8],
        Country::UK => [3, 5, 4],
        Country::DE => [2, 2, 2],
    };
    [(P, p), (S, s), (T, t)]
}

/// One line of `reference_comparison.csv`; `computed` is empty when the
/// producing stage has not been run.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub quantity: &'static str,
    pub method: String,
    pub layer: String,
    pub statistic: &'static str,
    pub reference: f64,
    pub computed: Option<f64>,
}

impl Comparison {
    pub fn delta(&self) -> Option<f64> {
        self.computed.map(|c| c - self.reference)
    }

    fn cells(&self) -> [String; 7] {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.quantity.to_owned(),
            self.method.clone(),
            self.layer.clone(),
            self.statistic.to_owned(),
            self.reference.to_string(),
            cell(self.computed),
            cell(self.delta()),
        ]
    }
}

/// Computed values gathered from the output directory.
#[derive(Debug, Default)]
pub struct Computed {
    pub node_ks: Option<Vec<NodeKsRow>>,
    pub robustness: Option<RobustnessTable>,
    pub edge_difference: Option<BTreeMap<String, Summary>>,
    pub persistent: Option<BTreeMap<String, usize>>,
}

impl Computed {
    pub fn gather(store: &Store) -> Result<Self, CliError> {
        let mut out = Computed::default();
        if store.exists("gaussianity/node_ks_correlation.csv") {
            out.node_ks = Some(store.read_rows("gaussianity/node_ks_correlation.csv")?);
        }
        if store.exists("bootstrap/robustness.json") {
            let text = store.read_string("bootstrap/robustness.json")?;
            out.robustness = Some(serde_json::from_str(&text).map_err(CliError::input("bootstrap/robustness.json"))?);
        }
        if store.exists("stability/summary.csv") {
            let rows: Vec<(String, String, f64, f64, usize)> = store.read_rows("stability/summary.csv")?;
            let mut summaries = BTreeMap::new();
            let mut persistent = BTreeMap::new();
            for (label, metric, mean, sd, count) in rows {
                if metric == "edge_difference" {
                    persistent.insert(label.clone(), 0);
                    summaries.insert(label, Summary { mean, sd, count });
                }
            }
            let edges: Vec<(String, String, String)> = store.read_rows("stability/persistent_edges.csv")?;
            for (method, _, _) in edges {
                *persistent.entry(method).or_default() += 1;
            }
            out.edge_difference = Some(summaries);
            out.persistent = Some(persistent);
        }
        Ok(out)
    }
}

pub fn compare(country: Country, computed: &Computed) -> Vec<Comparison> {
    let mut out = Vec::new();
    for (layer, a, b, reference) in node_ks_reference(country) {
        let value = computed.node_ks.as_ref().and_then(|rows| {
            rows.iter()
                .find(|r| r.layer == layer && (r.method_pair == pair_label(a, b) || r.method_pair == pair_label(b, a)))
                .map(|r| r.spearman_rho)
        });
        out.push(Comparison {
            quantity: "node_ks_spearman_rho",
            method: pair_label(a, b),
            layer: layer.to_owned(),
            statistic: "rho",
            reference,
            computed: value,
        });
    }
    for (method, layer, mean, sd) in robustness_reference(country) {
        let row = computed.robustness.as_ref().and_then(|t| t.get(method, layer));
        for (statistic, reference, value) in [("mean", mean, row.map(|r| r.mean)), ("sd", sd, row.map(|r| r.sd))] {
            out.push(Comparison {
                quantity: "bootstrap_difference",
                method: method.to_string(),
                layer: layer.name().to_owned(),
                statistic,
                reference,
                computed: value,
            });
        }
    }
    for (method, mean, sd) in edge_difference_reference(country) {
        let s = computed.edge_difference.as_ref().and_then(|m| m.get(method.name()));
        for (statistic, reference, value) in [("mean", mean, s.map(|s| s.mean)), ("sd", sd, s.map(|s| s.sd))] {
            out.push(Comparison {
                quantity: "adjacent_edge_difference",
                method: method.to_string(),
                layer: "mst".into(),
                statistic,
                reference,
                computed: value,
            });
        }
    }
    for (method, reference) in persistent_reference(country) {
        let value = computed.persistent.as_ref().and_then(|m| m.get(method.name())).map(|&n| n as f64);
        out.push(Comparison {
            quantity: "persistent_edges",
            method: method.to_string(),
            layer: "mst".into(),
            statistic: "count",
            reference: reference as f64,
            computed: value,
        });
    }
    out
}

/// CSV cell as JSON: integers, then finite floats, then strings; `NaN` and
/// empty cells become null.
fn cell_value(s: &str) -> Value {
    if s.is_empty() {
        return Value::Null;
    }
    if let Ok(i) = s.parse::<i64>() {
        return json!(i);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => json!(v),
        Ok(_) => Value::Null,
        Err(_) => json!(s),
    }
}

fn csv_as_json(store: &Store, rel: &str) -> Result<Value, CliError> {
    let bytes = store.read(rel)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader.headers().map_err(CliError::input(rel))?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(CliError::input(rel))?;
        let obj: Map<String, Value> = header.iter().zip(record.iter()).map(|(h, v)| (h.to_owned(), cell_value(v))).collect();
        rows.push(Value::Object(obj));
    }
    Ok(Value::Array(rows))
}

fn quantile_summary(store: &Store) -> Result<Value, CliError> {
    let rows: Vec<(String, String, f64, f64)> = store.read_rows("gaussianity/quantile_edge_difference.csv")?;
    let mut by_pair: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (_, pair, original, normalised) in rows {
        let e = by_pair.entry(pair).or_default();
        e.0.push(original);
        e.1.push(normalised);
    }
    let mean = |xs: &[f64]| cell_value(&Summary::of(xs).mean.to_string());
    Ok(by_pair
        .into_iter()
        .map(|(pair, (o, q))| json!({ "method_pair": pair, "original_mean": mean(&o), "quantile_normalized_mean": mean(&q) }))
        .collect())
}

pub fn report(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let mut doc = Map::new();
    doc.insert("country".into(), config.country.map_or(Value::Null, |c| json!(c.name())));
    doc.insert("methods".into(), json!(config.methods.iter().map(|m| m.name()).collect::<Vec<_>>()));
    if store.exists(crate::store::WINDOWS) {
        doc.insert("windows".into(), json!(store.windows()?.len()));
    }
    for (key, rel) in TABLE_FILES {
        if store.exists(rel) {
            doc.insert(key.into(), csv_as_json(store, rel)?);
        }
    }
    if store.exists("gaussianity/quantile_edge_difference.csv") {
        doc.insert("quantile_edge_difference".into(), quantile_summary(store)?);
    }
    let computed = Computed::gather(store)?;
    if let Some(p) = &computed.persistent {
        doc.insert("persistent_edges".into(), json!(p));
    }
    let comparison = config.country.map(|c| compare(c, &computed));

    store.reset("report")?;
    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("summary serialises");
    store.write("report/summary.json", text + "\n")?;
    if let Some(rows) = comparison {
        store.write_table(
            "report/reference_comparison.csv",
            &["quantity", "method", "layer", "statistic", "reference", "computed", "delta"],
            rows.iter().map(Comparison::cells),
        )?;
    }
    Ok(())
}
