//! Pipeline stages. Each one reads upstream artifacts from the output
//! directory (the configured input files for `clean`) and rewrites its own
//! subdirectory from scratch.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use chrono::NaiveDate;
use rankmst::bootstrap::bootstrap_robustness;
use rankmst::centrality::{tree_rows, write_rows as write_centrality_rows};
use rankmst::correlation::{coefficient_scatter, largest_eigenvalue, to_distance};
use rankmst::gaussianity::{ks_records, node_ks_correlation, quantile_normalize, write_ks_csv, write_node_ks_csv, NodeKsRow};
use rankmst::ingest::{clean_prices, load_prices, load_sectors, log_returns, windows as window_views};
use rankmst::mst::{kruskal_mst, mst_filter};
use rankmst::portfolio::{
    covariance_from_correlation, min_variance_weights, sample_variances, sharpe_out_of_sample, shrink, turnover,
    write_metrics_csv, write_weights_csv, MetricRow, PortfolioError, PortfolioWeights,
};
use rankmst::stability::{edge_difference, node_difference, stability_report, write_tidy_csv, TidyRow, TreeSequence};
use rankmst::stats::Summary;
use rankmst::synthetic::{generate, prices_from_returns, MarketSpec};
use rankmst::{LabeledMatrix, Method, RobustnessTable, Tree};
use rayon::prelude::*;

use crate::args::SynthArgs;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::store::{correlation_path, tree_path, Store, WindowRow, RETURNS, SECTORS, WINDOWS};

/// Every directory a stage owns, in pipeline order.
pub const STAGE_DIRS: [&str; 9] =
    ["clean", "correlation", "mst", "stability", "centrality", "gaussianity", "portfolio", "bootstrap", "report"];

/// Unordered method pairs in configuration order.
pub fn method_pairs(methods: &[Method]) -> Vec<(Method, Method)> {
    let mut out = Vec::new();
    for (k, &a) in methods.iter().enumerate() {
        for &b in &methods[k + 1..] {
            out.push((a, b));
        }
    }
    out
}

pub fn pair_label(a: Method, b: Method) -> String {
    format!("{a}-{b}")
}

fn summary_cells(label: &str, metric: &str, s: Summary) -> Vec<String> {
    vec![label.to_owned(), metric.to_owned(), s.mean.to_string(), s.sd.to_string(), s.count.to_string()]
}

const SUMMARY_HEADER: [&str; 5] = ["method_pair", "metric", "mean", "sd", "count"];

pub fn clean(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let path = config.prices.as_ref().ok_or_else(|| CliError::Input("no price file configured".into()))?;
    let file = File::open(path).map_err(CliError::io(path))?;
    let table = load_prices(BufReader::new(file)).map_err(CliError::input(path.display()))?;
    let cleaned = clean_prices(&table, config.max_missing_frac).map_err(CliError::input("cleaning prices"))?;
    let returns = log_returns(&cleaned).map_err(CliError::input("computing log returns"))?;
    let sectors = match &config.sectors {
        Some(path) => {
            let file = File::open(path).map_err(CliError::io(path))?;
            let map = load_sectors(BufReader::new(file)).map_err(CliError::input(path.display()))?;
            Some(map.restrict_to(returns.tickers()).map_err(CliError::input(path.display()))?)
        }
        None => None,
    };

    store.reset("clean")?;
    store.write_with(RETURNS, |buf| returns.write_csv(buf))?;
    let dropped = table.tickers().iter().filter(|t| !returns.tickers().contains(t)).map(|t| [t]);
    store.write_table("clean/dropped_tickers.csv", &["ticker"], dropped)?;
    if let Some(map) = sectors {
        store.write_with(SECTORS, |buf| map.write_csv(buf))?;
    }
    log::info!(
        "kept {} of {} tickers over {} return days",
        returns.n_assets(),
        table.n_assets(),
        returns.n_days()
    );
    Ok(())
}

pub fn correlate(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let panel = store.returns()?;
    let views = window_views(&panel, config.windows_spec()).map_err(CliError::input("windowing returns"))?;
    let rows: Vec<WindowRow> = views
        .iter()
        .map(|(first, v)| WindowRow { window_start: v.dates[0], first_row: *first, rows: v.n_days() })
        .collect();

    store.reset("correlation")?;
    store.write_rows(WINDOWS, &rows)?;
    let mut eigen = Vec::new();
    let mut whole = Vec::new();
    for &method in &config.methods {
        let mats = views
            .par_iter()
            .map(|(_, v)| method.compute(v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::analysis(format!("{method} correlation")))?;
        for (row, c) in rows.iter().zip(&mats) {
            let json = c.to_json().map_err(CliError::analysis("serialising correlation"))?;
            store.write(&correlation_path(method, row.window_start), json)?;
            eigen.push([row.window_start.to_string(), method.to_string(), largest_eigenvalue(c).to_string()]);
        }
        let c = method.compute(&panel.view()).map_err(CliError::analysis(format!("{method} correlation")))?;
        store.write_with(&format!("correlation/{method}/full_sample.csv"), |buf| c.write_csv(buf))?;
        whole.push(c);
    }
    store.write_table("correlation/largest_eigenvalue.csv", &["window_start", "method", "largest_eigenvalue"], eigen)?;

    for (x, y) in method_pairs(&config.methods) {
        let cx = &whole[config.methods.iter().position(|&m| m == x).expect("listed")];
        let cy = &whole[config.methods.iter().position(|&m| m == y).expect("listed")];
        let points = coefficient_scatter(cx, cy).map_err(CliError::analysis("coefficient scatter"))?;
        let tickers = cx.tickers();
        let p = tickers.len();
        let pairs = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j)));
        let rows = pairs.zip(points).map(|((i, j), (a, b))| {
            [tickers[i].clone(), tickers[j].clone(), a.to_string(), b.to_string()]
        });
        let header = ["source", "target", x.name(), y.name()];
        store.write_table(&format!("correlation/scatter_{x}_{y}.csv"), &header, rows)?;
    }
    Ok(())
}

pub fn mst(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let windows = store.windows()?;
    store.reset("mst")?;
    for &method in &config.methods {
        let trees = windows
            .par_iter()
            .map(|w| {
                let c = store.correlation(method, w.window_start)?;
                let d = to_distance(&c).map_err(CliError::analysis("distance matrix"))?;
                kruskal_mst(&d, &c).map_err(CliError::analysis(format!("{method} tree for {}", w.window_start)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (w, tree) in windows.iter().zip(&trees) {
            let json = tree.to_json().map_err(CliError::analysis("serialising tree"))?;
            store.write(&tree_path(method, w.window_start, "json"), json)?;
            store.write_with(&tree_path(method, w.window_start, "csv"), |buf| tree.write_csv(buf))?;
        }
    }
    Ok(())
}

fn load_trees(store: &Store, method: Method, windows: &[WindowRow]) -> Result<Vec<Tree>, CliError> {
    windows.par_iter().map(|w| store.tree(method, w.window_start)).collect()
}

pub fn stability(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let windows = store.windows()?;
    let starts: Vec<NaiveDate> = windows.iter().map(|w| w.window_start).collect();
    let forest = config
        .methods
        .iter()
        .map(|&m| Ok((m, load_trees(store, m, &windows)?)))
        .collect::<Result<BTreeMap<_, _>, CliError>>()?;

    let mut tidy = Vec::new();
    let mut persistent = Vec::new();
    let mut counts = Vec::new();
    let mut summary = Vec::new();
    for &method in &config.methods {
        let seq = TreeSequence::new(forest[&method].clone(), starts.clone()).map_err(CliError::analysis("tree sequence"))?;
        let report = stability_report(&seq).map_err(CliError::analysis(format!("{method} stability")))?;
        tidy.extend(report.tidy_rows(method.name()));
        summary.push(summary_cells(method.name(), "edge_difference", report.adjacent_summary));
        persistent.extend(report.persistent.iter().map(|(s, t)| [method.to_string(), s.clone(), t.clone()]));
        counts.extend(
            report
                .edge_counts
                .iter()
                .map(|e| [method.to_string(), e.source.clone(), e.target.clone(), e.count.to_string()]),
        );
    }

    let mut cross = Vec::new();
    for (a, b) in method_pairs(&config.methods) {
        let label = pair_label(a, b);
        let mut values = Vec::with_capacity(windows.len());
        for (k, start) in starts.iter().enumerate() {
            let v = edge_difference(&forest[&a][k], &forest[&b][k]).map_err(CliError::analysis(&label))?;
            values.push(v);
            cross.push(TidyRow {
                window_start: *start,
                method_pair: label.clone(),
                metric: "edge_difference".into(),
                value: v,
            });
        }
        summary.push(summary_cells(&label, "cross_method_edge_difference", Summary::of(&values)));
    }

    store.reset("stability")?;
    store.write_with("stability/stability.csv", |buf| write_tidy_csv(&tidy, buf))?;
    store.write_with("stability/cross_method.csv", |buf| write_tidy_csv(&cross, buf))?;
    store.write_table("stability/persistent_edges.csv", &["method", "source", "target"], persistent)?;
    store.write_table("stability/edge_counts.csv", &["method", "source", "target", "count"], counts)?;
    store.write_table("stability/summary.csv", &SUMMARY_HEADER, summary)?;
    Ok(())
}

pub fn centrality(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let sectors = store.sectors()?;
    let windows = store.windows()?;
    let mut rows = Vec::new();
    for &method in &config.methods {
        let per_window = windows
            .par_iter()
            .map(|w| {
                let tree = store.tree(method, w.window_start)?;
                tree_rows(w.window_start, method.name(), &tree, &sectors)
                    .map_err(CliError::analysis(format!("{method} centrality for {}", w.window_start)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.extend(per_window.into_iter().flatten());
    }
    store.reset("centrality")?;
    store.write_with("centrality/centrality.csv", |buf| write_centrality_rows(&rows, buf))
}

/// Node differences of one method pair in one window: full matrices, then
/// tree-filtered matrices.
fn window_node_differences(
    store: &Store,
    a: Method,
    b: Method,
    start: NaiveDate,
) -> Result<(Vec<String>, [Vec<f64>; 2]), CliError> {
    let (ca, cb) = (store.correlation(a, start)?, store.correlation(b, start)?);
    let (ta, tb) = (store.tree(a, start)?, store.tree(b, start)?);
    let context = format!("{} node difference for {start}", pair_label(a, b));
    let full = node_difference(&ca, &cb).map_err(CliError::analysis(&context))?;
    let fa = mst_filter(&ta, &ca).map_err(CliError::analysis(&context))?;
    let fb = mst_filter(&tb, &cb).map_err(CliError::analysis(&context))?;
    let filtered = node_difference(&fa, &fb).map_err(CliError::analysis(&context))?;
    Ok((ca.tickers().to_vec(), [full, filtered]))
}

pub fn gaussianity(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let panel = store.returns()?;
    let windows = store.windows()?;
    let country = config.country.map_or("unspecified", |c| c.name());
    let ks = windows
        .par_iter()
        .map(|w| ks_records(&panel.slice(w.first_row, w.rows)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::analysis("KS distances"))?
        .concat();

    const LAYERS: [&str; 2] = ["full", "mst"];
    let mut node_rows = Vec::new();
    let mut correlations = Vec::new();
    for (a, b) in method_pairs(&config.methods) {
        let label = pair_label(a, b);
        let per_window = windows
            .par_iter()
            .map(|w| window_node_differences(store, a, b, w.window_start))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, layer) in LAYERS.iter().enumerate() {
            let mut pooled = BTreeMap::new();
            for (w, (tickers, diffs)) in windows.iter().zip(&per_window) {
                for (t, v) in tickers.iter().zip(&diffs[k]) {
                    pooled.insert((w.window_start, t.clone()), *v);
                    node_rows.push([w.window_start.to_string(), layer.to_string(), label.clone(), t.clone(), v.to_string()]);
                }
            }
            let rho = node_ks_correlation(&pooled, &ks)
                .map_err(CliError::analysis(format!("{label} {layer} node/KS correlation")))?;
            correlations.push(NodeKsRow {
                country: country.to_owned(),
                layer: layer.to_string(),
                method_pair: label.clone(),
                spearman_rho: rho,
            });
        }
    }

    let quantile_rows = if config.analyses.quantile_normalized { Some(quantile_rerun(config, store, &panel, &windows)?) } else { None };

    store.reset("gaussianity")?;
    store.write_with("gaussianity/ks.csv", |buf| write_ks_csv(&ks, buf))?;
    store.write_table(
        "gaussianity/node_difference.csv",
        &["window_start", "layer", "method_pair", "ticker", "node_difference"],
        node_rows,
    )?;
    store.write_with("gaussianity/node_ks_correlation.csv", |buf| write_node_ks_csv(&correlations, buf))?;
    if let Some(rows) = quantile_rows {
        store.write_table(
            "gaussianity/quantile_edge_difference.csv",
            &["window_start", "method_pair", "original", "quantile_normalized"],
            rows,
        )?;
    }
    Ok(())
}

/// Cross-method edge differences of trees built on quantile-normalised
/// windows, next to the same differences for the stored trees.
fn quantile_rerun(
    config: &RunConfig,
    store: &Store,
    panel: &rankmst::ReturnPanel,
    windows: &[WindowRow],
) -> Result<Vec<[String; 4]>, CliError> {
    let pairs = method_pairs(&config.methods);
    let per_window = windows
        .par_iter()
        .map(|w| {
            let context = format!("quantile-normalised rerun for {}", w.window_start);
            let normalised = quantile_normalize(&panel.slice(w.first_row, w.rows), config.quantiles)
                .map_err(CliError::analysis(&context))?;
            let mut rows = Vec::with_capacity(pairs.len());
            let mut fresh = BTreeMap::new();
            for &m in &config.methods {
                let c = m.compute(&normalised.view()).map_err(CliError::analysis(&context))?;
                let d = to_distance(&c).map_err(CliError::analysis(&context))?;
                fresh.insert(m, kruskal_mst(&d, &c).map_err(CliError::analysis(&context))?);
            }
            for &(a, b) in &pairs {
                let original = edge_difference(&store.tree(a, w.window_start)?, &store.tree(b, w.window_start)?)
                    .map_err(CliError::analysis(&context))?;
                let normalised = edge_difference(&fresh[&a], &fresh[&b]).map_err(CliError::analysis(&context))?;
                rows.push([w.window_start.to_string(), pair_label(a, b), original.to_string(), normalised.to_string()]);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(per_window.concat())
}

struct Solved {
    weights: PortfolioWeights,
    sharpe: Option<f64>,
    extra_loading: f64,
}

fn solve_window(
    config: &RunConfig,
    store: &Store,
    panel: &rankmst::ReturnPanel,
    method: Method,
    filtered: bool,
    w: &WindowRow,
) -> Result<Solved, CliError> {
    let context = format!("{method} portfolio for {}", w.window_start);
    let view = panel.slice(w.first_row, w.rows);
    let variances = sample_variances(&view);
    let c = store.correlation(method, w.window_start)?;
    let cov = if filtered {
        let tree = store.tree(method, w.window_start)?;
        covariance_from_correlation(&mst_filter(&tree, &c).map_err(CliError::analysis(&context))?, &variances)
    } else {
        covariance_from_correlation(&c, &variances)
    }
    .map_err(CliError::analysis(&context))?;
    let mut sigma = shrink(&cov, config.alpha, config.shrinkage_target).map_err(CliError::analysis(&context))?;
    if config.spectral_floor {
        sigma = sigma.with_spectral_floor();
    }
    let weights = min_variance_weights(&sigma).map_err(CliError::analysis(&context))?;

    // out of sample: the rows after the window, at most one window long
    let next = w.first_row + w.rows;
    let len = w.rows.min(panel.n_days().saturating_sub(next));
    let sharpe = if len >= 2 {
        match sharpe_out_of_sample(&weights, &panel.slice(next, len)) {
            Ok(v) => Some(v),
            Err(PortfolioError::ZeroSd) => None,
            Err(e) => return Err(CliError::Analysis(format!("{context}: {e}"))),
        }
    } else {
        None
    };
    Ok(Solved { weights, sharpe, extra_loading: sigma.extra_loading() })
}

pub fn portfolio(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let panel = store.returns()?;
    let windows = store.windows()?;
    let mut weights = Vec::new();
    let mut metrics = Vec::new();
    let mut summary = Vec::new();
    for &method in &config.methods {
        for filtered in [false, true] {
            let label = format!("{}_{method}", if filtered { "mst" } else { "full" });
            let solved = windows
                .par_iter()
                .map(|w| solve_window(config, store, &panel, method, filtered, w))
                .collect::<Result<Vec<_>, _>>()?;
            let mut turnovers = Vec::new();
            for (k, (w, s)) in windows.iter().zip(&solved).enumerate() {
                let t = match k {
                    0 => None,
                    _ => Some(turnover(&s.weights, &solved[k - 1].weights).map_err(CliError::analysis(&label))?),
                };
                turnovers.extend(t);
                metrics.push(MetricRow { window_start: w.window_start, method: label.clone(), sharpe: s.sharpe, turnover: t });
            }
            let sharpes: Vec<f64> = solved.iter().filter_map(|s| s.sharpe).collect();
            let floored = solved.iter().filter(|s| s.extra_loading > 0.0).count();
            let mean = |xs: &[f64]| Summary::of(xs).mean.to_string();
            summary.push([
                label.clone(),
                windows.len().to_string(),
                mean(&sharpes),
                mean(&turnovers),
                floored.to_string(),
            ]);
            weights.extend(windows.iter().zip(solved).map(|(w, s)| (w.window_start, label.clone(), s.weights)));
        }
    }
    store.reset("portfolio")?;
    store.write_with("portfolio/weights.csv", |buf| write_weights_csv(&weights, buf))?;
    store.write_with("portfolio/metrics.csv", |buf| write_metrics_csv(&metrics, buf))?;
    store.write_table(
        "portfolio/summary.csv",
        &["method", "windows", "mean_sharpe", "mean_turnover", "floored_windows"],
        summary,
    )
}

pub fn bootstrap(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let panel = store.returns()?;
    let settings = &config.bootstrap;
    if panel.n_days() < settings.source_len {
        return Err(CliError::Input(format!(
            "bootstrap source needs {} return days, the panel has {}",
            settings.source_len,
            panel.n_days()
        )));
    }
    let source = panel.slice(0, settings.source_len);
    let spec = settings.spec(config.seed);
    let mut table = RobustnessTable::default();
    for &method in &config.methods {
        let rows = bootstrap_robustness(&source, &spec, method, settings.pair_budget)
            .map_err(CliError::analysis(format!("{method} bootstrap")))?;
        table.extend(rows);
    }
    store.reset("bootstrap")?;
    store.write_with("bootstrap/robustness.csv", |buf| table.write_csv(buf))?;
    let json = serde_json::to_string_pretty(&table).expect("table serialises");
    store.write("bootstrap/robustness.json", json + "\n")
}

/// Every enabled stage, in order.
pub fn run(config: &RunConfig, store: &Store) -> Result<(), CliError> {
    for dir in STAGE_DIRS {
        store.reset(dir)?;
    }
    let a = config.analyses;
    clean(config, store)?;
    correlate(config, store)?;
    mst(config, store)?;
    if a.stability {
        stability(config, store)?;
    }
    if a.centrality {
        centrality(config, store)?;
    }
    if a.gaussianity || a.quantile_normalized {
        gaussianity(config, store)?;
    }
    if a.portfolio {
        portfolio(config, store)?;
    }
    if a.bootstrap {
        bootstrap(config, store)?;
    }
    crate::report::report(config, store)
}

/// Synthetic prices, sectors and outlier dates for trying the pipeline.
pub fn synth(args: &SynthArgs, config: &RunConfig, store: &Store) -> Result<(), CliError> {
    let spec = MarketSpec {
        n_assets: args.assets,
        n_days: args.days,
        dof: if args.gaussian { None } else { Some(3.0) },
        outlier_count: args.outlier_days,
        seed: config.seed,
        ..MarketSpec::default()
    };
    if spec.n_assets < 2 || spec.n_days < 2 {
        return Err(CliError::Input("synthetic market needs at least 2 assets and 2 days".into()));
    }
    let market = generate(&spec).map_err(CliError::analysis("synthetic market"))?;
    let prices = prices_from_returns(&market.returns).map_err(CliError::analysis("synthetic prices"))?;
    store.write_with("prices.csv", |buf| prices.write_csv(buf))?;
    store.write_with("sectors.csv", |buf| market.sectors.write_csv(buf))?;
    let dates = market.outlier_days.iter().map(|&t| [market.returns.dates()[t].to_string()]);
    store.write_table("outlier_days.csv", &["date"], dates)
}
