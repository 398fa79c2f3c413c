//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rankmst::Method;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "rankmst", version, about = "Correlation-network MST analysis of equity returns")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Clean prices and write log returns.
    Clean,
    /// Windowed correlation matrices.
    Correlate,
    /// Minimum spanning trees of the stored correlation matrices.
    Mst,
    /// Edge differences, survival ratios and persistent edges.
    Stability,
    /// Degree and betweenness centrality and tree topology.
    Centrality,
    /// KS distances, node differences and the quantile-normalised rerun.
    Gaussianity,
    /// Minimum-variance portfolios on full and tree-filtered covariances.
    Portfolio,
    /// Circular-bootstrap robustness table.
    Bootstrap,
    /// Collect summaries and compare with published reference values.
    Report,
    /// Every enabled stage in order.
    Run,
    /// Check the configuration and list every problem found.
    Validate,
    /// Write a seeded synthetic market (prices and sectors).
    Synth(SynthArgs),
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Clean => "clean",
            Command::Correlate => "correlate",
            Command::Mst => "mst",
            Command::Stability => "stability",
            Command::Centrality => "centrality",
            Command::Gaussianity => "gaussianity",
            Command::Portfolio => "portfolio",
            Command::Bootstrap => "bootstrap",
            Command::Report => "report",
            Command::Run => "run",
            Command::Validate => "validate",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub assets: usize,
    #[arg(long, default_value_t = 1008)]
    pub days: usize,
    /// Exact number of outlier days, spread over equal strata.
    #[arg(long)]
    pub outlier_days: Option<usize>,
    /// Gaussian instead of Student-t(3) marginals.
    #[arg(long)]
    pub gaussian: bool,
}

/// Flags that override the JSON configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration (a manifest from an earlier run also works).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub prices: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub sectors: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated: pearson, spearman, kendall.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub step: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Enable the quantile-normalised rerun.
    #[arg(long, global = true)]
    pub quantile_normalize: bool,
    #[arg(long, global = true)]
    pub bootstrap_replicates: Option<usize>,
    #[arg(long, global = true)]
    pub block_length: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(p) = &self.prices {
            config.prices = Some(p.clone());
        }
        if let Some(p) = &self.sectors {
            config.sectors = Some(p.clone());
        }
        if let Some(p) = &self.out {
            config.out = p.clone();
        }
        if let Some(m) = &self.methods {
            config.methods = m.clone();
        }
        if let Some(v) = self.window {
            config.window = v;
        }
        if let Some(v) = self.step {
            config.step = v;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.threads {
            config.threads = Some(v);
        }
        if self.quantile_normalize {
            config.analyses.quantile_normalized = true;
        }
        if let Some(v) = self.bootstrap_replicates {
            config.bootstrap.replicates = v;
        }
        if let Some(v) = self.block_length {
            config.bootstrap.block_len = v;
        }
    }

    /// The config file (or defaults) with these flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, crate::error::CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut config);
        Ok(config)
    }
}
