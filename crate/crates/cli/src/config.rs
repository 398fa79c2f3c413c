//! Run configuration: one JSON document, optionally overridden by flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rankmst::bootstrap::DEFAULT_PAIR_BUDGET;
use rankmst::gaussianity::DEFAULT_QUANTILES;
use rankmst::portfolio::DEFAULT_ALPHA;
use rankmst::{BootstrapSpec, Method, ShrinkageTarget};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Market whose published figures the report compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Country {
    US,
    UK,
    DE,
}

impl Country {
    pub fn name(self) -> &'static str {
        match self {
            Country::US => "US",
            Country::UK => "UK",
            Country::DE => "DE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    pub stability: bool,
    pub centrality: bool,
    pub gaussianity: bool,
    /// Repeat the MST comparison on quantile-normalised windows.
    pub quantile_normalized: bool,
    pub portfolio: bool,
    pub bootstrap: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Self {
            stability: true,
            centrality: true,
            gaussianity: true,
            quantile_normalized: false,
            portfolio: true,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub output_len: usize,
    pub source_len: usize,
    pub block_len: usize,
    /// Most replicate pairs compared per method; all pairs when they fit.
    pub pair_budget: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let spec = BootstrapSpec::default();
        Self {
            replicates: spec.replicates,
            output_len: spec.output_len,
            source_len: spec.source_len,
            block_len: spec.block_len,
            pair_budget: DEFAULT_PAIR_BUDGET,
        }
    }
}

impl BootstrapSettings {
    pub fn spec(&self, seed: u64) -> BootstrapSpec {
        BootstrapSpec {
            replicates: self.replicates,
            output_len: self.output_len,
            source_len: self.source_len,
            block_len: self.block_len,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    pub window: usize,
    pub step: usize,
    /// Largest tolerated share of missing prices per ticker.
    pub max_missing_frac: f64,
    pub analyses: Analyses,
    pub quantiles: usize,
    pub alpha: f64,
    pub shrinkage_target: ShrinkageTarget,
    /// Lift indefinite shrunk covariances to the target's eigenvalue floor.
    pub spectral_floor: bool,
    pub bootstrap: BootstrapSettings,
    pub seed: u64,
    pub threads: Option<usize>,
    pub country: Option<Country>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: None,
            sectors: None,
            out: PathBuf::from("out"),
            methods: Method::ALL.to_vec(),
            window: 504,
            step: 30,
            max_missing_frac: 0.1,
            analyses: Analyses::default(),
            quantiles: DEFAULT_QUANTILES,
            alpha: DEFAULT_ALPHA,
            shrinkage_target: ShrinkageTarget::default(),
            spectral_floor: true,
            bootstrap: BootstrapSettings::default(),
            seed: 0,
            threads: None,
            country: None,
        }
    }
}

/// One configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl RunConfig {
    /// Read a config file. A manifest written by an earlier run is accepted
    /// too; its `config` echo is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut doc: serde_json::Value =
            serde_json::from_str(&text).map_err(CliError::input(format!("parsing {}", path.display())))?;
        if doc.get("files").is_some() {
            if let Some(config) = doc.get_mut("config") {
                doc = config.take();
            }
        }
        serde_json::from_value(doc).map_err(CliError::input(format!("reading config {}", path.display())))
    }

    pub fn windows_spec(&self) -> rankmst::WindowSpec {
        rankmst::WindowSpec::new(self.window, self.step)
    }

    /// Every violation, in field order. Never touches the file system
    /// beyond checking that input files exist.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |field, message: String| out.push(Diagnostic { field, message });
        match &self.prices {
            None => push("prices", "no price file given".into()),
            Some(p) if !p.is_file() => push("prices", format!("file not found: {}", p.display())),
            Some(_) => {}
        }
        match &self.sectors {
            Some(p) if !p.is_file() => push("sectors", format!("file not found: {}", p.display())),
            None if self.analyses.centrality => {
                push("sectors", "centrality needs a sector file; give one or disable centrality".into())
            }
            _ => {}
        }
        if self.methods.is_empty() {
            push("methods", "at least one method is required".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            push("methods", "methods are listed more than once".into());
        }
        if self.window < 2 {
            push("window", format!("window length {} is below 2", self.window));
        }
        if self.step < 1 {
            push("step", "step must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_missing_frac) {
            push("max_missing_frac", format!("{} is outside [0, 1]", self.max_missing_frac));
        }
        if self.quantiles < 2 {
            push("quantiles", format!("{} quantiles is below 2", self.quantiles));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            push("alpha", format!("{} is outside (0, 1]", self.alpha));
        }
        let b = &self.bootstrap;
        if b.replicates < 2 {
            push("bootstrap.replicates", format!("{} replicates is below 2", b.replicates));
        }
        if b.block_len < 1 {
            push("bootstrap.block_len", "block length must be at least 1".into());
        }
        if b.output_len < 1 || b.output_len > b.source_len {
            push("bootstrap.output_len", format!("must be in 1..={}, got {}", b.source_len, b.output_len));
        }
        if b.pair_budget < 1 {
            push("bootstrap.pair_budget", "pair budget must be at least 1".into());
        }
        if self.threads == Some(0) {
            push("threads", "thread count must be at least 1".into());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let prices = dir.path().join("prices.csv");
        let sectors = dir.path().join("sectors.csv");
        fs::write(&prices, "date,A\n2020-01-01,1\n").unwrap();
        fs::write(&sectors, "ticker,sector\nA,Energy\n").unwrap();
        let config = RunConfig { prices: Some(prices), sectors: Some(sectors), ..Default::default() };
        (dir, config)
    }

    #[test]
    fn valid_config_has_no_diagnostics() {
        let (_dir, config) = valid();
        assert_eq!(config.validate(), vec![]);
    }

    #[test]
    fn zero_alpha_is_one_diagnostic() {
        let (_dir, config) = valid();
        let d = RunConfig { alpha: 0.0, ..config }.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "alpha");
    }

    #[test]
    fn empty_methods_is_one_diagnostic() {
        let (_dir, config) = valid();
        let d = RunConfig { methods: vec![], ..config }.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "methods");
    }

    #[test]
    fn all_problems_are_listed() {
        let config = RunConfig {
            prices: Some("/nonexistent/prices.csv".into()),
            methods: vec![],
            alpha: 1.5,
            threads: Some(0),
            ..Default::default()
        };
        let fields: Vec<&str> = config.validate().iter().map(|d| d.field).collect();
        assert_eq!(fields, ["prices", "sectors", "methods", "alpha", "threads"]);
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let (_dir, config) = valid();
        let text = serde_json::to_string_pretty(&config).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), config);
        let partial: RunConfig =
            serde_json::from_str(r#"{"methods": ["pearson", "kendall"], "analyses": {"bootstrap": false}}"#).unwrap();
        assert_eq!(partial.methods, [Method::Pearson, Method::KendallTauB]);
        assert!(!partial.analyses.bootstrap && partial.analyses.stability);
        assert_eq!(partial.window, 504);
        assert!(serde_json::from_str::<RunConfig>(r#"{"windw": 5}"#).is_err());
    }

    #[test]
    fn manifest_documents_load_as_config() {
        let (dir, config) = valid();
        let path = dir.path().join("manifest.json");
        let doc = serde_json::json!({ "files": [], "config": config });
        fs::write(&path, doc.to_string()).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), config);
    }
}
