//! Correlation-network analysis of financial returns.
//!
//! The pipeline turns a table of adjusted close prices into windowed log
//! returns, estimates Pearson, Spearman and Kendall τ-b correlation matrices,
//! filters them into minimum spanning trees and then measures how those trees
//! behave: stability over time, sector centrality, tree topology, sensitivity
//! to non-Gaussian marginals, minimum-variance portfolios built on top of them
//! and robustness under a circular block bootstrap.
//!
//! Every analysis is a pure function over immutable inputs. Parallel code
//! paths (rayon) produce results that do not depend on the thread count.

pub mod bootstrap;
pub mod centrality;
pub mod correlation;
pub mod gaussianity;
pub mod ingest;
pub mod matrix;
pub mod mst;
pub mod portfolio;
pub mod stability;
pub mod stats;
pub mod synthetic;

pub use bootstrap::{bootstrap_robustness, circular_bootstrap, robustness_table, BootstrapSpec, RobustnessRow, RobustnessTable};
pub use centrality::{CentralityKind, CentralityVector, SectorCentrality, TopologySummary};
pub use correlation::{CorrelationMatrix, DistanceMatrix, Method};
pub use ingest::{PanelView, PriceTable, ReturnPanel, Sector, SectorMap, WindowSpec};
pub use matrix::LabeledMatrix;
pub use mst::{FilteredCorrelation, Tree, TreeEdge};
pub use portfolio::{CovarianceMatrix, PortfolioWeights, ShrinkageTarget, ShrunkCovariance};
pub use stability::{StabilityReport, TreeSequence};
