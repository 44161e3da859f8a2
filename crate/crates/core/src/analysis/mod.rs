//! Projections of layer spaces and assembly of result tables and figures.

mod pca;
mod report;
pub mod svg;
mod tsne;

pub use pca::{pca, Pca};
pub use report::{assemble_reports, summary_table, AssembledReport, ReportGrouping, SummaryTable};
pub use tsne::{joint_probabilities, tsne, tsne_objective, Projection2D, TsneConfig};
