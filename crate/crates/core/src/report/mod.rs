//! Output artifacts: scatter data, qualitative panels and image grids.

mod image;
mod panels;
mod run;
mod scatter;

pub use image::{compose_grid, write_pgm, write_png, GrayImage, GridRow};
pub use panels::{generation_panel, iteration_columns, membership_panel, PanelKind, PanelSidecar, PanelSpec};
pub use scatter::{emit_scatter, parse_scatter_csv, scatter_csv, ObjectnessPoint, RatePoint, ScatterJson, ScatterRow};
pub use run::{rank_by_delta, write_run_report, ReportOptions, ReportSummary};
