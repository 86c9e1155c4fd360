//! File formats: portfolio input, draw files, reports and plot data.

pub mod draws;
pub mod portfolio;
pub mod report;

pub use draws::{load_draws, read_draws, save_draws, write_draws};
pub use portfolio::{load_portfolio, read_portfolio, save_portfolio, write_portfolio};
pub use report::{emit_plot_data, PlotKind, ReportBundle};
