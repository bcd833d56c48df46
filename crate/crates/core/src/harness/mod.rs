//! Experiment configuration, dispatch and result output.

pub mod config;
pub mod output;
pub mod run;
pub mod svg;

pub use config::{parse_config, Command, ExperimentConfig, RawConfig};
pub use output::{read_csv, write_csv, write_csv_to, ResultRecord};
pub use run::{run, run_experiment, RunOutput};
pub use svg::{emit_svg, render_svg, Series};
