//! File formats and ingestion: answer logs, canonical datasets, graph
//! fixtures, model files, beliefs, cohort results and key-value configs.

mod artifacts;
mod config_file;
mod graph_file;
mod logs;
mod model_file;

pub use artifacts::{load_belief, load_cohort, save_belief, save_cohort};
pub use config_file::{load_config, parse_config};
pub use graph_file::{load_graph, parse_graph};
pub use logs::{
    default_decoder, ingest_logs, read_dataset, write_dataset, ColumnMapping, IngestReport,
};
pub use model_file::{load_model, save_model, FitMetadata, ModelFile, FORMAT_VERSION};
