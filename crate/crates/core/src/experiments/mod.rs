//! Dataset construction and the three studies: latent correlation, bias
//! steering and the ranked-sublist protocol.

pub mod bias;
pub mod correlation;
pub mod plot;
pub mod prepare;
pub mod sublist;

pub use bias::{run_bias_study, BiasLevel, BiasReport, BiasStudyConfig};
pub use correlation::{
    run_correlation_study, CorrelationOutput, CorrelationReport, CorrelationStudyConfig, TrainedInner,
};
pub use prepare::{prepare_datasets, DatasetSpec, PrepareStats, PreparedData};
pub use sublist::{
    baseline_rank, first_discovery_cycle, partition, random_expectation, rank_by_scores, run_sublist_experiment,
    BaselineConfig, SublistExperimentSpec, SublistReport,
};
