//! Configuration-driven experiments: simulate pools, form coalitions with
//! every selected algorithm over a parameter grid, and write long-format
//! CSV/JSON reports.

mod config;
mod pipeline;
mod report;

pub use config::{
    AlgorithmsSection, ClimateSection, FormationSection, OutputSection, PoolSection, RandomSection, RequirementsSection,
    RunConfig, StationCsv,
};
pub use pipeline::{
    formation_options, prepare, prepare_realization, raw_series, realization_seed, run, run_realization,
    simulate_realization, Prepared, RealizationInfo, Record, Simulated, Status, SweepOutput,
};
pub use report::{
    aggregate, coalition_rows, read_summary, summary_rows, write_formation, write_report, write_simulation,
    AggregateRow, CoalitionRow, Extras, SummaryRow,
};
