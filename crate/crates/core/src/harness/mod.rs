//! Evaluation harness: phantom datasets, reproducibility runs, benchmarks
//! with CSV/JSON reports, and checkerboard overlays.

mod bench;
mod dataset;
mod overlay;
mod repro;
mod report;

pub(crate) use dataset::mix;

pub use bench::{run_benchmark, BenchOptions, Manifest, PairEntry};
pub use dataset::{
    gland_center, render_panorama, render_tracking, truth, write_dataset, write_suite, DatasetFiles, Panorama,
    SuiteSpec, TrackingSample, PANORAMA_ROLLS_DEG,
};
pub use overlay::checkerboard;
pub use repro::{perturb, restart_seeds, run_reproducibility, run_reproducibility_with_seeds, Noise, ReproOutcome, ReproRun};
pub use report::{rows_from_csv, rows_to_csv, Aggregates, ExperimentReport, PairDetail, PairRow, CSV_HEADER};
