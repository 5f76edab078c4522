//! Benchmark harness, data loading, and runnable demos for `ranvar`.

pub mod bench;
pub mod data;
pub mod demo;
pub mod error;

pub use bench::{bench_nuts, BenchConfig, BenchmarkReport, Mode};
pub use data::{load_csv, synth_data, synth_data_with, CsvOptions, Dataset, LabelRule};
pub use demo::{run_demo, DEMOS};
pub use error::CliError;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/benchmark.md")]
mod book_benchmark {}
