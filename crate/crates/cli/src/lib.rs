//! Command-line driver: configuration, artifact formats and the pipeline
//! stages behind the `alrom` binary.

pub mod config;
pub mod csv_out;
pub mod error;
pub mod matrix_file;
pub mod persist;
pub mod stages;
