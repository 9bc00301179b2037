//! Batch harness around the `cavity-wv` library: JSON run configs, per-target
//! measurement, reconstruction, and CSV/JSON artifacts.

pub mod config;
pub mod output;
pub mod run;
