//! File formats, dataset tooling and command orchestration around the
//! sensor-cloning core.

pub mod args;
pub mod bytes;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod pcdm_file;
pub mod ply;
pub mod ppm;
pub mod report;
pub mod run;
