//! File formats, tables, the run manifest and the `vsd` command line around
//! `vsd-core`.

pub mod bench;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod mil_data;
pub mod model_io;
pub mod pnm;
pub mod tables;
pub mod voc;
pub mod vsdf;
