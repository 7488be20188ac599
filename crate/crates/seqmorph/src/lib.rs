//! File formats, reports and the run orchestration behind the `seqmorph`
//! command line tool.

pub mod checkpoint;
pub mod config;
pub mod dump;
pub mod error;
pub mod gradcheck;
pub mod report;
pub mod run;
pub mod tsv;

pub use config::RunConfig;
pub use error::FormatError;
