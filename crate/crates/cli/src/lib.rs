//! Library surface of the harness so integration tests can drive the
//! pipeline without shelling out.

pub mod config;
pub mod gen;
pub mod records;
pub mod report;
pub mod run;
