//! Command-line front end: share files, figure series and command drivers.

pub mod app;
pub mod figures;
pub mod sharefile;
