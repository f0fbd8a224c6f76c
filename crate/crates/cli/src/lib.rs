//! Report writing and chart rendering for the `ciid` command-line tool.

pub mod report;
pub mod svg;
