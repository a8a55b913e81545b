//! HTTP service and offline tooling around [`dualtone_core`].

pub mod api;
pub mod report;
pub mod share;
