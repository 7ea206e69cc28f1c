pub mod channel;
pub mod conic;
pub mod config;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod optimizer;
pub mod par;
pub mod report;
pub mod sensing;
pub mod signal;
pub mod units;
