//! Generation and scoring of time-sensitive question answering benchmarks
//! over uni-temporal relational data.

pub mod eval;
pub mod gateway;
pub mod interval;
pub mod manifest;
pub mod pipeline;
pub mod prompts;
pub mod qagen;
pub mod sql;
pub mod store;
pub mod time;

pub use store::{Interval, TFDecl, TemporalRelation, Value};
pub use time::{Duration, DurationUnit, Granularity, TimePoint};
