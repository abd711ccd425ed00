//! Analysis toolkit for interbank RTGS settlement logs.
//!
//! The crate parses daily transaction logs, identifies overnight and multi-day
//! interbank loans by matching reversing transaction pairs against a target
//! interest rate, and derives the flow-level statistics used to study how the
//! overnight money market compensates payment imbalances: per-bank imbalances,
//! daily flow and net-flow networks, persistence and distance measures,
//! mixture and power-law fits, and force-directed network renderings.
//!
//! A seeded synthetic-week generator produces labeled datasets in which every
//! loan is known, so the extraction pipeline can be scored for precision and
//! recall against ground truth.

pub mod csvio;
pub mod flows;
pub mod loans;
pub mod model;
pub mod report;
pub mod stats;
pub mod synth;
pub mod viz;
