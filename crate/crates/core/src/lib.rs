//! Free-cash-flow valuation with an agentic refinement loop.
//!
//! [`valuation`] holds the deterministic engine. [`agents`] and [`llm`]
//! propose input changes through a single completion gateway,
//! [`orchestrator`] runs the waterfall and router loop, [`reporting`]
//! writes and checks the report, and [`store`] persists replayable runs.

pub mod agents;
pub mod config;
pub mod error;
pub mod fundamentals;
pub mod llm;
pub mod orchestrator;
pub mod reporting;
pub mod store;
pub mod valuation;

pub use error::{Error, Result};
