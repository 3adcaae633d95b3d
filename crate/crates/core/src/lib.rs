//! Learning to predict tactical load plans for double-stack railcars.

pub mod catalog;
pub mod checkpoint;
pub mod decoding;
pub mod instances;
pub mod language;
pub mod linalg;
pub mod nmt;
pub mod oracle;
pub mod training;
pub mod baseline;
pub mod evaluation;
pub mod heuristic;
pub mod saa;
pub mod cli;
