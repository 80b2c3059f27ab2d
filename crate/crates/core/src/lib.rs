//! Task-oriented transmission of retrieval features over a noisy, bandwidth-limited
//! channel.

pub mod bytes;
pub mod channel;
pub mod data;
pub mod digital;
pub mod eval;
pub mod experiment;
pub mod jscc;
mod kv;
pub mod nn;
pub mod retrieval;
pub mod seed;
pub mod train;
