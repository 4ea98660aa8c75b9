//! Chat sessions over a frozen model, with per-token attention traces.

mod engine;
mod session;

pub use engine::{ChatEngine, ModelInfo, Reply, TraceFrame};
pub use session::{Session, SessionStore};

#[cfg(test)]
mod tests;
