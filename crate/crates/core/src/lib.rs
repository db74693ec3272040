//! Feature-model toolkit: model and formula types, textual formats, CNF
//! encoding with a CDCL solver, anomaly analysis and decision propagation,
//! slicing, t-wise sampling, undoable editing, and the collaboration relay.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

pub mod analysis;
pub mod cnf;
pub mod collab;
pub mod editing;
pub mod formats;
pub mod formula;
pub mod model;
pub mod sampling;
pub mod sat;
pub mod slicing;

/// Cooperative cancellation flag shared between a job and its owner.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_canceled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}
