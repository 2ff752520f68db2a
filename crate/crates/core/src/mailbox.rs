//! Latest-value mailbox shared between rate groups.

use std::sync::{Arc, RwLock};

/// Single-slot mailbox: writers overwrite, readers copy out the newest value.
/// Nothing is ever queued, so a slow reader only ever sees stale data, never
/// a backlog.
#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Arc<RwLock<T>>,
}

impl<T> Clone for Mailbox<T> {
    fn clone(&self) -> Self {
        Self {
            slot: Arc::clone(&self.slot),
        }
    }
}

impl<T: Clone> Mailbox<T> {
    pub fn new(initial: T) -> Self {
        Self {
            slot: Arc::new(RwLock::new(initial)),
        }
    }

    pub fn publish(&self, value: T) {
        *self.slot.write().unwrap_or_else(|p| p.into_inner()) = value;
    }

    pub fn latest(&self) -> T {
        self.slot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }
}
