use std::sync::{Arc, Mutex};

/// Single-slot mailbox. Publishing overwrites; taking leaves the slot intact
/// so the consumer can tell a stale frame by its unchanged sequence number.
#[derive(Debug)]
pub struct LatestFrameBuffer<T> {
    slot: Mutex<(u64, Option<Arc<T>>)>,
}

impl<T> Default for LatestFrameBuffer<T> {
    fn default() -> Self {
        Self {
            slot: Mutex::new((0, None)),
        }
    }
}

impl<T> LatestFrameBuffer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `frame` and returns its sequence number, starting at 1.
    pub fn publish(&self, frame: T) -> u64 {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        slot.0 += 1;
        slot.1 = Some(Arc::new(frame));
        slot.0
    }

    pub fn take_latest(&self) -> Option<(u64, Arc<T>)> {
        let slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        slot.1.as_ref().map(|f| (slot.0, Arc::clone(f)))
    }

    pub fn sequence(&self) -> u64 {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).0
    }
}
