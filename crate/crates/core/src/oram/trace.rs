use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathOp {
    Read,
    Write,
}

/// One physical step visible to the host, or one in-enclave full scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    /// A whole path of `slots` slots was read or rewritten.
    Path { level: u8, leaf: u32, op: PathOp, slots: u32 },
    StashScan { level: u8, slots: u32 },
    TopMapScan { entries: u32 },
}

/// Shared, append-only record of access events.
#[derive(Debug, Default)]
pub struct TraceLog {
    events: Mutex<Vec<TraceEvent>>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, ev: TraceEvent) {
        self.events.lock().unwrap().push(ev);
    }

    pub fn take(&self) -> Vec<TraceEvent> {
        std::mem::take(&mut *self.events.lock().unwrap())
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaves of the path reads on `level`, in order.
    pub fn read_leaves(&self, level: u8) -> Vec<u32> {
        self.events
            .lock()
            .unwrap()
            .iter()
            .filter_map(|e| match *e {
                TraceEvent::Path { level: l, leaf, op: PathOp::Read, .. } if l == level => Some(leaf),
                _ => None,
            })
            .collect()
    }
}

/// Total slots touched (path reads, writes and stash scans) by `events`.
pub fn slots_touched(events: &[TraceEvent]) -> u64 {
    events
        .iter()
        .map(|e| match *e {
            TraceEvent::Path { slots, .. } | TraceEvent::StashScan { slots, .. } => slots as u64,
            TraceEvent::TopMapScan { .. } => 0,
        })
        .sum()
}
