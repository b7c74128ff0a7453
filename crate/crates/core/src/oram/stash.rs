use super::block::OramBlock;
use super::OramError;

/// Fixed-size, dummy-padded overflow buffer. Every lookup scans all slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stash {
    slots: Vec<OramBlock>,
}

impl Stash {
    pub fn new(capacity: usize, payload_bytes: usize) -> Self {
        Stash {
            slots: vec![OramBlock::dummy(payload_bytes); capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn occupancy(&self) -> usize {
        self.slots.iter().filter(|b| !b.is_dummy()).count()
    }

    pub fn slots(&self) -> &[OramBlock] {
        &self.slots
    }

    /// Removes and returns block `bid`, scanning the full stash either way.
    pub fn take(&mut self, bid: u32) -> Option<OramBlock> {
        let payload_bytes = self.slots.first().map_or(0, |b| b.payload.len());
        let mut found = None;
        for slot in self.slots.iter_mut() {
            let hit = !slot.is_dummy() && slot.bid == bid;
            if hit {
                found = Some(std::mem::replace(slot, OramBlock::dummy(payload_bytes)));
            }
        }
        found
    }

    pub fn get(&self, bid: u32) -> Option<&OramBlock> {
        let mut found = None;
        for slot in &self.slots {
            if !slot.is_dummy() && slot.bid == bid {
                found = Some(slot);
            }
        }
        found
    }

    /// Inserts into the first free slot; a full stash is a hard error.
    pub fn put(&mut self, block: OramBlock) -> Result<(), OramError> {
        debug_assert!(!block.is_dummy());
        let capacity = self.slots.len();
        let mut block = Some(block);
        for slot in self.slots.iter_mut() {
            if slot.is_dummy() {
                if let Some(b) = block.take() {
                    *slot = b;
                }
            }
        }
        match block {
            None => Ok(()),
            Some(_) => Err(OramError::StashOverflow { capacity }),
        }
    }

    /// Removes every real block, leaving an all-dummy stash.
    pub fn drain_real(&mut self) -> Vec<OramBlock> {
        let payload_bytes = self.slots.first().map_or(0, |b| b.payload.len());
        let mut out = Vec::new();
        for slot in self.slots.iter_mut() {
            if !slot.is_dummy() {
                out.push(std::mem::replace(slot, OramBlock::dummy(payload_bytes)));
            }
        }
        out
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [OramBlock] {
        &mut self.slots
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(bid: u32) -> OramBlock {
        OramBlock::new(bid, 0, vec![bid as u8; 4].into_boxed_slice())
    }

    #[test]
    fn put_take_and_overflow() {
        let mut s = Stash::new(2, 4);
        s.put(block(1)).unwrap();
        s.put(block(2)).unwrap();
        assert_eq!(s.occupancy(), 2);
        assert!(matches!(s.put(block(3)), Err(OramError::StashOverflow { capacity: 2 })));
        assert_eq!(s.take(1).unwrap().bid, 1);
        assert!(s.take(1).is_none());
        assert_eq!(s.get(2).unwrap().payload[0], 2);
        assert_eq!(s.drain_real().len(), 1);
        assert_eq!(s.occupancy(), 0);
        assert_eq!(s.capacity(), 2);
    }
}
