//! Constant-trace selection.
//!
//! Every routine here touches each input slot exactly once, in index order,
//! whether or not (and wherever) a match occurs; selection is done with
//! masked assignment rather than branches. This models the in-enclave
//! `cmov`-style discipline in software only.

pub use subtle::{Choice, ConstantTimeEq};
use subtle::{ConditionallySelectable, ConstantTimeGreater};

/// Observes slot touches; lets tests assert the trace shape.
pub trait TouchObserver {
    fn touch(&mut self, index: usize);
}

impl TouchObserver for () {
    #[inline]
    fn touch(&mut self, _index: usize) {}
}

/// Counts touches and remembers their order.
#[derive(Debug, Default, Clone)]
pub struct TouchCounter {
    pub order: Vec<usize>,
}

impl TouchCounter {
    pub fn touches(&self) -> usize {
        self.order.len()
    }
}

impl TouchObserver for TouchCounter {
    fn touch(&mut self, index: usize) {
        self.order.push(index);
    }
}

/// Masked assignment: `self = if choice { other } else { self }`.
pub trait CtAssign {
    fn ct_assign(&mut self, other: &Self, choice: Choice);
}

impl CtAssign for [u8] {
    fn ct_assign(&mut self, other: &Self, choice: Choice) {
        assert_eq!(self.len(), other.len());
        for (d, s) in self.iter_mut().zip(other) {
            d.conditional_assign(s, choice);
        }
    }
}

impl<const N: usize> CtAssign for [u8; N] {
    fn ct_assign(&mut self, other: &Self, choice: Choice) {
        self.as_mut_slice().ct_assign(other.as_slice(), choice);
    }
}

impl CtAssign for Box<[u8]> {
    fn ct_assign(&mut self, other: &Self, choice: Choice) {
        (**self).ct_assign(&**other, choice);
    }
}

impl CtAssign for u32 {
    fn ct_assign(&mut self, other: &Self, choice: Choice) {
        self.conditional_assign(other, choice);
    }
}

impl CtAssign for u64 {
    fn ct_assign(&mut self, other: &Self, choice: Choice) {
        self.conditional_assign(other, choice);
    }
}

/// Returns the first slot for which `matches` holds, or `dummy`, after
/// touching every slot once. The second value reports whether a match was
/// found.
pub fn oblivious_select<T, F, O>(slots: &[T], dummy: T, mut matches: F, obs: &mut O) -> (T, Choice)
where
    T: CtAssign,
    F: FnMut(&T) -> Choice,
    O: TouchObserver,
{
    let mut out = dummy;
    let mut found = Choice::from(0);
    for (i, slot) in slots.iter().enumerate() {
        obs.touch(i);
        let take = matches(slot) & !found;
        out.ct_assign(slot, take);
        found |= take;
    }
    (out, found)
}

/// Index of the first match (or `slots.len()`), touching every slot.
pub fn oblivious_position<T, F, O>(slots: &[T], mut matches: F, obs: &mut O) -> (usize, Choice)
where
    F: FnMut(&T) -> Choice,
    O: TouchObserver,
{
    let mut pos = slots.len() as u64;
    let mut found = Choice::from(0);
    for (i, slot) in slots.iter().enumerate() {
        obs.touch(i);
        let take = matches(slot) & !found;
        pos.conditional_assign(&(i as u64), take);
        found |= take;
    }
    (pos as usize, found)
}

/// Reads and optionally replaces `table[index]` with a full scan.
pub fn oblivious_swap_u32(table: &mut [u32], index: usize, replacement: Option<u32>) -> u32 {
    let mut old = 0u32;
    let write = Choice::from(replacement.is_some() as u8);
    let new = replacement.unwrap_or(0);
    for (i, slot) in table.iter_mut().enumerate() {
        let hit = (i as u64).ct_eq(&(index as u64));
        old.conditional_assign(slot, hit);
        slot.conditional_assign(&new, hit & write);
    }
    old
}

/// Reads `table[index]` with a full scan.
pub fn oblivious_read_u32(table: &[u32], index: usize) -> u32 {
    let mut old = 0u32;
    for (i, slot) in table.iter().enumerate() {
        old.conditional_assign(slot, (i as u64).ct_eq(&(index as u64)));
    }
    old
}

/// Constant-time `a > b` for unsigned values.
pub fn ct_gt(a: u64, b: u64) -> Choice {
    a.ct_gt(&b)
}
