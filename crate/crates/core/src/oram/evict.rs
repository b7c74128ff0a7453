//! Eviction: writing stash blocks back onto tree paths.
//!
//! Path-ORAM greedily fills the path it just read from the leaf upwards.
//! Circuit-ORAM runs a single pass per eviction path that moves at most one
//! block per level towards the deepest legal position, on two paths per access
//! taken in reverse-lexicographic leaf order.

use rand::RngCore;

use super::block::OramBlock;
use super::stash::Stash;
use super::tree::OramTree;
use super::{OramError, Strategy};

/// Circuit-ORAM evictions per access.
pub const CIRCUIT_EVICTIONS_PER_ACCESS: usize = 2;

/// Depth of the deepest bucket shared by the paths to leaves `a` and `b`.
#[inline]
pub fn common_depth(height: u32, a: u32, b: u32) -> u32 {
    let diff = a ^ b;
    if diff == 0 {
        height
    } else {
        height - (32 - diff.leading_zeros())
    }
}

/// Reverses the low `bits` bits of `n`.
#[inline]
pub fn reverse_bits(n: u64, bits: u32) -> u32 {
    if bits == 0 {
        return 0;
    }
    ((n as u32).reverse_bits() >> (32 - bits)) & ((1u64 << bits) - 1) as u32
}

/// Leaves for the `count` evictions starting at global counter `counter`.
pub fn reverse_lexicographic_paths(counter: u64, height: u32, count: usize) -> Vec<u32> {
    let leaves = 1u64 << height;
    (0..count as u64)
        .map(|i| reverse_bits((counter + i) % leaves, height))
        .collect()
}

/// Greedy Path-ORAM placement of `working` onto the path to `leaf`, deepest
/// bucket first. Returns the path contents (root bucket first, dummy-padded)
/// and the blocks that did not fit.
pub fn place_on_path(
    height: u32,
    bucket_z: usize,
    payload_bytes: usize,
    leaf: u32,
    working: Vec<OramBlock>,
) -> (Vec<OramBlock>, Vec<OramBlock>) {
    let mut path = vec![OramBlock::dummy(payload_bytes); (height as usize + 1) * bucket_z];
    let mut remaining: Vec<(u32, OramBlock)> = working
        .into_iter()
        .filter(|b| !b.is_dummy())
        .map(|b| (common_depth(height, b.leaf, leaf), b))
        .collect();
    for depth in (0..=height).rev() {
        let mut filled = 0;
        let mut i = 0;
        while i < remaining.len() && filled < bucket_z {
            if remaining[i].0 >= depth {
                let (_, block) = remaining.swap_remove(i);
                path[depth as usize * bucket_z + filled] = block;
                filled += 1;
            } else {
                i += 1;
            }
        }
    }
    (path, remaining.into_iter().map(|(_, b)| b).collect())
}

/// One Circuit-ORAM eviction over the stash and a decrypted path.
///
/// Levels are numbered with the stash at 0 and the bucket at depth `d` at
/// `d + 1`. Three passes: find, per level, the shallowest source whose deepest
/// block can reach it; assign each source a target walking bottom-up; then move
/// blocks top-down holding at most one block in flight.
pub fn circuit_evict_once(
    stash: &mut [OramBlock],
    path: &mut [OramBlock],
    leaf: u32,
    height: u32,
    bucket_z: usize,
) {
    let levels = height as usize + 2;
    debug_assert_eq!(path.len(), (levels - 1) * bucket_z);

    // (deepest reachable level, slot index) of the deepest block per level.
    let deepest_in = |stash: &[OramBlock], path: &[OramBlock], lvl: usize| -> Option<(usize, usize)> {
        let slots = if lvl == 0 { stash } else { &path[(lvl - 1) * bucket_z..lvl * bucket_z] };
        let mut best: Option<(usize, usize)> = None;
        for (idx, b) in slots.iter().enumerate() {
            if b.is_dummy() {
                continue;
            }
            let reach = common_depth(height, b.leaf, leaf) as usize + 1;
            if best.is_none_or(|(r, _)| reach > r) {
                best = Some((reach, idx));
            }
        }
        best
    };

    let mut deepest: Vec<Option<usize>> = vec![None; levels];
    let mut deepest_idx: Vec<Option<usize>> = vec![None; levels];
    let mut src: Option<usize> = None;
    let mut goal: isize = -1;
    for i in 0..levels {
        if goal >= i as isize {
            deepest[i] = src;
        }
        if let Some((reach, idx)) = deepest_in(stash, path, i) {
            deepest_idx[i] = Some(idx);
            if reach as isize > goal {
                goal = reach as isize;
                src = Some(i);
            }
        }
    }

    let mut target: Vec<Option<usize>> = vec![None; levels];
    let mut dest: Option<usize> = None;
    let mut src: Option<usize> = None;
    for i in (0..levels).rev() {
        if src == Some(i) {
            target[i] = dest;
            dest = None;
            src = None;
        }
        let has_empty = i > 0
            && path[(i - 1) * bucket_z..i * bucket_z]
                .iter()
                .any(|b| b.is_dummy());
        if ((dest.is_none() && has_empty) || target[i].is_some()) && deepest[i].is_some() {
            src = deepest[i];
            dest = Some(i);
        }
    }

    let payload_bytes = path.first().map_or(0, |b| b.payload.len());
    let mut hold: Option<OramBlock> = None;
    let mut dest: Option<usize> = None;
    for i in 0..levels {
        let mut to_write = None;
        if hold.is_some() && dest == Some(i) {
            to_write = hold.take();
            dest = None;
        }
        let slots: &mut [OramBlock] = if i == 0 {
            &mut *stash
        } else {
            &mut path[(i - 1) * bucket_z..i * bucket_z]
        };
        if let Some(t) = target[i] {
            let idx = deepest_idx[i].expect("source level has a deepest block");
            hold = Some(std::mem::replace(&mut slots[idx], OramBlock::dummy(payload_bytes)));
            dest = Some(t);
        }
        if let Some(block) = to_write {
            let free = slots
                .iter_mut()
                .find(|b| b.is_dummy())
                .expect("eviction target level has a free slot");
            *free = block;
        }
    }
    debug_assert!(hold.is_none());
}

/// Writes `pending` (blocks merged from the path just read, plus the accessed
/// block) and the stash back to the tree.
///
/// Path-ORAM: `paths` is the single path that was read. Circuit-ORAM: each
/// leaf in `paths` is read, evicted once and rewritten.
pub fn evict<R: RngCore>(
    strategy: Strategy,
    tree: &mut OramTree,
    stash: &mut Stash,
    pending: Vec<OramBlock>,
    paths: &[u32],
    rng: &mut R,
) -> Result<(), OramError> {
    let height = tree.height();
    let z = tree.bucket_z();
    match strategy {
        Strategy::PathOram => {
            let [leaf] = paths else {
                return Err(OramError::InvalidParams(format!(
                    "path-oram evicts exactly the path it read, got {} paths",
                    paths.len()
                )));
            };
            let mut working = stash.drain_real();
            working.extend(pending);
            let (path, rest) = place_on_path(height, z, tree.payload_bytes(), *leaf, working);
            tree.write_path(*leaf, &path, rng)?;
            for block in rest {
                stash.put(block)?;
            }
            Ok(())
        }
        Strategy::CircuitOram => {
            for block in pending {
                stash.put(block)?;
            }
            for &leaf in paths {
                let mut path = tree.read_path(leaf)?;
                circuit_evict_once(stash.slots_mut(), &mut path, leaf, height, z);
                tree.write_path(leaf, &path, rng)?;
            }
            Ok(())
        }
    }
}
