// Record the leaves a snapshot reader touches and test them for uniformity,
// with a deliberately skewed copy as a control.

use t3_core::harness::trace::plant_anomaly;
use t3_core::harness::{linkage, uniformity};
use t3_core::oram::{Oram, OramParams, Strategy, TraceLog};

fn main() {
    let n = 1u32 << 12;
    let mut oram = Oram::init(OramParams::new(n, 8, Strategy::PathOram), &[3; 32], 9).unwrap();
    for bid in 0..n {
        oram.write(bid, &[1; 8]).unwrap();
    }
    let snap = oram.snapshot();
    let log = TraceLog::new();
    // Each block at most once per snapshot, as the store arranges.
    for bid in 0..n {
        snap.read_once(bid, Some(&log)).unwrap();
    }
    let leaves = log.read_leaves(0);
    let u = uniformity(&leaves, n);
    println!("{} distinct reads, {} bins: chi2 p={:.3}, max-load p={:.3}, combined p={:.3}", u.samples, u.bins, u.chi2_p, u.max_load_p, u.p_value);
    let pairs: Vec<(u64, u32)> = leaves.iter().map(|&l| (0, l)).collect();
    let l = linkage(&pairs, n);
    println!("same-leaf pairs {} vs {:.1} expected, p={:.3}", l.collisions, l.expected, l.p_value);

    let skewed = uniformity(&plant_anomaly(&leaves, n, 10.0), n);
    println!("planted control: p={:.2e}", skewed.p_value);

    // Re-reading one block from the same snapshot lands on the same leaf.
    let log = TraceLog::new();
    for bid in 0..n / 2 {
        snap.read_once(bid, Some(&log)).unwrap();
        snap.read_once(0, Some(&log)).unwrap();
    }
    let pairs: Vec<(u64, u32)> = log.read_leaves(0).iter().map(|&l| (0, l)).collect();
    let l = linkage(&pairs, n);
    println!("with repeats: same-leaf pairs {} vs {:.1} expected, p={:.2e}", l.collisions, l.expected, l.p_value);
}
