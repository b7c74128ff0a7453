// Use the ORAM as a key-value store, then serve reads from a read-once
// snapshot while the writer keeps going.

use t3_core::oram::{Oram, OramParams, Strategy};

fn main() {
    let params = OramParams::new(1 << 12, 16, Strategy::CircuitOram);
    let mut oram = Oram::init(params, &[7; 32], 1).expect("init");

    for bid in 0..100u32 {
        let mut v = [0u8; 16];
        v[..4].copy_from_slice(&bid.to_be_bytes());
        oram.write(bid, &v).unwrap();
    }
    println!("block 42 = {}", hex(&oram.read(42).unwrap()));
    println!("stash high water per level: {:?}", oram.stash_high_water());

    let snap = oram.snapshot();
    oram.write(42, &[0xff; 16]).unwrap();
    // The snapshot still answers with the old value and never changes.
    println!("writer sees   {}", hex(&oram.read(42).unwrap()));
    println!("snapshot sees {}", hex(&snap.read_once(42, None).unwrap()));
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}
