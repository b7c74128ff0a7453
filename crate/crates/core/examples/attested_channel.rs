// Attest a simulated enclave and exchange sealed frames with it.

use t3_core::enclave::attest::{measure, BUILD_IDENTITY};
use t3_core::enclave::{Attestor, ClientHandshake};

fn main() {
    let root = b"demo attestation root".to_vec();
    let attestor = Attestor::new(root.clone(), measure(BUILD_IDENTITY));
    let mut rng = rand::thread_rng();

    let hs = ClientHandshake::start(&mut rng);
    let (quote, mut server) = attestor.attest(hs.request(), &mut rng).expect("attest");
    let mut client = hs.finish(&quote, &root, &measure(BUILD_IDENTITY)).expect("quote verifies");

    let frame = client.seal(b"which outputs are mine?");
    println!("frame is {} bytes", frame.len());
    println!("server reads {:?}", String::from_utf8(server.unseal(&frame).unwrap()).unwrap());
    println!("replay rejected: {}", server.unseal(&frame).is_err());

    let reply = server.seal(b"none yet");
    println!("client reads {:?}", String::from_utf8(client.unseal(&reply).unwrap()).unwrap());

    // A quote checked against the wrong build is refused.
    let hs = ClientHandshake::start(&mut rng);
    let (quote, _) = attestor.attest(hs.request(), &mut rng).unwrap();
    println!("wrong measurement refused: {}", hs.finish(&quote, &root, &measure("other build")).is_err());
}
