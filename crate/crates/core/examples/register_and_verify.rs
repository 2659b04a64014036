// Registers devices and runs ownership verification against an in-memory
// identity provider, printing each verdict with its trace.
//
// ```sh
// cargo run -p chainpki --example register_and_verify
// ```

use std::error::Error;

use chainpki::crypto::generate_keypair;
use chainpki::{
    register_device, verify_device, Blockchain, DeviceRecord, IdentityProfile, MockProvider, Proof,
    ProofState, ProofType, TrustPolicy,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let alice = generate_keypair(Some(&[1u8; 32]))?;
    let bob = generate_keypair(Some(&[2u8; 32]))?;
    let mallory = generate_keypair(Some(&[3u8; 32]))?;

    let provider = MockProvider::with_profiles([
        IdentityProfile::new(
            "alice",
            alice.public_key.to_base64(),
            vec![
                Proof::valid(ProofType::Github, "alice"),
                Proof::valid(ProofType::Twitter, "alice_tw"),
            ],
        ),
        IdentityProfile::new(
            "bob",
            bob.public_key.to_base64(),
            vec![
                Proof::valid(ProofType::Github, "bob"),
                Proof::new(ProofType::Reddit, "bob", ProofState::Broken),
            ],
        ),
    ])?;

    let mut chain = Blockchain::new(0);
    for (node, owner, signer) in [
        ("door-lock", "alice", &alice),
        ("camera", "bob", &bob),
        ("router", "alice", &mallory),
        ("speaker", "nobody", &mallory),
    ] {
        let device = generate_keypair(None)?;
        let record = DeviceRecord::new(node, owner, &device.public_key)?;
        chain = register_device(&chain, &signer.private_key, record, 100)?;
    }

    // first claim wins: a second door-lock registration is refused
    let dup = DeviceRecord::new("door-lock", "mallory", &mallory.public_key)?;
    println!(
        "re-register door-lock: {}",
        register_device(&chain, &mallory.private_key, dup, 101).unwrap_err()
    );

    let policy = TrustPolicy::default();
    for node in ["door-lock", "camera", "router", "speaker", "fridge"] {
        let outcome = verify_device(&chain, &provider, &policy, node)?;
        println!(
            "{node:<10} {} (exit {})",
            outcome.verdict,
            outcome.verdict.exit_code()
        );
        for step in &outcome.trace {
            println!("    {}", serde_json::to_string(step)?);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
