// Builds a chain, writes it to disk, edits one byte of a stored record and
// shows validation pinpointing the damaged block.
//
// ```sh
// cargo run -p chainpki --example tamper_detection
// ```

use std::error::Error;

use chainpki::crypto::generate_keypair;
use chainpki::ledger::validate_chain;
use chainpki::storage::{load_chain, save_chain};
use chainpki::{register_device, Blockchain, DeviceRecord};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let owner = generate_keypair(Some(&[1u8; 32]))?;
    let mut chain = Blockchain::new(1_700_000_000);
    for i in 0..8 {
        let device = generate_keypair(Some(&[i + 10; 32]))?;
        let record = DeviceRecord::new(&format!("meter-{i}"), "alice", &device.public_key)?;
        chain = register_device(
            &chain,
            &owner.private_key,
            record,
            1_700_000_100 + u64::from(i),
        )?;
    }
    validate_chain(&chain)?;
    println!(
        "built {} blocks, tip {}",
        chain.len(),
        chain.tip().hash.short(16)
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("chain.json");
    save_chain(&path, &chain)?;

    // rename meter-4's owner in the file: "alice" -> "alicf"
    let text = std::fs::read_to_string(&path)?;
    let needle = r#""node_id":"meter-4","owner_username":"alice""#;
    let at = text.find(needle).ok_or("record not found")? + needle.len() - 2;
    let mut bytes = text.into_bytes();
    bytes[at] += 1;
    std::fs::write(&path, &bytes)?;

    let tampered = load_chain(&path)?;
    let fault = validate_chain(&tampered).expect_err("edit must be caught");
    println!("{fault}");
    assert_eq!(fault.index, 5);

    // Re-hashing the edited block only moves the break to its successor.
    let mut blocks = tampered.into_blocks();
    blocks[5].hash = blocks[5].recompute_hash();
    let rehashed = Blockchain::from_blocks(blocks)?;
    let fault = validate_chain(&rehashed).expect_err("linkage must break");
    println!("after re-hashing: {fault}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
