// Key generation, detached signatures over canonical record bytes, and the
// on-disk key file format.
//
// ```sh
// cargo run -p chainpki --example keys_and_signatures
// ```

use std::error::Error;

use chainpki::crypto::{self, generate_keypair, sign, verify};
use chainpki::{canonical_bytes, DeviceRecord};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // Seeded keys are reproducible; pass None for fresh randomness.
    let owner = generate_keypair(Some(&[7u8; 32]))?;
    let device = generate_keypair(None)?;
    println!("owner key  {}", owner.public_key.to_base64());
    println!("fingerprint {}", owner.key_fingerprint);

    let record = DeviceRecord::new("thermostat-3", "alice", &device.public_key)?;
    let bytes = canonical_bytes(&record);
    println!("signed bytes {}", String::from_utf8_lossy(&bytes));

    let signature = sign(&owner.private_key, &bytes);
    assert!(verify(&owner.public_key, &bytes, &signature));

    let mut forged = record.clone();
    forged.owner_username = "mallory".into();
    assert!(!verify(
        &owner.public_key,
        &canonical_bytes(&forged),
        &signature
    ));
    println!("signature binds the record; edited copy rejected");

    let dir = tempfile::tempdir()?;
    let (pub_path, key_path) = (dir.path().join("alice.pub"), dir.path().join("alice.key"));
    crypto::write_key_files(&owner, &pub_path, &key_path, false)?;
    print!("{}", std::fs::read_to_string(&pub_path)?);
    let reloaded = crypto::read_private_key_file(&key_path)?;
    assert_eq!(reloaded.public_key(), owner.public_key);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
