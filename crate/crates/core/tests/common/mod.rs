//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::sync::Arc;

use chainpki::crypto::{generate_keypair, hash_bytes, sign, KeyPair};
use chainpki::identity::{IdentityProvider, RegisterMode};
use chainpki::verifier::Stage;
use chainpki::{
    canonical_bytes, register_device, verify_device, Blockchain, DeviceRecord, IdentityProfile,
    MockProvider, Proof, ProofState, ProofType, TrustPolicy, Verdict,
};

// Produced by tests/oracle/golden.py (Python json + hashlib + cryptography).
pub const SEED00_PUBLIC: &str = "O2onvM62pC1io6jQKm8Nc2UyFXcd4kOmOsBIoYtZ2ik=";
pub const SEED00_FINGERPRINT: &str =
    "139e3940e64b5491722088d9a0d741628fc826e09475d341a780acde3c4b8070";
pub const SEED01_PUBLIC: &str = "iojj3XQJ8ZX9UtstPLpdcspnCb8dlBIb83SIAbQPb1w=";
pub const SHA256_EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
pub const RECORD_CANONICAL: &str = r#"{"device_public_key":"iojj3XQJ8ZX9UtstPLpdcspnCb8dlBIb83SIAbQPb1w=","node_id":"dev-01","owner_username":"alice"}"#;
pub const RECORD_SHA256: &str = "d1321603ce9bcc0f1a6ff350e0aa1d8d1ee5bbfd85a1eb82d8b235f6bd5f314c";
pub const RECORD_SIGNATURE: &str =
    "Tp4wrUHtfJd7og1PHJf/RDRogppzRClPyOy7HsLfveMhOvqwsmUYbeICyb+bMSk7aWY8lYZtOWL/YTfVuxRxCA==";
pub const GENESIS_HASH: &str = "56f17c861554e6a10a001434d24050dc188d5e1c66b1015e3148e9f01c0b738f";
pub const BLOCK1_HASH: &str = "ca21266e40ff721322126a1882368ee0ab38b4e2066e15ead6410a136b84ea5a";
pub const NFC_RECORD_HEX: &str = "7b226465766963655f7075626c69635f6b6579223a22696f6a6a3358514a385a583955747374504c70646373706e436238646c42496238335349416251506231773d222c226e6f64655f6964223a226465762d3031222c226f776e65725f757365726e616d65223a226a6f73c3a9227d";

pub fn key(seed: u8) -> KeyPair {
    generate_keypair(Some(&[seed; 32])).unwrap()
}

/// `(name, computed, expected)` for every frozen vector.
pub fn golden_vectors() -> Vec<(&'static str, String, &'static str)> {
    let owner = key(0);
    let device = key(1);
    let record = DeviceRecord::new("dev-01", "alice", &device.public_key).unwrap();
    let bytes = canonical_bytes(&record);
    let nfc = DeviceRecord::new("dev-01", "jose\u{301}", &device.public_key).unwrap();
    let chain = Blockchain::new(0);
    let sig = sign(&owner.private_key, &bytes);
    let block = chain
        .make_block(record, sig.clone(), 1_700_000_000)
        .unwrap();
    vec![
        ("seed00_public", owner.public_key.to_base64(), SEED00_PUBLIC),
        (
            "seed00_fingerprint",
            owner.key_fingerprint.to_string(),
            SEED00_FINGERPRINT,
        ),
        (
            "seed01_public",
            device.public_key.to_base64(),
            SEED01_PUBLIC,
        ),
        ("sha256_empty", hash_bytes(b"").to_string(), SHA256_EMPTY),
        (
            "record_canonical",
            String::from_utf8(bytes.clone()).unwrap(),
            RECORD_CANONICAL,
        ),
        (
            "record_sha256",
            hash_bytes(&bytes).to_string(),
            RECORD_SHA256,
        ),
        ("record_signature", sig.to_base64(), RECORD_SIGNATURE),
        (
            "nfc_record",
            hex::encode(canonical_bytes(&nfc)),
            NFC_RECORD_HEX,
        ),
        (
            "genesis_hash",
            chain.genesis().hash.to_string(),
            GENESIS_HASH,
        ),
        ("block1_hash", block.hash.to_string(), BLOCK1_HASH),
    ]
}

pub struct Fixture {
    pub chain: Blockchain,
    pub registry: Arc<MockProvider>,
}

pub fn fixture() -> Fixture {
    let alice = key(1);
    let bob = key(2);
    let mallory = key(3);
    let registry = Arc::new(
        MockProvider::with_profiles([
            IdentityProfile::new(
                "alice",
                alice.public_key.to_base64(),
                vec![
                    Proof::valid(ProofType::Github, "alice"),
                    Proof::valid(ProofType::Twitter, "alice"),
                    Proof::valid(ProofType::Website, "alice.example"),
                ],
            ),
            IdentityProfile::new(
                "bob",
                bob.public_key.to_base64(),
                vec![
                    Proof::valid(ProofType::Reddit, "bob"),
                    Proof::new(ProofType::Hackernews, "bob", ProofState::Pending),
                ],
            ),
        ])
        .unwrap(),
    );
    let mut chain = Blockchain::new(0);
    let devices = [
        ("cam-1", "alice", &alice),
        ("cam-2", "bob", &bob),
        ("cam-3", "alice", &mallory),
        ("cam-4", "zed", &mallory),
    ];
    for (i, (node, owner, signer)) in devices.iter().enumerate() {
        let record = DeviceRecord::new(node, owner, &key(100 + i as u8).public_key).unwrap();
        chain = register_device(&chain, &signer.private_key, record, 10 + i as u64).unwrap();
    }
    Fixture { chain, registry }
}

/// Runs every verifier expectation through `provider`, panicking on the
/// first mismatch. Alice's key is rotated at the registry and restored.
pub fn verifier_suite(fx: &Fixture, provider: &dyn IdentityProvider) {
    let policy = TrustPolicy::default();
    let check = |node: &str, expected: Verdict| {
        let out = verify_device(&fx.chain, provider, &policy, node).unwrap();
        assert_eq!(out.verdict, expected, "{node}: {:?}", out.trace);
        out
    };
    let trusted = check("cam-1", Verdict::Trusted);
    assert_eq!(trusted.path().len(), 4);
    check("cam-2", Verdict::RejectedInsufficientProofs);
    let bad = check("cam-3", Verdict::RejectedBadSignature);
    assert_eq!(bad.path().last(), Some(&(Stage::SignatureCheck, false)));
    check("cam-4", Verdict::RejectedUnknownUser);
    check("cam-9", Verdict::RejectedNoBlock);

    let lenient = TrustPolicy::with_min(1);
    let out = verify_device(&fx.chain, provider, &lenient, "cam-2").unwrap();
    assert_eq!(out.verdict, Verdict::Trusted);

    let mut strict = TrustPolicy::with_min(1);
    strict.required_proof_types = TrustPolicy::parse_proof_types("website");
    assert_eq!(
        verify_device(&fx.chain, provider, &strict, "cam-1")
            .unwrap()
            .verdict,
        Verdict::Trusted
    );
    assert_eq!(
        verify_device(&fx.chain, provider, &strict, "cam-2")
            .unwrap()
            .verdict,
        Verdict::RejectedInsufficientProofs
    );

    fx.registry
        .replace_key("alice", key(9).public_key.to_base64())
        .unwrap();
    check("cam-1", Verdict::RejectedBadSignature);
    let original = fx.registry.lookup("alice").unwrap().unwrap();
    fx.registry
        .register(
            IdentityProfile::new("alice", key(1).public_key.to_base64(), original.proofs),
            RegisterMode::Replace,
        )
        .unwrap();
    check("cam-1", Verdict::Trusted);
}
