//! A public key infrastructure for device networks, kept on a hash-linked
//! ledger.
//!
//! Owners sign a [`DeviceRecord`] (device id, owner username, device public
//! key) and append it to the [`Blockchain`]. A device receiving traffic from
//! an unknown peer looks the peer up on the chain, fetches the owner's profile
//! from an [`identity::IdentityProvider`], checks the signature with the
//! owner's published key and applies its [`TrustPolicy`] to the owner's
//! identity proofs.
//!
//! | Module        | Role                                                        |
//! |---------------|-------------------------------------------------------------|
//! | [`crypto`]    | Ed25519 keys and signatures, SHA-256 digests, key files     |
//! | [`canonical`] | Canonical JSON used for signing, hashing and storage        |
//! | [`ledger`]    | Blocks, validation, lookup, longest-valid-chain selection   |
//! | [`storage`]   | Atomic chain files and writer locks                         |
//! | [`identity`]  | Provider trait, in-memory mock, Keybase-shaped HTTP adapter |
//! | [`verifier`]  | Ownership verification and device registration             |
//! | [`simnet`]    | Deterministic multi-node simulation and scenarios           |
//! | [`cli`]       | The `chainpki` command line                                 |

pub mod canonical;
pub mod cli;
pub mod crypto;
pub mod identity;
pub mod ledger;
pub mod record;
pub mod simnet;
pub mod storage;
pub mod verifier;

pub use crypto::{
    generate_keypair, hash_bytes, sign, verify, Digest, KeyPair, PrivateKey, PublicKey, Signature,
};
pub use identity::{IdentityProfile, IdentityProvider, MockProvider, Proof, ProofState, ProofType};
pub use ledger::{choose_chain, validate_block, validate_chain, Block, BlockMeta, Blockchain};
pub use record::DeviceRecord;
pub use verifier::{register_device, verify_device, TrustPolicy, Verdict, VerificationOutcome};

/// Canonical bytes of a device record: the exact input to owner signatures.
pub fn canonical_bytes(record: &DeviceRecord) -> Vec<u8> {
    record.canonical_bytes()
}
