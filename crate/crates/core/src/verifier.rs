//! Ownership verification of a device, as four ordered stages:
//!
//! 1. find the device's block on the chain,
//! 2. look up the owner named in that block,
//! 3. check the block signature against the owner's published key,
//! 4. check the owner's valid proofs against the receiver's [`TrustPolicy`].
//!
//! The first failing stage decides the verdict and later stages do not run.
//! Provider failures are returned as errors rather than verdicts so callers
//! can retry.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{self, PrivateKey, PublicKey};
use crate::identity::{lookup_user, IdentityError, IdentityProvider, ProofState, ProofType};
use crate::ledger::{Blockchain, LedgerError};
use crate::record::DeviceRecord;

pub const DEFAULT_MIN_VALID_PROOFS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustPolicy {
    pub min_valid_proofs: usize,
    #[serde(default)]
    pub required_proof_types: BTreeSet<ProofType>,
}

impl Default for TrustPolicy {
    fn default() -> Self {
        TrustPolicy {
            min_valid_proofs: DEFAULT_MIN_VALID_PROOFS,
            required_proof_types: BTreeSet::new(),
        }
    }
}

impl TrustPolicy {
    pub fn with_min(min_valid_proofs: usize) -> Self {
        TrustPolicy {
            min_valid_proofs,
            ..Self::default()
        }
    }

    /// Parses a comma-separated list such as `"github, twitter"`.
    pub fn parse_proof_types(list: &str) -> BTreeSet<ProofType> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| ProofType::from_str(s).unwrap_or_else(|never| match never {}))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Trusted,
    RejectedNoBlock,
    RejectedUnknownUser,
    RejectedBadSignature,
    RejectedInsufficientProofs,
}

impl Verdict {
    /// Process exit code for this verdict: 0 when trusted, 10..=13 otherwise.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Trusted => 0,
            Verdict::RejectedNoBlock => 10,
            Verdict::RejectedUnknownUser => 11,
            Verdict::RejectedBadSignature => 12,
            Verdict::RejectedInsufficientProofs => 13,
        }
    }

    pub fn is_trusted(self) -> bool {
        self == Verdict::Trusted
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    BlockLookup,
    OwnerLookup,
    SignatureCheck,
    ProofPolicy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TraceStep {
    BlockLookup {
        node_id: String,
        found: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        block_index: Option<u64>,
    },
    OwnerLookup {
        username: String,
        found: bool,
    },
    SignatureCheck {
        valid: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        key_fingerprint: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    ProofPolicy {
        valid_proofs: usize,
        min_valid_proofs: usize,
        missing_types: Vec<ProofType>,
        passed: bool,
    },
}

impl TraceStep {
    pub fn stage(&self) -> Stage {
        match self {
            TraceStep::BlockLookup { .. } => Stage::BlockLookup,
            TraceStep::OwnerLookup { .. } => Stage::OwnerLookup,
            TraceStep::SignatureCheck { .. } => Stage::SignatureCheck,
            TraceStep::ProofPolicy { .. } => Stage::ProofPolicy,
        }
    }

    pub fn passed(&self) -> bool {
        match self {
            TraceStep::BlockLookup { found, .. } | TraceStep::OwnerLookup { found, .. } => *found,
            TraceStep::SignatureCheck { valid, .. } => *valid,
            TraceStep::ProofPolicy { passed, .. } => *passed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    pub trace: Vec<TraceStep>,
}

impl VerificationOutcome {
    /// `(stage, passed)` for each step, in order.
    pub fn path(&self) -> Vec<(Stage, bool)> {
        self.trace.iter().map(|s| (s.stage(), s.passed())).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("identity provider: {0}")]
    Provider(#[from] IdentityError),
}

impl VerifyError {
    pub fn is_transport(&self) -> bool {
        match self {
            VerifyError::Provider(e) => e.is_transport(),
        }
    }
}

pub fn verify_device(
    chain: &Blockchain,
    provider: &dyn IdentityProvider,
    policy: &TrustPolicy,
    node_id: &str,
) -> Result<VerificationOutcome, VerifyError> {
    let mut trace = Vec::with_capacity(4);
    let done = |verdict, trace| Ok(VerificationOutcome { verdict, trace });

    let block = chain.find_device(node_id);
    trace.push(TraceStep::BlockLookup {
        node_id: node_id.to_owned(),
        found: block.is_some(),
        block_index: block.map(|b| b.meta.index),
    });
    let Some((block, record)) = block.and_then(|b| b.data.as_ref().map(|d| (b, d))) else {
        return done(Verdict::RejectedNoBlock, trace);
    };

    let profile = lookup_user(provider, &record.owner_username)?;
    trace.push(TraceStep::OwnerLookup {
        username: record.owner_username.clone(),
        found: profile.is_some(),
    });
    let Some(profile) = profile else {
        return done(Verdict::RejectedUnknownUser, trace);
    };

    let signature_step = match (PublicKey::parse_text(&profile.public_key), &block.signature) {
        (Err(e), _) => TraceStep::SignatureCheck {
            valid: false,
            key_fingerprint: None,
            detail: Some(format!("owner key unusable: {e}")),
        },
        (Ok(pk), None) => TraceStep::SignatureCheck {
            valid: false,
            key_fingerprint: Some(pk.fingerprint().to_string()),
            detail: Some("block carries no signature".into()),
        },
        (Ok(pk), Some(sig)) => {
            let valid = crypto::verify(&pk, &record.canonical_bytes(), sig);
            TraceStep::SignatureCheck {
                valid,
                key_fingerprint: Some(pk.fingerprint().to_string()),
                detail: (!valid).then(|| "signature does not verify under owner key".into()),
            }
        }
    };
    let signed = signature_step.passed();
    trace.push(signature_step);
    if !signed {
        return done(Verdict::RejectedBadSignature, trace);
    }

    let valid: Vec<&ProofType> = profile
        .proofs
        .iter()
        .filter(|p| p.state == ProofState::Valid)
        .map(|p| &p.proof_type)
        .collect();
    let missing_types: Vec<ProofType> = policy
        .required_proof_types
        .iter()
        .filter(|t| !valid.contains(t))
        .cloned()
        .collect();
    let passed = valid.len() >= policy.min_valid_proofs && missing_types.is_empty();
    trace.push(TraceStep::ProofPolicy {
        valid_proofs: valid.len(),
        min_valid_proofs: policy.min_valid_proofs,
        missing_types,
        passed,
    });
    if passed {
        done(Verdict::Trusted, trace)
    } else {
        done(Verdict::RejectedInsufficientProofs, trace)
    }
}

/// Signs `record` with the owner's key and appends it as a new block.
pub fn register_device(
    chain: &Blockchain,
    owner_private_key: &PrivateKey,
    record: DeviceRecord,
    timestamp: u64,
) -> Result<Blockchain, LedgerError> {
    let signature = crypto::sign(owner_private_key, &record.canonical_bytes());
    let block = chain.make_block(record, signature, timestamp)?;
    chain.append_block(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyPair};
    use crate::identity::{IdentityProfile, MockProvider, Proof, RegisterMode};
    use proptest::prelude::*;

    fn pair(seed: u8) -> KeyPair {
        generate_keypair(Some(&[seed; 32])).unwrap()
    }

    fn proofs(n: usize) -> Vec<Proof> {
        [
            ProofType::Github,
            ProofType::Twitter,
            ProofType::Reddit,
            ProofType::Dns,
        ]
        .into_iter()
        .take(n)
        .map(|t| Proof::valid(t, "h"))
        .collect()
    }

    fn setup(owner_proofs: usize) -> (Blockchain, MockProvider, KeyPair) {
        let owner = pair(0);
        let record = DeviceRecord::new("dev-01", "alice", &pair(1).public_key).unwrap();
        let chain = register_device(&Blockchain::new(0), &owner.private_key, record, 10).unwrap();
        let provider = MockProvider::with_profiles([IdentityProfile::new(
            "alice",
            owner.public_key.to_base64(),
            proofs(owner_proofs),
        )])
        .unwrap();
        (chain, provider, owner)
    }

    #[test]
    fn unknown_node() {
        let (chain, provider, _) = setup(3);
        let out = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-99").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedNoBlock);
        assert_eq!(out.path(), vec![(Stage::BlockLookup, false)]);
        assert_eq!(provider.lookup_count(), 0);
    }

    #[test]
    fn unknown_owner() {
        let (chain, _, _) = setup(3);
        let empty = MockProvider::new();
        let out = verify_device(&chain, &empty, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedUnknownUser);
    }

    #[test]
    fn trusted_and_insufficient() {
        let (chain, provider, _) = setup(3);
        let out = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::Trusted);
        assert_eq!(out.trace.len(), 4);

        let (chain, provider, _) = setup(1);
        let out = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedInsufficientProofs);
        let out = verify_device(&chain, &provider, &TrustPolicy::with_min(0), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::Trusted);
    }

    #[test]
    fn key_rotation_breaks_signature() {
        let (chain, provider, _) = setup(3);
        provider
            .replace_key("alice", pair(7).public_key.to_base64())
            .unwrap();
        let out = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedBadSignature);
        assert_eq!(
            out.path(),
            vec![
                (Stage::BlockLookup, true),
                (Stage::OwnerLookup, true),
                (Stage::SignatureCheck, false)
            ]
        );
    }

    #[test]
    fn cross_wired_keys() {
        let (chain, provider, _) = setup(3);
        provider
            .register(
                IdentityProfile::new("alice", pair(2).public_key.to_base64(), proofs(3)),
                RegisterMode::Replace,
            )
            .unwrap();
        let out = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedBadSignature);
    }

    #[test]
    fn unparseable_owner_key_is_bad_signature() {
        let (chain, provider, _) = setup(3);
        provider
            .replace_key("alice", "-----BEGIN PGP PUBLIC KEY BLOCK-----")
            .unwrap();
        let out = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedBadSignature);
    }

    #[test]
    fn required_proof_types() {
        let (chain, provider, _) = setup(2);
        let mut policy = TrustPolicy::with_min(1);
        policy.required_proof_types = TrustPolicy::parse_proof_types("github, twitter");
        let out = verify_device(&chain, &provider, &policy, "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::Trusted);
        policy.required_proof_types = TrustPolicy::parse_proof_types("hackernews");
        let out = verify_device(&chain, &provider, &policy, "dev-01").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedInsufficientProofs);
        let TraceStep::ProofPolicy { missing_types, .. } = &out.trace[3] else {
            panic!()
        };
        assert_eq!(missing_types, &vec![ProofType::Hackernews]);
    }

    #[test]
    fn duplicate_registration() {
        let (chain, _, owner) = setup(3);
        let record = DeviceRecord::new("dev-01", "alice", &pair(5).public_key).unwrap();
        assert!(matches!(
            register_device(&chain, &owner.private_key, record, 20),
            Err(LedgerError::DuplicateDevice(_))
        ));
    }

    #[test]
    fn deterministic() {
        let (chain, provider, _) = setup(2);
        let a = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        let b = verify_device(&chain, &provider, &TrustPolicy::default(), "dev-01").unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    struct Failing;
    impl IdentityProvider for Failing {
        fn lookup(&self, _: &str) -> Result<Option<IdentityProfile>, IdentityError> {
            Err(IdentityError::Transport("down".into()))
        }
    }

    #[test]
    fn provider_failure_is_error_not_verdict() {
        let (chain, _, _) = setup(3);
        let err = verify_device(&chain, &Failing, &TrustPolicy::default(), "dev-01").unwrap_err();
        assert!(err.is_transport());
        // no lookup needed, so no error
        let out = verify_device(&chain, &Failing, &TrustPolicy::default(), "nope").unwrap();
        assert_eq!(out.verdict, Verdict::RejectedNoBlock);
    }

    proptest! {
        #[test]
        fn raising_threshold_never_grants_trust(n_proofs in 0usize..5, low in 0usize..5, bump in 0usize..5) {
            let (chain, provider, _) = setup(n_proofs.min(4));
            let at_low = verify_device(&chain, &provider, &TrustPolicy::with_min(low), "dev-01").unwrap();
            let at_high = verify_device(&chain, &provider, &TrustPolicy::with_min(low + bump), "dev-01").unwrap();
            if !at_low.verdict.is_trusted() {
                prop_assert!(!at_high.verdict.is_trusted());
            }
        }
    }
}
