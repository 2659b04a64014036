//! The hash-linked device registry.
//!
//! Each non-genesis block carries one [`DeviceRecord`], the owner's signature
//! over its canonical bytes, and a SHA-256 over the canonical encoding of
//! `{data, meta, signature}`. The ledger checks linkage, timestamps and hashes;
//! checking a signature against its owner needs an identity lookup and happens
//! in [`crate::verifier`], unless the caller already holds the owner key.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock, RwLockReadGuard};

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::{self, Digest, PublicKey, Signature};
use crate::record::{DeviceRecord, RecordError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMeta {
    pub index: u64,
    pub prev_hash: Digest,
    /// Whole seconds since the Unix epoch, UTC.
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub meta: BlockMeta,
    pub data: Option<DeviceRecord>,
    pub signature: Option<Signature>,
    pub hash: Digest,
}

#[derive(Serialize)]
struct HashInput<'a> {
    meta: &'a BlockMeta,
    data: &'a Option<DeviceRecord>,
    signature: &'a Option<Signature>,
}

impl Block {
    pub fn compute_hash(
        meta: &BlockMeta,
        data: &Option<DeviceRecord>,
        signature: &Option<Signature>,
    ) -> Digest {
        let input = HashInput {
            meta,
            data,
            signature,
        };
        let bytes = canonical::to_canonical_vec(&input).expect("block fields are canonical-safe");
        crypto::hash_bytes(&bytes)
    }

    pub fn recompute_hash(&self) -> Digest {
        Self::compute_hash(&self.meta, &self.data, &self.signature)
    }

    pub fn genesis(timestamp: u64) -> Block {
        let meta = BlockMeta {
            index: 0,
            prev_hash: Digest::zero(),
            timestamp,
        };
        let hash = Self::compute_hash(&meta, &None, &None);
        Block {
            meta,
            data: None,
            signature: None,
            hash,
        }
    }

    pub fn node_id(&self) -> Option<&str> {
        self.data.as_ref().map(|d| d.node_id.as_str())
    }
}

/// What kind of check a [`BlockFault`] failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCause {
    Linkage,
    Timestamp,
    Hash,
    Signature,
    Payload,
}

impl fmt::Display for FaultCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FaultCause::Linkage => "linkage",
            FaultCause::Timestamp => "timestamp",
            FaultCause::Hash => "hash",
            FaultCause::Signature => "signature",
            FaultCause::Payload => "payload",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BlockFault {
    #[error("index {found} does not follow predecessor index {prev}")]
    Index { prev: u64, found: u64 },
    #[error("prev_hash {found} does not match predecessor hash {expected}")]
    PrevHash { expected: Digest, found: Digest },
    #[error("timestamp {found} is earlier than predecessor timestamp {prev}")]
    Timestamp { prev: u64, found: u64 },
    #[error("stored hash {stored} does not match recomputed {computed}")]
    Hash { stored: Digest, computed: Digest },
    #[error("owner signature does not verify")]
    Signature,
    #[error("block carries no device record or no signature")]
    MissingPayload,
    #[error("genesis block is malformed: {0}")]
    Genesis(&'static str),
    #[error("invalid device record: {0}")]
    Record(#[from] RecordError),
}

impl BlockFault {
    pub fn cause(&self) -> FaultCause {
        match self {
            BlockFault::Index { .. } | BlockFault::PrevHash { .. } => FaultCause::Linkage,
            BlockFault::Timestamp { .. } => FaultCause::Timestamp,
            BlockFault::Hash { .. } => FaultCause::Hash,
            BlockFault::Signature => FaultCause::Signature,
            BlockFault::MissingPayload | BlockFault::Genesis(_) | BlockFault::Record(_) => {
                FaultCause::Payload
            }
        }
    }
}

/// A failed chain validation, located at the block at `index` (position in
/// the chain, which equals the block's claimed index for honest chains).
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("block {index}: {cause} failure: {fault}")]
pub struct ChainFault {
    pub index: usize,
    pub cause: FaultCause,
    pub fault: BlockFault,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("chain has no genesis block")]
    Empty,
    #[error("timestamp {found} is earlier than the tip timestamp {tip}")]
    StaleTimestamp { tip: u64, found: u64 },
    #[error("node_id {0:?} is already registered")]
    DuplicateDevice(String),
    #[error("block rejected ({cause}): {0}", cause = .0.cause())]
    Rejected(#[from] BlockFault),
    #[error("malformed chain document: {0}")]
    Format(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("chain file {0} is locked by another writer")]
    Locked(String),
}

/// Checks `block` against its claimed predecessor. When `owner_pk` is given
/// the owner signature is checked too.
pub fn validate_block(
    block: &Block,
    prev: &Block,
    owner_pk: Option<&PublicKey>,
) -> Result<(), BlockFault> {
    if prev.meta.index.checked_add(1) != Some(block.meta.index) {
        return Err(BlockFault::Index {
            prev: prev.meta.index,
            found: block.meta.index,
        });
    }
    if block.meta.prev_hash != prev.hash {
        return Err(BlockFault::PrevHash {
            expected: prev.hash.clone(),
            found: block.meta.prev_hash.clone(),
        });
    }
    if block.meta.timestamp < prev.meta.timestamp {
        return Err(BlockFault::Timestamp {
            prev: prev.meta.timestamp,
            found: block.meta.timestamp,
        });
    }
    let computed = block.recompute_hash();
    if computed != block.hash {
        return Err(BlockFault::Hash {
            stored: block.hash.clone(),
            computed,
        });
    }
    let (Some(data), Some(signature)) = (&block.data, &block.signature) else {
        return Err(BlockFault::MissingPayload);
    };
    data.validate()?;
    if let Some(pk) = owner_pk {
        if !crypto::verify(pk, &data.canonical_bytes(), signature) {
            return Err(BlockFault::Signature);
        }
    }
    Ok(())
}

fn validate_genesis(genesis: &Block) -> Result<(), BlockFault> {
    if genesis.meta.index != 0 {
        return Err(BlockFault::Genesis("index is not 0"));
    }
    if genesis.meta.prev_hash != Digest::zero() {
        return Err(BlockFault::Genesis("prev_hash is not all zeros"));
    }
    if genesis.data.is_some() || genesis.signature.is_some() {
        return Err(BlockFault::Genesis("carries a payload"));
    }
    let computed = genesis.recompute_hash();
    if computed != genesis.hash {
        return Err(BlockFault::Hash {
            stored: genesis.hash.clone(),
            computed,
        });
    }
    Ok(())
}

/// Structural validation of a whole chain. Owner signatures are not checked.
pub fn validate_chain(chain: &Blockchain) -> Result<(), ChainFault> {
    let at = |index: usize| {
        move |fault: BlockFault| ChainFault {
            index,
            cause: fault.cause(),
            fault,
        }
    };
    validate_genesis(chain.genesis()).map_err(at(0))?;
    for (i, pair) in chain.blocks.windows(2).enumerate() {
        validate_block(&pair[1], &pair[0], None).map_err(at(i + 1))?;
    }
    Ok(())
}

/// The longest-valid-chain rule. `remote` wins only when it is strictly
/// longer, shares `local`'s genesis, and validates; ties keep `local`.
pub fn choose_chain<'a>(local: &'a Blockchain, remote: &'a Blockchain) -> &'a Blockchain {
    if remote.len() > local.len()
        && remote.genesis().hash == local.genesis().hash
        && validate_chain(remote).is_ok()
    {
        remote
    } else {
        local
    }
}

/// An ordered list of blocks starting at genesis, with an index from
/// `node_id` to block position.
#[derive(Clone, Debug)]
pub struct Blockchain {
    blocks: Vec<Block>,
    by_node: HashMap<String, usize>,
}

impl PartialEq for Blockchain {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl Eq for Blockchain {}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDocument {
    blocks: Vec<Block>,
}

impl Blockchain {
    /// A chain holding only the genesis block.
    pub fn new(genesis_timestamp: u64) -> Self {
        Blockchain {
            blocks: vec![Block::genesis(genesis_timestamp)],
            by_node: HashMap::new(),
        }
    }

    /// Wraps existing blocks without validating them; use [`validate_chain`]
    /// on anything that came from outside. Only the uniqueness of `node_id`
    /// is enforced, since the lookup index depends on it.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self, LedgerError> {
        if blocks.is_empty() {
            return Err(LedgerError::Empty);
        }
        let mut by_node = HashMap::with_capacity(blocks.len());
        for (pos, block) in blocks.iter().enumerate() {
            if let Some(id) = block.node_id() {
                if by_node.insert(id.to_owned(), pos).is_some() {
                    return Err(LedgerError::DuplicateDevice(id.to_owned()));
                }
            }
        }
        Ok(Blockchain { blocks, by_node })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    /// Always false: a chain has at least its genesis block.
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn find_device(&self, node_id: &str) -> Option<&Block> {
        self.by_node.get(node_id).map(|&pos| &self.blocks[pos])
    }

    /// Builds the next block on top of the current tip. The signature is
    /// stored as given; nothing here checks it.
    pub fn make_block(
        &self,
        record: DeviceRecord,
        signature: Signature,
        timestamp: u64,
    ) -> Result<Block, LedgerError> {
        let tip = self.tip();
        if timestamp < tip.meta.timestamp {
            return Err(LedgerError::StaleTimestamp {
                tip: tip.meta.timestamp,
                found: timestamp,
            });
        }
        let meta = BlockMeta {
            index: tip.meta.index + 1,
            prev_hash: tip.hash.clone(),
            timestamp,
        };
        let data = Some(record);
        let signature = Some(signature);
        let hash = Block::compute_hash(&meta, &data, &signature);
        Ok(Block {
            meta,
            data,
            signature,
            hash,
        })
    }

    /// Appends in place. On error the chain is left untouched.
    pub fn try_append(&mut self, block: Block) -> Result<(), LedgerError> {
        validate_block(&block, self.tip(), None)?;
        let node_id = block
            .node_id()
            .expect("validated block has data")
            .to_owned();
        if self.by_node.contains_key(&node_id) {
            return Err(LedgerError::DuplicateDevice(node_id));
        }
        self.by_node.insert(node_id, self.blocks.len());
        self.blocks.push(block);
        Ok(())
    }

    /// Returns a new chain with `block` appended, leaving `self` as it was.
    pub fn append_block(&self, block: Block) -> Result<Blockchain, LedgerError> {
        let mut next = self.clone();
        next.try_append(block)?;
        Ok(next)
    }

    /// Canonical JSON document `{"blocks":[...]}`.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let doc = ChainDocument {
            blocks: self.blocks.clone(),
        };
        canonical::to_canonical_vec(&doc).expect("blocks are canonical-safe")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, LedgerError> {
        let doc: ChainDocument = serde_json::from_slice(bytes)?;
        Self::from_blocks(doc.blocks)
    }
}

pub fn new_chain(genesis_timestamp: u64) -> Blockchain {
    Blockchain::new(genesis_timestamp)
}

/// A chain shared between threads: one writer at a time, any number of
/// concurrent readers.
#[derive(Clone, Debug)]
pub struct SharedChain(Arc<RwLock<Blockchain>>);

impl SharedChain {
    pub fn new(chain: Blockchain) -> Self {
        SharedChain(Arc::new(RwLock::new(chain)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Blockchain> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> Blockchain {
        self.read().clone()
    }

    pub fn append(&self, block: Block) -> Result<(), LedgerError> {
        self.0
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .try_append(block)
    }

    /// Swaps in `candidate` if it wins under [`choose_chain`]. Returns whether
    /// it was adopted.
    pub fn offer(&self, candidate: &Blockchain) -> bool {
        let mut guard = self.0.write().unwrap_or_else(|e| e.into_inner());
        let adopt = std::ptr::eq(choose_chain(&guard, candidate), candidate);
        if adopt {
            *guard = candidate.clone();
        }
        adopt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, sign, KeyPair};
    use proptest::prelude::*;

    fn pair(seed: u8) -> KeyPair {
        generate_keypair(Some(&[seed; 32])).unwrap()
    }

    fn signed_block(chain: &Blockchain, node: &str, owner: &KeyPair, ts: u64) -> Block {
        let record = DeviceRecord::new(node, "alice", &pair(99).public_key).unwrap();
        let sig = sign(&owner.private_key, &record.canonical_bytes());
        chain.make_block(record, sig, ts).unwrap()
    }

    fn chain_of(n: usize) -> Blockchain {
        let owner = pair(0);
        let mut chain = Blockchain::new(0);
        for i in 1..n {
            let block = signed_block(&chain, &format!("dev-{i:02}"), &owner, 100 + i as u64);
            chain.try_append(block).unwrap();
        }
        chain
    }

    #[test]
    fn genesis_is_deterministic() {
        let a = new_chain(0);
        let b = new_chain(0);
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
        assert_eq!(a.genesis().meta.prev_hash.as_str(), "0".repeat(64));
        assert!(validate_chain(&a).is_ok());
    }

    #[test]
    fn make_block_links_to_tip() {
        let chain = new_chain(0);
        let block = signed_block(&chain, "dev-01", &pair(0), 5);
        assert_eq!(block.meta.index, 1);
        assert_eq!(block.meta.prev_hash, chain.tip().hash);
        assert_eq!(
            validate_block(&block, chain.tip(), Some(&pair(0).public_key)),
            Ok(())
        );
    }

    #[test]
    fn make_block_rejects_stale_timestamp() {
        let mut chain = new_chain(10);
        let b = signed_block(&chain, "a", &pair(0), 10);
        chain.try_append(b).unwrap();
        let record = DeviceRecord::new("b", "alice", &pair(1).public_key).unwrap();
        let sig = sign(&pair(0).private_key, &record.canonical_bytes());
        assert!(matches!(
            chain.make_block(record, sig, 9),
            Err(LedgerError::StaleTimestamp { tip: 10, found: 9 })
        ));
    }

    #[test]
    fn stale_hash_after_tamper() {
        let chain = new_chain(0);
        let mut block = signed_block(&chain, "dev-01", &pair(0), 5);
        block.data.as_mut().unwrap().owner_username = "mallory".into();
        let fault = validate_block(&block, chain.tip(), None).unwrap_err();
        assert_eq!(fault.cause(), FaultCause::Hash);
    }

    #[test]
    fn rehashed_tamper_fails_signature() {
        let chain = new_chain(0);
        let owner = pair(0);
        let mut block = signed_block(&chain, "dev-01", &owner, 5);
        block.data.as_mut().unwrap().owner_username = "mallory".into();
        block.hash = block.recompute_hash();
        assert_eq!(validate_block(&block, chain.tip(), None), Ok(()));
        assert_eq!(
            validate_block(&block, chain.tip(), Some(&owner.public_key)),
            Err(BlockFault::Signature)
        );
    }

    #[test]
    fn append_rules() {
        let owner = pair(0);
        let chain = new_chain(0);
        let b1 = signed_block(&chain, "dev-01", &owner, 1);
        let chain = chain.append_block(b1).unwrap();
        assert_eq!(chain.len(), 2);

        let dup = signed_block(&chain, "dev-01", &owner, 2);
        assert!(
            matches!(chain.append_block(dup), Err(LedgerError::DuplicateDevice(id)) if id == "dev-01")
        );

        let mut skip = signed_block(&chain, "dev-02", &owner, 2);
        skip.meta.prev_hash = chain.genesis().hash.clone();
        skip.hash = skip.recompute_hash();
        let err = chain.append_block(skip).unwrap_err();
        assert!(matches!(err, LedgerError::Rejected(ref f) if f.cause() == FaultCause::Linkage));
        assert_eq!(chain.len(), 2);
    }

    #[test]
    fn append_leaves_original_untouched() {
        let chain = chain_of(3);
        let before = chain.to_canonical_json();
        let next = chain
            .append_block(signed_block(&chain, "extra", &pair(0), 1_000))
            .unwrap();
        assert_eq!(chain.to_canonical_json(), before);
        assert_eq!(next.len(), 4);
        assert_eq!(&next.blocks()[..3], chain.blocks());
    }

    #[test]
    fn swapped_blocks_fail_linkage() {
        let chain = chain_of(6);
        let mut blocks = chain.blocks().to_vec();
        blocks.swap(2, 3);
        let swapped = Blockchain::from_blocks(blocks).unwrap();
        let fault = validate_chain(&swapped).unwrap_err();
        assert_eq!(fault.cause, FaultCause::Linkage);
        assert_eq!(fault.index, 2);
    }

    #[test]
    fn lookup() {
        let chain = chain_of(5);
        assert_eq!(chain.find_device("dev-03").unwrap().meta.index, 3);
        assert!(chain.find_device("dev-99").is_none());
        assert!(chain.find_device("").is_none());
    }

    #[test]
    fn longest_valid_chain_rule() {
        let local = chain_of(5);
        let remote = chain_of(7);
        assert!(std::ptr::eq(choose_chain(&local, &remote), &remote));
        assert!(std::ptr::eq(choose_chain(&remote, &local), &remote));

        let mut blocks = chain_of(9).into_blocks();
        blocks[4].meta.timestamp += 1;
        let tampered = Blockchain::from_blocks(blocks).unwrap();
        assert!(std::ptr::eq(choose_chain(&local, &tampered), &local));

        let other = chain_of(5);
        assert!(std::ptr::eq(choose_chain(&local, &other), &local));
    }

    #[test]
    fn different_genesis_never_adopted() {
        let local = new_chain(0);
        let foreign = Blockchain::new(1);
        let foreign = foreign
            .append_block(signed_block(&foreign, "x", &pair(0), 2))
            .unwrap();
        assert!(std::ptr::eq(choose_chain(&local, &foreign), &local));
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let chain = chain_of(4);
        let bytes = chain.to_canonical_json();
        let loaded = Blockchain::from_json(&bytes).unwrap();
        assert_eq!(loaded, chain);
        assert_eq!(loaded.to_canonical_json(), bytes);
        assert!(validate_chain(&loaded).is_ok());
    }

    #[test]
    fn duplicate_node_ids_rejected_on_load() {
        let chain = chain_of(3);
        let mut blocks = chain.into_blocks();
        let dup = blocks[1].clone();
        blocks.push(dup);
        assert!(matches!(
            Blockchain::from_blocks(blocks),
            Err(LedgerError::DuplicateDevice(_))
        ));
    }

    #[test]
    fn shared_chain_offer_and_append() {
        let shared = SharedChain::new(chain_of(2));
        assert!(!shared.offer(&chain_of(2)));
        assert!(shared.offer(&chain_of(4)));
        assert_eq!(shared.read().len(), 4);
        let next = signed_block(&shared.snapshot(), "late", &pair(0), 10_000);
        shared.append(next).unwrap();
        assert_eq!(shared.read().len(), 5);
    }

    #[test]
    fn lookups_scale() {
        let chain = chain_of(10_000);
        let start = std::time::Instant::now();
        let mut hits = 0usize;
        for i in 0..100_000usize {
            let id = format!("dev-{:02}", 1 + i % 9_999);
            hits += chain.find_device(&id).is_some() as usize;
        }
        assert_eq!(hits, 100_000);
        assert!(
            start.elapsed() < std::time::Duration::from_secs(1),
            "{:?}",
            start.elapsed()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn append_only(n in 1usize..12) {
            let owner = pair(0);
            let mut chain = Blockchain::new(0);
            let mut seen = Vec::new();
            for i in 0..n {
                let block = signed_block(&chain, &format!("n{i}"), &owner, i as u64);
                chain = chain.append_block(block.clone()).unwrap();
                seen.push(block);
            }
            prop_assert_eq!(&chain.blocks()[1..], &seen[..]);
        }

        #[test]
        fn field_mutation_detected(field in 0usize..6, delta in 1u64..1000) {
            let chain = new_chain(0);
            let block = signed_block(&chain, "dev-01", &pair(0), 50);
            let mut bad = block.clone();
            let data = bad.data.as_mut().unwrap();
            match field {
                0 => bad.meta.index += delta,
                1 => bad.meta.timestamp += delta,
                2 => data.node_id.push('x'),
                3 => data.owner_username.push('x'),
                4 => bad.signature.as_mut().unwrap().bytes[(delta % 64) as usize] ^= 1,
                _ => bad.meta.prev_hash = crypto::hash_bytes(&delta.to_le_bytes()),
            }
            prop_assert!(validate_block(&bad, chain.tip(), None).is_err());
        }
    }
}
