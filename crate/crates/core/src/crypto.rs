//! Keys, detached signatures and SHA-256 digests.
//!
//! | Primitive | Algorithm | Text form                         |
//! |-----------|-----------|-----------------------------------|
//! | Signature | Ed25519   | base64 (standard alphabet, padded) |
//! | Digest    | SHA-256   | 64 lowercase hex characters        |
//!
//! Every signature carries a `scheme_id` so that a second scheme can be added
//! without changing stored blocks.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// Identifier of the only signature scheme currently implemented.
pub const ED25519: &str = "ed25519";

/// Length in bytes of a key-generation seed.
pub const SEED_LEN: usize = 32;

const KEY_FILE_MAGIC: &str = "chainpki-key";

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("seed must be {SEED_LEN} bytes, got {0}")]
    SeedLength(usize),
    #[error("invalid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("invalid public key material")]
    InvalidPublicKey,
    #[error("invalid private key material")]
    InvalidPrivateKey,
    #[error("unsupported signature scheme {0:?}")]
    UnsupportedScheme(String),
    #[error("malformed key file: {0}")]
    KeyFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// Digest
// ---------------------------------------------------------------------------

/// SHA-256 output as 64 lowercase hex characters.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(String);

impl Digest {
    /// All-zero digest, the predecessor hash of a genesis block.
    pub fn zero() -> Self {
        Digest("0".repeat(64))
    }

    pub fn parse(hex: &str) -> Option<Self> {
        let ok = hex.len() == 64 && hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| Digest(hex.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First `n` characters, for display.
    pub fn short(&self, n: usize) -> &str {
        &self.0[..n.min(64)]
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.0)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("not a SHA-256 hex digest: {s:?}")))
    }
}

/// SHA-256 of `data`.
pub fn hash_bytes(data: &[u8]) -> Digest {
    Digest(hex::encode(Sha256::digest(data)))
}

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn scheme_id(&self) -> &'static str {
        ED25519
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let raw: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidPublicKey)?;
        VerifyingKey::from_bytes(&raw)
            .map(PublicKey)
            .map_err(|_| CryptoError::InvalidPublicKey)
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.as_bytes())
    }

    pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(&B64.decode(text.trim())?)
    }

    /// Accepts either bare base64 or the contents of a public key file.
    pub fn parse_text(text: &str) -> Result<Self, CryptoError> {
        let text = text.trim();
        if text.starts_with(KEY_FILE_MAGIC) {
            match parse_key_file(text)? {
                KeyMaterial::Public(pk) => Ok(pk),
                KeyMaterial::Private(_) => Err(CryptoError::KeyFile(
                    "expected a public key, found a private key".into(),
                )),
            }
        } else {
            Self::from_base64(text)
        }
    }

    /// SHA-256 over the raw public key bytes.
    pub fn fingerprint(&self) -> Digest {
        hash_bytes(self.as_bytes())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_base64())
    }
}

#[derive(Clone)]
pub struct PrivateKey(SigningKey);

impl PrivateKey {
    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key())
    }

    pub fn from_seed(seed: &[u8]) -> Result<Self, CryptoError> {
        let raw: [u8; SEED_LEN] = seed
            .try_into()
            .map_err(|_| CryptoError::SeedLength(seed.len()))?;
        Ok(PrivateKey(SigningKey::from_bytes(&raw)))
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.0.to_bytes())
    }

    pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
        let bytes = B64.decode(text.trim())?;
        Self::from_seed(&bytes).map_err(|_| CryptoError::InvalidPrivateKey)
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub private_key: PrivateKey,
    pub key_fingerprint: Digest,
}

impl KeyPair {
    pub fn from_private(private_key: PrivateKey) -> Self {
        let public_key = private_key.public_key();
        KeyPair {
            key_fingerprint: public_key.fingerprint(),
            public_key,
            private_key,
        }
    }
}

/// Generate a key pair, deterministically when `seed` is given.
///
/// Without a seed the key is drawn from the thread-local CSPRNG, which is
/// seeded from the operating system.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair, CryptoError> {
    let private_key = match seed {
        Some(seed) => PrivateKey::from_seed(seed)?,
        None => {
            let mut fresh = [0u8; SEED_LEN];
            rand::rng().fill_bytes(&mut fresh);
            PrivateKey::from_seed(&fresh)?
        }
    };
    Ok(KeyPair::from_private(private_key))
}

// ---------------------------------------------------------------------------
// Signatures
// ---------------------------------------------------------------------------

/// Detached signature. Serialized as `{"scheme_id": ..., "value": <base64>}`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub scheme_id: String,
    #[serde(rename = "value", with = "base64_bytes")]
    pub bytes: Vec<u8>,
}

impl Signature {
    pub fn new(scheme_id: impl Into<String>, bytes: Vec<u8>) -> Self {
        Signature {
            scheme_id: scheme_id.into(),
            bytes,
        }
    }

    pub fn to_base64(&self) -> String {
        B64.encode(&self.bytes)
    }

    pub fn from_base64(scheme_id: &str, text: &str) -> Result<Self, CryptoError> {
        Ok(Signature::new(scheme_id, B64.decode(text)?))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}:{})", self.scheme_id, self.to_base64())
    }
}

mod base64_bytes {
    use super::B64;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        B64.decode(text).map_err(serde::de::Error::custom)
    }
}

/// Ed25519 signatures are deterministic: the same key and message always
/// produce the same signature.
pub fn sign(private_key: &PrivateKey, message: &[u8]) -> Signature {
    Signature::new(ED25519, private_key.0.sign(message).to_bytes().to_vec())
}

/// Never fails: unknown schemes, wrong lengths and forged bytes all give `false`.
pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    if signature.scheme_id != ED25519 {
        return false;
    }
    let Ok(raw) = <[u8; 64]>::try_from(signature.bytes.as_slice()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&raw);
    public_key.0.verify_strict(message, &sig).is_ok()
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------

/// Contents of a key file: a header line `chainpki-key <scheme_id> <public|private>`
/// followed by one line of base64.
#[derive(Debug)]
pub enum KeyMaterial {
    Public(PublicKey),
    Private(PrivateKey),
}

pub fn encode_public_key_file(key: &PublicKey) -> String {
    format!(
        "{KEY_FILE_MAGIC} {} public\n{}\n",
        key.scheme_id(),
        key.to_base64()
    )
}

pub fn encode_private_key_file(key: &PrivateKey) -> String {
    format!("{KEY_FILE_MAGIC} {ED25519} private\n{}\n", key.to_base64())
}

pub fn parse_key_file(text: &str) -> Result<KeyMaterial, CryptoError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CryptoError::KeyFile("empty file".into()))?;
    let body = lines
        .next()
        .ok_or_else(|| CryptoError::KeyFile("missing key line".into()))?;
    if lines.next().is_some() {
        return Err(CryptoError::KeyFile("trailing content".into()));
    }
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, scheme, kind] = fields.as_slice() else {
        return Err(CryptoError::KeyFile(format!("bad header {header:?}")));
    };
    if *magic != KEY_FILE_MAGIC {
        return Err(CryptoError::KeyFile(format!("bad header {header:?}")));
    }
    if *scheme != ED25519 {
        return Err(CryptoError::UnsupportedScheme(scheme.to_string()));
    }
    match *kind {
        "public" => PublicKey::from_base64(body).map(KeyMaterial::Public),
        "private" => PrivateKey::from_base64(body).map(KeyMaterial::Private),
        other => Err(CryptoError::KeyFile(format!("unknown key kind {other:?}"))),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CryptoError + '_ {
    move |source| CryptoError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_public_key_file(path: &Path) -> Result<PublicKey, CryptoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match parse_key_file(&text)? {
        KeyMaterial::Public(pk) => Ok(pk),
        KeyMaterial::Private(sk) => Ok(sk.public_key()),
    }
}

pub fn read_private_key_file(path: &Path) -> Result<PrivateKey, CryptoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match parse_key_file(&text)? {
        KeyMaterial::Private(sk) => Ok(sk),
        KeyMaterial::Public(_) => Err(CryptoError::KeyFile(format!(
            "{} holds a public key",
            path.display()
        ))),
    }
}

/// Write both halves of `pair` next to each other. Fails if either file
/// exists unless `overwrite` is set. The private key file is created `0600`
/// on Unix.
pub fn write_key_files(
    pair: &KeyPair,
    public_path: &Path,
    private_path: &Path,
    overwrite: bool,
) -> Result<(), CryptoError> {
    if !overwrite {
        for path in [public_path, private_path] {
            if path.exists() {
                return Err(io_err(path)(std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "refusing to overwrite existing key file",
                )));
            }
        }
    }
    write_file(
        private_path,
        &encode_private_key_file(&pair.private_key),
        true,
    )?;
    write_file(
        public_path,
        &encode_public_key_file(&pair.public_key),
        false,
    )
}

fn write_file(path: &Path, contents: &str, owner_only: bool) -> Result<(), CryptoError> {
    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        if owner_only {
            options.mode(0o600);
        }
    }
    #[cfg(not(unix))]
    let _ = owner_only;
    let mut file = options.open(path).map_err(io_err(path))?;
    #[cfg(unix)]
    if owner_only {
        // mode() only applies on creation; tighten an overwritten file too
        use std::os::unix::fs::PermissionsExt;
        file.set_permissions(fs::Permissions::from_mode(0o600))
            .map_err(io_err(path))?;
    }
    file.write_all(contents.as_bytes()).map_err(io_err(path))?;
    file.sync_all().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S0: [u8; 32] = [0; 32];
    const S1: [u8; 32] = [1; 32];

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = generate_keypair(Some(&S0)).unwrap();
        let b = generate_keypair(Some(&S0)).unwrap();
        assert_eq!(a.public_key, b.public_key);
        assert_eq!(a.key_fingerprint, b.key_fingerprint);
        assert_eq!(a.private_key.to_base64(), b.private_key.to_base64());
    }

    #[test]
    fn distinct_seeds_distinct_keys() {
        let a = generate_keypair(Some(&S0)).unwrap();
        let b = generate_keypair(Some(&S1)).unwrap();
        assert_ne!(a.key_fingerprint, b.key_fingerprint);
    }

    #[test]
    fn unseeded_keys_differ() {
        let a = generate_keypair(None).unwrap();
        let b = generate_keypair(None).unwrap();
        assert_ne!(a.public_key, b.public_key);
    }

    #[test]
    fn bad_seed_length() {
        assert!(matches!(
            generate_keypair(Some(&[0u8; 31])),
            Err(CryptoError::SeedLength(31))
        ));
        assert!(generate_keypair(Some(&[])).is_err());
    }

    #[test]
    fn every_flipped_bit_in_suffix_fails() {
        let pair = generate_keypair(Some(&S0)).unwrap();
        let mut msg = b"device record".to_vec();
        msg.push(0x5a);
        let sig = sign(&pair.private_key, &msg);
        assert!(verify(&pair.public_key, &msg, &sig));
        let last = msg.len() - 1;
        for bit in 0..8 {
            let mut tampered = msg.clone();
            tampered[last] ^= 1 << bit;
            assert!(!verify(&pair.public_key, &tampered, &sig), "bit {bit}");
        }
    }

    #[test]
    fn wrong_key_fails() {
        let a = generate_keypair(Some(&S0)).unwrap();
        let b = generate_keypair(Some(&S1)).unwrap();
        let sig = sign(&a.private_key, b"hello");
        assert!(!verify(&b.public_key, b"hello", &sig));
    }

    #[test]
    fn garbage_signatures_are_false() {
        let pair = generate_keypair(Some(&S0)).unwrap();
        let good = sign(&pair.private_key, b"m");
        let cases = [
            Signature::new(ED25519, vec![0; 64]),
            Signature::new(ED25519, vec![]),
            Signature::new(ED25519, good.bytes[..63].to_vec()),
            Signature::new(ED25519, [good.bytes.clone(), vec![0]].concat()),
            Signature::new("rsa", good.bytes.clone()),
        ];
        for sig in &cases {
            assert!(!verify(&pair.public_key, b"m", sig), "{sig:?}");
        }
    }

    #[test]
    fn cross_verification_matrix_is_identity() {
        let pair = generate_keypair(Some(&S1)).unwrap();
        let messages: Vec<Vec<u8>> = (0u8..10).map(|i| vec![i; (i as usize) + 1]).collect();
        let sigs: Vec<_> = messages
            .iter()
            .map(|m| sign(&pair.private_key, m))
            .collect();
        for (i, m) in messages.iter().enumerate() {
            for (j, s) in sigs.iter().enumerate() {
                assert_eq!(
                    verify(&pair.public_key, m, s),
                    i == j,
                    "message {i} sig {j}"
                );
            }
        }
    }

    #[test]
    fn sha256_empty_vector() {
        assert_eq!(
            hash_bytes(b"").as_str(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn digest_parse_rejects_bad_input() {
        assert!(Digest::parse(&"A".repeat(64)).is_none());
        assert!(Digest::parse(&"0".repeat(63)).is_none());
        assert!(Digest::parse(&"g".repeat(64)).is_none());
        assert_eq!(Digest::parse(&"0".repeat(64)), Some(Digest::zero()));
    }

    #[test]
    fn key_file_round_trip() {
        let pair = generate_keypair(Some(&S1)).unwrap();
        let text = encode_public_key_file(&pair.public_key);
        assert!(text.starts_with("chainpki-key ed25519 public\n"));
        assert!(
            matches!(parse_key_file(&text).unwrap(), KeyMaterial::Public(pk) if pk == pair.public_key)
        );
        let text = encode_private_key_file(&pair.private_key);
        let KeyMaterial::Private(sk) = parse_key_file(&text).unwrap() else {
            panic!()
        };
        assert_eq!(sk.public_key(), pair.public_key);
        assert!(parse_key_file("chainpki-key rsa public\nAAAA\n").is_err());
        assert!(parse_key_file("hello\n").is_err());
    }

    #[cfg(unix)]
    #[test]
    fn private_key_file_is_owner_only() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let pair = generate_keypair(Some(&S0)).unwrap();
        let (pub_path, key_path) = (dir.path().join("k.pub"), dir.path().join("k.key"));
        write_key_files(&pair, &pub_path, &key_path, false).unwrap();
        let mode = fs::metadata(&key_path).unwrap().permissions().mode() & 0o777;
        assert_eq!(mode, 0o600);
        assert!(write_key_files(&pair, &pub_path, &key_path, false).is_err());
        assert_eq!(
            read_private_key_file(&key_path).unwrap().public_key(),
            pair.public_key
        );
        assert_eq!(read_public_key_file(&pub_path).unwrap(), pair.public_key);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn sign_verify_round_trip(seed in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..256)) {
            let pair = generate_keypair(Some(&seed)).unwrap();
            let sig = sign(&pair.private_key, &msg);
            prop_assert!(verify(&pair.public_key, &msg, &sig));
            let restored = Signature::from_base64(&sig.scheme_id, &sig.to_base64()).unwrap();
            prop_assert_eq!(restored, sig);
        }

        #[test]
        fn verify_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..130), msg in proptest::collection::vec(any::<u8>(), 0..32)) {
            let pair = generate_keypair(Some(&S0)).unwrap();
            let _ = verify(&pair.public_key, &msg, &Signature::new(ED25519, bytes));
        }
    }

    proptest! {
        #[test]
        fn one_byte_mutation_changes_digest(data in proptest::collection::vec(any::<u8>(), 1..512), pos in any::<prop::sample::Index>(), delta in 1u8..=255) {
            let mut mutated = data.clone();
            let i = pos.index(data.len());
            mutated[i] = mutated[i].wrapping_add(delta);
            prop_assert_ne!(hash_bytes(&data), hash_bytes(&mutated));
        }
    }
}
