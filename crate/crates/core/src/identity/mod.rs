//! Identity-provider boundary: who owns a username, which key they publish,
//! and which external accounts they have proven.
//!
//! Two providers implement [`IdentityProvider`]: [`MockProvider`], an
//! in-memory registry, and [`KeybaseClient`], which speaks the Keybase
//! `user/lookup` HTTP shape (against keybase.io or a [`MockServer`]).

mod cache;
mod http;
mod mock;
mod server;
pub mod wire;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use cache::CachedProvider;
pub use http::KeybaseClient;
pub use mock::{MockProvider, RegisterMode};
pub use server::{serve_mock, Fault, MockServer, ServeOptions};

#[derive(Debug, thiserror::Error)]
pub enum IdentityError {
    #[error("username must not be empty")]
    EmptyUsername,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("user {0:?} is already registered")]
    AlreadyRegistered(String),
    #[error("user {0:?} is not registered")]
    NotRegistered(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixtures {path}: {reason}")]
    Fixtures { path: String, reason: String },
}

impl IdentityError {
    /// Transport failures are worth retrying; everything else is not.
    pub fn is_transport(&self) -> bool {
        matches!(self, IdentityError::Transport(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProofType {
    Twitter,
    Github,
    Reddit,
    Facebook,
    Hackernews,
    Dns,
    Website,
    Other(String),
}

impl ProofType {
    pub fn as_str(&self) -> &str {
        match self {
            ProofType::Twitter => "twitter",
            ProofType::Github => "github",
            ProofType::Reddit => "reddit",
            ProofType::Facebook => "facebook",
            ProofType::Hackernews => "hackernews",
            ProofType::Dns => "dns",
            ProofType::Website => "website",
            ProofType::Other(name) => name,
        }
    }
}

impl FromStr for ProofType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "twitter" => ProofType::Twitter,
            "github" => ProofType::Github,
            "reddit" => ProofType::Reddit,
            "facebook" => ProofType::Facebook,
            "hackernews" => ProofType::Hackernews,
            "dns" => ProofType::Dns,
            "website" | "generic_web_site" | "web" | "http" | "https" => ProofType::Website,
            _ => ProofType::Other(lower),
        })
    }
}

impl fmt::Display for ProofType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ProofType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ProofType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProofState {
    Valid,
    Pending,
    Broken,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub proof_type: ProofType,
    pub handle: String,
    pub state: ProofState,
}

impl Proof {
    pub fn new(proof_type: ProofType, handle: impl Into<String>, state: ProofState) -> Self {
        Proof {
            proof_type,
            handle: handle.into(),
            state,
        }
    }

    pub fn valid(proof_type: ProofType, handle: impl Into<String>) -> Self {
        Self::new(proof_type, handle, ProofState::Valid)
    }
}

/// What the provider says about one account. `public_key` is kept as the
/// provider's text; parsing it is the verifier's business.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityProfile {
    pub username: String,
    pub public_key: String,
    #[serde(default)]
    pub proofs: Vec<Proof>,
}

impl IdentityProfile {
    pub fn new(
        username: impl Into<String>,
        public_key: impl Into<String>,
        proofs: Vec<Proof>,
    ) -> Self {
        IdentityProfile {
            username: username.into(),
            public_key: public_key.into(),
            proofs,
        }
    }
}

/// Only `valid` proofs count.
pub fn count_valid_proofs(profile: &IdentityProfile) -> usize {
    profile
        .proofs
        .iter()
        .filter(|p| p.state == ProofState::Valid)
        .count()
}

/// Username lookup. `Ok(None)` means the provider answered and the user does
/// not exist; failures to get an answer are errors.
pub trait IdentityProvider: Send + Sync {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError>;
}

impl<P: IdentityProvider + ?Sized> IdentityProvider for &P {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError> {
        (**self).lookup(username)
    }
}

impl<P: IdentityProvider + ?Sized> IdentityProvider for Arc<P> {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError> {
        (**self).lookup(username)
    }
}

impl<P: IdentityProvider + ?Sized> IdentityProvider for Box<P> {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError> {
        (**self).lookup(username)
    }
}

pub fn lookup_user(
    provider: &dyn IdentityProvider,
    username: &str,
) -> Result<Option<IdentityProfile>, IdentityError> {
    if username.is_empty() {
        return Err(IdentityError::EmptyUsername);
    }
    provider.lookup(username)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Keybase,
    Mock,
}

pub const KEYBASE_URL: &str = "https://keybase.io";
pub const DEFAULT_MOCK_URL: &str = "http://127.0.0.1:8787";
pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;
pub const DEFAULT_CACHE_TTL: Duration = Duration::from_secs(60);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Overrides the kind's default base URL.
    pub base_url: Option<String>,
    pub timeout_ms: u64,
    /// Zero disables caching.
    pub cache_ttl: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Keybase,
            base_url: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            cache_ttl: DEFAULT_CACHE_TTL,
        }
    }
}

impl ProviderConfig {
    pub fn base_url(&self) -> &str {
        match (&self.base_url, self.kind) {
            (Some(url), _) => url,
            (None, ProviderKind::Keybase) => KEYBASE_URL,
            (None, ProviderKind::Mock) => DEFAULT_MOCK_URL,
        }
    }

    /// Both kinds speak the same HTTP shape; only the default URL differs.
    pub fn build(&self) -> Result<CachedProvider<KeybaseClient>, IdentityError> {
        let client = KeybaseClient::new(self.base_url(), Duration::from_millis(self.timeout_ms))?;
        Ok(CachedProvider::new(client, self.cache_ttl))
    }
}
