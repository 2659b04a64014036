use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{IdentityError, IdentityProfile, IdentityProvider};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegisterMode {
    /// Fail if the username is taken.
    New,
    /// Overwrite an existing profile, e.g. after the owner rotates keys.
    Replace,
}

/// In-memory identity provider. Lookups take a read lock; registration takes
/// the write lock.
#[derive(Debug, Default)]
pub struct MockProvider {
    profiles: RwLock<BTreeMap<String, IdentityProfile>>,
    lookups: AtomicUsize,
}

#[derive(Serialize, Deserialize)]
struct FixtureFile {
    profiles: Vec<IdentityProfile>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_profiles(
        profiles: impl IntoIterator<Item = IdentityProfile>,
    ) -> Result<Self, IdentityError> {
        let provider = Self::new();
        for p in profiles {
            provider.register(p, RegisterMode::New)?;
        }
        Ok(provider)
    }

    /// Loads a fixtures file: `{"profiles": [IdentityProfile, ...]}`.
    pub fn from_fixtures(path: &Path) -> Result<Self, IdentityError> {
        let fail = |reason: String| IdentityError::Fixtures {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let file: FixtureFile = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        Self::with_profiles(file.profiles)
    }

    pub fn fixtures_json(&self) -> String {
        let file = FixtureFile {
            profiles: self.read().values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("profiles serialize")
    }

    pub fn register(
        &self,
        profile: IdentityProfile,
        mode: RegisterMode,
    ) -> Result<(), IdentityError> {
        if profile.username.is_empty() {
            return Err(IdentityError::EmptyUsername);
        }
        let mut profiles = self.profiles.write().unwrap_or_else(|e| e.into_inner());
        if mode == RegisterMode::New && profiles.contains_key(&profile.username) {
            return Err(IdentityError::AlreadyRegistered(profile.username));
        }
        profiles.insert(profile.username.clone(), profile);
        Ok(())
    }

    /// Replaces the published key of an existing user, keeping their proofs.
    pub fn replace_key(
        &self,
        username: &str,
        public_key: impl Into<String>,
    ) -> Result<(), IdentityError> {
        let mut profiles = self.profiles.write().unwrap_or_else(|e| e.into_inner());
        let profile = profiles
            .get_mut(username)
            .ok_or_else(|| IdentityError::NotRegistered(username.to_owned()))?;
        profile.public_key = public_key.into();
        Ok(())
    }

    /// Number of lookups served so far.
    pub fn lookup_count(&self) -> usize {
        self.lookups.load(Ordering::Relaxed)
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, IdentityProfile>> {
        self.profiles.read().unwrap_or_else(|e| e.into_inner())
    }
}

impl IdentityProvider for MockProvider {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError> {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        Ok(self.read().get(username).cloned())
    }
}
