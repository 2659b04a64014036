use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::Url;

use super::wire::{self, LOOKUP_PATH};
use super::{IdentityError, IdentityProfile, IdentityProvider};

/// Blocking client for the Keybase `user/lookup` endpoint, or anything that
/// serves the same shape.
///
/// Connection failures, timeouts and 5xx answers are
/// [`IdentityError::Transport`]; any answer that cannot be decoded is
/// [`IdentityError::Protocol`].
#[derive(Debug, Clone)]
pub struct KeybaseClient {
    endpoint: Url,
    http: Client,
}

impl KeybaseClient {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, IdentityError> {
        let base = Url::parse(base_url)
            .map_err(|e| IdentityError::Transport(format!("bad base URL {base_url:?}: {e}")))?;
        let endpoint = base
            .join(LOOKUP_PATH)
            .map_err(|e| IdentityError::Transport(format!("bad base URL {base_url:?}: {e}")))?;
        let http = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| IdentityError::Transport(e.to_string()))?;
        Ok(KeybaseClient { endpoint, http })
    }

    pub fn endpoint(&self) -> &Url {
        &self.endpoint
    }
}

impl IdentityProvider for KeybaseClient {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError> {
        let mut url = self.endpoint.clone();
        url.query_pairs_mut().append_pair("usernames", username);
        let response = self
            .http
            .get(url)
            .send()
            .map_err(|e| IdentityError::Transport(format!("{}: {e}", self.endpoint)))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(IdentityError::Transport(format!(
                "server answered {status}"
            )));
        }
        let body = response
            .bytes()
            .map_err(|e| IdentityError::Transport(format!("reading body: {e}")))?;
        if !status.is_success() {
            return Err(IdentityError::Protocol(format!(
                "server answered {status}: {}",
                String::from_utf8_lossy(&body)
            )));
        }
        wire::decode_lookup(&body, username)
    }
}
