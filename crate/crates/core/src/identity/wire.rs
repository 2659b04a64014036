//! The Keybase `user/lookup` response shape, reduced to the fields the
//! verifier reads:
//!
//! ```text
//! GET /_/api/1.0/user/lookup.json?usernames=<u>
//! {"status":{"code":0},
//!  "them":[{"basics":{"username":"alice"},
//!           "public_keys":{"primary":{"bundle":"<key text>"}},
//!           "proofs_summary":{"all":[{"proof_type":"github","nametag":"alice","state":1}]}}]}
//! ```
//!
//! An unknown user yields `"them":[]`. Keybase itself may answer with
//! `"them":[null]` or status code 205 (`NOT_FOUND`); both decode as not found.
//! Proof states are Keybase's numeric codes: 1 is valid; 2, 4, 6 and 11
//! (temporary failure, looking, posted, unchecked) are pending; anything else
//! is broken.

use serde::{Deserialize, Serialize};

use super::{IdentityError, IdentityProfile, Proof, ProofState, ProofType};

pub const LOOKUP_PATH: &str = "/_/api/1.0/user/lookup.json";

const STATUS_OK: i64 = 0;
const STATUS_NOT_FOUND: i64 = 205;

#[derive(Debug, Serialize, Deserialize)]
pub struct LookupResponse {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub them: Option<Vec<Option<Them>>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Status {
    pub code: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Them {
    pub basics: Basics,
    #[serde(default)]
    pub public_keys: Option<PublicKeys>,
    #[serde(default)]
    pub proofs_summary: Option<ProofsSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Basics {
    pub username: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PublicKeys {
    #[serde(default)]
    pub primary: Option<PrimaryKey>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PrimaryKey {
    pub bundle: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProofsSummary {
    #[serde(default)]
    pub all: Vec<WireProof>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireProof {
    pub proof_type: String,
    pub nametag: String,
    pub state: WireState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireState {
    Code(i64),
    Name(String),
}

pub fn state_from_wire(state: &WireState) -> ProofState {
    match state {
        WireState::Code(1) => ProofState::Valid,
        WireState::Code(2 | 4 | 6 | 11) => ProofState::Pending,
        WireState::Code(_) => ProofState::Broken,
        WireState::Name(name) => match name.to_ascii_lowercase().as_str() {
            "valid" | "ok" => ProofState::Valid,
            "pending" => ProofState::Pending,
            _ => ProofState::Broken,
        },
    }
}

pub fn state_to_wire(state: ProofState) -> WireState {
    WireState::Code(match state {
        ProofState::Valid => 1,
        ProofState::Pending => 4,
        ProofState::Broken => 3,
    })
}

fn type_to_wire(t: &ProofType) -> &str {
    match t {
        ProofType::Website => "generic_web_site",
        other => other.as_str(),
    }
}

impl From<&IdentityProfile> for Them {
    fn from(p: &IdentityProfile) -> Self {
        Them {
            basics: Basics {
                username: p.username.clone(),
            },
            public_keys: Some(PublicKeys {
                primary: Some(PrimaryKey {
                    bundle: p.public_key.clone(),
                }),
            }),
            proofs_summary: Some(ProofsSummary {
                all: p
                    .proofs
                    .iter()
                    .map(|proof| WireProof {
                        proof_type: type_to_wire(&proof.proof_type).to_owned(),
                        nametag: proof.handle.clone(),
                        state: state_to_wire(proof.state),
                    })
                    .collect(),
            }),
        }
    }
}

impl From<Them> for IdentityProfile {
    fn from(them: Them) -> Self {
        let public_key = them
            .public_keys
            .and_then(|k| k.primary)
            .map(|p| p.bundle)
            .unwrap_or_default();
        let proofs = them
            .proofs_summary
            .map(|s| s.all)
            .unwrap_or_default()
            .into_iter()
            .map(|w| {
                Proof::new(
                    w.proof_type.parse().unwrap_or_else(|never| match never {}),
                    w.nametag,
                    state_from_wire(&w.state),
                )
            })
            .collect();
        IdentityProfile {
            username: them.basics.username,
            public_key,
            proofs,
        }
    }
}

pub fn encode_found(profiles: &[IdentityProfile]) -> LookupResponse {
    LookupResponse {
        status: Status {
            code: STATUS_OK,
            desc: None,
        },
        them: Some(profiles.iter().map(|p| Some(Them::from(p))).collect()),
    }
}

pub fn encode_error(code: i64, desc: &str) -> LookupResponse {
    LookupResponse {
        status: Status {
            code,
            desc: Some(desc.to_owned()),
        },
        them: None,
    }
}

/// Decodes a lookup body for a single requested `username`.
pub fn decode_lookup(
    body: &[u8],
    username: &str,
) -> Result<Option<IdentityProfile>, IdentityError> {
    let response: LookupResponse = serde_json::from_slice(body)
        .map_err(|e| IdentityError::Protocol(format!("undecodable lookup response: {e}")))?;
    match response.status.code {
        STATUS_OK => {}
        STATUS_NOT_FOUND => return Ok(None),
        code => {
            return Err(IdentityError::Protocol(format!(
                "lookup status {code}: {}",
                response.status.desc.unwrap_or_default()
            )))
        }
    }
    let them = response
        .them
        .ok_or_else(|| IdentityError::Protocol("response has no `them` field".into()))?;
    let found: Vec<Them> = them.into_iter().flatten().collect();
    let any = !found.is_empty();
    match found
        .into_iter()
        .find(|t| t.basics.username.eq_ignore_ascii_case(username))
    {
        Some(t) => Ok(Some(t.into())),
        None if !any => Ok(None),
        None => Err(IdentityError::Protocol(format!(
            "response does not describe {username:?}"
        ))),
    }
}
