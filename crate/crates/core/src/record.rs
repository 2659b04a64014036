use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::canonical;
use crate::crypto::PublicKey;

/// Upper bound, in UTF-8 bytes, on `node_id` and `owner_username`.
pub const MAX_FIELD_BYTES: usize = 256;

/// The payload an owner signs to claim a device: which device, who owns it
/// and the device's own public key (base64).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRecord {
    pub node_id: String,
    pub owner_username: String,
    pub device_public_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{field} is {len} bytes, limit is {MAX_FIELD_BYTES}")]
    TooLong { field: &'static str, len: usize },
    #[error("device_public_key is not a valid public key")]
    DeviceKey,
}

impl DeviceRecord {
    /// Builds a validated record; text fields are stored NFC-normalized.
    pub fn new(
        node_id: &str,
        owner_username: &str,
        device_public_key: &PublicKey,
    ) -> Result<Self, RecordError> {
        let record = DeviceRecord {
            node_id: node_id.nfc().collect(),
            owner_username: owner_username.nfc().collect(),
            device_public_key: device_public_key.to_base64(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        for (field, value) in [
            ("node_id", &self.node_id),
            ("owner_username", &self.owner_username),
        ] {
            if value.is_empty() {
                return Err(RecordError::Empty(field));
            }
            if value.len() > MAX_FIELD_BYTES {
                return Err(RecordError::TooLong {
                    field,
                    len: value.len(),
                });
            }
        }
        PublicKey::from_base64(&self.device_public_key).map_err(|_| RecordError::DeviceKey)?;
        Ok(())
    }

    /// The exact bytes that owners sign.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_vec(self).expect("device records contain only strings")
    }
}
