//! Versioned single-file model bundles with exact round-trip fidelity.
//!
//! Bundles are human-auditable JSON: a format version, free-form provenance,
//! a SHA-256 digest of the canonical model payload, and the payload itself.
//! Floats serialize in shortest round-trip form, so identical models always
//! produce identical bytes. Provenance (which may carry a timestamp) stays
//! outside the digested region. Bundles are pure data; loading validates
//! every invariant and rejects rather than repairs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::hex_prefix;
use crate::moje::MojeModel;

/// Current bundle format version. Unknown versions are rejected at load.
pub const FORMAT_VERSION: &str = "1";

/// Conventional bundle file extension.
pub const BUNDLE_EXTENSION: &str = "moje";

/// Where a bundle came from. `created_at` is supplied by the caller so
/// that saving is a pure function of its inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub seed: u64,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: String,
    pub provenance: Provenance,
    pub payload_sha256: String,
    pub model: MojeModel,
}

/// SHA-256 hex digest of the canonical (compact JSON) model payload.
pub fn payload_digest(model: &MojeModel) -> String {
    let payload = serde_json::to_vec(model).expect("model serialization cannot fail");
    let mut h = Sha256::new();
    h.update(&payload);
    hex_prefix(&h.finalize(), 64)
}

impl ModelBundle {
    pub fn new(model: MojeModel, provenance: Provenance) -> Self {
        let payload_sha256 = payload_digest(&model);
        Self {
            format_version: FORMAT_VERSION.to_owned(),
            provenance,
            payload_sha256,
            model,
        }
    }

    /// Short content tag for the model: format version plus a digest
    /// prefix. Changes exactly when the model content changes.
    pub fn version_tag(&self) -> String {
        format!("{}+{}", self.format_version, &self.payload_sha256[..12])
    }

    /// Writes the bundle as pretty-printed JSON with deterministic bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec_pretty(self).expect("bundle serialization cannot fail");
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads and fully validates a bundle: format version, payload digest,
    /// and every model invariant.
    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;

        // Check the declared version before attempting a full parse so a
        // future schema fails with the right error.
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: String,
        }
        let probe: VersionProbe =
            serde_json::from_slice(&raw).map_err(|e| Error::CorruptBundle {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: probe.format_version,
                supported: FORMAT_VERSION.to_owned(),
            });
        }

        let bundle: ModelBundle =
            serde_json::from_slice(&raw).map_err(|e| Error::CorruptBundle {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;

        let digest = payload_digest(&bundle.model);
        if digest != bundle.payload_sha256 {
            return Err(Error::CorruptBundle {
                path: path.to_path_buf(),
                msg: format!(
                    "payload digest mismatch: stored {}, computed {}",
                    bundle.payload_sha256, digest
                ),
            });
        }
        bundle
            .model
            .validate()
            .map_err(|e| Error::InvalidBundle(e.to_string()))?;
        Ok(bundle)
    }
}
