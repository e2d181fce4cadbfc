//! Versioned on-disk model archives.
//!
//! One self-describing JSON envelope serves every model flavor in the
//! workspace: a format tag, a version, a `kind` string naming the flavor,
//! optional normalization statistics, and the flavor-specific model payload.
//! Crates that extend the basic model store their own payload type under
//! their own `kind`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vshgp_data::NormStats;

use crate::model::VshgpModel;
use crate::VshgpError;

/// Value of the `format` field in every archive this workspace writes.
pub const ARCHIVE_FORMAT: &str = "hgp-model-archive";

/// Current archive schema version.
pub const ARCHIVE_VERSION: u32 = 1;

/// A model archive: the envelope plus an undecoded payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Archive {
    pub format: String,
    pub version: u32,
    /// Which model flavor the payload holds (e.g. `"vshgp"`).
    pub kind: String,
    /// Normalization fitted on the training data, when the model was
    /// trained on normalized data.
    pub normalization: Option<NormStats>,
    model: serde_json::Value,
}

impl Archive {
    /// Wraps a serializable model in the current envelope.
    pub fn new(
        kind: &str,
        normalization: Option<NormStats>,
        model: &impl Serialize,
    ) -> Result<Self, VshgpError> {
        let value = serde_json::to_value(model).map_err(|e| VshgpError::Archive {
            reason: format!("could not serialize model: {e}"),
        })?;
        Ok(Archive {
            format: ARCHIVE_FORMAT.to_string(),
            version: ARCHIVE_VERSION,
            kind: kind.to_string(),
            normalization,
            model: value,
        })
    }

    /// Writes the archive as pretty-printed JSON.
    pub fn save(&self, path: &Path) -> Result<(), VshgpError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| VshgpError::Archive {
            reason: format!("could not serialize archive: {e}"),
        })?;
        fs::write(path, text).map_err(|e| VshgpError::Archive {
            reason: format!("could not write {}: {e}", path.display()),
        })
    }

    /// Reads an archive, validating the format tag and version.
    pub fn load(path: &Path) -> Result<Self, VshgpError> {
        let text = fs::read_to_string(path).map_err(|e| VshgpError::Archive {
            reason: format!("could not read {}: {e}", path.display()),
        })?;
        let archive: Archive = serde_json::from_str(&text).map_err(|e| VshgpError::Archive {
            reason: format!("{} is not a model archive: {e}", path.display()),
        })?;
        if archive.format != ARCHIVE_FORMAT {
            return Err(VshgpError::Archive {
                reason: format!(
                    "{}: format tag {:?} is not {ARCHIVE_FORMAT:?}",
                    path.display(),
                    archive.format
                ),
            });
        }
        if archive.version != ARCHIVE_VERSION {
            return Err(VshgpError::Archive {
                reason: format!(
                    "{}: archive version {} is not supported (expected {ARCHIVE_VERSION})",
                    path.display(),
                    archive.version
                ),
            });
        }
        Ok(archive)
    }

    /// Decodes the payload as a concrete model type.
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, VshgpError> {
        serde_json::from_value(self.model.clone()).map_err(|e| VshgpError::Archive {
            reason: format!("payload does not decode as a {:?} model: {e}", self.kind),
        })
    }
}

impl VshgpModel {
    /// Archive `kind` for this model flavor.
    pub const ARCHIVE_KIND: &'static str = "vshgp";

    /// Saves the model (and the normalization it was trained under) as an
    /// archive.
    pub fn save(&self, path: &Path, normalization: Option<NormStats>) -> Result<(), VshgpError> {
        Archive::new(Self::ARCHIVE_KIND, normalization, self)?.save(path)
    }

    /// Loads a model archive of this kind, re-validating the model.
    pub fn load(path: &Path) -> Result<(Self, Option<NormStats>), VshgpError> {
        let archive = Archive::load(path)?;
        if archive.kind != Self::ARCHIVE_KIND {
            return Err(VshgpError::Archive {
                reason: format!(
                    "{}: archive holds a {:?} model, not {:?}",
                    path.display(),
                    archive.kind,
                    Self::ARCHIVE_KIND
                ),
            });
        }
        let model: VshgpModel = archive.decode()?;
        model.validate()?;
        Ok((model, archive.normalization))
    }
}
