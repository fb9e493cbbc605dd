//! Simulated platform connectors serving committed synthetic JSON.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdapterError {
    #[error("platform {0} is unavailable")]
    Unavailable(String),
    #[error("platform {platform} has no asset {asset}")]
    UnknownAsset { platform: String, asset: String },
    #[error("invalid fixture: {0}")]
    InvalidFixture(String),
}

/// One fetched asset: `platform/asset` selector and its JSON document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub selector: String,
    pub bytes: Vec<u8>,
}

pub trait PlatformAdapter: Send {
    fn platform_id(&self) -> &str;

    /// Returns one JSON document per requested asset, in request order.
    fn fetch(&self, token: &str, assets: &[String]) -> Result<Vec<Document>, AdapterError>;
}

#[derive(Debug, Deserialize)]
struct Fixture {
    platform: String,
    kind: String,
    assets: BTreeMap<String, Value>,
}

/// Adapter backed by a fixture file; output is a pure function of the
/// fixture.
#[derive(Debug, Clone)]
pub struct FixtureAdapter {
    platform: String,
    kind: String,
    assets: BTreeMap<String, Vec<u8>>,
    /// Fault switch: every fetch fails while set.
    pub offline: bool,
}

pub const SOCIAL_FIXTURE: &str = include_str!("../../fixtures/adapters/social.json");
pub const EMAIL_FIXTURE: &str = include_str!("../../fixtures/adapters/email.json");
pub const CLOUD_FIXTURE: &str = include_str!("../../fixtures/adapters/cloud.json");

impl FixtureAdapter {
    pub fn from_json(text: &str) -> Result<Self, AdapterError> {
        let f: Fixture = serde_json::from_str(text).map_err(|e| AdapterError::InvalidFixture(e.to_string()))?;
        let assets = f
            .assets
            .into_iter()
            .map(|(name, doc)| {
                let bytes = serde_json::to_vec(&doc).expect("JSON values always serialise");
                (name, bytes)
            })
            .collect();
        Ok(Self {
            platform: f.platform,
            kind: f.kind,
            assets,
            offline: false,
        })
    }

    pub fn social() -> Self {
        Self::from_json(SOCIAL_FIXTURE).expect("committed fixture is valid")
    }

    pub fn email() -> Self {
        Self::from_json(EMAIL_FIXTURE).expect("committed fixture is valid")
    }

    pub fn cloud() -> Self {
        Self::from_json(CLOUD_FIXTURE).expect("committed fixture is valid")
    }

    /// The social, email and cloud-file adapters.
    pub fn standard_set() -> Vec<Self> {
        vec![Self::social(), Self::email(), Self::cloud()]
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn asset_names(&self) -> impl Iterator<Item = &str> {
        self.assets.keys().map(String::as_str)
    }
}

impl PlatformAdapter for FixtureAdapter {
    fn platform_id(&self) -> &str {
        &self.platform
    }

    fn fetch(&self, _token: &str, assets: &[String]) -> Result<Vec<Document>, AdapterError> {
        if self.offline {
            return Err(AdapterError::Unavailable(self.platform.clone()));
        }
        assets
            .iter()
            .map(|a| {
                let bytes = self.assets.get(a).ok_or_else(|| AdapterError::UnknownAsset {
                    platform: self.platform.clone(),
                    asset: a.clone(),
                })?;
                Ok(Document {
                    selector: format!("{}/{a}", self.platform),
                    bytes: bytes.clone(),
                })
            })
            .collect()
    }
}
