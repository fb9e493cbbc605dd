//! The synthetic estate used by the CLI, the browser demo and the tests:
//! the golden will, its heirs' passwords and a broker wired to fixture
//! adapters and four in-memory providers.

use crate::broker::{Broker, BrokerConfig, FixtureAdapter, StorageProvider};
use crate::keyvault::{self, HeirKeypair, KeyError};
use crate::willfile::{parse_xml, DigitalWill};

pub const GOLDEN_WILL_XML: &str = include_str!("../fixtures/will-golden.xml");

/// Salt the fixture heirs' public keys were derived with.
pub const HEIR_SALT: &[u8] = b"heirloom-fixture-salt";

/// `(heir id, password)` for every heir of the golden will.
pub const HEIR_PASSWORDS: [(&str, &str); 3] = [
    ("bob", "bob-password"),
    ("carol", "carol-password"),
    ("dave", "dave-password"),
];

pub const PROVIDERS: [&str; 4] = ["provider-a", "provider-b", "provider-c", "provider-d"];

pub fn golden_will() -> DigitalWill {
    parse_xml(GOLDEN_WILL_XML.as_bytes()).expect("committed fixture is valid")
}

pub fn heir_keypair(heir_id: &str) -> Result<HeirKeypair, KeyError> {
    let (_, pw) = HEIR_PASSWORDS
        .iter()
        .find(|(id, _)| *id == heir_id)
        .ok_or(KeyError::WeakInput("unknown fixture heir"))?;
    keyvault::derive_keypair(pw, HEIR_SALT)
}

pub fn broker(config: BrokerConfig) -> Broker {
    let mut b = Broker::new(config);
    for a in FixtureAdapter::standard_set() {
        b.add_adapter(a);
    }
    for p in PROVIDERS {
        b.add_provider(StorageProvider::in_memory(p));
    }
    b
}
