//! Partially decryptable ciphertext-policy ABE over an integrated access DAG,
//! together with the escrow machinery around it: Shamir share placement,
//! a portable XML will format, a hash-chained action ledger and the broker
//! state machine that drives a will from deployment to heir retrieval.

pub mod policy;
pub mod group;
pub mod codec;
pub mod symmetric;
pub mod pdcpabe;
pub mod bsw07;
pub mod sharding;
pub mod keyvault;
pub mod willfile;
pub mod ledger;
pub mod broker;
pub mod demo;
pub mod bench;
