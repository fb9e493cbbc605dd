use std::sync::OnceLock;

use p256::SecretKey;
use rand::SeedableRng;

use super::*;
use crate::demo;
use crate::keyvault::AuthorityKey;

const WEEK_MS: u64 = 604_800_000;

fn sk(heir: &str) -> SecretKey {
    static KEYS: OnceLock<Vec<(String, SecretKey)>> = OnceLock::new();
    let keys = KEYS.get_or_init(|| {
        demo::HEIR_PASSWORDS
            .iter()
            .map(|(id, _)| (id.to_string(), demo::heir_keypair(id).unwrap().sk))
            .collect()
    });
    keys.iter().find(|(id, _)| id == heir).unwrap().1.clone()
}

fn authority() -> AuthorityKey {
    AuthorityKey::generate(&mut ChaCha20Rng::seed_from_u64(99))
}

fn broker() -> Broker {
    demo::broker(BrokerConfig {
        seed: Some(7),
        authority: Some(authority().verifying_key()),
        start_ms: 1_000,
    })
}

fn activated() -> Broker {
    let mut b = broker();
    b.deploy(demo::golden_will()).unwrap();
    b.vote("will-golden", "bob").unwrap();
    assert_eq!(b.vote("will-golden", "carol").unwrap(), WillState::Frozen);
    assert!(b.advance(WEEK_MS - 1).is_empty());
    assert_eq!(b.advance(1), [("will-golden".to_string(), WillState::Activated)]);
    b
}

fn executed() -> Broker {
    let mut b = activated();
    b.execute("will-golden").unwrap();
    b
}

fn recovered_ids(r: &RetrievalReport) -> Vec<&str> {
    r.recovered().into_keys().collect()
}

fn actions(b: &Broker) -> Vec<Action> {
    b.ledger().entries().iter().map(|e| e.action).collect()
}

#[test]
fn lifecycle_delivers_each_heir_their_assets() {
    let mut b = activated();
    let report = b.execute("will-golden").unwrap();
    assert_eq!(report.platforms_pulled, ["social", "email", "cloud"]);
    assert_eq!(report.shares_placed, 12);
    assert_eq!(report.keys_distributed, ["bob", "carol", "dave"]);
    assert_eq!(b.state("will-golden"), Some(WillState::Executed));

    let bob = b.retrieve("will-golden", "bob", &sk("bob")).unwrap();
    assert_eq!(
        recovered_ids(&bob),
        ["cloud/documents", "cloud/photos", "email/inbox", "social/messages", "social/posts"]
    );
    let carol = b.retrieve("will-golden", "carol", &sk("carol")).unwrap();
    assert_eq!(recovered_ids(&carol), ["cloud/photos", "social/posts"]);
    let dave = b.retrieve("will-golden", "dave", &sk("dave")).unwrap();
    assert_eq!(recovered_ids(&dave), ["cloud/photos", "social/posts"]);
    let social = FixtureAdapter::social().fetch("", &["posts".into()]).unwrap();
    assert_eq!(dave.recovered()["social/posts"], social[0].bytes.as_slice());

    assert_eq!(b.ledger().verify(), Ok(()));
    assert!(b.inspect().is_empty(), "{:?}", b.inspect());
    let ledger_actions = actions(&b);
    for a in [Action::DeployWill, Action::TriggerRequest, Action::VoteCast, Action::FreezeStart, Action::Activate] {
        assert_eq!(ledger_actions.iter().filter(|x| **x == a).count(), if a == Action::VoteCast { 2 } else { 1 });
    }
    assert_eq!(ledger_actions.iter().filter(|x| **x == Action::RetrieveShares).count(), 3);
}

#[test]
fn healthy_retrieval_contacts_exactly_threshold_providers() {
    let mut b = executed();
    let r = b.retrieve("will-golden", "carol", &sk("carol")).unwrap();
    assert_eq!(r.requests.values().copied().collect::<Vec<_>>(), [2, 2, 2]);
    let gets: usize = b.providers().iter().map(|p| p.counts().gets).sum();
    assert_eq!(gets, 6);
}

#[test]
fn one_provider_down_at_upload_still_places_every_file() {
    let mut b = activated();
    b.provider_mut("provider-b").unwrap().faults.unavailable = true;
    let report = b.execute("will-golden").unwrap();
    assert_eq!(report.shares_placed, 9);
    assert_eq!(report.placement_warnings.len(), 3);
    for f in b.stored_files("will-golden").to_vec() {
        assert!(b.manifest("will-golden").unwrap().for_file(&f.file_id).count() >= 2);
    }
    assert!(actions(&b).contains(&Action::Warning));
    b.retrieve("will-golden", "bob", &sk("bob")).unwrap();
}

#[test]
fn failed_placements_move_to_spare_providers() {
    let mut b = activated();
    b.add_provider(StorageProvider::in_memory("spare"));
    b.provider_mut("provider-c").unwrap().faults.unavailable = true;
    let report = b.execute("will-golden").unwrap();
    assert_eq!(report.shares_placed, 12);
    assert_eq!(b.provider("spare").unwrap().counts().puts, 3);
}

#[test]
fn storage_failure_aborts_below_threshold() {
    let mut b = activated();
    for p in ["provider-a", "provider-b", "provider-c"] {
        b.provider_mut(p).unwrap().faults.unavailable = true;
    }
    let err = b.execute("will-golden").unwrap_err();
    assert!(matches!(err, BrokerError::StorageFailure { placed: 1, needed: 2, .. }), "{err}");
    assert_eq!(b.state("will-golden"), Some(WillState::Activated));
}

#[test]
fn retrieval_escalates_past_unavailable_and_corrupt_providers() {
    let mut b = executed();
    b.provider_mut("provider-a").unwrap().faults.unavailable = true;
    b.provider_mut("provider-b").unwrap().faults.corrupting = true;
    let r = b.retrieve("will-golden", "bob", &sk("bob")).unwrap();
    assert_eq!(r.recovered().len(), 5);
    assert!(r.requests.values().all(|&n| n == 4));

    b.provider_mut("provider-c").unwrap().faults.unavailable = true;
    assert!(matches!(
        b.retrieve("will-golden", "bob", &sk("bob")),
        Err(BrokerError::ThresholdNotMet { .. })
    ));
}

#[test]
fn offline_adapter_is_skipped_with_a_warning() {
    let mut b = activated();
    let mut email = FixtureAdapter::email();
    email.offline = true;
    b.add_adapter(email);
    let report = b.execute("will-golden").unwrap();
    assert_eq!(report.platforms_pulled, ["social", "cloud"]);
    assert_eq!(report.adapter_failures.len(), 1);
    let bob = b.retrieve("will-golden", "bob", &sk("bob")).unwrap();
    assert!(!bob.recovered().contains_key("email/inbox"));
}

#[test]
fn wrong_secret_key_cannot_open_an_envelope() {
    let mut b = executed();
    let err = b.retrieve("will-golden", "bob", &sk("carol")).unwrap_err();
    assert!(matches!(err, BrokerError::AuthError(_)));
    assert!(matches!(
        b.retrieve("will-golden", "eve", &sk("bob")),
        Err(BrokerError::Transition(TransitionError::NotAnHeir(_)))
    ));
}

#[test]
fn duplicate_vote_is_logged_and_rejected() {
    let mut b = broker();
    b.deploy(demo::golden_will()).unwrap();
    b.vote("will-golden", "bob").unwrap();
    let before = b.ledger().len();
    assert!(matches!(
        b.vote("will-golden", "bob"),
        Err(BrokerError::Transition(TransitionError::DuplicateVote(_)))
    ));
    assert_eq!(b.ledger().len(), before + 1);
    assert_eq!(b.ledger().entries().last().unwrap().action, Action::Warning);
    assert_eq!(b.state("will-golden"), Some(WillState::VotingOpen));
}

#[test]
fn vote_after_delete_is_illegal() {
    let mut b = broker();
    b.deploy(demo::golden_will()).unwrap();
    assert_eq!(b.delete_will("will-golden").unwrap(), WillState::Cancelled);
    let err = b.vote("will-golden", "bob").unwrap_err();
    assert!(err.is_illegal_state());
    assert!(matches!(b.execute("will-golden"), Err(e) if e.is_illegal_state()));
    assert!(b.inspect().is_empty());
}

#[test]
fn veto_during_freeze_cancels() {
    let mut b = broker();
    b.deploy(demo::golden_will()).unwrap();
    b.vote("will-golden", "bob").unwrap();
    b.vote("will-golden", "dave").unwrap();
    b.advance(1_000);
    assert!(matches!(b.veto("will-golden", "mallory"), Err(BrokerError::Transition(TransitionError::AuthError))));
    assert_eq!(b.veto("will-golden", "alice").unwrap(), WillState::Cancelled);
    assert!(b.advance(WEEK_MS).is_empty());
    assert_eq!(b.state("will-golden"), Some(WillState::Cancelled));
}

#[test]
fn authority_override_needs_a_valid_attestation() {
    let mut b = broker();
    b.deploy(demo::golden_will()).unwrap();
    b.request_trigger("will-golden", "dave").unwrap();
    let forged = AuthorityKey::generate(&mut ChaCha20Rng::seed_from_u64(1)).attest_override("will-golden");
    assert!(matches!(b.authority_override("will-golden", &forged), Err(BrokerError::BadAttestation)));
    let other_will = authority().attest_override("will-other");
    assert!(matches!(b.authority_override("will-golden", &other_will), Err(BrokerError::BadAttestation)));
    let good = authority().attest_override("will-golden");
    assert_eq!(b.authority_override("will-golden", &good).unwrap(), WillState::Activated);
    b.execute("will-golden").unwrap();
    assert!(b.inspect().is_empty());
}

#[test]
fn updates_bump_the_version_until_triggered() {
    let mut b = broker();
    b.deploy(demo::golden_will()).unwrap();
    let mut w = demo::golden_will();
    w.trigger.vote_threshold = 3;
    assert_eq!(b.update_will("will-golden", w.clone()).unwrap(), 2);
    assert!(matches!(b.deploy(demo::golden_will()), Err(BrokerError::DuplicateWill(_))));
    b.vote("will-golden", "bob").unwrap();
    assert!(b.update_will("will-golden", w).unwrap_err().is_illegal_state());
}

#[test]
fn export_round_trips_through_disk() {
    let b = executed();
    let export = b.export();
    assert_eq!(Chain::from_text(&export.ledger).unwrap().entries(), b.ledger().entries());
    assert_eq!(export.manifests["will-golden"].entries().len(), 12);
    PublicParams::from_bytes(&export.public_params).unwrap();
    MasterKey::from_bytes(&export.master_key).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export.write_to(dir.path()).unwrap();
    assert!(dir.path().join("ledger.dwchain").is_file());
}

#[test]
fn file_ids_are_sanitised() {
    assert_eq!(file_id("will.1", "cloud drive"), "will_1-cloud_drive");
}

#[test]
fn subsets_are_lexicographic() {
    let mut seen = Vec::new();
    for_each_subset(4, 2, &mut |s| {
        seen.push(s.to_vec());
        false
    });
    assert_eq!(seen, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]);
}
