//! The will lifecycle as a pure transition function.
//!
//! ```text
//! Deployed --request/vote--> VotingOpen --threshold--> Frozen --deadline--> Activated --execute--> Executed
//!     |                          |                        |
//!     +--delete--> Cancelled     +--override--> Activated +--veto--> Cancelled
//! ```

use std::collections::BTreeSet;
use std::fmt;

use crate::ledger::Action;
use crate::willfile::DigitalWill;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum WillState {
    Deployed,
    VotingOpen,
    Frozen,
    Activated,
    Executed,
    Cancelled,
}

impl fmt::Display for WillState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WillRecord {
    pub will: DigitalWill,
    pub state: WillState,
    pub votes: BTreeSet<String>,
    pub freeze_deadline: Option<u64>,
    pub version: u32,
}

impl WillRecord {
    pub fn new(will: DigitalWill) -> Self {
        Self {
            will,
            state: WillState::Deployed,
            votes: BTreeSet::new(),
            freeze_deadline: None,
            version: 1,
        }
    }

    pub fn freeze_ms(&self) -> u64 {
        self.will.trigger.freeze_seconds.saturating_mul(1000)
    }
}

/// A request against one will. Credentials are checked by the caller
/// except the creator id carried by `Veto`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Update(Box<DigitalWill>),
    Delete,
    RequestTrigger { heir: String },
    Vote { heir: String },
    Veto { creator: String },
    /// The attestation has already been verified.
    Override,
    Tick,
    Execute,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransitionError {
    #[error("operation not allowed in state {0}")]
    IllegalState(WillState),
    #[error("{0} is not an heir of this will")]
    NotAnHeir(String),
    #[error("{0} has already voted")]
    DuplicateVote(String),
    #[error("the freeze period has expired")]
    FreezeExpired,
    #[error("credential does not match the will's creator")]
    AuthError,
    #[error("this will does not allow authority override")]
    OverrideNotAllowed,
    #[error("the update changes the will id")]
    WillIdChanged,
}

/// Ledger actions produced by one accepted command, in order.
pub type Effects = Vec<Action>;

/// Applies `cmd` at simulated time `now`. On error the record is unchanged.
pub fn apply(rec: &mut WillRecord, cmd: &Command, now: u64) -> Result<Effects, TransitionError> {
    use WillState::*;
    let illegal = Err(TransitionError::IllegalState(rec.state));
    match cmd {
        Command::Update(new) => {
            if rec.state != Deployed {
                return illegal;
            }
            if new.will_id != rec.will.will_id {
                return Err(TransitionError::WillIdChanged);
            }
            rec.will = (**new).clone();
            rec.version += 1;
            Ok(vec![Action::UpdateWill])
        }
        Command::Delete => {
            if rec.state != Deployed {
                return illegal;
            }
            rec.state = Cancelled;
            Ok(vec![Action::DeleteWill])
        }
        Command::RequestTrigger { heir } => {
            if !matches!(rec.state, Deployed | VotingOpen) {
                return illegal;
            }
            check_heir(rec, heir)?;
            rec.state = VotingOpen;
            Ok(vec![Action::TriggerRequest])
        }
        Command::Vote { heir } => {
            if !matches!(rec.state, Deployed | VotingOpen) {
                return illegal;
            }
            check_heir(rec, heir)?;
            if rec.votes.contains(heir) {
                return Err(TransitionError::DuplicateVote(heir.clone()));
            }
            let mut effects = Vec::new();
            if rec.state == Deployed {
                effects.push(Action::TriggerRequest);
            }
            rec.state = VotingOpen;
            rec.votes.insert(heir.clone());
            effects.push(Action::VoteCast);
            if rec.votes.len() as u32 >= rec.will.trigger.vote_threshold {
                rec.state = Frozen;
                rec.freeze_deadline = Some(now.saturating_add(rec.freeze_ms()));
                effects.push(Action::FreezeStart);
            }
            Ok(effects)
        }
        Command::Veto { creator } => {
            if rec.state != Frozen {
                return illegal;
            }
            if *creator != rec.will.creator_id {
                return Err(TransitionError::AuthError);
            }
            if now >= rec.freeze_deadline.expect("frozen wills have a deadline") {
                return Err(TransitionError::FreezeExpired);
            }
            rec.state = Cancelled;
            Ok(vec![Action::Veto])
        }
        Command::Override => {
            if rec.state != VotingOpen {
                return illegal;
            }
            if !rec.will.trigger.authority_override {
                return Err(TransitionError::OverrideNotAllowed);
            }
            rec.state = Activated;
            Ok(vec![Action::AuthorityOverride, Action::Activate])
        }
        Command::Tick => match (rec.state, rec.freeze_deadline) {
            (Frozen, Some(deadline)) if now >= deadline => {
                rec.state = Activated;
                Ok(vec![Action::Activate])
            }
            _ => Ok(vec![]),
        },
        Command::Execute => {
            if rec.state != Activated {
                return illegal;
            }
            rec.state = Executed;
            // Pipeline steps are logged by the broker as they happen.
            Ok(vec![])
        }
    }
}

fn check_heir(rec: &WillRecord, heir: &str) -> Result<(), TransitionError> {
    match rec.will.heir(heir) {
        Some(_) => Ok(()),
        None => Err(TransitionError::NotAnHeir(heir.to_string())),
    }
}
