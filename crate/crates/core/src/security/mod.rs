//! Identity registration, authentication, hashed-index recording and verification, and
//! capability screening, all over a [`LedgerView`].

mod screen;
mod services;
mod token;
mod view;

pub use screen::{AccessScreen, Decision, DenyReason};
pub use services::{
    authenticate, grant_access, hia_key, record_hashed_index, register_entity, verify_hashed_index, Account,
    HiaVerdict, SecurityError, Verdict, VirtualIdentity,
};
pub use token::{challenge_message, AuthToken, TOKEN_HEADER};
pub use view::{LedgerError, LedgerView, LocalLedger};

/// Resource naming the feature stream of a camera.
pub fn features_resource(camera_id: &str) -> String {
    format!("camera/{camera_id}/features")
}
