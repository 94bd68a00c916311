//! Freshness-aware update-rate control.
//!
//! The crate implements the Lazy, ACP, ACP+ and modified ACP+ sender
//! controllers on top of an exact Age-of-Information engine, and runs them
//! either over a deterministic discrete-event channel ([`netsim`]) or over
//! real UDP sockets ([`udp`]). Both transports drive the same sans-IO
//! [`session::SenderSession`].

pub mod age;
pub mod estimators;
pub mod harness;
pub mod netsim;
pub mod policy;
pub mod session;
pub mod time;
pub mod udp;

pub use age::{AgeTracker, DeliveryEvent, EpochAgeSummary};
pub use estimators::{AckRecord, EwmaEstimator, FeedbackState, LinkEstimators};
pub use policy::{ActionKind, PolicyConfig, PolicyKind};
pub use time::Timestamp;
