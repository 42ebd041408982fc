//! Open-ended search over agent memory designs.
//!
//! A memory design exposes two entry points, `general_update` and
//! `general_retrieve`, and is executed in a sandboxed subprocess that speaks a
//! line-delimited JSON protocol (see [`sandbox`]). Candidate designs are scored
//! with a two-phase protocol ([`evaluation`]): memory-free collection rollouts
//! feed sequential updates, then deployment rollouts run with retrieved
//! knowledge injected into the policy prompt. Every scored design lands in an
//! [`archive`] whose visit-penalized softmax picks parents for the next round
//! of the [`meta`] loop.
//!
//! Everything runs offline against a scripted [`provider::MockBackend`] and the
//! deterministic text [`environments`]; a live OpenAI-compatible endpoint can
//! be plugged in behind the same [`provider::ModelProvider`].

pub mod archive;
pub mod builtin;
pub mod config;
pub mod environments;
pub mod error;
pub mod evaluation;
pub mod meta;
pub mod provider;
pub mod report;
pub mod sandbox;

mod util;

pub use error::{Error, Result};

/// Version stamped into every JSON document this crate writes.
pub const FORMAT_VERSION: u32 = 1;
