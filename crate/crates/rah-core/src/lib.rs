//! RAH: a RecSys-Assistant-Human recommendation framework.
//!
//! An LLM-driven assistant learns user personalities through a
//! Learn-Act-Critic loop with reflection, generates proxy feedback to
//! calibrate classical recommenders, mitigates popularity bias via IPS and
//! unpopular-item augmentation, and enacts user-control and privacy
//! strategies. A deterministic rule-based oracle over synthetic worlds
//! makes every experiment reproducible end to end.

pub mod agents;
pub mod alignment;
pub mod debias;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod gateway;
pub mod pipeline;
pub mod recsys;
pub mod store;

pub use error::{RahError, Result};
