//! Desk-scale multimodal input pipeline.
//!
//! The crate turns raw media geometry into token budgets ([`modality`]),
//! projects encoder features into an LLM embedding space ([`projectors`]),
//! packs variable-length samples with attention isolation ([`packing`]),
//! schedules streaming modality injection ([`stream`]), runs data-curation
//! filters ([`curation`]) and computes evaluation metrics ([`evalkit`]).
//! [`numkit`] is the small f64 tensor kernel underneath the projectors.

pub mod curation;
pub mod error;
pub mod evalkit;
pub mod exec;
pub mod fsio;
pub mod modality;
pub mod numkit;
pub mod packing;
pub mod projectors;
pub mod stream;

pub use error::{Error, Result};
pub use exec::Exec;
pub use numkit::Tensor;
