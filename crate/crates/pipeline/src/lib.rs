//! Dataset construction and evaluation workflows on top of the core
//! scoring primitives and the chat client.

pub mod build;
pub mod eval;

pub use build::{build_sft_dataset, BuildError, BuildOptions};
pub use eval::{evaluate, EvalError, EvalOptions};
