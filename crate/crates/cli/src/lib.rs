//! Command-line orchestration for the evseg pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::map_entry)]

pub mod commands;
pub mod config;

pub use commands::{
    cmd_eval, cmd_flow, cmd_pipeline, cmd_render, cmd_superevents, cmd_synth, InputError,
};
pub use config::{Config, ConfigError};

/// Process exit code for a failed run: 2 for bad configuration or missing
/// inputs, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<InputError>() {
            return 2;
        }
        if let Some(evseg::Error::Config(_)) = cause.downcast_ref::<evseg::Error>() {
            return 2;
        }
    }
    1
}
