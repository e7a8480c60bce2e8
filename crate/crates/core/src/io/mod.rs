//! Sequence files and configuration.

pub mod config;
pub mod format;

pub use config::{load_config, parse_config, Config};
pub use format::{read_sequence, write_sequence, write_sequence_as, Encoding};
