//! Support code for the `shrinkcov` command-line tool.

pub mod output;
pub mod stream_cmd;
