//! Pieces of the `hub` binary that tests reuse.

pub mod torture;
