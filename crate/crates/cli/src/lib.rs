//! Support code shared by the command-line tools and their tests.

pub mod harness;
