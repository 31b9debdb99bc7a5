//! Support code for the `calabi-lab` binary.

pub mod config;
