//! Holder crate for the acceptance suite in `tests/acceptance.rs`.
//!
//! Run it with `cargo test -p postprice-e2e --test acceptance`.
