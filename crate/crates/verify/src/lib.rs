//! Acceptance gate. The criteria live in `tests/acceptance.rs`; run them with
//! `cargo test -p csl-verify --test acceptance`.
