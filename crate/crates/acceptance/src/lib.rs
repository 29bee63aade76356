//! Cross-crate acceptance checks live in `tests/acceptance.rs`.
