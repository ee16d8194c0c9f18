//! Home of the acceptance suite, `tests/acceptance.rs`.
