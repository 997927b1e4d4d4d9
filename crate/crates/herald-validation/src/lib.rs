//! Acceptance runs for `herald` live in `tests/acceptance.rs`; run them with `cargo test -p herald-validation --test acceptance -- --nocapture`.
