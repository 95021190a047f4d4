//! Holds the acceptance suite in `tests/acceptance.rs`. Run it with
//! `cargo test -p boapta-validation --test acceptance -- --nocapture`.
