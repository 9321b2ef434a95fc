//! Acceptance suite for the `pyrcert` library; the criteria live in `tests/acceptance.rs`.
