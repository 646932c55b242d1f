#![allow(dead_code)]

use proptest::test_runner::{Config, RngSeed};

pub const CASES: u32 = 128;

/// Fixed-seed configuration so every run checks the same instances.
pub fn config() -> Config {
    Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(0x6e64_6e61),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}
