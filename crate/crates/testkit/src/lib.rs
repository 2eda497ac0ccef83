//! Fixtures and property checks shared by the integration and acceptance
//! suites. Each check is a plain function over a generated case so it can be
//! driven by `proptest!` or by an explicit runner.

pub mod fixtures;
pub mod format;
pub mod props;
pub mod stub;

use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

/// Config with a fixed RNG seed so property runs are reproducible.
pub fn fixed_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5_eed0_fa11),
        failure_persistence: None,
        ..Config::default()
    }
}

/// Runs `test` over `cases` generated inputs; the error carries the
/// minimal failing input.
pub fn run_property<S, F>(cases: u32, strategy: S, test: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(fixed_config(cases));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}
