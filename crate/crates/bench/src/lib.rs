//! Shared fixtures for the kernel benchmarks.

use csl_core::synthkit::{CounterexampleSpec, GridSpec};
use csl_core::{ConeChart, CurveSpec, CutoffSpec, GridPolicy};

/// The default n = 3 construction at `lambda` with its grid.
pub fn moment_fixture(lambda: f64) -> (CounterexampleSpec, GridSpec) {
    let chart = ConeChart::new(CurveSpec::moment(3).expect("n = 3 is supported"));
    let spec = CounterexampleSpec::new(lambda, 0.25, 0.25, chart, CutoffSpec::default()).expect("valid parameters");
    let grid = GridSpec::for_counterexample(&spec, GridPolicy::default(), 2.0).expect("grid fits");
    (spec, grid)
}
